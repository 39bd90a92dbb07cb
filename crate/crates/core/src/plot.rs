//! Static SVG rendering of trajectories on the projection plane.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::cloud::{project_to_plane, Point2, ProjectionPlane};
use crate::error::{Error, Result};
use crate::mot::MotRow;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 70.0;
const TICKS: usize = 5;

/// Plane trajectories keyed by track id, each in frame order.
pub fn trajectories(
    rows: &[MotRow],
    plane: &ProjectionPlane,
) -> Result<BTreeMap<i64, Vec<Point2>>> {
    let mut sorted: Vec<&MotRow> = rows.iter().collect();
    sorted.sort_by_key(|r| (r.id, r.frame));
    let mut out: BTreeMap<i64, Vec<Point2>> = BTreeMap::new();
    for r in sorted {
        let w = r.world.as_ref().ok_or_else(|| {
            Error::Input(format!(
                "frame {} id {} has no world position",
                r.frame, r.id
            ))
        })?;
        out.entry(r.id)
            .or_default()
            .push(project_to_plane(w, plane));
    }
    Ok(out)
}

/// Distinct hue per id (golden-angle spacing).
fn color(id: i64) -> String {
    let hue = (id as f64 * 137.508).rem_euclid(360.0);
    format!("hsl({hue:.1},70%,45%)")
}

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit<I: Iterator<Item = f64>>(values: I) -> Self {
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        if !lo.is_finite() {
            return Axis {
                lo: 0.0,
                hi: 1000.0,
            };
        }
        let pad = ((hi - lo) * 0.05).max(500.0);
        Axis {
            lo: lo - pad,
            hi: hi + pad,
        }
    }

    fn scale(&self, v: f64, from: f64, to: f64) -> f64 {
        from + (v - self.lo) / (self.hi - self.lo) * (to - from)
    }
}

/// Renders one polyline per track, with axes labelled in millimetres.
pub fn render_svg(tracks: &BTreeMap<i64, Vec<Point2>>) -> String {
    let all = || tracks.values().flatten();
    let ax = Axis::fit(all().map(|p| p.x));
    let ay = Axis::fit(all().map(|p| p.y));
    let (x0, x1) = (MARGIN, WIDTH - MARGIN / 2.0);
    let (y0, y1) = (HEIGHT - MARGIN, MARGIN / 2.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black" stroke-width="1"><line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>"#
    );
    for i in 0..=TICKS {
        let t = i as f64 / TICKS as f64;
        let vx = ax.lo + t * (ax.hi - ax.lo);
        let px = ax.scale(vx, x0, x1);
        let _ = writeln!(
            s,
            r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{vx:.0}</text>"#,
            y0 + 16.0
        );
        let vy = ay.lo + t * (ay.hi - ay.lo);
        let py = ay.scale(vy, y0, y1);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{py:.1}" text-anchor="end" dominant-baseline="middle">{vy:.0}</text>"#,
            x0 - 6.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">x (mm)</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">y (mm)</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    for (id, pts) in tracks {
        let coords: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", ax.scale(p.x, x0, x1), ay.scale(p.y, y0, y1)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline data-id="{id}" fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            color(*id),
            coords.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use crate::mot::{BBox, ObjectClass};

    fn row(frame: u64, id: i64, x: f64, y: f64) -> MotRow {
        MotRow {
            frame,
            id,
            bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
            confidence: 1.0,
            class: ObjectClass::Car,
            world: Some(Point3::world(x, y, 0.0)),
        }
    }

    fn vertex_counts(svg: &str) -> Vec<usize> {
        svg.lines()
            .filter(|l| l.starts_with("<polyline"))
            .map(|l| {
                let pts = l
                    .split("points=\"")
                    .nth(1)
                    .unwrap()
                    .split('"')
                    .next()
                    .unwrap();
                pts.split_whitespace().count()
            })
            .collect()
    }

    #[test]
    fn one_track_two_points() {
        let t = trajectories(
            &[row(2, 1, 10.0, 0.0), row(1, 1, 0.0, 0.0)],
            &ProjectionPlane::default(),
        )
        .unwrap();
        assert_eq!(t[&1], vec![Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)]);
        let svg = render_svg(&t);
        assert_eq!(vertex_counts(&svg), vec![2]);
        assert!(svg.contains("x (mm)") && svg.contains("y (mm)"));
    }

    #[test]
    fn empty_has_axes_only() {
        let svg = render_svg(&BTreeMap::new());
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("class=\"axes\""));
        assert!(vertex_counts(&svg).is_empty());
    }

    #[test]
    fn colors_differ_between_ids() {
        assert_ne!(color(1), color(2));
    }

    #[test]
    fn missing_world_is_rejected() {
        let mut r = row(1, 1, 0.0, 0.0);
        r.world = None;
        assert!(matches!(
            trajectories(&[r], &ProjectionPlane::default()),
            Err(Error::Input(_))
        ));
    }
}
