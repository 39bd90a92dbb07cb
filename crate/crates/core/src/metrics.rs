//! CLEAR-MOT correspondence and the MOTA score.
//!
//! Per frame, ground-truth/hypothesis pairs matched in the previous frame are
//! kept while they stay within the threshold; the rest are matched by optimal
//! assignment. A ground-truth target whose hypothesis differs from the one it
//! was last matched to (in any earlier frame) counts one identity switch.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::cloud::{project_to_plane, Point2, ProjectionPlane};
use crate::error::{Error, Result};
use crate::mot::{BBox, MotRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrameCounts {
    pub frame: u64,
    pub false_negatives: u64,
    pub false_positives: u64,
    pub id_switches: u64,
    pub ground_truth: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub false_negatives: u64,
    pub false_positives: u64,
    pub id_switches: u64,
    pub ground_truth: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotReport {
    pub frames: Vec<FrameCounts>,
    pub totals: Totals,
    /// Percentage; negative when errors outnumber ground-truth boxes.
    pub mota: f64,
}

/// How ground truth and hypotheses are compared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Matcher {
    /// Euclidean distance between plane positions, matched when within
    /// `threshold` mm.
    Plane { threshold: f64 },
    /// Box overlap, matched when IoU is at least `min_iou`.
    Iou { min_iou: f64 },
}

impl Matcher {
    fn validate(&self) -> Result<()> {
        match *self {
            Matcher::Plane { threshold } if threshold.is_nan() || threshold <= 0.0 => Err(
                Error::Contract(format!("threshold must be positive, got {threshold}")),
            ),
            Matcher::Iou { min_iou } if !(min_iou > 0.0 && min_iou <= 1.0) => Err(Error::Contract(
                format!("IoU threshold must be in (0, 1], got {min_iou}"),
            )),
            _ => Ok(()),
        }
    }

    /// Matching cost, or `None` when the pair is too far apart.
    fn cost(&self, a: &Labeled, b: &Labeled) -> Option<f64> {
        match *self {
            Matcher::Plane { threshold } => {
                let d = a.plane?.distance(&b.plane?);
                (d <= threshold).then_some(d)
            }
            Matcher::Iou { min_iou } => {
                let iou = a.bbox.iou(&b.bbox);
                (iou >= min_iou).then_some(1.0 - iou)
            }
        }
    }
}

/// One ground-truth or hypothesis entry in a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Labeled {
    pub id: i64,
    pub plane: Option<Point2>,
    pub bbox: BBox,
}

/// Correspondence state carried between frames.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Correspondence {
    /// Ground-truth id -> hypothesis id matched in the latest frame.
    pub current: BTreeMap<i64, i64>,
    /// Ground-truth id -> hypothesis id of its most recent match ever.
    pub last_ever: BTreeMap<i64, i64>,
}

/// Matches one frame and returns the updated correspondence with the counts.
pub fn match_frame(
    frame: u64,
    gt: &[Labeled],
    hyp: &[Labeled],
    prev: &Correspondence,
    matcher: &Matcher,
) -> Result<(Correspondence, FrameCounts)> {
    matcher.validate()?;
    let mut gt_used = vec![false; gt.len()];
    let mut hyp_used = vec![false; hyp.len()];
    let mut pairs: Vec<(usize, usize)> = Vec::new();

    let hyp_index: BTreeMap<i64, usize> = hyp.iter().enumerate().map(|(j, h)| (h.id, j)).collect();
    for (i, g) in gt.iter().enumerate() {
        let Some(hid) = prev.current.get(&g.id) else {
            continue;
        };
        let Some(&j) = hyp_index.get(hid) else {
            continue;
        };
        if !hyp_used[j] && matcher.cost(g, &hyp[j]).is_some() {
            gt_used[i] = true;
            hyp_used[j] = true;
            pairs.push((i, j));
        }
    }

    let free_gt: Vec<usize> = (0..gt.len()).filter(|&i| !gt_used[i]).collect();
    let free_hyp: Vec<usize> = (0..hyp.len()).filter(|&j| !hyp_used[j]).collect();
    let cost: Vec<Vec<Option<f64>>> = free_gt
        .iter()
        .map(|&i| {
            free_hyp
                .iter()
                .map(|&j| matcher.cost(&gt[i], &hyp[j]))
                .collect()
        })
        .collect();
    for (r, c) in assignment::solve(&cost).pairs {
        pairs.push((free_gt[r], free_hyp[c]));
    }

    let mut next = Correspondence {
        current: BTreeMap::new(),
        last_ever: prev.last_ever.clone(),
    };
    let mut switches = 0u64;
    for &(i, j) in &pairs {
        let (gid, hid) = (gt[i].id, hyp[j].id);
        if let Some(&before) = prev.last_ever.get(&gid) {
            if before != hid {
                switches += 1;
            }
        }
        next.current.insert(gid, hid);
        next.last_ever.insert(gid, hid);
    }
    let matches = pairs.len() as u64;
    Ok((
        next,
        FrameCounts {
            frame,
            false_negatives: gt.len() as u64 - matches,
            false_positives: hyp.len() as u64 - matches,
            id_switches: switches,
            ground_truth: gt.len() as u64,
        },
    ))
}

pub fn totals(frames: &[FrameCounts]) -> Totals {
    frames.iter().fold(Totals::default(), |t, f| Totals {
        false_negatives: t.false_negatives + f.false_negatives,
        false_positives: t.false_positives + f.false_positives,
        id_switches: t.id_switches + f.id_switches,
        ground_truth: t.ground_truth + f.ground_truth,
    })
}

/// `100 * (1 - sum(F + P + I) / sum(G))`.
pub fn mota(frames: &[FrameCounts]) -> Result<f64> {
    let t = totals(frames);
    if t.ground_truth == 0 {
        return Err(Error::UndefinedMetric(
            "MOTA needs at least one ground-truth box".into(),
        ));
    }
    let errors = (t.false_negatives + t.false_positives + t.id_switches) as f64;
    let g = t.ground_truth as f64;
    // (G - E) * 100 / G is exact whenever the true value is representable
    Ok((g - errors) * 100.0 / g)
}

fn labeled(
    rows: &[MotRow],
    matcher: &Matcher,
    plane: &ProjectionPlane,
    what: &str,
) -> Result<Vec<Labeled>> {
    let mut seen = BTreeSet::new();
    rows.iter()
        .map(|r| {
            if !seen.insert(r.id) {
                return Err(Error::Input(format!(
                    "{what}: id {} appears twice in frame {}",
                    r.id, r.frame
                )));
            }
            let point = r.world.as_ref().map(|w| project_to_plane(w, plane));
            if matches!(matcher, Matcher::Plane { .. }) && point.is_none() {
                return Err(Error::Input(format!(
                    "{what}: frame {} id {} has no world position for plane matching",
                    r.frame, r.id
                )));
            }
            Ok(Labeled {
                id: r.id,
                plane: point,
                bbox: r.bbox,
            })
        })
        .collect()
}

/// Scores hypothesis rows against ground truth over the union of their
/// frames.
pub fn evaluate(
    gt: &[MotRow],
    hyp: &[MotRow],
    matcher: &Matcher,
    plane: &ProjectionPlane,
) -> Result<MotReport> {
    matcher.validate()?;
    let gt_frames = crate::mot::group_by_frame(gt);
    let hyp_frames = crate::mot::group_by_frame(hyp);
    let frames: BTreeSet<u64> = gt_frames.keys().chain(hyp_frames.keys()).copied().collect();

    let mut state = Correspondence::default();
    let mut counts = Vec::with_capacity(frames.len());
    let empty = Vec::new();
    for frame in frames {
        let g = labeled(
            gt_frames.get(&frame).unwrap_or(&empty),
            matcher,
            plane,
            "ground truth",
        )?;
        let h = labeled(
            hyp_frames.get(&frame).unwrap_or(&empty),
            matcher,
            plane,
            "hypotheses",
        )?;
        let (next, c) = match_frame(frame, &g, &h, &state, matcher)?;
        state = next;
        counts.push(c);
    }
    let mota = mota(&counts)?;
    Ok(MotReport {
        totals: totals(&counts),
        frames: counts,
        mota,
    })
}
