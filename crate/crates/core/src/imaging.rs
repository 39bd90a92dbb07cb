//! Retinex illumination removal on grayscale images.
//!
//! The estimator works in the log domain. A working plane `g` starts at the
//! global maximum of the log image `f` and is refined by propagating ratios
//! from neighbours at a shrinking set of offsets (the spiral schedule). Each
//! propagated value is clamped to the maximum of `f` and averaged with the
//! previous estimate. The final plane is stretched linearly onto `[0, 255]`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Contract(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Contract(format!(
                "{}x{} image needs {} pixels, got {}",
                width,
                height,
                width * height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }
}

/// Real-valued working plane, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPlane {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl LogPlane {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::Contract(format!(
                "plane of {}x{} cannot hold {} values",
                width,
                height,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("plane values must be finite".into()));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// `ln(pixel + offset)` for every pixel.
    pub fn from_image(img: &GrayImage, log_offset: f64) -> Self {
        Self {
            width: img.width,
            height: img.height,
            values: img
                .pixels
                .iter()
                .map(|&p| (p as f64 + log_offset).ln())
                .collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnhanceParams {
    pub passes_per_level: usize,
    pub log_offset: f64,
}

impl Default for EnhanceParams {
    fn default() -> Self {
        Self {
            passes_per_level: 1,
            log_offset: 1.0,
        }
    }
}

impl EnhanceParams {
    pub fn validate(&self) -> Result<()> {
        if self.passes_per_level < 1 {
            return Err(Error::Contract(
                "passes_per_level must be at least 1".into(),
            ));
        }
        if !(self.log_offset > 0.0 && self.log_offset.is_finite()) {
            return Err(Error::Contract(format!(
                "log_offset must be positive, got {}",
                self.log_offset
            )));
        }
        Ok(())
    }
}

/// Which neighbour a pixel reads from: `NegRow` reads `(i - D, j)`,
/// `PosRow` reads `(i + D, j)`, and likewise for columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    NegRow,
    PosRow,
    NegCol,
    PosCol,
}

impl Direction {
    /// Sweep order applied at every offset level.
    pub const SWEEP: [Direction; 4] = [
        Direction::NegRow,
        Direction::PosRow,
        Direction::NegCol,
        Direction::PosCol,
    ];

    fn neighbour(
        self,
        row: usize,
        col: usize,
        d: usize,
        h: usize,
        w: usize,
    ) -> Option<(usize, usize)> {
        match self {
            Direction::NegRow => row.checked_sub(d).map(|r| (r, col)),
            Direction::PosRow => (row + d < h).then_some((row + d, col)),
            Direction::NegCol => col.checked_sub(d).map(|c| (row, c)),
            Direction::PosCol => (col + d < w).then_some((row, col + d)),
        }
    }
}

/// Decode a binary PGM (`P5`, maxval 255). Header comments are accepted.
pub fn load_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"P5" {
        return Err(Error::Format(format!(
            "expected magic P5, found {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = parse_header_number(bytes, &mut pos, "width")?;
    let height = parse_header_number(bytes, &mut pos, "height")?;
    let maxval = parse_header_number(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!("maxval must be 255, found {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format(format!(
            "invalid dimensions {width}x{height}"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Format("missing whitespace after maxval".into())),
    }
    let needed = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format("image dimensions overflow".into()))?;
    let body = &bytes[pos..];
    if body.len() < needed {
        return Err(Error::Format(format!(
            "truncated raster: expected {needed} bytes, found {}",
            body.len()
        )));
    }
    GrayImage::new(width, height, body[..needed].to_vec())
}

fn skip_whitespace_and_comments(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        if bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        } else if bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    skip_whitespace_and_comments(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("unexpected end of header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn parse_header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let token = next_token(bytes, pos)?;
    std::str::from_utf8(token)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| {
            Error::Format(format!(
                "bad {what} field {:?}",
                String::from_utf8_lossy(token)
            ))
        })
}

pub fn save_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.pixels.len() + 20);
    write!(out, "P5\n{} {}\n255\n", img.width, img.height).expect("write to Vec");
    out.extend_from_slice(&img.pixels);
    out
}

/// Descending powers of two from the largest one not exceeding
/// `max(width, height) / 2` down to 1.
pub fn spiral_offsets(width: usize, height: usize) -> Vec<usize> {
    let half = width.max(height) / 2;
    if half == 0 {
        return Vec::new();
    }
    let mut d = 1usize << (usize::BITS - 1 - half.leading_zeros());
    let mut out = Vec::new();
    while d >= 1 {
        out.push(d);
        d /= 2;
    }
    out
}

/// One directional propagation sweep at offset `d`.
///
/// Pixels whose neighbour falls outside the image keep their value, so an
/// offset larger than the relevant dimension leaves the plane unchanged.
pub fn retinex_step(
    g: &LogPlane,
    f: &LogPlane,
    d: usize,
    direction: Direction,
) -> Result<LogPlane> {
    if g.width != f.width || g.height != f.height {
        return Err(Error::Contract(format!(
            "estimate is {}x{} but log image is {}x{}",
            g.width, g.height, f.width, f.height
        )));
    }
    if d == 0 {
        return Err(Error::Contract("offset must be at least 1".into()));
    }
    Ok(step_with_ceiling(g, f, d, direction, f.max()))
}

fn step_with_ceiling(
    g: &LogPlane,
    f: &LogPlane,
    d: usize,
    direction: Direction,
    ceiling: f64,
) -> LogPlane {
    let (w, h) = (g.width, g.height);
    let mut next = g.values.clone();
    for row in 0..h {
        for col in 0..w {
            if let Some((nr, nc)) = direction.neighbour(row, col, d, h, w) {
                let here = row * w + col;
                let there = nr * w + nc;
                let propagated = (g.values[there] + f.values[here] - f.values[there]).min(ceiling);
                next[here] = (g.values[here] + propagated) / 2.0;
            }
        }
    }
    LogPlane {
        width: w,
        height: h,
        values: next,
    }
}

/// Linear stretch of the plane onto `[0, 255]`, rounding half away from
/// zero. A constant plane maps to 128 everywhere.
pub fn normalize_eq6(plane: &LogPlane) -> GrayImage {
    let lo = plane.min();
    let hi = plane.max();
    let pixels = if hi == lo {
        vec![128u8; plane.values.len()]
    } else {
        plane
            .values
            .iter()
            .map(|&v| ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    };
    GrayImage {
        width: plane.width,
        height: plane.height,
        pixels,
    }
}

pub fn enhance(img: &GrayImage, params: &EnhanceParams) -> Result<GrayImage> {
    params.validate()?;
    let f = LogPlane::from_image(img, params.log_offset);
    let ceiling = f.max();
    let mut g = LogPlane {
        width: f.width,
        height: f.height,
        values: vec![ceiling; f.values.len()],
    };
    for d in spiral_offsets(img.width, img.height) {
        for _ in 0..params.passes_per_level {
            for dir in Direction::SWEEP {
                g = step_with_ceiling(&g, &f, d, dir, ceiling);
            }
        }
    }
    Ok(normalize_eq6(&g))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(w: usize, h: usize, v: &[f64]) -> LogPlane {
        LogPlane::new(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn loads_minimal_p5() {
        let mut bytes = b"P5\n2 1\n255\n".to_vec();
        bytes.extend([0u8, 255]);
        let img = load_pgm(&bytes).unwrap();
        assert_eq!(img, GrayImage::new(2, 1, vec![0, 255]).unwrap());
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5 # made by hand\n# another\n1 1\n255\n".to_vec();
        bytes.push(9);
        assert_eq!(load_pgm(&bytes).unwrap().pixels(), &[9]);
    }

    #[test]
    fn rejects_wrong_magic() {
        let bytes = b"P6\n1 1\n255\n\x00\x00\x00".to_vec();
        assert!(matches!(load_pgm(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_truncated_body() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([1u8, 2, 3]);
        let err = load_pgm(&bytes).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn rejects_other_maxval() {
        let mut bytes = b"P5\n1 1\n65535\n".to_vec();
        bytes.extend([0u8, 0]);
        assert!(matches!(load_pgm(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn saves_minimal_image() {
        let img = GrayImage::new(1, 1, vec![7]).unwrap();
        assert_eq!(save_pgm(&img), b"P5\n1 1\n255\n\x07".to_vec());
    }

    #[test]
    fn offsets_follow_halving_schedule() {
        assert_eq!(spiral_offsets(8, 8), vec![4, 2, 1]);
        assert_eq!(spiral_offsets(2, 2), vec![1]);
        assert_eq!(spiral_offsets(1, 1), Vec::<usize>::new());
        assert_eq!(spiral_offsets(3, 1), vec![1]);
        assert_eq!(spiral_offsets(5, 17), vec![8, 4, 2, 1]);
    }

    #[test]
    fn step_is_shift_invariant_on_constants() {
        let f = LogPlane::filled(4, 3, 0.7).unwrap();
        let g = LogPlane::filled(4, 3, 0.7).unwrap();
        for dir in Direction::SWEEP {
            for d in 1..3 {
                assert_eq!(retinex_step(&g, &f, d, dir).unwrap(), g);
            }
        }
    }

    #[test]
    fn step_hand_case_without_clamp() {
        let f = plane(2, 1, &[0.5, 0.2]);
        let g = plane(2, 1, &[0.5, 0.5]);
        let out = retinex_step(&g, &f, 1, Direction::NegCol).unwrap();
        assert_eq!(out.values()[0], 0.5);
        assert!((out.values()[1] - 0.35).abs() < 1e-15);
    }

    #[test]
    fn step_hand_case_with_clamp() {
        let f = plane(2, 1, &[0.0, 1.0]);
        let g = plane(2, 1, &[1.0, 1.0]);
        let out = retinex_step(&g, &f, 1, Direction::NegCol).unwrap();
        assert_eq!(out.values(), &[1.0, 1.0]);
    }

    #[test]
    fn step_rejects_dimension_mismatch() {
        let f = LogPlane::filled(2, 2, 0.0).unwrap();
        let g = LogPlane::filled(2, 1, 0.0).unwrap();
        assert!(matches!(
            retinex_step(&g, &f, 1, Direction::PosRow),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn oversized_offset_leaves_plane_unchanged() {
        let f = plane(2, 1, &[0.0, 1.0]);
        let g = plane(2, 1, &[0.3, 0.9]);
        assert_eq!(retinex_step(&g, &f, 4, Direction::PosCol).unwrap(), g);
        assert_eq!(retinex_step(&g, &f, 1, Direction::PosRow).unwrap(), g);
    }

    #[test]
    fn normalize_rounds_half_away_from_zero() {
        let img = normalize_eq6(&plane(3, 1, &[10.0, 60.0, 110.0]));
        assert_eq!(img.pixels(), &[0, 128, 255]);
    }

    #[test]
    fn normalize_constant_plane_is_mid_grey() {
        let img = normalize_eq6(&LogPlane::filled(3, 2, -4.0).unwrap());
        assert!(img.pixels().iter().all(|&p| p == 128));
    }

    #[test]
    fn enhance_constant_image_is_mid_grey() {
        let img = GrayImage::filled(9, 5, 77).unwrap();
        let out = enhance(&img, &EnhanceParams::default()).unwrap();
        assert!(out.pixels().iter().all(|&p| p == 128));
    }

    #[test]
    fn enhance_rejects_bad_params() {
        let img = GrayImage::filled(2, 2, 1).unwrap();
        let bad = EnhanceParams {
            passes_per_level: 0,
            log_offset: 1.0,
        };
        assert!(enhance(&img, &bad).is_err());
        let bad = EnhanceParams {
            passes_per_level: 1,
            log_offset: 0.0,
        };
        assert!(enhance(&img, &bad).is_err());
    }

    #[test]
    fn enhance_two_pixel_image_spans_full_range() {
        let img = GrayImage::new(2, 1, vec![0, 255]).unwrap();
        let out = enhance(&img, &EnhanceParams::default()).unwrap();
        assert_eq!(out.pixels(), &[0, 255]);
    }
}
