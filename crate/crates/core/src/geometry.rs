//! Projector geometry: the two-mirror galvanometer model, quaternion
//! rotations, rigid world/projector transforms and their calibration from
//! point correspondences.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinate frame a point is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    World,
    Projector,
    /// The camera/laser sensor frame clouds arrive in.
    Sensor,
}

/// A point in millimetres, tagged with its frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub frame: Frame,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64, frame: Frame) -> Self {
        Self { x, y, z, frame }
    }

    pub fn world(x: f64, y: f64, z: f64) -> Self {
        Self::new(x, y, z, Frame::World)
    }

    pub fn projector(x: f64, y: f64, z: f64) -> Self {
        Self::new(x, y, z, Frame::Projector)
    }

    pub fn sensor(x: f64, y: f64, z: f64) -> Self {
        Self::new(x, y, z, Frame::Sensor)
    }

    pub fn from_vector(v: &Vector3<f64>, frame: Frame) -> Self {
        Self::new(v.x, v.y, v.z, frame)
    }

    pub fn coords(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        (self.coords() - other.coords()).norm()
    }
}

/// Unit quaternion `(w, x, y, z)`, `w` being the real part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Quaternion {
    /// Normalizes the components; a zero or non-finite quaternion is rejected.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Contract(format!(
                "quaternion ({w}, {x}, {y}, {z}) cannot be normalized"
            )));
        }
        Ok(Self {
            w: w / norm,
            x: x / norm,
            y: y / norm,
            z: z / norm,
        })
    }

    pub fn identity() -> Self {
        Self {
            w: 1.0,
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }

    /// Rotation of `angle` radians about `axis`.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Contract("rotation axis must be non-zero".into()));
        }
        let (s, c) = (angle / 2.0).sin_cos();
        let a = axis / n;
        Self::new(c, s * a.x, s * a.y, s * a.z)
    }

    pub fn components(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn negated(&self) -> Self {
        Self {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Representative with non-negative real part.
    pub fn canonical(&self) -> Self {
        if self.w < 0.0 {
            self.negated()
        } else {
            *self
        }
    }
}

/// Proper rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    const TOLERANCE: f64 = 1e-9;

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Checks orthonormality and unit determinant to within 1e-9.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let ortho = (m.transpose() * m - Matrix3::identity()).amax();
        let det = m.determinant();
        if ortho > Self::TOLERANCE || (det - 1.0).abs() > Self::TOLERANCE {
            return Err(Error::Contract(format!(
                "not a rotation: |RtR - I| = {ortho:e}, det = {det}"
            )));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Shepperd's method; the result has non-negative real part.
    pub fn to_quaternion(&self) -> Quaternion {
        let m = &self.0;
        let trace = m.trace();
        let (w, x, y, z);
        if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            w = 0.25 * s;
            x = (m[(2, 1)] - m[(1, 2)]) / s;
            y = (m[(0, 2)] - m[(2, 0)]) / s;
            z = (m[(1, 0)] - m[(0, 1)]) / s;
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            w = (m[(2, 1)] - m[(1, 2)]) / s;
            x = 0.25 * s;
            y = (m[(0, 1)] + m[(1, 0)]) / s;
            z = (m[(0, 2)] + m[(2, 0)]) / s;
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            w = (m[(0, 2)] - m[(2, 0)]) / s;
            x = (m[(0, 1)] + m[(1, 0)]) / s;
            y = 0.25 * s;
            z = (m[(1, 2)] + m[(2, 1)]) / s;
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            w = (m[(1, 0)] - m[(0, 1)]) / s;
            x = (m[(0, 2)] + m[(2, 0)]) / s;
            y = (m[(1, 2)] + m[(2, 1)]) / s;
            z = 0.25 * s;
        }
        Quaternion::new(w, x, y, z)
            .expect("rotation matrix yields a non-zero quaternion")
            .canonical()
    }
}

/// Rotation matrix of a unit quaternion.
///
/// The (1,3) entry is `2(xz + wy)`; the (3,1) entry is `2(xz - wy)`.
pub fn quat_to_matrix(q: &Quaternion) -> Rotation {
    let [w, x, y, z] = q.components();
    Rotation(Matrix3::new(
        w * w + x * x - y * y - z * z,
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        w * w - x * x + y * y - z * z,
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        w * w - x * x - y * y + z * z,
    ))
}

/// `p_to = R p_from + T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Rotation,
    translation: Vector3<f64>,
    from: Frame,
    to: Frame,
}

impl RigidTransform {
    /// World-to-projector extrinsics.
    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Self::between(Frame::World, Frame::Projector, rotation, translation)
    }

    pub fn between(from: Frame, to: Frame, rotation: Rotation, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
            from,
            to,
        }
    }

    pub fn identity(from: Frame, to: Frame) -> Self {
        Self::between(from, to, Rotation::identity(), Vector3::zeros())
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn source_frame(&self) -> Frame {
        self.from
    }

    pub fn target_frame(&self) -> Frame {
        self.to
    }

    /// Maps raw coordinates without frame checks.
    pub fn map(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.0 * v + self.translation
    }

    pub fn apply(&self, p: &Point3) -> Result<Point3> {
        transform_apply(self, p)
    }

    pub fn inverse(&self) -> Self {
        transform_invert(self)
    }
}

pub fn transform_apply(t: &RigidTransform, p: &Point3) -> Result<Point3> {
    if p.frame != t.from {
        return Err(Error::Contract(format!(
            "transform expects a {:?}-frame point, got {:?}",
            t.from, p.frame
        )));
    }
    Ok(Point3::from_vector(&t.map(&p.coords()), t.to))
}

pub fn transform_invert(t: &RigidTransform) -> RigidTransform {
    let rt = t.rotation.transpose();
    RigidTransform {
        translation: -(rt.0 * t.translation),
        rotation: rt,
        from: t.to,
        to: t.from,
    }
}

/// Two-mirror galvanometer with mirror separation `e` (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GalvoModel {
    mirror_separation: f64,
}

impl GalvoModel {
    pub fn new(mirror_separation: f64) -> Result<Self> {
        if !(mirror_separation > 0.0 && mirror_separation.is_finite()) {
            return Err(Error::Domain(format!(
                "mirror separation must be positive, got {mirror_separation}"
            )));
        }
        Ok(Self { mirror_separation })
    }

    pub fn mirror_separation(&self) -> f64 {
        self.mirror_separation
    }
}

/// Horizontal angle `a` and pitch `b`, radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GalvoAngles {
    pub horizontal: f64,
    pub pitch: f64,
}

impl GalvoAngles {
    pub fn new(horizontal: f64, pitch: f64) -> Self {
        Self { horizontal, pitch }
    }
}

/// Projector-frame position of the spot at plane distance `distance`.
pub fn galvo_project(m: &GalvoModel, a: &GalvoAngles, distance: f64) -> Result<Point3> {
    for (name, angle) in [("horizontal", a.horizontal), ("pitch", a.pitch)] {
        if angle.is_nan() || angle.abs() >= FRAC_PI_2 {
            return Err(Error::Domain(format!(
                "{name} angle {angle} rad outside (-pi/2, pi/2)"
            )));
        }
    }
    if !(distance > 0.0 && distance.is_finite()) {
        return Err(Error::Domain(format!(
            "distance must be positive, got {distance}"
        )));
    }
    let tan_a = a.horizontal.tan();
    let x = m.mirror_separation * tan_a + distance * tan_a / a.pitch.cos();
    let y = distance * a.pitch.tan();
    Ok(Point3::projector(x, y, distance))
}

pub fn galvo_invert(m: &GalvoModel, p: &Point3) -> Result<GalvoAngles> {
    if p.frame != Frame::Projector {
        return Err(Error::Contract(format!(
            "galvo inversion needs a projector-frame point, got {:?}",
            p.frame
        )));
    }
    if p.z.is_nan() || p.z <= 0.0 {
        return Err(Error::Domain(format!(
            "point depth must be positive, got {}",
            p.z
        )));
    }
    let pitch = (p.y / p.z).atan();
    let horizontal = (p.x / (m.mirror_separation + p.z / pitch.cos())).atan();
    Ok(GalvoAngles { horizontal, pitch })
}

/// Result of fitting a rigid transform to correspondences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationFit {
    pub transform: RigidTransform,
    /// Root-mean-square point residual, mm.
    pub rms_residual: f64,
}

/// Least-squares rigid transform taking world points onto projector points,
/// via the quaternion eigenvector method.
pub fn solve_absolute_orientation(pairs: &[(Point3, Point3)]) -> Result<OrientationFit> {
    if pairs.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 correspondences, got {}",
            pairs.len()
        )));
    }
    for (i, (w, p)) in pairs.iter().enumerate() {
        if w.frame != Frame::World || p.frame != Frame::Projector {
            return Err(Error::Contract(format!(
                "pair {i} must be (world, projector), got ({:?}, {:?})",
                w.frame, p.frame
            )));
        }
        if !w.is_finite() || !p.is_finite() {
            return Err(Error::Contract(format!(
                "pair {i} has non-finite coordinates"
            )));
        }
    }

    let n = pairs.len() as f64;
    let world_centroid = pairs.iter().map(|(w, _)| w.coords()).sum::<Vector3<f64>>() / n;
    let proj_centroid = pairs.iter().map(|(_, p)| p.coords()).sum::<Vector3<f64>>() / n;

    let world: Vec<Vector3<f64>> = pairs
        .iter()
        .map(|(w, _)| w.coords() - world_centroid)
        .collect();
    let proj: Vec<Vector3<f64>> = pairs
        .iter()
        .map(|(_, p)| p.coords() - proj_centroid)
        .collect();

    if is_collinear(&world) {
        return Err(Error::Degenerate("world points are collinear".into()));
    }

    // cross-covariance S[a][b] = sum_i world_i[a] * proj_i[b]
    let s: Matrix3<f64> = world
        .iter()
        .zip(&proj)
        .map(|(a, b)| a * b.transpose())
        .sum();
    let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    let nmat = Matrix4::new(
        sxx + syy + szz,
        syz - szy,
        szx - sxz,
        sxy - syx,
        syz - szy,
        sxx - syy - szz,
        sxy + syx,
        szx + sxz,
        szx - sxz,
        sxy + syx,
        -sxx + syy - szz,
        syz + szy,
        sxy - syx,
        szx + sxz,
        syz + szy,
        -sxx - syy + szz,
    );

    let (values, vectors) = jacobi_eigen_symmetric(nmat);
    let best = dominant_index(&values, &vectors);
    let v: Vector4<f64> = vectors.column(best).into_owned();
    let q = Quaternion::new(v[0], v[1], v[2], v[3])?.canonical();
    let rotation = quat_to_matrix(&q);
    let translation = proj_centroid - rotation.0 * world_centroid;
    let transform = RigidTransform::new(rotation, translation);

    let sq: f64 = pairs
        .iter()
        .map(|(w, p)| (transform.map(&w.coords()) - p.coords()).norm_squared())
        .sum();
    Ok(OrientationFit {
        transform,
        rms_residual: (sq / n).sqrt(),
    })
}

fn is_collinear(centered: &[Vector3<f64>]) -> bool {
    let Some(far) = centered
        .iter()
        .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))
    else {
        return true;
    };
    let scale = far.norm();
    if scale == 0.0 {
        return true;
    }
    let dir = far / scale;
    let spread = centered
        .iter()
        .map(|p| p.cross(&dir).norm())
        .fold(0.0, f64::max);
    spread <= 1e-9 * scale.max(1.0)
}

/// Index of the largest eigenvalue; near-ties go to the eigenvector with
/// non-negative real part.
fn dominant_index(values: &Vector4<f64>, vectors: &Matrix4<f64>) -> usize {
    let max = values.max();
    let tol = 1e-12 * values.amax().max(1.0);
    let candidates: Vec<usize> = (0..4).filter(|&i| values[i] >= max - tol).collect();
    candidates
        .iter()
        .copied()
        .find(|&i| vectors[(0, i)] >= 0.0)
        .unwrap_or(candidates[0])
}

/// Cyclic Jacobi eigen-decomposition of a symmetric 4x4 matrix. Returns the
/// eigenvalues and the matrix whose columns are the matching unit
/// eigenvectors.
pub(crate) fn jacobi_eigen_symmetric(mut a: Matrix4<f64>) -> (Vector4<f64>, Matrix4<f64>) {
    let mut v = Matrix4::<f64>::identity();
    let scale = a.amax().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..4)
            .flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off < 1e-14 * scale {
            break;
        }
        for p in 0..3 {
            for q in (p + 1)..4 {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..4 {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..4 {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..4 {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    (a.diagonal(), v)
}

/// A named point from a calibration table.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub label: String,
    pub point: Point3,
}

/// Parses `label,x,y,z` rows (millimetres, world frame). Blank lines, `#`
/// comments and a leading `label,x,y,z` header are skipped.
pub fn load_calibration_points(text: &str) -> Result<Vec<LabeledPoint>> {
    let mut out = Vec::new();
    for record in crate::mot::csv_records(text) {
        let (line, fields) = record?;
        if out.is_empty() && fields.first().map(|f| f.trim()) == Some("label") {
            continue;
        }
        if fields.len() != 4 {
            return Err(Error::parse(
                line,
                format!("expected 4 fields (label,x,y,z), found {}", fields.len()),
            ));
        }
        let coord = |i: usize| crate::mot::parse_f64(&fields[i], line);
        out.push(LabeledPoint {
            label: fields[0].trim().to_string(),
            point: Point3::world(coord(1)?, coord(2)?, coord(3)?),
        });
    }
    Ok(out)
}

/// Parses world/projector correspondences: `wx,wy,wz,px,py,pz`, optionally
/// preceded by a label column.
pub fn load_correspondences(text: &str) -> Result<Vec<(Point3, Point3)>> {
    let mut out = Vec::new();
    for record in crate::mot::csv_records(text) {
        let (line, fields) = record?;
        let offset = match fields.len() {
            6 => 0,
            7 => 1,
            n => {
                return Err(Error::parse(
                    line,
                    format!("expected 6 or 7 fields, found {n}"),
                ))
            }
        };
        let v: Vec<f64> = fields[offset..]
            .iter()
            .map(|f| crate::mot::parse_f64(f, line))
            .collect::<Result<_>>()?;
        out.push((
            Point3::world(v[0], v[1], v[2]),
            Point3::projector(v[3], v[4], v[5]),
        ));
    }
    Ok(out)
}
