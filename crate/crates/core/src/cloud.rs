//! Laser point clouds: ASCII ingestion, statistical outlier removal, and
//! lifting 2D detection boxes to 3D world points through a pinhole camera.

use std::fmt::Write as _;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Frame, Point3, RigidTransform};
use crate::mot::{BBox, ObjectClass};

/// One frame of laser returns in the sensor frame, millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub frame: u64,
    pub points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(frame: u64, points: Vec<Point3>) -> Self {
        Self { frame, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// File name of a frame's cloud: `cloud_<frame>.xyz`.
pub fn cloud_file_name(frame: u64) -> String {
    format!("cloud_{frame}.xyz")
}

/// Pinhole intrinsics plus the sensor-to-world extrinsic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub cam_to_world: RigidTransform,
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, cam_to_world: RigidTransform) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::Domain(format!(
                "focal lengths must be positive, got {fx}, {fy}"
            )));
        }
        if cam_to_world.source_frame() != Frame::Sensor
            || cam_to_world.target_frame() != Frame::World
        {
            return Err(Error::Contract(
                "camera extrinsic must map sensor to world".into(),
            ));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            cam_to_world,
        })
    }

    /// Pixel coordinates of a sensor-frame point; `None` behind the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        (p.z > 0.0).then(|| (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Sensor-frame point on the ray through `(u, v)` at depth `z`.
    pub fn back_project(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame: u64,
    pub class: ObjectClass,
    pub bbox: BBox,
    pub confidence: f64,
}

/// Plane `{p : normal . p = offset}` in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlaneJson", into = "PlaneJson")]
pub struct ProjectionPlane {
    normal: Vector3<f64>,
    offset: f64,
    basis: [Vector3<f64>; 2],
}

#[derive(Serialize, Deserialize)]
struct PlaneJson {
    normal: [f64; 3],
    offset: f64,
}

impl TryFrom<PlaneJson> for ProjectionPlane {
    type Error = Error;

    fn try_from(p: PlaneJson) -> Result<Self> {
        ProjectionPlane::new(Vector3::from(p.normal), p.offset)
    }
}

impl From<ProjectionPlane> for PlaneJson {
    fn from(p: ProjectionPlane) -> Self {
        PlaneJson {
            normal: p.normal.into(),
            offset: p.offset,
        }
    }
}

impl Default for ProjectionPlane {
    /// The ground plane `z = 0`.
    fn default() -> Self {
        Self::new(Vector3::z(), 0.0).expect("unit normal")
    }
}

impl ProjectionPlane {
    /// The normal is normalized. The in-plane basis starts from the world
    /// axis least aligned with the normal (lowest index on ties).
    pub fn new(normal: Vector3<f64>, offset: f64) -> Result<Self> {
        let n = normal.norm();
        if !(n > 0.0 && n.is_finite() && offset.is_finite()) {
            return Err(Error::Contract(
                "plane normal must be finite and non-zero".into(),
            ));
        }
        let normal = normal / n;
        let axis = (0..3)
            .min_by(|&a, &b| normal[a].abs().total_cmp(&normal[b].abs()))
            .expect("three axes");
        let seed = Vector3::ith(axis, 1.0);
        let e1 = (seed - normal * normal.dot(&seed)).normalize();
        let e2 = normal.cross(&e1);
        Ok(Self {
            normal,
            offset,
            basis: [e1, e2],
        })
    }

    pub fn normal(&self) -> &Vector3<f64> {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn basis(&self) -> &[Vector3<f64>; 2] {
        &self.basis
    }

    /// World point with the given in-plane coordinates.
    pub fn point_at(&self, c: &Point2) -> Point3 {
        let v = self.normal * self.offset + self.basis[0] * c.x + self.basis[1] * c.y;
        Point3::from_vector(&v, Frame::World)
    }
}

/// In-plane coordinates, mm.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Whitespace-separated `x y z` per line; `#` starts a comment.
pub fn load_xyz(text: &str, frame: u64) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = (i + 1) as u64;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(Error::parse(
                line,
                format!("expected 3 coordinates, found {}", tokens.len()),
            ));
        }
        let mut xyz = [0.0; 3];
        for (slot, tok) in xyz.iter_mut().zip(&tokens) {
            *slot = tok
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(line, format!("not a finite number: {tok:?}")))?;
        }
        points.push(Point3::sensor(xyz[0], xyz[1], xyz[2]));
    }
    Ok(PointCloud { frame, points })
}

pub fn write_xyz(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.points.len() * 24);
    for p in &cloud.points {
        writeln!(out, "{} {} {}", p.x, p.y, p.z).expect("write to String");
    }
    out
}

/// Mean distance from every point to its `k` nearest neighbours
/// (brute force, parallel over query points).
pub fn knn_mean_distances(points: &[Point3], k: usize) -> Vec<f64> {
    let coords: Vec<Vector3<f64>> = points.iter().map(Point3::coords).collect();
    coords
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = coords
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| (p - q).norm())
                .collect();
            let k = k.min(d.len());
            if k == 0 {
                return 0.0;
            }
            d.select_nth_unstable_by(k - 1, f64::total_cmp);
            d[..k].iter().sum::<f64>() / k as f64
        })
        .collect()
}

/// Drops points whose mean k-NN distance exceeds `mean + mult * std` over
/// the cloud. Clouds with at most `k` points are returned unchanged.
pub fn denoise_statistical(cloud: &PointCloud, k: usize, mult: f64) -> Result<PointCloud> {
    if k < 1 {
        return Err(Error::Contract("k must be at least 1".into()));
    }
    if mult.is_nan() || mult <= 0.0 {
        return Err(Error::Contract(format!(
            "multiplier must be positive, got {mult}"
        )));
    }
    if cloud.points.len() <= k {
        return Ok(cloud.clone());
    }
    let d = knn_mean_distances(&cloud.points, k);
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let limit = mean + mult * std;
    let points = cloud
        .points
        .iter()
        .zip(&d)
        .filter(|&(_, &di)| di <= limit)
        .map(|(p, _)| *p)
        .collect();
    Ok(PointCloud {
        frame: cloud.frame,
        points,
    })
}

/// Median of a non-empty slice (mean of the middle pair for even length).
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Median depth of the cloud points whose projection falls inside the box.
pub fn frustum_depth(bbox: &BBox, cam: &CameraModel, cloud: &PointCloud) -> Result<f64> {
    let mut depths: Vec<f64> = cloud
        .points
        .iter()
        .filter_map(|p| {
            let v = p.coords();
            cam.project(&v)
                .filter(|&(u, w)| bbox.contains(u, w))
                .map(|_| v.z)
        })
        .collect();
    if depths.is_empty() {
        return Err(Error::NoDepth);
    }
    Ok(median(&mut depths))
}

/// World position of a detection: the box centre back-projected at the
/// median depth of the in-box cloud points.
pub fn lift_detection(d: &Detection, cam: &CameraModel, cloud: &PointCloud) -> Result<Point3> {
    if !(d.bbox.width > 0.0 && d.bbox.height > 0.0) {
        return Err(Error::Contract(
            "detection box must have positive size".into(),
        ));
    }
    if let Some(p) = cloud.points.first() {
        if p.frame != Frame::Sensor {
            return Err(Error::Contract(format!(
                "cloud must be in the sensor frame, got {:?}",
                p.frame
            )));
        }
    }
    let depth = frustum_depth(&d.bbox, cam, cloud)?;
    let (u, v) = d.bbox.center();
    let sensor = Point3::from_vector(&cam.back_project(u, v, depth), Frame::Sensor);
    cam.cam_to_world.apply(&sensor)
}

/// Orthogonal projection onto the plane, in the plane's own basis.
pub fn project_to_plane(p: &Point3, plane: &ProjectionPlane) -> Point2 {
    let v = p.coords();
    Point2::new(plane.basis[0].dot(&v), plane.basis[1].dot(&v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation;

    fn camera() -> CameraModel {
        CameraModel::new(
            1000.0,
            1000.0,
            640.0,
            360.0,
            RigidTransform::identity(Frame::Sensor, Frame::World),
        )
        .unwrap()
    }

    #[test]
    fn xyz_parsing() {
        assert_eq!(load_xyz("1 2 3\n4 5 6", 0).unwrap().len(), 2);
        let c = load_xyz("# hdr\n0 0 0\n", 4).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.frame, 4);
        let err = load_xyz("1 2 x", 0).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = load_xyz("1 2 3\n\n1 2\n", 0).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn xyz_round_trip() {
        let c = PointCloud::new(
            2,
            vec![
                Point3::sensor(0.1, -2.5, 1e6),
                Point3::sensor(3.0, 4.0, 5.0),
            ],
        );
        assert_eq!(load_xyz(&write_xyz(&c), 2).unwrap(), c);
    }

    #[test]
    fn denoise_small_and_empty_clouds() {
        let empty = PointCloud::new(0, vec![]);
        assert!(denoise_statistical(&empty, 3, 1.0).unwrap().is_empty());
        let pts: Vec<Point3> = (0..3)
            .map(|i| Point3::sensor(i as f64 * 1e4, 0.0, 0.0))
            .collect();
        let small = PointCloud::new(0, pts);
        assert_eq!(denoise_statistical(&small, 3, 1.0).unwrap(), small);
        assert!(denoise_statistical(&small, 0, 1.0).is_err());
    }

    #[test]
    fn median_rules() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn single_point_on_centre_ray() {
        let cam = camera();
        let bbox = BBox::new(600.0, 300.0, 80.0, 120.0);
        let (u, v) = bbox.center();
        let p = cam.back_project(u, v, 5000.0);
        let cloud = PointCloud::new(1, vec![Point3::sensor(p.x, p.y, p.z)]);
        let d = Detection {
            frame: 1,
            class: ObjectClass::Car,
            bbox,
            confidence: 0.9,
        };
        let w = lift_detection(&d, &cam, &cloud).unwrap();
        assert!((w.coords() - p).norm() < 1e-9);
        assert_eq!(w.frame, Frame::World);
    }

    #[test]
    fn empty_cloud_has_no_depth() {
        let d = Detection {
            frame: 1,
            class: ObjectClass::Car,
            bbox: BBox::new(0.0, 0.0, 10.0, 10.0),
            confidence: 0.9,
        };
        assert!(matches!(
            lift_detection(&d, &camera(), &PointCloud::new(1, vec![])),
            Err(Error::NoDepth)
        ));
    }

    #[test]
    fn points_behind_camera_are_ignored() {
        let cam = camera();
        let bbox = BBox::new(0.0, 0.0, 1280.0, 720.0);
        let cloud = PointCloud::new(0, vec![Point3::sensor(0.0, 0.0, -100.0)]);
        assert!(matches!(
            frustum_depth(&bbox, &cam, &cloud),
            Err(Error::NoDepth)
        ));
    }

    #[test]
    fn ground_plane_projection() {
        let plane = ProjectionPlane::default();
        assert_eq!(
            project_to_plane(&Point3::world(3.0, 4.0, 7.0), &plane),
            Point2::new(3.0, 4.0)
        );
    }

    #[test]
    fn tilted_plane_basis_is_orthonormal() {
        let plane = ProjectionPlane::new(Vector3::new(1.0, -2.0, 0.5), 30.0).unwrap();
        let [e1, e2] = plane.basis();
        let n = plane.normal();
        assert!((e1.norm() - 1.0).abs() < 1e-12);
        assert!((e2.norm() - 1.0).abs() < 1e-12);
        assert!(e1.dot(e2).abs() < 1e-12);
        assert!(e1.dot(n).abs() < 1e-12);
        assert!((n.norm() - 1.0).abs() < 1e-12);
        let on_plane = plane.point_at(&Point2::new(12.5, -3.0));
        let back = project_to_plane(&on_plane, &plane);
        assert!((back.x - 12.5).abs() < 1e-12 && (back.y + 3.0).abs() < 1e-12);
        assert!((n.dot(&on_plane.coords()) - 30.0).abs() < 1e-12);
    }

    #[test]
    fn plane_json_round_trip() {
        let plane = ProjectionPlane::new(Vector3::new(0.0, 0.0, 2.0), -5.0).unwrap();
        let json = serde_json::to_string(&plane).unwrap();
        assert_eq!(json, r#"{"normal":[0.0,0.0,1.0],"offset":-5.0}"#);
        assert_eq!(
            serde_json::from_str::<ProjectionPlane>(&json).unwrap(),
            plane
        );
        assert!(
            serde_json::from_str::<ProjectionPlane>(r#"{"normal":[0,0,0],"offset":0}"#).is_err()
        );
    }

    #[test]
    fn camera_requires_sensor_to_world() {
        let t = crate::geometry::RigidTransform::new(Rotation::identity(), Vector3::zeros());
        assert!(CameraModel::new(1.0, 1.0, 0.0, 0.0, t).is_err());
        assert!(CameraModel::new(
            0.0,
            1.0,
            0.0,
            0.0,
            RigidTransform::identity(Frame::Sensor, Frame::World)
        )
        .is_err());
    }
}
