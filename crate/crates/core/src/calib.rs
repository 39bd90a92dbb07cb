//! Calibration documents: the solved projector pose and the camera model,
//! stored as JSON.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::cloud::CameraModel;
use crate::error::{Error, Result};
use crate::geometry::{
    load_calibration_points, quat_to_matrix, Frame, LabeledPoint, OrientationFit, Quaternion,
    RigidTransform,
};

/// The seven surveyed calibration points of the projection rig (3 frame
/// markers, 4 receiving-part datums), world frame, millimetres.
pub const TABLE1_WORLD_CSV: &str = include_str!("../fixtures/table1_world.csv");

pub fn table1_world_points() -> Vec<LabeledPoint> {
    load_calibration_points(TABLE1_WORLD_CSV).expect("bundled fixture parses")
}

/// A rigid transform as a unit quaternion `[w, x, y, z]` plus translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseJson {
    pub quaternion: [f64; 4],
    pub translation_mm: [f64; 3],
}

impl PoseJson {
    pub fn from_transform(t: &RigidTransform) -> Self {
        Self {
            quaternion: t.rotation().to_quaternion().components(),
            translation_mm: (*t.translation()).into(),
        }
    }

    pub fn to_transform(&self, from: Frame, to: Frame) -> Result<RigidTransform> {
        let [w, x, y, z] = self.quaternion;
        let q = Quaternion::new(w, x, y, z)?;
        let t = Vector3::from(self.translation_mm);
        if !t.iter().all(|c| c.is_finite()) {
            return Err(Error::Domain("translation must be finite".into()));
        }
        Ok(RigidTransform::between(from, to, quat_to_matrix(&q), t))
    }
}

/// World-to-projector pose with the galvo geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectorCalibration {
    #[serde(flatten)]
    pub pose: PoseJson,
    pub mirror_separation_mm: f64,
    pub rms_residual_mm: f64,
}

impl ProjectorCalibration {
    pub fn from_fit(fit: &OrientationFit, mirror_separation_mm: f64) -> Self {
        Self {
            pose: PoseJson::from_transform(&fit.transform),
            mirror_separation_mm,
            rms_residual_mm: fit.rms_residual,
        }
    }

    pub fn transform(&self) -> Result<RigidTransform> {
        self.pose.to_transform(Frame::World, Frame::Projector)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraJson {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Sensor-to-world pose.
    pub cam_to_world: PoseJson,
}

impl CameraJson {
    pub fn from_model(cam: &CameraModel) -> Self {
        Self {
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            cam_to_world: PoseJson::from_transform(&cam.cam_to_world),
        }
    }

    pub fn to_model(&self) -> Result<CameraModel> {
        let t = self
            .cam_to_world
            .to_transform(Frame::Sensor, Frame::World)?;
        CameraModel::new(self.fx, self.fy, self.cx, self.cy, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CalibrationDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projector: Option<ProjectorCalibration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraJson>,
}

impl CalibrationDoc {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration serializes") + "\n"
    }

    pub fn camera_model(&self) -> Result<CameraModel> {
        self.camera
            .as_ref()
            .ok_or_else(|| Error::Input("calibration has no camera section".into()))?
            .to_model()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{solve_absolute_orientation, Point3, Rotation};

    #[test]
    fn table1_values_are_exact() {
        let pts = table1_world_points();
        assert_eq!(pts.len(), 7);
        assert_eq!(pts[0].label, "投影架标定点 1");
        assert_eq!(pts[0].point.coords(), Vector3::new(-260.44, 312.64, 12.64));
        assert_eq!(pts[6].label, "承接部件基准点 4");
        assert_eq!(pts[6].point.coords(), Vector3::new(-207.86, 502.67, 10.02));
    }

    #[test]
    fn projector_round_trip_through_json() {
        let q = Quaternion::from_axis_angle(Vector3::new(1.0, 2.0, 0.5), 0.7).unwrap();
        let truth = RigidTransform::new(quat_to_matrix(&q), Vector3::new(10.0, -20.0, 300.0));
        let pairs: Vec<(Point3, Point3)> = table1_world_points()
            .iter()
            .map(|lp| (lp.point, truth.apply(&lp.point).unwrap()))
            .collect();
        let fit = solve_absolute_orientation(&pairs).unwrap();
        let doc = CalibrationDoc {
            projector: Some(ProjectorCalibration::from_fit(&fit, 12.5)),
            camera: None,
        };
        let back = CalibrationDoc::from_json(&doc.to_json()).unwrap();
        let t = back.projector.unwrap().transform().unwrap();
        assert!((t.rotation().matrix() - truth.rotation().matrix()).amax() < 1e-12);
        assert!((t.translation() - truth.translation()).amax() < 1e-9);
        assert!(matches!(back.camera_model(), Err(Error::Input(_))));
    }

    #[test]
    fn camera_section_builds_a_model() {
        let t = RigidTransform::between(
            Frame::Sensor,
            Frame::World,
            Rotation::identity(),
            Vector3::zeros(),
        );
        let cam = CameraModel::new(800.0, 810.0, 320.0, 240.0, t).unwrap();
        let doc = CalibrationDoc {
            projector: None,
            camera: Some(CameraJson::from_model(&cam)),
        };
        let text = doc.to_json();
        assert!(!text.contains("projector"));
        assert_eq!(
            CalibrationDoc::from_json(&text)
                .unwrap()
                .camera_model()
                .unwrap(),
            cam
        );
    }

    #[test]
    fn bad_json_is_an_input_error() {
        let e = CalibrationDoc::from_json("{").unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
