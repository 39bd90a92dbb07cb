//! Deterministic synthetic scenes: constant-velocity targets seen by a
//! pinhole camera, with matching ground truth, detections and laser clouds.
//!
//! Every random draw comes from [`SplitMix64`]. The target layout uses the
//! stream seeded with `seed`; frame `f` uses its own stream (see
//! [`frame_seed`]) and always consumes the same number of draws per target,
//! so changing the dropout or noise level never reshuffles the other
//! perturbations.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calib::{CalibrationDoc, CameraJson};
use crate::cloud::{cloud_file_name, write_xyz, CameraModel, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::{Frame, Point3, RigidTransform, Rotation};
use crate::mot::{write_mot, BBox, MotRow, ObjectClass};
use crate::rng::SplitMix64;

/// Patch points per side; each visible target contributes `PATCH_SIDE^2`.
const PATCH_SIDE: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    /// World position at frame 1, mm.
    pub start: [f64; 3],
    /// World displacement per frame, mm.
    pub velocity: [f64; 3],
    #[serde(default = "default_class")]
    pub class: ObjectClass,
}

fn default_class() -> ObjectClass {
    ObjectClass::Car
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    /// Number of auto-placed targets; ignored when `targets` is given.
    pub n_targets: usize,
    pub n_frames: u64,
    pub targets: Option<Vec<TargetSpec>>,
    /// Target box size along world x, y, z, mm.
    pub extent_mm: [f64; 3],
    pub camera: CameraJson,
    pub image_width: u32,
    pub image_height: u32,
    pub dropout: f64,
    /// Lateral detection noise, mm at the target's depth.
    pub position_noise_sigma: f64,
    /// Expected false detections per frame.
    pub clutter_rate: f64,
}

/// A forward-looking camera 1.5 m above the world origin, optical axis
/// along world +x, image right towards -y and image down towards -z.
pub fn default_camera() -> CameraModel {
    let r = Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
    let t = RigidTransform::between(
        Frame::Sensor,
        Frame::World,
        Rotation::from_matrix(r).expect("proper rotation"),
        Vector3::new(0.0, 0.0, 1500.0),
    );
    CameraModel::new(1000.0, 1000.0, 960.0, 540.0, t).expect("valid camera")
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_targets: 0,
            n_frames: 100,
            targets: None,
            extent_mm: [4500.0, 1800.0, 1500.0],
            camera: CameraJson::from_model(&default_camera()),
            image_width: 1920,
            image_height: 1080,
            dropout: 0.0,
            position_noise_sigma: 0.0,
            clutter_rate: 0.0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Contract(format!(
                    "{name} must be in [0, 1], got {p}"
                )))
            }
        };
        prob("dropout", self.dropout)?;
        if !(self.position_noise_sigma >= 0.0 && self.position_noise_sigma.is_finite()) {
            return Err(Error::Contract("position_noise_sigma must be >= 0".into()));
        }
        if !(self.clutter_rate >= 0.0 && self.clutter_rate.is_finite()) {
            return Err(Error::Contract("clutter_rate must be >= 0".into()));
        }
        if !self.extent_mm.iter().all(|&e| e > 0.0 && e.is_finite()) {
            return Err(Error::Contract("extent_mm must be positive".into()));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::Contract("image size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub camera: CameraModel,
    pub targets: Vec<TargetSpec>,
    /// Ground truth, ids `1..=targets.len()`, ordered by `(frame, id)`.
    pub gt: Vec<MotRow>,
    /// Detections with id -1 and no world position.
    pub detections: Vec<MotRow>,
    /// One cloud per frame `1..=n_frames`, sensor frame.
    pub clouds: Vec<PointCloud>,
}

/// Seed of frame `f`'s private stream.
pub fn frame_seed(seed: u64, frame: u64) -> u64 {
    SplitMix64::new(seed ^ frame.wrapping_mul(0xD1B5_4A32_D192_ED03)).next_u64()
}

fn position(t: &TargetSpec, frame: u64) -> Vector3<f64> {
    let k = (frame - 1) as f64;
    Vector3::from(t.start) + Vector3::from(t.velocity) * k
}

/// Sensor-frame centre and the image box of a target at one frame, or `None`
/// when it sits at or behind the camera plane.
fn view(
    cam: &CameraModel,
    extent: &[f64; 3],
    world: &Vector3<f64>,
) -> Option<(Vector3<f64>, BBox)> {
    let c = cam.cam_to_world.inverse().map(world);
    if c.z <= 0.0 {
        return None;
    }
    let (hw, hh) = (extent[1] / 2.0, extent[2] / 2.0);
    let left = cam.fx * (c.x - hw) / c.z + cam.cx;
    let top = cam.fy * (c.y - hh) / c.z + cam.cy;
    let bbox = BBox::new(left, top, cam.fx * 2.0 * hw / c.z, cam.fy * 2.0 * hh / c.z);
    Some((c, bbox))
}

fn inside_image(b: &BBox, w: u32, h: u32) -> bool {
    b.left >= 0.0 && b.top >= 0.0 && b.right() <= w as f64 && b.bottom() <= h as f64
}

fn overlaps(a: &BBox, b: &BBox) -> bool {
    a.left < b.right() && b.left < a.right() && a.top < b.bottom() && b.top < a.bottom()
}

/// Minimum plane separation between auto-placed targets, mm.
const MIN_SEPARATION: f64 = 2500.0;
const MAX_ATTEMPTS: usize = 10_000;
/// Auto-placed targets occupy bearings with `|y / x| <= BEARING_SPAN`.
const BEARING_SPAN: f64 = 0.8;

/// Target `i` of `n` is placed in its own bearing slot and moves roughly
/// along that bearing, then checked against the targets already placed.
fn auto_layout(s: &SceneSpec, cam: &CameraModel) -> Result<Vec<TargetSpec>> {
    let mut rng = SplitMix64::new(s.seed);
    let mut placed: Vec<TargetSpec> = Vec::with_capacity(s.n_targets);
    let frames: Vec<u64> = (1..=s.n_frames.max(1)).collect();
    let slot = 2.0 * BEARING_SPAN / s.n_targets.max(1) as f64;
    for i in 0..s.n_targets {
        let mut attempt = 0;
        loop {
            attempt += 1;
            if attempt > MAX_ATTEMPTS {
                return Err(Error::Generation(format!(
                    "could not place target {} without overlap",
                    i + 1
                )));
            }
            let bearing = -BEARING_SPAN + slot * (i as f64 + rng.uniform(0.3, 0.7));
            let depth = rng.uniform(18_000.0, 22_000.0);
            let vx = rng.uniform(-10.0, 10.0);
            let cand = TargetSpec {
                start: [depth, bearing * depth, s.extent_mm[2] / 2.0],
                velocity: [vx, vx * bearing + rng.uniform(-2.0, 2.0), 0.0],
                class: ObjectClass::ALL[rng.below(ObjectClass::ALL.len() as u64) as usize],
            };
            let ok = frames.iter().all(|&f| {
                let p = position(&cand, f);
                let Some((_, b)) = view(cam, &s.extent_mm, &p) else {
                    return false;
                };
                inside_image(&b, s.image_width, s.image_height)
                    && placed.iter().all(|o| {
                        let q = position(o, f);
                        let (_, ob) = view(cam, &s.extent_mm, &q).expect("placed target visible");
                        let planar = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt();
                        planar >= MIN_SEPARATION && !overlaps(&b, &ob)
                    })
            });
            if ok {
                placed.push(cand);
                break;
            }
        }
    }
    Ok(placed)
}

/// Generates the scene. Frames are produced in parallel; the result does not
/// depend on thread count.
/// Ground truth, detections and cloud for one frame.
type FrameOutput = (Vec<MotRow>, Vec<MotRow>, PointCloud);

pub fn gen_scene(s: &SceneSpec) -> Result<Scene> {
    s.validate()?;
    let cam = s.camera.to_model()?;
    let targets = match &s.targets {
        Some(t) => t.clone(),
        None => auto_layout(s, &cam)?,
    };

    let per_frame: Vec<Result<FrameOutput>> = (1..=s.n_frames)
        .into_par_iter()
        .map(|frame| gen_frame(s, &cam, &targets, frame))
        .collect();

    let mut gt = Vec::new();
    let mut detections = Vec::new();
    let mut clouds = Vec::with_capacity(per_frame.len());
    for r in per_frame {
        let (g, d, c) = r?;
        gt.extend(g);
        detections.extend(d);
        clouds.push(c);
    }
    Ok(Scene {
        camera: cam,
        targets,
        gt,
        detections,
        clouds,
    })
}

fn gen_frame(
    s: &SceneSpec,
    cam: &CameraModel,
    targets: &[TargetSpec],
    frame: u64,
) -> Result<(Vec<MotRow>, Vec<MotRow>, PointCloud)> {
    let mut rng = SplitMix64::new(frame_seed(s.seed, frame));
    let mut gt = Vec::new();
    let mut dets = Vec::new();
    let mut points = Vec::new();
    for (i, t) in targets.iter().enumerate() {
        let world = position(t, frame);
        let (c, bbox) = view(cam, &s.extent_mm, &world).ok_or_else(|| {
            Error::Generation(format!(
                "target {} is behind the camera at frame {frame}",
                i + 1
            ))
        })?;
        let drop = rng.next_f64() < s.dropout;
        let (nu, nv) = (rng.gaussian(), rng.gaussian());

        let (u, v) = bbox.center();
        if u < 0.0 || v < 0.0 || u > s.image_width as f64 || v > s.image_height as f64 {
            continue;
        }
        gt.push(MotRow {
            frame,
            id: i as i64 + 1,
            bbox,
            confidence: 1.0,
            class: t.class,
            world: Some(Point3::world(world.x, world.y, world.z)),
        });

        let (hw, hh) = (0.45 * s.extent_mm[1], 0.45 * s.extent_mm[2]);
        let last = (PATCH_SIDE - 1) as f64;
        for a in 0..PATCH_SIDE {
            for b in 0..PATCH_SIDE {
                let dx = -hw + 2.0 * hw * a as f64 / last;
                let dy = -hh + 2.0 * hh * b as f64 / last;
                points.push(Point3::sensor(c.x + dx, c.y + dy, c.z));
            }
        }

        if !drop {
            let sigma = s.position_noise_sigma;
            let shifted = BBox::new(
                bbox.left + nu * sigma * cam.fx / c.z,
                bbox.top + nv * sigma * cam.fy / c.z,
                bbox.width,
                bbox.height,
            );
            dets.push(MotRow {
                frame,
                id: -1,
                bbox: shifted,
                confidence: 0.9,
                class: t.class,
                world: None,
            });
        }
    }

    let clutter = rng.poisson(s.clutter_rate);
    for _ in 0..clutter {
        let w = rng.uniform(40.0, 160.0);
        let h = rng.uniform(30.0, 120.0);
        let left = rng.uniform(0.0, s.image_width as f64 - w);
        let top = rng.uniform(0.0, s.image_height as f64 - h);
        let class = ObjectClass::ALL[rng.below(ObjectClass::ALL.len() as u64) as usize];
        dets.push(MotRow {
            frame,
            id: -1,
            bbox: BBox::new(left, top, w, h),
            confidence: rng.uniform(0.3, 0.6),
            class,
            world: None,
        });
    }
    Ok((gt, dets, PointCloud::new(frame, points)))
}

/// Writes `gt.csv`, `detections.csv`, `calibration.json` and
/// `clouds/cloud_<frame>.xyz` under `dir`.
pub fn write_scene(scene: &Scene, dir: &Path) -> Result<()> {
    let clouds_dir = dir.join("clouds");
    fs::create_dir_all(&clouds_dir).map_err(|e| Error::io(&clouds_dir, e))?;
    let write =
        |path: &Path, contents: &[u8]| fs::write(path, contents).map_err(|e| Error::io(path, e));
    write(&dir.join("gt.csv"), write_mot(&scene.gt).as_bytes())?;
    write(
        &dir.join("detections.csv"),
        write_mot(&scene.detections).as_bytes(),
    )?;
    let calib = CalibrationDoc {
        projector: None,
        camera: Some(CameraJson::from_model(&scene.camera)),
    };
    write(&dir.join("calibration.json"), calib.to_json().as_bytes())?;
    for c in &scene.clouds {
        write(
            &clouds_dir.join(cloud_file_name(c.frame)),
            write_xyz(c).as_bytes(),
        )?;
    }
    Ok(())
}
