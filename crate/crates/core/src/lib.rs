//! Multi-object tracking on a projection plane.
//!
//! Camera frames can be enhanced with a log-domain Retinex estimator
//! ([`imaging`]). Per-frame 2D detections are lifted into 3D with the help of
//! a registered laser point cloud ([`cloud`]), mapped onto a ground
//! projection plane and associated across frames by optimal assignment
//! ([`tracker`]). Results are scored with MOTA ([`metrics`]). The projector
//! calibration model lives in [`geometry`], a small coordinate-attention block
//! with analytic gradients in [`attention`], and [`synth`] generates
//! deterministic scenes with ground truth.

pub mod assignment;
pub mod attention;
pub mod calib;
pub mod cli;
pub mod cloud;
pub mod error;
pub mod geometry;
pub mod imaging;
pub mod metrics;
pub mod mot;
pub mod plot;
pub mod rng;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
