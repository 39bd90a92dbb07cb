//! Command-line front end. Every subcommand is also callable as a function
//! returning [`Result`]; [`run`] maps errors onto the exit-code contract
//! (0 success, 2 input or I/O error, 3 domain or degenerate input).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use crate::calib::{CalibrationDoc, ProjectorCalibration};
use crate::cloud::{cloud_file_name, load_xyz, Detection, ProjectionPlane};
use crate::error::{Error, Result};
use crate::geometry::{load_correspondences, solve_absolute_orientation, GalvoModel};
use crate::imaging::{enhance, load_pgm, save_pgm, EnhanceParams};
use crate::metrics::{evaluate, Matcher, MotReport};
use crate::mot::{parse_mot, write_mot};
use crate::plot::{render_svg, trajectories};
use crate::synth::{gen_scene, write_scene, SceneSpec};
use crate::tracker::{run_sequence, AssocParams, SequenceOptions};

pub const DEFAULT_THRESHOLD_MM: f64 = 1000.0;
pub const DEFAULT_MIRROR_SEPARATION_MM: f64 = 10.0;

/// Pipeline configuration for `track`. Relative paths are resolved against
/// the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// MOT CSV of detections (id -1).
    pub detections: PathBuf,
    /// Directory of `cloud_<frame>.xyz` files.
    pub clouds: PathBuf,
    /// Calibration JSON with a camera section.
    pub calibration: PathBuf,
    pub output: PathBuf,
    #[serde(default)]
    pub assoc: AssocParams,
    #[serde(default)]
    pub enhance: EnhanceParams,
    #[serde(default = "default_threshold")]
    pub metric_threshold: f64,
    #[serde(default)]
    pub plane: ProjectionPlane,
    #[serde(default)]
    pub sequence: SequenceOptions,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD_MM
}

impl RunConfig {
    /// Config with default parameters pointing at the files `synth` writes.
    pub fn for_scene() -> Self {
        Self {
            detections: "detections.csv".into(),
            clouds: "clouds".into(),
            calibration: "calibration.json".into(),
            output: "out".into(),
            assoc: AssocParams::default(),
            enhance: EnhanceParams::default(),
            metric_threshold: DEFAULT_THRESHOLD_MM,
            plane: ProjectionPlane::default(),
            sequence: SequenceOptions::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(&read_text(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.detections,
            &mut cfg.clouds,
            &mut cfg.calibration,
            &mut cfg.output,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        for p in [&cfg.detections, &cfg.clouds, &cfg.calibration] {
            if !p.exists() {
                return Err(Error::Input(format!("{} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "projtrack",
    version,
    about = "Projection-plane multi-object tracking toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatchMode {
    /// Euclidean distance on the projection plane.
    Plane,
    /// Box overlap, IoU >= 0.5.
    Iou,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Remove uneven illumination from a binary PGM (P5) image.
    Enhance {
        input: PathBuf,
        output: PathBuf,
        /// Sweeps per spiral offset.
        #[arg(long, default_value_t = 1)]
        passes: usize,
        /// Added to pixel values before the logarithm.
        #[arg(long, default_value_t = 1.0)]
        log_offset: f64,
    },
    /// Solve the world-to-projector pose from point pairs
    /// (`[label,]wx,wy,wz,px,py,pz`, mm).
    Calibrate {
        pairs: PathBuf,
        output: PathBuf,
        /// Galvo mirror separation, mm.
        #[arg(long, default_value_t = DEFAULT_MIRROR_SEPARATION_MM)]
        mirror_separation: f64,
    },
    /// Lift, project and track detections; writes tracks.csv and summary.json.
    Track {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Association gate, mm (overrides the config; default 2000).
        #[arg(long)]
        gate: Option<f64>,
    },
    /// Score a track file against ground truth with MOTA.
    Eval {
        gt: PathBuf,
        hyp: PathBuf,
        /// Plane match threshold, mm.
        #[arg(long, default_value_t = DEFAULT_THRESHOLD_MM)]
        threshold: f64,
        #[arg(long, value_enum, default_value_t = MatchMode::Plane)]
        mode: MatchMode,
        /// Take the projection plane from this run config (default z = 0).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the per-frame JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw track trajectories on the projection plane as SVG.
    Plot {
        tracks: PathBuf,
        output: PathBuf,
        /// Take the projection plane from this run config (default z = 0).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a synthetic scene with ground truth and a ready run config.
    Synth {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the spec.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn cmd_enhance(input: &Path, output: &Path, params: &EnhanceParams) -> Result<()> {
    let bytes = fs::read(input).map_err(|e| Error::io(input, e))?;
    let img = load_pgm(&bytes)?;
    let out = enhance(&img, params)?;
    write_file(output, save_pgm(&out))
}

pub fn cmd_calibrate(
    pairs: &Path,
    output: &Path,
    mirror_separation: f64,
) -> Result<ProjectorCalibration> {
    GalvoModel::new(mirror_separation)?;
    let pairs = load_correspondences(&read_text(pairs)?)?;
    let fit = solve_absolute_orientation(&pairs)?;
    let calib = ProjectorCalibration::from_fit(&fit, mirror_separation);
    let doc = CalibrationDoc {
        projector: Some(calib),
        camera: None,
    };
    write_file(output, doc.to_json())?;
    Ok(calib)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackSummary {
    pub frames: u64,
    pub detections: usize,
    pub tracks_created: usize,
    pub tracks_confirmed: usize,
    pub rows: usize,
    pub skipped_no_depth: usize,
}

pub fn cmd_track(config: &Path, out: Option<&Path>, gate: Option<f64>) -> Result<TrackSummary> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(g) = gate {
        cfg.assoc.gate = g;
    }
    let out_dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output.clone());
    let cam = CalibrationDoc::from_json(&read_text(&cfg.calibration)?)?.camera_model()?;
    let detections: Vec<Detection> = parse_mot(&read_text(&cfg.detections)?)?
        .into_iter()
        .map(|r| Detection {
            frame: r.frame,
            class: r.class,
            bbox: r.bbox,
            confidence: r.confidence,
        })
        .collect();
    let clouds_dir = cfg.clouds.clone();
    let load = |frame: u64| {
        let path = clouds_dir.join(cloud_file_name(frame));
        if !path.exists() {
            return Ok(None);
        }
        load_xyz(&read_text(&path)?, frame).map(Some)
    };
    let result = run_sequence(
        &detections,
        load,
        &cam,
        &cfg.plane,
        &cfg.assoc,
        &cfg.sequence,
    )?;

    let summary = TrackSummary {
        frames: result.events.len() as u64,
        detections: detections.len(),
        tracks_created: result.tracks.len(),
        tracks_confirmed: result.tracks.iter().filter(|t| t.was_confirmed()).count(),
        rows: result.rows.len(),
        skipped_no_depth: result.skipped_no_depth,
    };
    write_file(&out_dir.join("tracks.csv"), write_mot(&result.rows))?;
    write_file(
        &out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    info!("wrote {} rows to {}", summary.rows, out_dir.display());
    Ok(summary)
}

fn plane_from(config: Option<&Path>) -> Result<ProjectionPlane> {
    match config {
        Some(p) => {
            let cfg: RunConfig = serde_json::from_str(&read_text(p)?)?;
            Ok(cfg.plane)
        }
        None => Ok(ProjectionPlane::default()),
    }
}

pub fn cmd_eval(
    gt: &Path,
    hyp: &Path,
    matcher: &Matcher,
    config: Option<&Path>,
    out: Option<&Path>,
) -> Result<MotReport> {
    let plane = plane_from(config)?;
    let gt_rows = parse_mot(&read_text(gt)?)?;
    let hyp_rows = parse_mot(&read_text(hyp)?)?;
    let report = evaluate(&gt_rows, &hyp_rows, matcher, &plane)?;
    if let Some(path) = out {
        write_file(path, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(report)
}

/// Returns the number of polylines drawn.
pub fn cmd_plot(tracks: &Path, output: &Path, config: Option<&Path>) -> Result<usize> {
    let plane = plane_from(config)?;
    let rows = parse_mot(&read_text(tracks)?)?;
    let lines = trajectories(&rows, &plane)?;
    write_file(output, render_svg(&lines))?;
    Ok(lines.len())
}

/// Writes the scene files plus `config.json` ready for `track`.
pub fn cmd_synth(spec: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut spec: SceneSpec = serde_json::from_str(&read_text(spec)?)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let scene = gen_scene(&spec)?;
    write_scene(&scene, out)?;
    write_file(
        &out.join("config.json"),
        serde_json::to_string_pretty(&RunConfig::for_scene())? + "\n",
    )
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Enhance {
            input,
            output,
            passes,
            log_offset,
        } => cmd_enhance(
            &input,
            &output,
            &EnhanceParams {
                passes_per_level: passes,
                log_offset,
            },
        ),
        Command::Calibrate {
            pairs,
            output,
            mirror_separation,
        } => {
            let c = cmd_calibrate(&pairs, &output, mirror_separation)?;
            println!("rms residual {:.6e} mm", c.rms_residual_mm);
            Ok(())
        }
        Command::Track { config, out, gate } => {
            let s = cmd_track(&config, out.as_deref(), gate)?;
            println!(
                "{} frames, {} tracks confirmed, {} rows",
                s.frames, s.tracks_confirmed, s.rows
            );
            Ok(())
        }
        Command::Eval {
            gt,
            hyp,
            threshold,
            mode,
            config,
            out,
        } => {
            let matcher = match mode {
                MatchMode::Plane => Matcher::Plane { threshold },
                MatchMode::Iou => Matcher::Iou { min_iou: 0.5 },
            };
            let r = cmd_eval(&gt, &hyp, &matcher, config.as_deref(), out.as_deref())?;
            println!("MOTA {:.1}", r.mota);
            Ok(())
        }
        Command::Plot {
            tracks,
            output,
            config,
        } => cmd_plot(&tracks, &output, config.as_deref()).map(|_| ()),
        Command::Synth { spec, out, seed } => cmd_synth(&spec, &out, seed),
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parses `args` (including the program name) and runs the command. Usage
/// errors exit with 2.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                2
            } else {
                0
            }
        }
    }
}
