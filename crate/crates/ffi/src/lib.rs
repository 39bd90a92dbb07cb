//! C ABI over `projtrack`.
//!
//! Every fallible function returns a [`PtStatus`]; on failure the message is
//! kept per thread and can be copied out with [`pt_last_error_message`].
//! Output pointers are written only on success. The tracker is exposed as an
//! opaque [`PtTracker`] handle created with [`pt_tracker_new`] and released
//! with [`pt_tracker_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use projtrack::cloud::{Point2, ProjectionPlane};
use projtrack::geometry::{
    galvo_invert, galvo_project, quat_to_matrix, solve_absolute_orientation, GalvoAngles,
    GalvoModel, Point3, Quaternion,
};
use projtrack::imaging::{enhance, EnhanceParams, GrayImage};
use projtrack::metrics::{evaluate, mota, FrameCounts, Matcher};
use projtrack::mot::{parse_mot, BBox, ObjectClass};
use projtrack::tracker::{step, AssocParams, Observation, TrackState, TrackerState};
use projtrack::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtStatus {
    Ok = 0,
    NullPointer = 1,
    Format = 2,
    Parse = 3,
    Contract = 4,
    Domain = 5,
    Degenerate = 6,
    NoDepth = 7,
    UndefinedMetric = 8,
    Input = 9,
    Generation = 10,
    Io = 11,
    Json = 12,
    Panic = 13,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> PtStatus {
    match e {
        Error::Format(_) => PtStatus::Format,
        Error::Parse { .. } => PtStatus::Parse,
        Error::Contract(_) => PtStatus::Contract,
        Error::Domain(_) => PtStatus::Domain,
        Error::Degenerate(_) => PtStatus::Degenerate,
        Error::NoDepth => PtStatus::NoDepth,
        Error::UndefinedMetric(_) => PtStatus::UndefinedMetric,
        Error::Input(_) => PtStatus::Input,
        Error::Generation(_) => PtStatus::Generation,
        Error::Io { .. } => PtStatus::Io,
        Error::Json(_) => PtStatus::Json,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> PtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PtStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            PtStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            PtStatus::Panic
        }
    }
}

fn nonnull<T>(p: *const T, what: &'static str) -> Result<*const T, Failure> {
    if p.is_null() {
        Err(Failure::Null(what))
    } else {
        Ok(p)
    }
}

fn nonnull_mut<T>(p: *mut T, what: &'static str) -> Result<*mut T, Failure> {
    if p.is_null() {
        Err(Failure::Null(what))
    } else {
        Ok(p)
    }
}

/// Slice view that tolerates a null pointer when `len` is zero.
unsafe fn view<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    Ok(slice::from_raw_parts(nonnull(p, what)?, len))
}

unsafe fn path_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a Path, Failure> {
    let s = CStr::from_ptr(nonnull(p, what)?)
        .to_str()
        .map_err(|_| Failure::Lib(Error::Input(format!("{what} is not valid UTF-8"))))?;
    Ok(Path::new(s))
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len - 1` bytes) and returns the full message
/// length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pt_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Row-major 3x3 rotation matrix of the quaternion `q = [w, x, y, z]`
/// (normalized first).
///
/// # Safety
/// `q` must point to 4 doubles and `out` to 9 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pt_quat_to_matrix(q: *const f64, out: *mut f64) -> PtStatus {
    guard(|| {
        let q = slice::from_raw_parts(nonnull(q, "q")?, 4);
        let out = slice::from_raw_parts_mut(nonnull_mut(out, "out")?, 9);
        let r = quat_to_matrix(&Quaternion::new(q[0], q[1], q[2], q[3])?);
        for i in 0..3 {
            for j in 0..3 {
                out[3 * i + j] = r.matrix()[(i, j)];
            }
        }
        Ok(())
    })
}

/// Projector-frame point hit by the beam at angles `(horizontal, pitch)`
/// (radians) and depth `distance` (mm).
///
/// # Safety
/// `out` must point to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pt_galvo_project(
    mirror_separation: f64,
    horizontal: f64,
    pitch: f64,
    distance: f64,
    out: *mut f64,
) -> PtStatus {
    guard(|| {
        let out = slice::from_raw_parts_mut(nonnull_mut(out, "out")?, 3);
        let m = GalvoModel::new(mirror_separation)?;
        let p = galvo_project(&m, &GalvoAngles::new(horizontal, pitch), distance)?;
        out.copy_from_slice(&[p.x, p.y, p.z]);
        Ok(())
    })
}

/// Mirror angles `[horizontal, pitch]` that hit a projector-frame point.
///
/// # Safety
/// `p` must point to 3 doubles and `out` to 2 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pt_galvo_invert(
    mirror_separation: f64,
    p: *const f64,
    out: *mut f64,
) -> PtStatus {
    guard(|| {
        let p = slice::from_raw_parts(nonnull(p, "p")?, 3);
        let out = slice::from_raw_parts_mut(nonnull_mut(out, "out")?, 2);
        let m = GalvoModel::new(mirror_separation)?;
        let a = galvo_invert(&m, &Point3::projector(p[0], p[1], p[2]))?;
        out.copy_from_slice(&[a.horizontal, a.pitch]);
        Ok(())
    })
}

/// Least-squares rigid transform taking `world[i]` to `projector[i]`.
/// Points are packed `x, y, z` triples. Writes the canonical quaternion
/// `[w, x, y, z]`, the translation and the RMS residual (mm).
///
/// # Safety
/// `world` and `projector` must point to `3 * n` doubles; `quat_out`,
/// `translation_out` and `rms_out` to 4, 3 and 1 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pt_solve_absolute_orientation(
    world: *const f64,
    projector: *const f64,
    n: usize,
    quat_out: *mut f64,
    translation_out: *mut f64,
    rms_out: *mut f64,
) -> PtStatus {
    guard(|| {
        let w = view(world, 3 * n, "world")?;
        let p = view(projector, 3 * n, "projector")?;
        let q_out = slice::from_raw_parts_mut(nonnull_mut(quat_out, "quat_out")?, 4);
        let t_out = slice::from_raw_parts_mut(nonnull_mut(translation_out, "translation_out")?, 3);
        let rms_out = nonnull_mut(rms_out, "rms_out")?;
        let pairs: Vec<(Point3, Point3)> = w
            .chunks_exact(3)
            .zip(p.chunks_exact(3))
            .map(|(a, b)| {
                (
                    Point3::world(a[0], a[1], a[2]),
                    Point3::projector(b[0], b[1], b[2]),
                )
            })
            .collect();
        let fit = solve_absolute_orientation(&pairs)?;
        q_out.copy_from_slice(&fit.transform.rotation().to_quaternion().components());
        t_out.copy_from_slice(fit.transform.translation().as_slice());
        *rms_out = fit.rms_residual;
        Ok(())
    })
}

/// Retinex enhancement of a row-major 8-bit grayscale image into `out`
/// (same size).
///
/// # Safety
/// `pixels` must point to `width * height` bytes and `out` to as many
/// writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pt_enhance(
    pixels: *const u8,
    width: usize,
    height: usize,
    passes_per_level: usize,
    log_offset: f64,
    out: *mut u8,
) -> PtStatus {
    guard(|| {
        let n = width
            .checked_mul(height)
            .ok_or(Failure::Lib(Error::Contract("image too large".into())))?;
        let src = view(pixels, n, "pixels")?;
        let img = GrayImage::new(width, height, src.to_vec())?;
        let params = EnhanceParams {
            passes_per_level,
            log_offset,
        };
        let result = enhance(&img, &params)?;
        if n > 0 {
            slice::from_raw_parts_mut(nonnull_mut(out, "out")?, n).copy_from_slice(result.pixels());
        }
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PtFrameCounts {
    pub frame: u64,
    pub false_negatives: u64,
    pub false_positives: u64,
    pub id_switches: u64,
    pub ground_truth: u64,
}

/// MOTA percentage over per-frame counts.
///
/// # Safety
/// `frames` must point to `n` structs and `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn pt_mota(
    frames: *const PtFrameCounts,
    n: usize,
    out: *mut f64,
) -> PtStatus {
    guard(|| {
        let counts: Vec<FrameCounts> = view(frames, n, "frames")?
            .iter()
            .map(|c| FrameCounts {
                frame: c.frame,
                false_negatives: c.false_negatives,
                false_positives: c.false_positives,
                id_switches: c.id_switches,
                ground_truth: c.ground_truth,
            })
            .collect();
        let m = mota(&counts)?;
        *nonnull_mut(out, "out")? = m;
        Ok(())
    })
}

/// MOTA of a hypothesis MOT CSV file against a ground-truth file, matching
/// world positions on the ground plane within `threshold_mm`.
///
/// # Safety
/// Paths must be NUL-terminated UTF-8; `out` must point to one writable
/// double.
#[no_mangle]
pub unsafe extern "C" fn pt_evaluate_files(
    gt_path: *const c_char,
    hyp_path: *const c_char,
    threshold_mm: f64,
    out: *mut f64,
) -> PtStatus {
    guard(|| {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.into(),
                source: e,
            })
        };
        let gt = parse_mot(&read(path_arg(gt_path, "gt_path")?)?)?;
        let hyp = parse_mot(&read(path_arg(hyp_path, "hyp_path")?)?)?;
        let out = nonnull_mut(out, "out")?;
        let report = evaluate(
            &gt,
            &hyp,
            &Matcher::Plane {
                threshold: threshold_mm,
            },
            &ProjectionPlane::default(),
        )?;
        *out = report.mota;
        Ok(())
    })
}

/// Opaque tracker handle.
pub struct PtTracker {
    state: TrackerState,
    params: AssocParams,
}

/// A lifted detection. `class_id` is 0..=6 (car, bicycle, people, truck,
/// bus, tricycle, moto).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PtObservation {
    pub plane_x: f64,
    pub plane_y: f64,
    pub world_x: f64,
    pub world_y: f64,
    pub world_z: f64,
    pub class_id: u8,
    pub confidence: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtTrackState {
    Tentative = 0,
    Confirmed = 1,
    Dead = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PtTrackInfo {
    pub id: u64,
    pub class_id: u8,
    pub state: PtTrackState,
    pub hits: u32,
    pub last_frame: u64,
    pub plane_x: f64,
    pub plane_y: f64,
}

/// Creates a tracker, or returns null (with the error message set) when the
/// parameters are invalid.
#[no_mangle]
pub extern "C" fn pt_tracker_new(gate_mm: f64, min_hits: u32, max_misses: u32) -> *mut PtTracker {
    let params = AssocParams {
        gate: gate_mm,
        min_hits,
        max_misses,
    };
    match params.validate() {
        Ok(()) => Box::into_raw(Box::new(PtTracker {
            state: TrackerState::new(),
            params,
        })),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// Releases a tracker. Null is ignored.
///
/// # Safety
/// `t` must be null or a handle from [`pt_tracker_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pt_tracker_free(t: *mut PtTracker) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Advances the tracker to `frame` with `n` observations.
///
/// # Safety
/// `t` must be a live handle; `obs` must point to `n` structs (or be null
/// when `n` is 0).
#[no_mangle]
pub unsafe extern "C" fn pt_tracker_step(
    t: *mut PtTracker,
    frame: u64,
    obs: *const PtObservation,
    n: usize,
) -> PtStatus {
    guard(|| {
        let t = &mut *nonnull_mut(t, "tracker")?;
        let observations: Vec<Observation> = view(obs, n, "obs")?
            .iter()
            .map(|o| {
                let class = ObjectClass::from_id(o.class_id).ok_or_else(|| {
                    Error::Contract(format!("class id {} out of range", o.class_id))
                })?;
                Ok(Observation {
                    plane: Point2::new(o.plane_x, o.plane_y),
                    world: Point3::world(o.world_x, o.world_y, o.world_z),
                    class,
                    bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
                    confidence: o.confidence,
                })
            })
            .collect::<Result<_, Error>>()?;
        step(&mut t.state, frame, &observations, &t.params)?;
        Ok(())
    })
}

/// Number of live (tentative or confirmed) tracks.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pt_tracker_live_count(t: *const PtTracker) -> usize {
    t.as_ref().map_or(0, |t| t.state.live().len())
}

/// Copies up to `cap` live tracks (ordered by id) into `out` and stores the
/// number written in `written`.
///
/// # Safety
/// `t` must be a live handle, `out` must point to `cap` writable structs
/// and `written` to one writable `size_t`.
#[no_mangle]
pub unsafe extern "C" fn pt_tracker_live_tracks(
    t: *const PtTracker,
    out: *mut PtTrackInfo,
    cap: usize,
    written: *mut usize,
) -> PtStatus {
    guard(|| {
        let t = &*nonnull(t, "tracker")?;
        let written = nonnull_mut(written, "written")?;
        let mut live: Vec<_> = t.state.live().iter().collect();
        live.sort_by_key(|tr| tr.id);
        let n = live.len().min(cap);
        if n > 0 {
            let out = slice::from_raw_parts_mut(nonnull_mut(out, "out")?, n);
            for (slot, tr) in out.iter_mut().zip(&live) {
                let last = tr.last();
                *slot = PtTrackInfo {
                    id: tr.id,
                    class_id: tr.class.id(),
                    state: match tr.state {
                        TrackState::Tentative => PtTrackState::Tentative,
                        TrackState::Confirmed => PtTrackState::Confirmed,
                        TrackState::Dead => PtTrackState::Dead,
                    },
                    hits: tr.hits,
                    last_frame: last.frame,
                    plane_x: last.observation.plane.x,
                    plane_y: last.observation.plane.y,
                };
            }
        }
        *written = n;
        Ok(())
    })
}
