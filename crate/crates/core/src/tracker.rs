//! Frame-to-frame association on the projection plane and track lifecycle.

use std::collections::BTreeMap;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{self, Matching};
use crate::cloud::{
    denoise_statistical, lift_detection, project_to_plane, CameraModel, Detection, Point2,
    PointCloud, ProjectionPlane,
};
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::mot::{BBox, MotRow, ObjectClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackState {
    Tentative,
    Confirmed,
    Dead,
}

/// A lifted detection ready for association.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub plane: Point2,
    pub world: Point3,
    pub class: ObjectClass,
    pub bbox: BBox,
    pub confidence: f64,
}

/// An observation attached to a track at a given frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub frame: u64,
    pub observation: Observation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub class: ObjectClass,
    pub state: TrackState,
    pub history: Vec<TrackPoint>,
    pub hits: u32,
    pub consecutive_misses: u32,
    /// Frame at which the track first became confirmed.
    pub confirmed_at: Option<u64>,
}

impl Track {
    pub fn last(&self) -> &TrackPoint {
        self.history
            .last()
            .expect("tracks always hold an observation")
    }

    pub fn was_confirmed(&self) -> bool {
        self.confirmed_at.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssocParams {
    /// Association gate on the plane, mm.
    pub gate: f64,
    /// Hits needed to confirm a track.
    pub min_hits: u32,
    /// Consecutive misses tolerated before a track dies.
    pub max_misses: u32,
}

impl Default for AssocParams {
    fn default() -> Self {
        Self {
            gate: 2000.0,
            min_hits: 3,
            max_misses: 5,
        }
    }
}

impl AssocParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gate > 0.0 && self.gate.is_finite()) {
            return Err(Error::Contract(format!(
                "gate must be positive, got {}",
                self.gate
            )));
        }
        if self.min_hits < 1 {
            return Err(Error::Contract("min_hits must be at least 1".into()));
        }
        Ok(())
    }
}

/// Constant-velocity position of a track at `frame`.
///
/// With two or more observations the last displacement, normalized per
/// frame, is extrapolated; a single observation is held in place.
pub fn predict(t: &Track, frame: u64) -> Result<Point2> {
    if t.state == TrackState::Dead {
        return Err(Error::Contract(format!("track {} is dead", t.id)));
    }
    let last = t.last();
    if frame <= last.frame {
        return Err(Error::Contract(format!(
            "prediction frame {frame} must follow the last observation at {}",
            last.frame
        )));
    }
    let n = t.history.len();
    if n < 2 {
        return Ok(last.observation.plane);
    }
    let prev = &t.history[n - 2];
    let span = (last.frame - prev.frame) as f64;
    let ahead = (frame - last.frame) as f64;
    let (lp, pp) = (last.observation.plane, prev.observation.plane);
    Ok(Point2::new(
        lp.x + (lp.x - pp.x) / span * ahead,
        lp.y + (lp.y - pp.y) / span * ahead,
    ))
}

/// Minimum-distance one-to-one matching of predictions (rows) to
/// observations (columns), using only pairs within `gate`.
pub fn associate(predicted: &[Point2], observed: &[Point2], gate: f64) -> Matching {
    let cost: Vec<Vec<Option<f64>>> = predicted
        .iter()
        .map(|p| {
            observed
                .iter()
                .map(|o| {
                    let d = p.distance(o);
                    (d <= gate).then_some(d)
                })
                .collect()
        })
        .collect();
    assignment::solve(&cost)
}

/// Track ids touched by one [`step`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepEvents {
    pub created: Vec<u64>,
    pub updated: Vec<u64>,
    pub confirmed: Vec<u64>,
    pub killed: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct TrackerState {
    live: Vec<Track>,
    dead: Vec<Track>,
    next_id: u64,
    current_frame: Option<u64>,
}

impl Default for TrackerState {
    fn default() -> Self {
        Self {
            live: Vec::new(),
            dead: Vec::new(),
            next_id: 1,
            current_frame: None,
        }
    }
}

impl TrackerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn live(&self) -> &[Track] {
        &self.live
    }

    pub fn dead(&self) -> &[Track] {
        &self.dead
    }

    pub fn current_frame(&self) -> Option<u64> {
        self.current_frame
    }

    /// All tracks ever created, ordered by id.
    pub fn into_tracks(self) -> Vec<Track> {
        let mut all = self.dead;
        all.extend(self.live);
        all.sort_by_key(|t| t.id);
        all
    }

    fn spawn(
        &mut self,
        frame: u64,
        obs: Observation,
        params: &AssocParams,
        events: &mut StepEvents,
    ) {
        let id = self.next_id;
        self.next_id += 1;
        let confirmed = params.min_hits <= 1;
        self.live.push(Track {
            id,
            class: obs.class,
            state: if confirmed {
                TrackState::Confirmed
            } else {
                TrackState::Tentative
            },
            history: vec![TrackPoint {
                frame,
                observation: obs,
            }],
            hits: 1,
            consecutive_misses: 0,
            confirmed_at: confirmed.then_some(frame),
        });
        events.created.push(id);
        if confirmed {
            events.confirmed.push(id);
        }
    }
}

/// Advances the tracker by one frame.
pub fn step(
    s: &mut TrackerState,
    frame: u64,
    observations: &[Observation],
    p: &AssocParams,
) -> Result<StepEvents> {
    p.validate()?;
    if let Some(cur) = s.current_frame {
        if frame <= cur {
            return Err(Error::Contract(format!(
                "frame {frame} does not follow current frame {cur}"
            )));
        }
    }
    let predicted: Vec<Point2> = s
        .live
        .iter()
        .map(|t| predict(t, frame))
        .collect::<Result<_>>()?;

    let mut track_match: Vec<Option<usize>> = vec![None; s.live.len()];
    let mut obs_matched = vec![false; observations.len()];
    for class in ObjectClass::ALL {
        let tracks: Vec<usize> = (0..s.live.len())
            .filter(|&i| s.live[i].class == class)
            .collect();
        let obs: Vec<usize> = (0..observations.len())
            .filter(|&j| observations[j].class == class)
            .collect();
        if tracks.is_empty() || obs.is_empty() {
            continue;
        }
        let preds: Vec<Point2> = tracks.iter().map(|&i| predicted[i]).collect();
        let seen: Vec<Point2> = obs.iter().map(|&j| observations[j].plane).collect();
        for (r, c) in associate(&preds, &seen, p.gate).pairs {
            track_match[tracks[r]] = Some(obs[c]);
            obs_matched[obs[c]] = true;
        }
    }

    let mut events = StepEvents::default();
    let mut survivors = Vec::with_capacity(s.live.len());
    for (mut track, matched) in std::mem::take(&mut s.live).into_iter().zip(track_match) {
        match matched {
            Some(j) => {
                track.history.push(TrackPoint {
                    frame,
                    observation: observations[j],
                });
                track.hits += 1;
                track.consecutive_misses = 0;
                events.updated.push(track.id);
                if track.state == TrackState::Tentative && track.hits >= p.min_hits {
                    track.state = TrackState::Confirmed;
                    track.confirmed_at = Some(frame);
                    events.confirmed.push(track.id);
                }
                survivors.push(track);
            }
            None => {
                track.consecutive_misses += 1;
                if track.consecutive_misses > p.max_misses {
                    track.state = TrackState::Dead;
                    events.killed.push(track.id);
                    s.dead.push(track);
                } else {
                    survivors.push(track);
                }
            }
        }
    }
    s.live = survivors;

    for (j, obs) in observations.iter().enumerate() {
        if !obs_matched[j] {
            s.spawn(frame, *obs, p, &mut events);
        }
    }
    s.current_frame = Some(frame);
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiseParams {
    pub k: usize,
    pub mult: f64,
}

/// Options for [`run_sequence`] beyond association.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequenceOptions {
    /// Fill gaps inside a confirmed track's history by linear interpolation
    /// when writing output rows.
    pub interpolate_gaps: bool,
    /// Statistical outlier removal applied to each cloud before lifting.
    pub denoise: Option<DenoiseParams>,
}

impl Default for SequenceOptions {
    fn default() -> Self {
        Self {
            interpolate_gaps: true,
            denoise: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SequenceResult {
    /// Every track created, ordered by id.
    pub tracks: Vec<Track>,
    /// Output rows for tracks that reached confirmation, ordered by
    /// `(frame, id)`.
    pub rows: Vec<MotRow>,
    pub events: BTreeMap<u64, StepEvents>,
    /// Detections skipped because no cloud point fell inside their box.
    pub skipped_no_depth: usize,
}

/// Lift, project and associate every frame between the first and last
/// detection. `clouds` is asked for a frame's cloud only when that frame has
/// detections; returning `Ok(None)` reports it missing.
pub fn run_sequence<F>(
    detections: &[Detection],
    mut clouds: F,
    cam: &CameraModel,
    plane: &ProjectionPlane,
    p: &AssocParams,
    opts: &SequenceOptions,
) -> Result<SequenceResult>
where
    F: FnMut(u64) -> Result<Option<PointCloud>>,
{
    p.validate()?;
    let mut by_frame: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for d in detections {
        by_frame.entry(d.frame).or_default().push(*d);
    }
    let mut state = TrackerState::new();
    let mut events = BTreeMap::new();
    let mut skipped = 0usize;

    let (Some(&first), Some(&last)) = (by_frame.keys().next(), by_frame.keys().next_back()) else {
        return Ok(SequenceResult {
            tracks: Vec::new(),
            rows: Vec::new(),
            events,
            skipped_no_depth: 0,
        });
    };

    for frame in first..=last {
        let observations = match by_frame.get(&frame) {
            Some(dets) => {
                let cloud = clouds(frame)?
                    .ok_or_else(|| Error::Input(format!("no point cloud for frame {frame}")))?;
                let cloud = match &opts.denoise {
                    Some(dp) => denoise_statistical(&cloud, dp.k, dp.mult)?,
                    None => cloud,
                };
                let lifted: Vec<Result<Point3>> = dets
                    .par_iter()
                    .map(|d| lift_detection(d, cam, &cloud))
                    .collect();
                let mut obs = Vec::with_capacity(dets.len());
                for (d, w) in dets.iter().zip(lifted) {
                    match w {
                        Ok(world) => obs.push(Observation {
                            plane: project_to_plane(&world, plane),
                            world,
                            class: d.class,
                            bbox: d.bbox,
                            confidence: d.confidence,
                        }),
                        Err(Error::NoDepth) => skipped += 1,
                        Err(e) => return Err(e),
                    }
                }
                obs
            }
            None => Vec::new(),
        };
        let ev = step(&mut state, frame, &observations, p)?;
        debug!(
            "frame {frame}: {} observations, {} created, {} killed",
            observations.len(),
            ev.created.len(),
            ev.killed.len()
        );
        events.insert(frame, ev);
    }
    if skipped > 0 {
        info!("skipped {skipped} detections without cloud depth");
    }

    let tracks = state.into_tracks();
    let rows = track_rows(&tracks, opts.interpolate_gaps);
    Ok(SequenceResult {
        tracks,
        rows,
        events,
        skipped_no_depth: skipped,
    })
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn row_for(id: u64, frame: u64, class: ObjectClass, o: &Observation) -> MotRow {
    MotRow {
        frame,
        id: id as i64,
        bbox: o.bbox,
        confidence: o.confidence,
        class,
        world: Some(o.world),
    }
}

/// Output rows for every track that was ever confirmed.
pub fn track_rows(tracks: &[Track], interpolate_gaps: bool) -> Vec<MotRow> {
    let mut rows = Vec::new();
    for t in tracks.iter().filter(|t| t.was_confirmed()) {
        for (i, tp) in t.history.iter().enumerate() {
            if interpolate_gaps && i > 0 {
                let prev = &t.history[i - 1];
                let span = (tp.frame - prev.frame) as f64;
                for f in prev.frame + 1..tp.frame {
                    let s = (f - prev.frame) as f64 / span;
                    let (a, b) = (&prev.observation, &tp.observation);
                    let world = Point3::world(
                        lerp(a.world.x, b.world.x, s),
                        lerp(a.world.y, b.world.y, s),
                        lerp(a.world.z, b.world.z, s),
                    );
                    let bbox = BBox::new(
                        lerp(a.bbox.left, b.bbox.left, s),
                        lerp(a.bbox.top, b.bbox.top, s),
                        lerp(a.bbox.width, b.bbox.width, s),
                        lerp(a.bbox.height, b.bbox.height, s),
                    );
                    rows.push(MotRow {
                        frame: f,
                        id: t.id as i64,
                        bbox,
                        confidence: lerp(a.confidence, b.confidence, s),
                        class: t.class,
                        world: Some(world),
                    });
                }
            }
            rows.push(row_for(t.id, tp.frame, t.class, &tp.observation));
        }
    }
    rows.sort_by_key(|r| (r.frame, r.id));
    rows
}
