//! Tracking by detection: per-frame association between motion-projected
//! tracks and detections, the track lifecycle (active / lost / terminated
//! with a patience counter), and occlusion reconstruction from the motion
//! model's estimated trajectory.
//!
//! Lost tracks keep participating in association through their propagated
//! positions; that is what enables recovery without an appearance model. On
//! recovery, the estimated lost-gap trajectory is committed to the track as
//! `Estimated` points if a box built from its last estimated centroid (with
//! the pre-loss detection's dimensions) overlaps the new detection at IoU at
//! least the coherence threshold; otherwise the gap trajectory is discarded.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::assignment::hungarian;
use crate::data::FrameDetections;
use crate::estimator::{EstimatorError, EstimatorState, Strategy};
use crate::geom::{box_from_centroid, centroid_of, iou, Provenance};
use crate::kalman::KalmanConfig;
use crate::rnn::ModelParams;
use crate::{Centroid, Detection, KalmanFilter, Offset, Real, Track, TrackPoint, TrackState};

const FORBIDDEN: f64 = 1e12;

#[derive(Debug, Error, PartialEq)]
pub enum TrackerError {
    #[error("frames must arrive in increasing order: got {got} after {last}")]
    OutOfOrderFrame { got: u32, last: u32 },
    #[error("detection carries frame {det}, expected {frame}")]
    FrameMismatch { det: u32, frame: u32 },
    #[error("the selected motion model needs trained model parameters")]
    ModelRequired,
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Motion model choice for projecting tracks to the next frame.
#[derive(Debug, Clone, PartialEq)]
pub enum MotionModel {
    /// Project the last known position unchanged.
    None,
    /// Extrapolate the last observed offset.
    ConstantVelocity,
    Kalman(KalmanConfig),
    Traje {
        strategy: Strategy,
        beam_width: usize,
        bias: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub motion: MotionModel,
    /// Frames a track survives without association before termination.
    pub patience: u32,
    pub occ_reconstruct: bool,
    pub iou_coherence_threshold: f64,
    /// Gate multiplier: a pair is admissible when the L1 distance is at most
    /// `association_gate * (w + h) / 2` of the track's last box.
    pub association_gate: f64,
    pub detection_min_confidence: f64,
    /// Unmatched detections overlapping an existing track's last box at IoU
    /// at or above this do not spawn new tracks.
    pub iou_birth_suppression: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            motion: MotionModel::None,
            patience: 100,
            occ_reconstruct: false,
            iou_coherence_threshold: 0.5,
            association_gate: 1.0,
            detection_min_confidence: 0.4,
            iou_birth_suppression: 0.3,
        }
    }
}

/// Finished tracks, sorted by id.
#[derive(Debug, Clone)]
pub struct TrackerOutput {
    pub tracks: Vec<Track>,
}

/// Per-track motion state.
#[derive(Debug, Clone)]
enum Motion {
    None {
        position: Centroid,
    },
    ConstantVelocity {
        position: Centroid,
        velocity: Offset,
    },
    Kalman(KalmanFilter),
    Traje(EstimatorState<Real>),
}

struct LiveTrack {
    track: Track,
    motion: Motion,
    /// Extrapolated positions for the current lost gap (non-beam models;
    /// the beam estimator keeps its own pending chains).
    pending: Vec<(u32, Centroid)>,
    rng: ChaCha8Rng,
    last_observed_frame: u32,
}

impl LiveTrack {
    /// Candidate positions for the frame being associated.
    fn projections(&self) -> Vec<Centroid> {
        match &self.motion {
            Motion::None { position } => vec![*position],
            Motion::ConstantVelocity { position, velocity } => vec![*position + *velocity],
            Motion::Kalman(kf) => vec![kf.position() + kf.velocity()],
            Motion::Traje(est) => est.predictions().iter().map(|p| p.centroid).collect(),
        }
    }

    fn gate(&self, multiplier: f64) -> f64 {
        let b = self
            .track
            .points
            .last()
            .expect("tracks are born with a point")
            .bbox;
        multiplier * (b.width + b.height) / 2.0
    }
}

pub struct Tracker<'m> {
    config: TrackerConfig,
    model: Option<&'m ModelParams<Real>>,
    live: Vec<LiveTrack>,
    next_id: u32,
    last_frame: Option<u32>,
    run_seed: u64,
}

/// Mixes the run seed and track id into a per-track stream seed
/// (splitmix64 finalizer), making results independent of how many tracks
/// exist and of processing order.
fn track_seed(run_seed: u64, id: u32) -> u64 {
    let mut z = run_seed ^ (id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl<'m> Tracker<'m> {
    pub fn new(
        config: TrackerConfig,
        model: Option<&'m ModelParams<Real>>,
        run_seed: u64,
    ) -> Result<Self, TrackerError> {
        if matches!(config.motion, MotionModel::Traje { .. }) && model.is_none() {
            return Err(TrackerError::ModelRequired);
        }
        Ok(Self {
            config,
            model,
            live: Vec::new(),
            next_id: 1,
            last_frame: None,
            run_seed,
        })
    }

    /// Processes one frame worth of detections.
    pub fn step(&mut self, frame_detections: &FrameDetections) -> Result<(), TrackerError> {
        let frame = frame_detections.frame;
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(TrackerError::OutOfOrderFrame { got: frame, last });
            }
        }
        self.last_frame = Some(frame);
        if let Some(d) = frame_detections
            .detections
            .iter()
            .find(|d| d.frame != frame)
        {
            return Err(TrackerError::FrameMismatch {
                det: d.frame,
                frame,
            });
        }

        let detections: Vec<&Detection> = frame_detections
            .detections
            .iter()
            .filter(|d| d.confidence >= self.config.detection_min_confidence)
            .collect();

        // associate non-terminated tracks with detections
        let active_idx: Vec<usize> = (0..self.live.len())
            .filter(|&i| self.live[i].track.state != TrackState::Terminated)
            .collect();
        let mut matched_det = vec![false; detections.len()];
        let mut assignments: Vec<(usize, usize)> = Vec::new();
        if !active_idx.is_empty() && !detections.is_empty() {
            let cost: Vec<Vec<f64>> = active_idx
                .iter()
                .map(|&ti| {
                    let lt = &self.live[ti];
                    let projections = lt.projections();
                    let gate = lt.gate(self.config.association_gate);
                    detections
                        .iter()
                        .map(|d| {
                            let c = centroid_of(&d.bbox);
                            let best = projections
                                .iter()
                                .map(|p| (*p - c).l1())
                                .fold(f64::INFINITY, f64::min);
                            if best <= gate {
                                best
                            } else {
                                FORBIDDEN
                            }
                        })
                        .collect()
                })
                .collect();
            let solved = hungarian(&cost);
            for (row, col) in solved.row_to_col.iter().enumerate() {
                if let Some(col) = *col {
                    if cost[row][col] < FORBIDDEN {
                        assignments.push((active_idx[row], col));
                        matched_det[col] = true;
                    }
                }
            }
        }

        let mut unmatched: Vec<usize> = active_idx
            .iter()
            .copied()
            .filter(|i| !assignments.iter().any(|(t, _)| t == i))
            .collect();
        unmatched.sort_unstable();

        for (ti, di) in assignments {
            self.absorb_detection(ti, detections[di], frame);
        }
        for ti in unmatched {
            self.miss_frame(ti, frame);
        }

        // births from unmatched detections that overlap no existing track
        for (di, det) in detections.iter().enumerate() {
            if matched_det[di] {
                continue;
            }
            let suppressed = self.live.iter().any(|lt| {
                lt.track.state != TrackState::Terminated
                    && lt.track.points.last().is_some_and(|p| {
                        iou(&p.bbox, &det.bbox) >= self.config.iou_birth_suppression
                    })
            });
            if !suppressed {
                self.spawn(det, frame)?;
            }
        }
        Ok(())
    }

    fn absorb_detection(&mut self, ti: usize, det: &Detection, frame: u32) {
        let det_centroid = centroid_of(&det.bbox);
        let prev_observed = self.live[ti]
            .track
            .last_observed()
            .map(|p| centroid_of(&p.bbox));
        let was_lost = self.live[ti].track.state == TrackState::Lost;
        if was_lost {
            self.recover(ti, det, frame);
        }
        let lt = &mut self.live[ti];
        lt.track.points.push(TrackPoint {
            frame,
            bbox: det.bbox,
            provenance: Provenance::Observed,
        });
        lt.track.state = TrackState::Active;
        lt.track.lost_since = None;
        lt.track.patience_left = self.config.patience;
        match &mut lt.motion {
            Motion::None { position } => *position = det_centroid,
            Motion::ConstantVelocity { position, velocity } => {
                // mean per-frame offset since the last observation
                let gap = frame.saturating_sub(lt.last_observed_frame).max(1) as f64;
                let step = det_centroid - prev_observed.expect("tracks are born observed");
                *velocity = Offset::new(step.dx / gap, step.dy / gap);
                *position = det_centroid;
            }
            Motion::Kalman(kf) => {
                kf.predict();
                kf.update(det_centroid);
            }
            Motion::Traje(est) => {
                let model = self.model.expect("checked at construction");
                est.observe(model, det_centroid, &mut lt.rng);
            }
        }
        lt.pending.clear();
        lt.last_observed_frame = frame;
    }

    /// Recovery bookkeeping for a lost track that was just associated:
    /// resolves the winning trajectory hypothesis, runs the spatio-temporal
    /// coherence test, and commits the gap trajectory when it passes.
    fn recover(&mut self, ti: usize, det: &Detection, frame: u32) {
        let det_centroid = centroid_of(&det.bbox);
        let reference = self.live[ti]
            .track
            .last_observed()
            .map(|p| p.bbox)
            .expect("lost tracks have an observed point");
        let lt = &mut self.live[ti];
        let chain: Vec<(u32, Centroid)> = match &mut lt.motion {
            Motion::Traje(est) => est.commit_recovery(det_centroid).pending,
            Motion::ConstantVelocity { position, .. } => {
                // velocity refresh happens in absorb_detection against the
                // extrapolated position committed during the gap
                let _ = position;
                std::mem::take(&mut lt.pending)
            }
            _ => std::mem::take(&mut lt.pending),
        };
        debug_assert_eq!(
            chain.len() as u32,
            frame - lt.track.lost_since.unwrap_or(frame)
        );

        if self.config.occ_reconstruct {
            if let Some(&(_, last_pending)) = chain.last() {
                let coherence = box_from_centroid(last_pending, reference.width, reference.height)
                    .expect("reference box has positive dimensions");
                if iou(&coherence, &det.bbox) >= self.config.iou_coherence_threshold {
                    for (f, c) in chain {
                        let bbox = box_from_centroid(c, det.bbox.width, det.bbox.height)
                            .expect("detection box has positive dimensions");
                        lt.track.points.push(TrackPoint {
                            frame: f,
                            bbox,
                            provenance: Provenance::Estimated,
                        });
                    }
                }
            }
        }
    }

    fn miss_frame(&mut self, ti: usize, frame: u32) {
        let lt = &mut self.live[ti];
        if lt.track.state == TrackState::Active {
            lt.track.state = TrackState::Lost;
            lt.track.lost_since = Some(frame);
        }
        match &mut lt.motion {
            Motion::None { position } => lt.pending.push((frame, *position)),
            Motion::ConstantVelocity { position, velocity } => {
                *position = *position + *velocity;
                lt.pending.push((frame, *position));
            }
            Motion::Kalman(kf) => {
                let predicted = kf.predict();
                lt.pending.push((frame, predicted));
            }
            Motion::Traje(est) => {
                let model = self.model.expect("checked at construction");
                est.propagate_lost(model, frame, &mut lt.rng);
            }
        }
        lt.track.patience_left = lt.track.patience_left.saturating_sub(1);
        if lt.track.patience_left == 0 {
            lt.track.state = TrackState::Terminated;
            lt.track.lost_since = None;
            lt.pending.clear();
        }
    }

    fn spawn(&mut self, det: &Detection, frame: u32) -> Result<(), TrackerError> {
        let id = self.next_id;
        self.next_id += 1;
        let c = centroid_of(&det.bbox);
        let motion = match &self.config.motion {
            MotionModel::None => Motion::None { position: c },
            MotionModel::ConstantVelocity => Motion::ConstantVelocity {
                position: c,
                velocity: Offset::zero(),
            },
            MotionModel::Kalman(cfg) => Motion::Kalman(KalmanFilter::new(c, cfg)),
            MotionModel::Traje {
                strategy,
                beam_width,
                bias,
            } => {
                let model = self.model.expect("checked at construction");
                Motion::Traje(EstimatorState::init(
                    &model.config,
                    *strategy,
                    *beam_width,
                    *bias,
                    c,
                )?)
            }
        };
        self.live.push(LiveTrack {
            track: Track {
                id,
                state: TrackState::Active,
                patience_left: self.config.patience,
                points: vec![TrackPoint {
                    frame,
                    bbox: det.bbox,
                    provenance: Provenance::Observed,
                }],
                lost_since: None,
            },
            motion,
            pending: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(track_seed(self.run_seed, id)),
            last_observed_frame: frame,
        });
        Ok(())
    }

    /// Read-only view of all tracks, live and terminated.
    pub fn tracks(&self) -> impl Iterator<Item = &Track> {
        self.live.iter().map(|lt| &lt.track)
    }

    /// Finishes the run: tracks sorted by id, single-point tracks dropped.
    pub fn finalize(self) -> TrackerOutput {
        let mut tracks: Vec<Track> = self
            .live
            .into_iter()
            .map(|lt| lt.track)
            .filter(|t| t.points.len() >= 2)
            .collect();
        tracks.sort_by_key(|t| t.id);
        TrackerOutput { tracks }
    }
}

/// Runs the tracker over a whole sequence. Frames absent from `frames` are
/// processed as empty (tracks still age); the range covered is 1 to the
/// larger of the last detection frame and `min_frames`.
pub fn run_sequence(
    frames: &[FrameDetections],
    config: &TrackerConfig,
    model: Option<&ModelParams<Real>>,
    min_frames: u32,
    seed: u64,
) -> Result<TrackerOutput, TrackerError> {
    let mut tracker = Tracker::new(config.clone(), model, seed)?;
    let last = frames
        .iter()
        .map(|f| f.frame)
        .max()
        .unwrap_or(0)
        .max(min_frames);
    let mut by_frame = std::collections::BTreeMap::new();
    for fd in frames {
        by_frame.insert(fd.frame, fd);
    }
    for frame in 1..=last {
        match by_frame.get(&frame) {
            Some(fd) => tracker.step(fd)?,
            None => tracker.step(&FrameDetections {
                frame,
                detections: Vec::new(),
            })?,
        }
    }
    Ok(tracker.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Scenario;
    use crate::geom::BoundingBox as GenericBox;

    fn det(frame: u32, x: f64, y: f64) -> Detection {
        Detection {
            frame,
            bbox: GenericBox::new(x, y, 20.0, 40.0).unwrap(),
            confidence: 1.0,
        }
    }

    fn fd(frame: u32, dets: Vec<Detection>) -> FrameDetections {
        FrameDetections {
            frame,
            detections: dets,
        }
    }

    #[test]
    fn single_object_yields_one_observed_track() {
        let frames: Vec<FrameDetections> = (1..=10)
            .map(|f| fd(f, vec![det(f, 5.0 * f as f64, 0.0)]))
            .collect();
        let out = run_sequence(&frames, &TrackerConfig::default(), None, 0, 1).unwrap();
        assert_eq!(out.tracks.len(), 1);
        let t = &out.tracks[0];
        assert_eq!(t.points.len(), 10);
        assert!(t
            .points
            .iter()
            .all(|p| p.provenance == Provenance::Observed));
        let frames_seen: Vec<u32> = t.points.iter().map(|p| p.frame).collect();
        assert_eq!(frames_seen, (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn constant_velocity_projection_extrapolates() {
        let cfg = TrackerConfig {
            motion: MotionModel::ConstantVelocity,
            ..Default::default()
        };
        let mut tracker = Tracker::new(cfg, None, 0).unwrap();
        // centroids (10, 20) then (12, 21): velocity (2, 1)
        tracker.step(&fd(1, vec![det(1, 0.0, 0.0)])).unwrap();
        tracker.step(&fd(2, vec![det(2, 2.0, 1.0)])).unwrap();
        let proj = tracker.live[0].projections();
        assert_eq!(proj.len(), 1);
        assert_eq!(proj[0], Centroid::new(14.0, 22.0));
    }

    #[test]
    fn none_projection_stays_put() {
        let mut tracker = Tracker::new(TrackerConfig::default(), None, 0).unwrap();
        tracker.step(&fd(1, vec![det(1, 0.0, 0.0)])).unwrap();
        tracker.step(&fd(2, vec![det(2, 2.0, 1.0)])).unwrap();
        assert_eq!(tracker.live[0].projections()[0], Centroid::new(12.0, 21.0));
    }

    #[test]
    fn association_prefers_the_close_detection_and_respects_gates() {
        let mut tracker = Tracker::new(TrackerConfig::default(), None, 0).unwrap();
        tracker.step(&fd(1, vec![det(1, 0.0, 0.0)])).unwrap();
        // one close, one far: the close one matches, the far one is a birth
        tracker
            .step(&fd(2, vec![det(2, 1.0, 0.0), det(2, 100.0, 0.0)]))
            .unwrap();
        assert_eq!(tracker.live.len(), 2);
        assert_eq!(tracker.live[0].track.points.len(), 2);
        assert_eq!(tracker.live[1].track.points.len(), 1);
        // beyond every gate: nothing matches, tracks age
        tracker.step(&fd(3, vec![det(3, 500.0, 500.0)])).unwrap();
        assert_eq!(tracker.live[0].track.state, TrackState::Lost);
    }

    #[test]
    fn assignment_total_cost_matches_brute_force_over_both_pairings() {
        let mut tracker = Tracker::new(TrackerConfig::default(), None, 0).unwrap();
        // t1 centroid (10, 20), t2 centroid (30, 20)
        tracker
            .step(&fd(1, vec![det(1, 0.0, 0.0), det(1, 20.0, 0.0)]))
            .unwrap();
        // dA centroid (20, 20), dB centroid (2, 20)
        tracker
            .step(&fd(2, vec![det(2, 10.0, 0.0), det(2, -8.0, 0.0)]))
            .unwrap();
        let t1 = &tracker.live[0].track;
        let t2 = &tracker.live[1].track;
        assert_eq!(t1.points.len(), 2);
        assert_eq!(t2.points.len(), 2);
        // both complete pairings, by hand: (t1-dB, t2-dA) costs 8 + 10 = 18,
        // (t1-dA, t2-dB) costs 10 + 28 = 38; the tracker must realize 18
        assert_eq!(centroid_of(&t1.points[1].bbox).x, 2.0);
        assert_eq!(centroid_of(&t2.points[1].bbox).x, 20.0);
    }

    #[test]
    fn patience_exhaustion_terminates_every_track() {
        let cfg = TrackerConfig {
            patience: 3,
            ..Default::default()
        };
        let mut tracker = Tracker::new(cfg, None, 0).unwrap();
        tracker.step(&fd(1, vec![det(1, 0.0, 0.0)])).unwrap();
        for f in 2..=4 {
            tracker.step(&fd(f, vec![])).unwrap();
        }
        assert_eq!(tracker.live[0].track.state, TrackState::Terminated);
        assert_eq!(tracker.live[0].track.patience_left, 0);
        // exactly `patience` unassociated frames: lost on 2 and 3, dead on 4
        let mut tracker2 = Tracker::new(
            TrackerConfig {
                patience: 3,
                ..Default::default()
            },
            None,
            0,
        )
        .unwrap();
        tracker2.step(&fd(1, vec![det(1, 0.0, 0.0)])).unwrap();
        tracker2.step(&fd(2, vec![])).unwrap();
        tracker2.step(&fd(3, vec![])).unwrap();
        assert_eq!(tracker2.live[0].track.state, TrackState::Lost);
    }

    #[test]
    fn association_resets_the_patience_counter() {
        let cfg = TrackerConfig {
            patience: 3,
            ..Default::default()
        };
        let mut tracker = Tracker::new(cfg, None, 0).unwrap();
        tracker.step(&fd(1, vec![det(1, 0.0, 0.0)])).unwrap();
        tracker.step(&fd(2, vec![])).unwrap();
        tracker.step(&fd(3, vec![])).unwrap();
        assert_eq!(tracker.live[0].track.patience_left, 1);
        // re-association restores the full budget
        tracker.step(&fd(4, vec![det(4, 0.0, 0.0)])).unwrap();
        assert_eq!(tracker.live[0].track.patience_left, 3);
        for f in 5..=7 {
            tracker.step(&fd(f, vec![])).unwrap();
        }
        assert_eq!(tracker.live[0].track.state, TrackState::Terminated);
    }

    #[test]
    fn single_point_tracks_are_dropped_from_output() {
        let mut tracker = Tracker::new(TrackerConfig::default(), None, 0).unwrap();
        tracker
            .step(&fd(1, vec![det(1, 0.0, 0.0), det(1, 300.0, 0.0)]))
            .unwrap();
        // only the first object reappears
        tracker.step(&fd(2, vec![det(2, 1.0, 0.0)])).unwrap();
        let out = tracker.finalize();
        assert_eq!(out.tracks.len(), 1);
        assert_eq!(out.tracks[0].points.len(), 2);
    }

    #[test]
    fn out_of_order_frames_are_rejected() {
        let mut tracker = Tracker::new(TrackerConfig::default(), None, 0).unwrap();
        tracker.step(&fd(5, vec![])).unwrap();
        assert_eq!(
            tracker.step(&fd(5, vec![])),
            Err(TrackerError::OutOfOrderFrame { got: 5, last: 5 })
        );
        assert_eq!(
            tracker.step(&fd(4, vec![])),
            Err(TrackerError::OutOfOrderFrame { got: 4, last: 5 })
        );
    }

    #[test]
    fn low_confidence_detections_are_ignored() {
        let mut tracker = Tracker::new(TrackerConfig::default(), None, 0).unwrap();
        let mut d = det(1, 0.0, 0.0);
        d.confidence = 0.2;
        tracker.step(&fd(1, vec![d])).unwrap();
        assert!(tracker.live.is_empty());
    }

    #[test]
    fn birth_suppression_blocks_overlapping_duplicates() {
        let mut tracker = Tracker::new(TrackerConfig::default(), None, 0).unwrap();
        // second detection overlaps the first heavily: only one track
        let d1 = det(1, 0.0, 0.0);
        let d2 = det(1, 2.0, 0.0);
        tracker.step(&fd(1, vec![d1, d2])).unwrap();
        assert_eq!(tracker.live.len(), 1);
    }

    #[test]
    fn kalman_track_recovers_and_fills_the_gap() {
        let cfg = TrackerConfig {
            motion: MotionModel::Kalman(KalmanConfig::default()),
            occ_reconstruct: true,
            ..Default::default()
        };
        let mut tracker = Tracker::new(cfg, None, 0).unwrap();
        // constant velocity (5, 0) per frame, hidden on frames 6-8
        for f in 1..=5 {
            tracker
                .step(&fd(f, vec![det(f, 5.0 * f as f64, 0.0)]))
                .unwrap();
        }
        for f in 6..=8 {
            tracker.step(&fd(f, vec![])).unwrap();
            assert_eq!(tracker.live[0].pending.len(), (f - 5) as usize);
        }
        tracker.step(&fd(9, vec![det(9, 45.0, 0.0)])).unwrap();
        let t = &tracker.live[0].track;
        assert_eq!(t.state, TrackState::Active);
        let estimated: Vec<u32> = t
            .points
            .iter()
            .filter(|p| p.provenance == Provenance::Estimated)
            .map(|p| p.frame)
            .collect();
        assert_eq!(estimated, vec![6, 7, 8]);
        // frames strictly increase after the fill
        let mut points = t.points.clone();
        points.sort_by_key(|p| p.frame);
        assert!(points.windows(2).all(|w| w[0].frame < w[1].frame));
    }

    #[test]
    fn incoherent_recovery_discards_the_gap_trajectory() {
        let cfg = TrackerConfig {
            motion: MotionModel::None,
            occ_reconstruct: true,
            association_gate: 50.0,
            ..Default::default()
        };
        let mut tracker = Tracker::new(cfg, None, 0).unwrap();
        tracker.step(&fd(1, vec![det(1, 0.0, 0.0)])).unwrap();
        tracker.step(&fd(2, vec![])).unwrap();
        tracker.step(&fd(3, vec![])).unwrap();
        // recovery far from the stationary chain: coherence fails
        tracker.step(&fd(3 + 1, vec![det(4, 400.0, 0.0)])).unwrap();
        let t = &tracker.live[0].track;
        assert!(t
            .points
            .iter()
            .all(|p| p.provenance == Provenance::Observed));
        assert_eq!(t.points.len(), 2);
    }

    #[test]
    fn run_sequence_is_deterministic_and_sorted() {
        let (_gt, frames) = Scenario::crossing(2.0).generate(5);
        let cfg = TrackerConfig {
            motion: MotionModel::ConstantVelocity,
            ..Default::default()
        };
        let a = run_sequence(&frames, &cfg, None, 0, 9).unwrap();
        let b = run_sequence(&frames, &cfg, None, 0, 9).unwrap();
        assert_eq!(a.tracks.len(), b.tracks.len());
        for (x, y) in a.tracks.iter().zip(&b.tracks) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.points, y.points);
        }
        assert!(a.tracks.windows(2).all(|w| w[0].id < w[1].id));
        assert!(run_sequence(&[], &TrackerConfig::default(), None, 0, 1)
            .unwrap()
            .tracks
            .is_empty());
    }

    #[test]
    fn traje_motion_requires_a_model() {
        let cfg = TrackerConfig {
            motion: MotionModel::Traje {
                strategy: Strategy::Beam,
                beam_width: 5,
                bias: 1.0,
            },
            ..Default::default()
        };
        assert!(matches!(
            Tracker::new(cfg, None, 0),
            Err(TrackerError::ModelRequired)
        ));
    }

    #[test]
    fn id_stability_with_separated_slow_objects() {
        // three well-separated slow objects, stationary model: ids never swap
        let mk = |f: u32, base: f64| det(f, base + 0.5 * f as f64, 0.0);
        let frames: Vec<FrameDetections> = (1..=30)
            .map(|f| fd(f, vec![mk(f, 0.0), mk(f, 200.0), mk(f, 400.0)]))
            .collect();
        let out = run_sequence(&frames, &TrackerConfig::default(), None, 0, 3).unwrap();
        assert_eq!(out.tracks.len(), 3);
        for t in &out.tracks {
            assert_eq!(t.points.len(), 30);
            let xs: Vec<f64> = t.points.iter().map(|p| p.bbox.left).collect();
            assert!(xs.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] < 1.0));
        }
    }

    #[test]
    fn no_output_track_repeats_a_frame() {
        let (_gt, frames) = Scenario::crossing_occlusion(2.0).generate(3);
        let cfg = TrackerConfig {
            motion: MotionModel::Kalman(KalmanConfig::default()),
            occ_reconstruct: true,
            ..Default::default()
        };
        let out = run_sequence(&frames, &cfg, None, 0, 4).unwrap();
        for t in &out.tracks {
            let mut frames: Vec<u32> = t.points.iter().map(|p| p.frame).collect();
            let len = frames.len();
            frames.dedup();
            assert_eq!(frames.len(), len, "track {} repeats a frame", t.id);
        }
    }
}
