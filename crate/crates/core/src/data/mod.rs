//! Data ingestion and generation: MOTChallenge file formats, training-corpus
//! windows sampled from ground-truth tracks, and synthetic scenarios for
//! desk-scale experiments.

mod corpus;
mod mot;
mod scenario;

pub use corpus::{
    generate_training_set, read_corpus, write_corpus, TrainingSequence, MIN_SEQUENCE_LEN,
};
pub use mot::{
    emit_results, emit_results_to, parse_detections, parse_ground_truth, parse_results,
    parse_seqinfo, ParsedDetections,
};
pub use scenario::{synthetic_motion_tracks, MotionPath, Scenario, ScenarioObject};

use thiserror::Error;

use crate::Detection;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("seqinfo is missing key {0}")]
    MissingKey(&'static str),
    #[error("no ground-truth track is long enough to sample from")]
    NoEligibleTracks,
}

/// All detections of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    pub frame: u32,
    pub detections: Vec<Detection>,
}

/// One ground-truth identity: per-frame observed boxes plus the MOT
/// bookkeeping columns (evaluation flag, class, visibility).
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTrack {
    pub id: u32,
    pub class_id: u32,
    pub points: Vec<crate::TrackPoint>,
    pub visibility: Vec<f64>,
    /// Per-point evaluation flag (MOT column 7); 0 rows are kept in the raw
    /// parse but excluded from evaluation.
    pub eval_flags: Vec<bool>,
}

impl GroundTruthTrack {
    /// Restriction to evaluation rows, dropping the track if empty.
    pub fn evaluation_view(&self) -> Option<GroundTruthTrack> {
        let keep: Vec<usize> = (0..self.points.len())
            .filter(|&i| self.eval_flags[i])
            .collect();
        if keep.is_empty() {
            return None;
        }
        Some(GroundTruthTrack {
            id: self.id,
            class_id: self.class_id,
            points: keep.iter().map(|&i| self.points[i]).collect(),
            visibility: keep.iter().map(|&i| self.visibility[i]).collect(),
            eval_flags: vec![true; keep.len()],
        })
    }
}

/// Evaluation subset: flagged rows only, optionally restricted to one class.
pub fn evaluation_tracks(
    tracks: &[GroundTruthTrack],
    keep_class: Option<u32>,
) -> Vec<GroundTruthTrack> {
    tracks
        .iter()
        .filter(|t| keep_class.is_none_or(|c| t.class_id == c))
        .filter_map(|t| t.evaluation_view())
        .collect()
}
