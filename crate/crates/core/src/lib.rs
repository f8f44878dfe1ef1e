//! Trajectory estimation for multiple object tracking.
//!
//! The crate provides a recurrent mixture-density motion model with beam
//! search, a Kalman-filter baseline, a tracking-by-detection loop with
//! occlusion reconstruction, MOTChallenge file ingestion/emission, synthetic
//! scenario generation, and CLEAR/identity evaluation metrics.
//!
//! The numeric core (`geom`, `mdn`, `rnn`, `estimator`, `kalman`) is generic
//! over the floating-point scalar via [`scalar::Scalar`]; the tracking
//! pipeline (`tracker`, `data`, `metrics`) operates on the `f64` aliases
//! exported at the crate root.

pub mod assignment;
pub mod data;
pub mod estimator;
pub mod geom;
pub mod kalman;
pub mod mdn;
pub mod metrics;
pub mod rnn;
pub mod scalar;
pub mod tracker;

pub use scalar::Scalar;

/// Scalar type used by the tracking pipeline.
pub type Real = f64;

pub type BoundingBox = geom::BoundingBox<Real>;
pub type Centroid = geom::Centroid<Real>;
pub type Offset = geom::Offset<Real>;
pub type Detection = geom::Detection<Real>;
pub type TrackPoint = geom::TrackPoint<Real>;
pub type Track = geom::Track<Real>;
pub type RawMixtureOutputs = mdn::RawMixtureOutputs<Real>;
pub type MixtureParams = mdn::MixtureParams<Real>;
pub type ModelParams = rnn::ModelParams<Real>;
pub type HiddenState = rnn::HiddenState<Real>;
pub type Beam = estimator::Beam<Real>;
pub type EstimatorState = estimator::EstimatorState<Real>;
pub type KalmanFilter = kalman::KalmanFilter<Real>;

pub use geom::{Provenance, SequenceInfo, TrackState};
