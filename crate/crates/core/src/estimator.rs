//! Per-track trajectory estimation with beam search.
//!
//! Each track owns one estimator. While the track is observed, the recurrent
//! state consumes the measured centroid offsets and the estimator proposes
//! positions for the next frame (one per beam). While the track is lost, each
//! beam feeds its own last sampled offset back as input, draws candidate
//! offsets from the resulting mixture, and the candidate set is pruned
//! globally back to the beam width. On recovery, the beam that best explains
//! the new detection wins, its hidden state is replicated into the others and
//! exploration resets.
//!
//! Three exploration strategies are supported: the deterministic best-mean
//! point, a greedy single-sample chain, and full beam search over `B`
//! hypotheses. With `B = 1` the latter two consume the random stream
//! identically and coincide.

use rand::Rng;
use thiserror::Error;

use crate::geom::{Centroid, Offset};
use crate::mdn::{best_mean, constrain, log_density, sample, MixtureParams};
use crate::rnn::{cell_step, heads, initial_hidden, HiddenState, ModelConfig, ModelParams};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("beam width must be at least 1")]
    ZeroBeamWidth,
    #[error("bias must be nonnegative")]
    NegativeBias,
}

/// Exploration strategy for turning the mixture into position hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Deterministic: the mean of the heaviest mixture component.
    BestMean,
    /// One sampled chain.
    Greedy,
    /// Full beam search over `B` sampled hypotheses.
    Beam,
}

impl Strategy {
    fn effective_width(self, beam_width: usize) -> usize {
        match self {
            Strategy::BestMean | Strategy::Greedy => 1,
            Strategy::Beam => beam_width,
        }
    }
}

/// One trajectory hypothesis.
#[derive(Debug, Clone)]
pub struct Beam<S> {
    pub hidden: HiddenState<S>,
    /// Position the hypothesis chain currently ends at.
    pub last_centroid: Centroid<S>,
    /// Positions sampled while lost: `(frame, centroid)`, contiguous frames.
    pub pending: Vec<(u32, Centroid<S>)>,
    /// Cumulative log-likelihood of the offsets drawn along this chain, each
    /// under the distribution it was drawn from. Zero while `pending` is
    /// empty.
    pub score: S,
    pub beam_index: usize,
    /// Mixture at the chain frontier; `None` until the model has consumed a
    /// first offset.
    frontier: Option<MixtureParams<S>>,
    /// Last drawn offset; becomes the next model input if the track stays
    /// lost.
    proposal: Offset<S>,
}

/// Predicted centroid for the next frame, tagged with its beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamPrediction<S> {
    pub beam_index: usize,
    pub centroid: Centroid<S>,
}

/// Estimator state for one track.
#[derive(Debug, Clone)]
pub struct EstimatorState<S> {
    pub beams: Vec<Beam<S>>,
    pub observations_seen: usize,
    pub strategy: Strategy,
    pub bias: S,
    pub beam_width: usize,
}

impl<S: Scalar> EstimatorState<S> {
    /// Starts an estimator at a track's first observation.
    pub fn init(
        config: &ModelConfig,
        strategy: Strategy,
        beam_width: usize,
        bias: S,
        first_centroid: Centroid<S>,
    ) -> Result<Self, EstimatorError> {
        if beam_width < 1 {
            return Err(EstimatorError::ZeroBeamWidth);
        }
        if bias < S::zero() {
            return Err(EstimatorError::NegativeBias);
        }
        let beam = Beam {
            hidden: initial_hidden(config),
            last_centroid: first_centroid,
            pending: Vec::new(),
            score: S::zero(),
            beam_index: 0,
            frontier: None,
            proposal: Offset::zero(),
        };
        Ok(Self {
            beams: vec![beam],
            observations_seen: 1,
            strategy,
            bias,
            beam_width: strategy.effective_width(beam_width),
        })
    }

    fn draw<R: Rng + ?Sized>(&self, frontier: &MixtureParams<S>, rng: &mut R) -> Offset<S> {
        match self.strategy {
            Strategy::BestMean => best_mean(frontier),
            Strategy::Greedy | Strategy::Beam => sample(frontier, rng),
        }
    }

    /// Consumes an associated detection: feeds the measured offset through
    /// the model, resets exploration (pending chains and scores), and draws
    /// fresh position proposals for the next frame.
    pub fn observe<R: Rng + ?Sized>(
        &mut self,
        model: &ModelParams<S>,
        new_centroid: Centroid<S>,
        rng: &mut R,
    ) -> Vec<BeamPrediction<S>> {
        // all beams share the hidden state here: while observed they consume
        // the same measured offsets, and recovery unifies them first
        let offset_in = new_centroid - self.beams[0].last_centroid;
        let hidden = cell_step(model, &self.beams[0].hidden, offset_in);
        let frontier = constrain(&heads(model, &hidden), self.bias).expect("bias checked at init");
        self.observations_seen += 1;

        let width = self.beam_width;
        self.beams = (0..width)
            .map(|beam_index| {
                let proposal = self.draw(&frontier, rng);
                Beam {
                    hidden: hidden.clone(),
                    last_centroid: new_centroid,
                    pending: Vec::new(),
                    score: S::zero(),
                    beam_index,
                    frontier: Some(frontier.clone()),
                    proposal,
                }
            })
            .collect();
        self.predictions()
    }

    /// Advances a lost track by one frame. Every beam commits its current
    /// proposal as its position at `frame`, then draws candidate offsets for
    /// the following frame; candidates are pruned globally to the beam width
    /// by score, ties broken by (parent index, draw index).
    pub fn propagate_lost<R: Rng + ?Sized>(
        &mut self,
        model: &ModelParams<S>,
        frame: u32,
        rng: &mut R,
    ) {
        if self.observations_seen < 2 {
            // no offset history yet: stationary projection
            for beam in &mut self.beams {
                debug_assert!(beam.pending.last().is_none_or(|(f, _)| frame == f + 1));
                beam.pending.push((frame, beam.last_centroid));
            }
            return;
        }

        struct Candidate<S> {
            parent: usize,
            draw_index: usize,
            hidden: HiddenState<S>,
            position: Centroid<S>,
            frontier: MixtureParams<S>,
            proposal: Offset<S>,
            score: S,
        }

        let width = self.beam_width;
        let mut candidates: Vec<Candidate<S>> = Vec::with_capacity(width * width);
        for (parent, beam) in self.beams.iter().enumerate() {
            debug_assert!(beam.pending.last().is_none_or(|(f, _)| frame == f + 1));
            let hidden = cell_step(model, &beam.hidden, beam.proposal);
            let position = beam.last_centroid + beam.proposal;
            let frontier =
                constrain(&heads(model, &hidden), self.bias).expect("bias checked at init");
            let draws = match self.strategy {
                Strategy::BestMean | Strategy::Greedy => 1,
                Strategy::Beam => width,
            };
            for draw_index in 0..draws {
                let proposal = self.draw(&frontier, rng);
                let score = beam.score + log_density(&frontier, proposal);
                candidates.push(Candidate {
                    parent,
                    draw_index,
                    hidden: hidden.clone(),
                    position,
                    frontier: frontier.clone(),
                    proposal,
                    score,
                });
            }
        }

        candidates.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.parent.cmp(&b.parent))
                .then(a.draw_index.cmp(&b.draw_index))
        });
        candidates.truncate(width);

        self.beams = candidates
            .into_iter()
            .enumerate()
            .map(|(beam_index, c)| {
                let mut pending = self.beams[c.parent].pending.clone();
                pending.push((frame, c.position));
                Beam {
                    hidden: c.hidden,
                    last_centroid: c.position,
                    pending,
                    score: c.score,
                    beam_index,
                    frontier: Some(c.frontier),
                    proposal: c.proposal,
                }
            })
            .collect();
    }

    /// Resolves a recovery: picks the beam that best explains the detection
    /// (stored score plus the log-density of the offset closing the gap to
    /// the detection), replicates its hidden state into every beam, clears
    /// the pending chains and resets scores. Returns the winning beam with
    /// its pending chain intact for occlusion reconstruction.
    pub fn commit_recovery(&mut self, detection: Centroid<S>) -> Beam<S> {
        let mut winner = 0;
        let mut best_key = S::neg_infinity();
        for (idx, beam) in self.beams.iter().enumerate() {
            let key = match &beam.frontier {
                Some(frontier) => {
                    beam.score + log_density(frontier, detection - beam.last_centroid)
                }
                None => beam.score,
            };
            if key > best_key {
                best_key = key;
                winner = idx;
            }
        }
        let won = self.beams[winner].clone();
        for beam in &mut self.beams {
            beam.hidden.clone_from(&won.hidden);
            beam.last_centroid = won.last_centroid;
            beam.frontier.clone_from(&won.frontier);
            beam.proposal = won.proposal;
            beam.pending.clear();
            beam.score = S::zero();
        }
        won
    }

    /// Most recent per-beam predictions for the next frame; falls back to a
    /// zero-offset projection until the model has seen two observations.
    pub fn predictions(&self) -> Vec<BeamPrediction<S>> {
        self.beams
            .iter()
            .map(|b| {
                let centroid = if self.observations_seen < 2 || b.frontier.is_none() {
                    b.last_centroid
                } else {
                    b.last_centroid + b.proposal
                };
                BeamPrediction {
                    beam_index: b.beam_index,
                    centroid,
                }
            })
            .collect()
    }
}
