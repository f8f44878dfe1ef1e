//! Optimizer and training loop.
//!
//! One Adam update per sequence, global-norm gradient clipping, a step decay
//! applied at fixed epoch indices, and best-validation-epoch checkpointing.
//! Single-threaded and bitwise deterministic in the seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geom::Offset;
use crate::mdn::nll_loss;
use crate::scalar::Scalar;

use super::{backward_sequence, forward_sequence, ModelConfig, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub decay_factor: f64,
    /// Epochs (1-based) at whose start the learning rate is multiplied by
    /// `decay_factor`.
    pub decay_epochs: Vec<usize>,
    pub grad_clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 1e-3,
            decay_factor: 0.1,
            decay_epochs: vec![15, 40, 80],
            grad_clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(TrainError::BadConfig(
                "learning_rate must be finite and nonnegative",
            ));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(TrainError::BadConfig("decay_factor must lie in (0, 1]"));
        }
        if self.decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TrainError::BadConfig(
                "decay_epochs must be strictly ascending",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptySet,
    #[error("sequence {index} has fewer than 2 offsets")]
    ShortSequence { index: usize },
    #[error("training diverged at epoch {epoch}, sequence {sequence}")]
    Diverged { epoch: usize, sequence: usize },
    #[error("invalid training configuration: {0}")]
    BadConfig(&'static str),
}

/// Per-epoch record; epoch 0 holds the pre-training evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_mean_nll: f64,
    pub val_mean_nll: f64,
}

/// Adam with the usual bias correction (beta1 0.9, beta2 0.999, eps 1e-8).
pub struct Adam<S> {
    m: ModelParams<S>,
    v: ModelParams<S>,
    step_count: u64,
    beta1: S,
    beta2: S,
    epsilon: S,
}

impl<S: Scalar> Adam<S> {
    pub fn new(config: ModelConfig) -> Self {
        Self {
            m: ModelParams::zeros(config),
            v: ModelParams::zeros(config),
            step_count: 0,
            beta1: S::cast(0.9),
            beta2: S::cast(0.999),
            epsilon: S::cast(1e-8),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams<S>, grads: &ModelParams<S>, lr: S) {
        self.step_count += 1;
        let one = S::one();
        let b1 = self.beta1;
        let b2 = self.beta2;
        let corr1 = one - b1.powi(self.step_count as i32);
        let corr2 = one - b2.powi(self.step_count as i32);
        let ms = self.m.fields_mut();
        let vs = self.v.fields_mut();
        let ps = params.fields_mut();
        let gs = grads.fields();
        for ((((_, p), (_, g)), (_, m)), (_, v)) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] / corr1;
                let v_hat = v[i] / corr2;
                p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

/// Mean per-step NLL of a fixed model over a set of offset sequences.
pub fn mean_nll<S: Scalar>(params: &ModelParams<S>, set: &[Vec<Offset<S>>]) -> f64 {
    let mut total = 0.0;
    let mut steps = 0usize;
    for seq in set {
        let inputs = &seq[..seq.len() - 1];
        let targets = &seq[1..];
        let outputs = forward_sequence(params, inputs);
        total += nll_loss(&outputs, targets)
            .map(|l| l.to_f64().unwrap_or(f64::NAN))
            .unwrap_or(f64::NAN);
        steps += inputs.len();
    }
    if steps == 0 {
        f64::NAN
    } else {
        total / steps as f64
    }
}

/// Trains on full offset sequences (`seq[t+1]` is the target for input
/// `seq[t]`), returning the parameters of the best-validation epoch and the
/// per-epoch history.
pub fn train<S: Scalar>(
    mut params: ModelParams<S>,
    train_set: &[Vec<Offset<S>>],
    val_set: &[Vec<Offset<S>>],
    tc: &TrainConfig,
) -> Result<(ModelParams<S>, Vec<EpochStats>), TrainError> {
    tc.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySet);
    }
    for (index, seq) in train_set.iter().chain(val_set.iter()).enumerate() {
        if seq.len() < 2 {
            return Err(TrainError::ShortSequence { index });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut adam = Adam::new(params.config);
    let mut lr = tc.learning_rate;

    // model selection falls back to the training loss when no validation
    // split was provided
    let selector = |stats: &EpochStats| {
        if val_set.is_empty() {
            stats.train_mean_nll
        } else {
            stats.val_mean_nll
        }
    };

    let initial = EpochStats {
        epoch: 0,
        learning_rate: lr,
        train_mean_nll: mean_nll(&params, train_set),
        val_mean_nll: mean_nll(&params, val_set),
    };
    let mut best_score = selector(&initial);
    let mut best_params = params.clone();
    let mut history = vec![initial];

    let clip = S::cast(tc.grad_clip_norm);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=tc.epochs {
        if tc.decay_epochs.contains(&epoch) {
            lr *= tc.decay_factor;
        }
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_steps = 0usize;
        for &idx in &order {
            let seq = &train_set[idx];
            let inputs = &seq[..seq.len() - 1];
            let targets = &seq[1..];
            let (loss, mut grads) =
                backward_sequence(&params, inputs, targets).map_err(|_| TrainError::Diverged {
                    epoch,
                    sequence: idx,
                })?;
            if tc.grad_clip_norm > 0.0 {
                let norm = grads.global_norm();
                if norm > clip {
                    grads.scale(clip / norm);
                }
            }
            adam.step(&mut params, &grads, S::cast(lr));
            epoch_loss += loss.to_f64().unwrap_or(f64::NAN);
            epoch_steps += inputs.len();
        }
        let stats = EpochStats {
            epoch,
            learning_rate: lr,
            train_mean_nll: epoch_loss / epoch_steps as f64,
            val_mean_nll: mean_nll(&params, val_set),
        };
        let score = selector(&stats);
        if score < best_score {
            best_score = score;
            best_params = params.clone();
        }
        history.push(stats);
    }

    Ok((best_params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rnn::init_params;
    use rand::{Rng, SeedableRng};

    fn line_sequences(n: usize, seed: u64) -> Vec<Vec<Offset<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let v = Offset::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
                (0..12)
                    .map(|_| {
                        Offset::new(
                            v.dx + rng.gen_range(-0.3..0.3),
                            v.dy + rng.gen_range(-0.3..0.3),
                        )
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let cfg = ModelConfig::new(8, 2).unwrap();
        let params: ModelParams<f64> = init_params(cfg, 1);
        let set = line_sequences(4, 2);
        let tc = TrainConfig {
            epochs: 3,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let (out, history) = train(params.clone(), &set, &set, &tc).unwrap();
        assert_eq!(out, params);
        let base = history[0].val_mean_nll;
        assert!(history.iter().all(|h| h.val_mean_nll == base));
    }

    #[test]
    fn default_schedule_matches_stated_decay_points() {
        let cfg = ModelConfig::new(4, 1).unwrap();
        let params: ModelParams<f64> = init_params(cfg, 1);
        let set = vec![vec![Offset::new(1.0, 0.0); 3]];
        let tc = TrainConfig::default();
        let (_, history) = train(params, &set, &[], &tc).unwrap();
        assert_eq!(history.len(), 101);
        let lr_at = |e: usize| history[e].learning_rate;
        assert_eq!(lr_at(1), 1e-3);
        assert_eq!(lr_at(14), 1e-3);
        assert!((lr_at(15) - 1e-4).abs() < 1e-18);
        assert!((lr_at(39) - 1e-4).abs() < 1e-18);
        assert!((lr_at(40) - 1e-5).abs() < 1e-19);
        assert!((lr_at(80) - 1e-6).abs() < 1e-20);
        assert!((lr_at(100) - 1e-6).abs() < 1e-20);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let cfg = ModelConfig::new(8, 2).unwrap();
        let init: ModelParams<f64> = init_params(cfg, 3);
        let set = line_sequences(6, 9);
        let tc = TrainConfig {
            epochs: 2,
            seed: 5,
            ..TrainConfig::default()
        };
        let (a, ha) = train(init.clone(), &set, &set, &tc).unwrap();
        let (b, hb) = train(init, &set, &set, &tc).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
    }

    #[test]
    fn loss_is_permutation_invariant_over_the_set() {
        let cfg = ModelConfig::new(8, 2).unwrap();
        let params: ModelParams<f64> = init_params(cfg, 3);
        let set = line_sequences(5, 1);
        let mut reversed = set.clone();
        reversed.reverse();
        assert_eq!(mean_nll(&params, &set), mean_nll(&params, &reversed));
    }

    #[test]
    fn short_training_run_reduces_loss() {
        let cfg = ModelConfig::new(16, 2).unwrap();
        let params: ModelParams<f64> = init_params(cfg, 0);
        let train_set = line_sequences(60, 4);
        let val_set = line_sequences(10, 5);
        let tc = TrainConfig {
            epochs: 5,
            seed: 1,
            ..TrainConfig::default()
        };
        let (_, history) = train(params, &train_set, &val_set, &tc).unwrap();
        assert!(
            history.last().unwrap().val_mean_nll < history[0].val_mean_nll,
            "no improvement: {history:?}"
        );
    }

    #[test]
    fn rejects_bad_configs_and_sets() {
        let cfg = ModelConfig::new(4, 1).unwrap();
        let params: ModelParams<f64> = init_params(cfg, 0);
        let tc = TrainConfig::default();
        assert_eq!(
            train(params.clone(), &[], &[], &tc),
            Err(TrainError::EmptySet)
        );
        let bad = TrainConfig {
            decay_factor: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(params.clone(), &[vec![Offset::zero(); 3]], &[], &bad),
            Err(TrainError::BadConfig(_))
        ));
        assert!(matches!(
            train(params, &[vec![Offset::zero()]], &[], &tc),
            Err(TrainError::ShortSequence { .. })
        ));
    }
}
