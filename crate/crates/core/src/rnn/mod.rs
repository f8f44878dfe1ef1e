//! The trainable trajectory model: a single-layer gated recurrent cell with
//! four output heads, exact gradients through time, Adam training, and a
//! versioned JSON model format.
//!
//! Cell equations, with `[a; b]` denoting concatenation:
//!
//! ```text
//! z  = logistic(Wz [x; h] + bz)
//! r  = logistic(Wr [x; h] + br)
//! c  = tanh(Wc [x; r * h] + bc)
//! h' = (1 - z) * h + z * c
//! ```
//!
//! The four heads are affine maps of `h'` producing the raw mixture blocks:
//! weight logits (M), correlations (M), means (2M) and log-scales (2M).

mod backward;
mod io;
mod train;

pub use backward::backward_sequence;
pub use io::{load_model, save_model, LoadedModel, ModelIoError};
pub use train::{mean_nll, train, Adam, EpochStats, TrainConfig, TrainError};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geom::Offset;
use crate::mdn::{constrain, MixtureParams, RawMixtureOutputs};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("input_dim must be 2, got {0}")]
    BadInputDim(usize),
    #[error("hidden_dim must be at least 1")]
    BadHiddenDim,
    #[error("mixture count must be at least 1")]
    BadMixtureCount,
}

/// Hidden state of the recurrent cell; all zeros at sequence start.
pub type HiddenState<S> = Vec<S>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub mixtures: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 2,
            hidden_dim: 64,
            mixtures: 5,
        }
    }
}

impl ModelConfig {
    pub fn new(hidden_dim: usize, mixtures: usize) -> Result<Self, ModelError> {
        let cfg = Self {
            input_dim: 2,
            hidden_dim,
            mixtures,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_dim != 2 {
            return Err(ModelError::BadInputDim(self.input_dim));
        }
        if self.hidden_dim < 1 {
            return Err(ModelError::BadHiddenDim);
        }
        if self.mixtures < 1 {
            return Err(ModelError::BadMixtureCount);
        }
        Ok(())
    }

    /// Fan-in of the gate matrices: input plus hidden.
    pub fn gate_fan_in(&self) -> usize {
        self.input_dim + self.hidden_dim
    }
}

/// Dense row-major matrix; just enough linear algebra for this model.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out = W [x; y] + b` where the row length is `x.len() + y.len()`.
    fn affine_concat(&self, b: &[S], x: &[S], y: &[S], out: &mut [S]) {
        debug_assert_eq!(self.cols, x.len() + y.len());
        debug_assert_eq!(self.rows, out.len());
        for (r, o) in out.iter_mut().enumerate() {
            let row = self.row(r);
            let (wx, wy) = row.split_at(x.len());
            let mut acc = b[r];
            for (w, v) in wx.iter().zip(x) {
                acc = acc + *w * *v;
            }
            for (w, v) in wy.iter().zip(y) {
                acc = acc + *w * *v;
            }
            *o = acc;
        }
    }

    /// `out = W h + b`.
    fn affine(&self, b: &[S], h: &[S], out: &mut [S]) {
        debug_assert_eq!(self.cols, h.len());
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = b[r];
            for (w, v) in self.row(r).iter().zip(h) {
                acc = acc + *w * *v;
            }
            *o = acc;
        }
    }

    /// `out += W^T y`, accumulating into `out`.
    fn add_transpose_mul(&self, y: &[S], out: &mut [S]) {
        debug_assert_eq!(self.rows, y.len());
        debug_assert_eq!(self.cols, out.len());
        for (r, &yr) in y.iter().enumerate() {
            for (w, o) in self.row(r).iter().zip(out.iter_mut()) {
                *o = *o + *w * yr;
            }
        }
    }

    /// `self += y [x; z]^T` (rank-one update against a concatenated input).
    fn add_outer_concat(&mut self, y: &[S], x: &[S], z: &[S]) {
        debug_assert_eq!(self.rows, y.len());
        debug_assert_eq!(self.cols, x.len() + z.len());
        let cols = self.cols;
        for (r, &yr) in y.iter().enumerate() {
            let row = &mut self.data[r * cols..(r + 1) * cols];
            let (wx, wz) = row.split_at_mut(x.len());
            for (w, v) in wx.iter_mut().zip(x) {
                *w = *w + yr * *v;
            }
            for (w, v) in wz.iter_mut().zip(z) {
                *w = *w + yr * *v;
            }
        }
    }
}

/// All trainable parameters. The same shape doubles as the gradient
/// container returned by [`backward_sequence`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S> {
    pub config: ModelConfig,
    pub w_update: Mat<S>,
    pub b_update: Vec<S>,
    pub w_reset: Mat<S>,
    pub b_reset: Vec<S>,
    pub w_cand: Mat<S>,
    pub b_cand: Vec<S>,
    pub w_pi: Mat<S>,
    pub b_pi: Vec<S>,
    pub w_rho: Mat<S>,
    pub b_rho: Vec<S>,
    pub w_mu: Mat<S>,
    pub b_mu: Vec<S>,
    pub w_sigma: Mat<S>,
    pub b_sigma: Vec<S>,
}

impl<S: Scalar> ModelParams<S> {
    pub fn zeros(config: ModelConfig) -> Self {
        let h = config.hidden_dim;
        let gate_in = config.gate_fan_in();
        let m = config.mixtures;
        Self {
            config,
            w_update: Mat::zeros(h, gate_in),
            b_update: vec![S::zero(); h],
            w_reset: Mat::zeros(h, gate_in),
            b_reset: vec![S::zero(); h],
            w_cand: Mat::zeros(h, gate_in),
            b_cand: vec![S::zero(); h],
            w_pi: Mat::zeros(m, h),
            b_pi: vec![S::zero(); m],
            w_rho: Mat::zeros(m, h),
            b_rho: vec![S::zero(); m],
            w_mu: Mat::zeros(2 * m, h),
            b_mu: vec![S::zero(); 2 * m],
            w_sigma: Mat::zeros(2 * m, h),
            b_sigma: vec![S::zero(); 2 * m],
        }
    }

    /// Tensor views in a fixed order, shared by serialization, the optimizer
    /// and the finite-difference tests.
    pub fn fields(&self) -> Vec<(&'static str, &[S])> {
        vec![
            ("w_update", &self.w_update.data[..]),
            ("b_update", &self.b_update[..]),
            ("w_reset", &self.w_reset.data[..]),
            ("b_reset", &self.b_reset[..]),
            ("w_cand", &self.w_cand.data[..]),
            ("b_cand", &self.b_cand[..]),
            ("w_pi", &self.w_pi.data[..]),
            ("b_pi", &self.b_pi[..]),
            ("w_rho", &self.w_rho.data[..]),
            ("b_rho", &self.b_rho[..]),
            ("w_mu", &self.w_mu.data[..]),
            ("b_mu", &self.b_mu[..]),
            ("w_sigma", &self.w_sigma.data[..]),
            ("b_sigma", &self.b_sigma[..]),
        ]
    }

    pub fn fields_mut(&mut self) -> Vec<(&'static str, &mut [S])> {
        vec![
            ("w_update", &mut self.w_update.data[..]),
            ("b_update", &mut self.b_update[..]),
            ("w_reset", &mut self.w_reset.data[..]),
            ("b_reset", &mut self.b_reset[..]),
            ("w_cand", &mut self.w_cand.data[..]),
            ("b_cand", &mut self.b_cand[..]),
            ("w_pi", &mut self.w_pi.data[..]),
            ("b_pi", &mut self.b_pi[..]),
            ("w_rho", &mut self.w_rho.data[..]),
            ("b_rho", &mut self.b_rho[..]),
            ("w_mu", &mut self.w_mu.data[..]),
            ("b_mu", &mut self.b_mu[..]),
            ("w_sigma", &mut self.w_sigma.data[..]),
            ("b_sigma", &mut self.b_sigma[..]),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.fields().iter().map(|(_, s)| s.len()).sum()
    }

    /// Euclidean norm over every parameter, used for gradient clipping.
    pub fn global_norm(&self) -> S {
        self.fields()
            .iter()
            .flat_map(|(_, s)| s.iter())
            .map(|v| *v * *v)
            .sum::<S>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: S) {
        for (_, s) in self.fields_mut() {
            for v in s {
                *v = *v * factor;
            }
        }
    }
}

/// Fresh zero hidden state for a track or sequence start.
pub fn initial_hidden<S: Scalar>(config: &ModelConfig) -> HiddenState<S> {
    vec![S::zero(); config.hidden_dim]
}

/// Initializes weights i.i.d. uniform in `[-s, s]` with `s = 1/sqrt(fan_in)`
/// and zero biases; deterministic in the seed.
pub fn init_params<S: Scalar>(config: ModelConfig, seed: u64) -> ModelParams<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::zeros(config);
    let gate_scale = S::one() / S::cast(config.gate_fan_in() as f64).sqrt();
    let head_scale = S::one() / S::cast(config.hidden_dim as f64).sqrt();
    for w in [
        &mut params.w_update,
        &mut params.w_reset,
        &mut params.w_cand,
    ] {
        for v in &mut w.data {
            *v = S::uniform_symmetric(&mut rng, gate_scale);
        }
    }
    for w in [
        &mut params.w_pi,
        &mut params.w_rho,
        &mut params.w_mu,
        &mut params.w_sigma,
    ] {
        for v in &mut w.data {
            *v = S::uniform_symmetric(&mut rng, head_scale);
        }
    }
    params
}

#[inline]
fn logistic<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// Intermediate activations of one cell step, cached for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct StepCache<S> {
    pub input: [S; 2],
    pub h_prev: Vec<S>,
    pub update: Vec<S>,
    pub reset: Vec<S>,
    pub reset_h: Vec<S>,
    pub cand: Vec<S>,
    pub hidden: Vec<S>,
}

pub(crate) fn cell_step_cached<S: Scalar>(
    params: &ModelParams<S>,
    h: &[S],
    x: Offset<S>,
) -> StepCache<S> {
    let dim = params.config.hidden_dim;
    let input = [x.dx, x.dy];
    let mut update = vec![S::zero(); dim];
    params
        .w_update
        .affine_concat(&params.b_update, &input, h, &mut update);
    for v in &mut update {
        *v = logistic(*v);
    }
    let mut reset = vec![S::zero(); dim];
    params
        .w_reset
        .affine_concat(&params.b_reset, &input, h, &mut reset);
    for v in &mut reset {
        *v = logistic(*v);
    }
    let reset_h: Vec<S> = reset.iter().zip(h).map(|(r, hv)| *r * *hv).collect();
    let mut cand = vec![S::zero(); dim];
    params
        .w_cand
        .affine_concat(&params.b_cand, &input, &reset_h, &mut cand);
    for v in &mut cand {
        *v = v.tanh();
    }
    let hidden: Vec<S> = update
        .iter()
        .zip(&cand)
        .zip(h)
        .map(|((z, c), hv)| (S::one() - *z) * *hv + *z * *c)
        .collect();
    StepCache {
        input,
        h_prev: h.to_vec(),
        update,
        reset,
        reset_h,
        cand,
        hidden,
    }
}

/// Advances the recurrent state by one input offset.
pub fn cell_step<S: Scalar>(
    params: &ModelParams<S>,
    h: &HiddenState<S>,
    x: Offset<S>,
) -> HiddenState<S> {
    cell_step_cached(params, h, x).hidden
}

/// Evaluates the four heads on a hidden state.
pub fn heads<S: Scalar>(params: &ModelParams<S>, h: &HiddenState<S>) -> RawMixtureOutputs<S> {
    let m = params.config.mixtures;
    let mut pi = vec![S::zero(); m];
    params.w_pi.affine(&params.b_pi, h, &mut pi);
    let mut rho = vec![S::zero(); m];
    params.w_rho.affine(&params.b_rho, h, &mut rho);
    let mut mu_flat = vec![S::zero(); 2 * m];
    params.w_mu.affine(&params.b_mu, h, &mut mu_flat);
    let mut sigma_flat = vec![S::zero(); 2 * m];
    params.w_sigma.affine(&params.b_sigma, h, &mut sigma_flat);
    RawMixtureOutputs {
        pi,
        mu: (0..m)
            .map(|k| Offset::new(mu_flat[2 * k], mu_flat[2 * k + 1]))
            .collect(),
        sigma: (0..m)
            .map(|k| [sigma_flat[2 * k], sigma_flat[2 * k + 1]])
            .collect(),
        rho,
    }
}

/// Runs the model over an offset sequence from a zero hidden state. The
/// output at step `t` models the distribution of the offset at `t + 1`.
pub fn forward_sequence<S: Scalar>(
    params: &ModelParams<S>,
    offsets: &[Offset<S>],
) -> Vec<MixtureParams<S>> {
    let mut h = initial_hidden(&params.config);
    let mut out = Vec::with_capacity(offsets.len());
    for &x in offsets {
        h = cell_step(params, &h, x);
        let raw = heads(params, &h);
        out.push(constrain(&raw, S::zero()).expect("zero bias is valid"));
    }
    out
}
