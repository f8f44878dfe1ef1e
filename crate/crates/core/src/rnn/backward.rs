//! Backpropagation through time over a full offset sequence.
//!
//! The loss is the summed negative log-likelihood of `targets[t]` under the
//! mixture produced at step `t`, and the returned gradients are the exact
//! reverse-mode derivatives of that loss with respect to every parameter.
//! A scale or correlation pinned at its clamp contributes zero gradient
//! through the clamped path.

use thiserror::Error;

use crate::geom::Offset;
use crate::mdn::{constrain, log_density, log_normal, MixtureParams, RHO_MAX, SIGMA_MIN};
use crate::scalar::Scalar;

use super::{cell_step_cached, heads, initial_hidden, ModelParams, StepCache};

#[derive(Debug, Error, PartialEq)]
pub enum SequenceError {
    #[error("offsets ({inputs}) and targets ({targets}) must have equal nonzero length")]
    BadLengths { inputs: usize, targets: usize },
    #[error("loss became non-finite at step {step}")]
    NonFinite { step: usize },
}

/// Gradients of the constrained-mixture NLL with respect to the raw head
/// outputs at one step, laid out like the head vectors.
struct RawGrads<S> {
    pi: Vec<S>,
    rho: Vec<S>,
    mu: Vec<S>,
    sigma: Vec<S>,
}

#[allow(clippy::needless_range_loop)]
fn mixture_raw_grads<S: Scalar>(mix: &MixtureParams<S>, target: Offset<S>) -> RawGrads<S> {
    let m = mix.mixture_count();
    let one = S::one();
    let two = S::cast(2.0);

    // responsibilities in log space
    let mut log_terms = Vec::with_capacity(m);
    for k in 0..m {
        log_terms.push(
            mix.weights[k].ln() + log_normal(mix.means[k], mix.sigmas[k], mix.rhos[k], target),
        );
    }
    let max = log_terms.iter().fold(S::neg_infinity(), |a, &t| a.max(t));
    let lse = max + log_terms.iter().map(|&t| (t - max).exp()).sum::<S>().ln();

    let mut g = RawGrads {
        pi: vec![S::zero(); m],
        rho: vec![S::zero(); m],
        mu: vec![S::zero(); 2 * m],
        sigma: vec![S::zero(); 2 * m],
    };
    let sigma_min = S::cast(SIGMA_MIN);
    let rho_max = S::cast(RHO_MAX);
    for k in 0..m {
        let gamma = (log_terms[k] - lse).exp();
        g.pi[k] = mix.weights[k] - gamma;

        let [sx, sy] = mix.sigmas[k];
        let rho = mix.rhos[k];
        let c = one / (one - rho * rho);
        let dx = (target.dx - mix.means[k].dx) / sx;
        let dy = (target.dy - mix.means[k].dy) / sy;
        let z = dx * dx + dy * dy - two * rho * dx * dy;

        g.mu[2 * k] = -gamma * c * (dx - rho * dy) / sx;
        g.mu[2 * k + 1] = -gamma * c * (dy - rho * dx) / sy;
        if sx > sigma_min {
            g.sigma[2 * k] = -gamma * (c * dx * (dx - rho * dy) - one);
        }
        if sy > sigma_min {
            g.sigma[2 * k + 1] = -gamma * (c * dy * (dy - rho * dx) - one);
        }
        if rho.abs() < rho_max {
            g.rho[k] = -gamma * (dx * dy + rho * (one - c * z));
        }
    }
    g
}

/// Loss and exact parameter gradients for one aligned (inputs, targets)
/// sequence, with `targets[t]` being the offset observed at step `t + 1`.
pub fn backward_sequence<S: Scalar>(
    params: &ModelParams<S>,
    offsets: &[Offset<S>],
    targets: &[Offset<S>],
) -> Result<(S, ModelParams<S>), SequenceError> {
    if offsets.is_empty() || offsets.len() != targets.len() {
        return Err(SequenceError::BadLengths {
            inputs: offsets.len(),
            targets: targets.len(),
        });
    }
    let steps = offsets.len();
    let dim = params.config.hidden_dim;

    let mut caches: Vec<StepCache<S>> = Vec::with_capacity(steps);
    let mut mixtures: Vec<MixtureParams<S>> = Vec::with_capacity(steps);
    let mut h = initial_hidden(&params.config);
    let mut loss = S::zero();
    for (t, &x) in offsets.iter().enumerate() {
        let cache = cell_step_cached(params, &h, x);
        h.clone_from(&cache.hidden);
        let raw = heads(params, &h);
        let mix = constrain(&raw, S::zero()).expect("zero bias");
        loss = loss - log_density(&mix, targets[t]);
        if !loss.is_finite() {
            return Err(SequenceError::NonFinite { step: t });
        }
        caches.push(cache);
        mixtures.push(mix);
    }

    let mut grads = ModelParams::zeros(params.config);
    let mut dh_next = vec![S::zero(); dim];
    for t in (0..steps).rev() {
        let cache = &caches[t];
        let raw_g = mixture_raw_grads(&mixtures[t], targets[t]);

        // heads: accumulate parameter grads, gather gradient on h_t
        let mut dh = dh_next;
        grads.w_pi.add_outer_concat(&raw_g.pi, &cache.hidden, &[]);
        grads.w_rho.add_outer_concat(&raw_g.rho, &cache.hidden, &[]);
        grads.w_mu.add_outer_concat(&raw_g.mu, &cache.hidden, &[]);
        grads
            .w_sigma
            .add_outer_concat(&raw_g.sigma, &cache.hidden, &[]);
        add_assign(&mut grads.b_pi, &raw_g.pi);
        add_assign(&mut grads.b_rho, &raw_g.rho);
        add_assign(&mut grads.b_mu, &raw_g.mu);
        add_assign(&mut grads.b_sigma, &raw_g.sigma);
        params.w_pi.add_transpose_mul(&raw_g.pi, &mut dh);
        params.w_rho.add_transpose_mul(&raw_g.rho, &mut dh);
        params.w_mu.add_transpose_mul(&raw_g.mu, &mut dh);
        params.w_sigma.add_transpose_mul(&raw_g.sigma, &mut dh);

        // cell: h' = (1 - z) h + z c, c = tanh(Wc [x; r h]), gates logistic
        let one = S::one();
        let mut da_update = vec![S::zero(); dim];
        let mut da_cand = vec![S::zero(); dim];
        let mut dh_prev = vec![S::zero(); dim];
        for i in 0..dim {
            let z = cache.update[i];
            let c = cache.cand[i];
            let dz = dh[i] * (c - cache.h_prev[i]);
            da_update[i] = dz * z * (one - z);
            let dc = dh[i] * z;
            da_cand[i] = dc * (one - c * c);
            dh_prev[i] = dh[i] * (one - z);
        }

        let mut dcat_cand = vec![S::zero(); 2 + dim];
        params.w_cand.add_transpose_mul(&da_cand, &mut dcat_cand);
        let mut da_reset = vec![S::zero(); dim];
        for i in 0..dim {
            let d_rh = dcat_cand[2 + i];
            dh_prev[i] = dh_prev[i] + d_rh * cache.reset[i];
            let dr = d_rh * cache.h_prev[i];
            da_reset[i] = dr * cache.reset[i] * (one - cache.reset[i]);
        }

        let mut dcat_update = vec![S::zero(); 2 + dim];
        params
            .w_update
            .add_transpose_mul(&da_update, &mut dcat_update);
        let mut dcat_reset = vec![S::zero(); 2 + dim];
        params.w_reset.add_transpose_mul(&da_reset, &mut dcat_reset);
        for i in 0..dim {
            dh_prev[i] = dh_prev[i] + dcat_update[2 + i] + dcat_reset[2 + i];
        }

        grads
            .w_update
            .add_outer_concat(&da_update, &cache.input, &cache.h_prev);
        grads
            .w_reset
            .add_outer_concat(&da_reset, &cache.input, &cache.h_prev);
        grads
            .w_cand
            .add_outer_concat(&da_cand, &cache.input, &cache.reset_h);
        add_assign(&mut grads.b_update, &da_update);
        add_assign(&mut grads.b_reset, &da_reset);
        add_assign(&mut grads.b_cand, &da_cand);

        dh_next = dh_prev;
    }

    Ok((loss, grads))
}

fn add_assign<S: Scalar>(acc: &mut [S], inc: &[S]) {
    for (a, b) in acc.iter_mut().zip(inc) {
        *a = *a + *b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdn::nll_loss;
    use crate::rnn::{forward_sequence, init_params, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pair(seed: u64, steps: usize) -> (Vec<Offset<f64>>, Vec<Offset<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq: Vec<Offset<f64>> = (0..steps + 1)
            .map(|_| Offset::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)))
            .collect();
        (seq[..steps].to_vec(), seq[1..].to_vec())
    }

    /// Loss along the independent forward path.
    fn forward_loss(p: &ModelParams<f64>, inputs: &[Offset<f64>], targets: &[Offset<f64>]) -> f64 {
        nll_loss(&forward_sequence(p, inputs), targets).unwrap()
    }

    #[test]
    fn loss_matches_forward_path() {
        let p: ModelParams<f64> = init_params(ModelConfig::new(8, 2).unwrap(), 4);
        let (inputs, targets) = random_pair(17, 6);
        let (loss, _) = backward_sequence(&p, &inputs, &targets).unwrap();
        assert_eq!(loss, forward_loss(&p, &inputs, &targets));
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        let shapes = [(8usize, 2usize, 6usize), (4, 1, 3), (6, 3, 5), (10, 2, 4)];
        for (case, &(hidden, mixtures, steps)) in shapes.iter().enumerate() {
            let seed = case as u64;
            let mut p: ModelParams<f64> =
                init_params(ModelConfig::new(hidden, mixtures).unwrap(), seed);
            let (inputs, targets) = random_pair(100 + seed, steps);
            let (_, grads) = backward_sequence(&p, &inputs, &targets).unwrap();
            let eps = 1e-5;
            let gflat: Vec<f64> = grads
                .fields()
                .iter()
                .flat_map(|(_, s)| s.iter().cloned())
                .collect::<Vec<_>>();
            let mut idx = 0;
            let n_fields = p.fields().len();
            for f in 0..n_fields {
                let len = p.fields()[f].1.len();
                for i in 0..len {
                    let orig = p.fields()[f].1[i];
                    p.fields_mut()[f].1[i] = orig + eps;
                    let up = forward_loss(&p, &inputs, &targets);
                    p.fields_mut()[f].1[i] = orig - eps;
                    let down = forward_loss(&p, &inputs, &targets);
                    p.fields_mut()[f].1[i] = orig;
                    let numeric = (up - down) / (2.0 * eps);
                    let analytic = gflat[idx];
                    let abs_err = (numeric - analytic).abs();
                    // central differences bottom out around 1e-9 absolute
                    // here (loss of order 10, eps 1e-5)
                    let ok = if analytic.abs() < 1e-8 {
                        abs_err <= 1e-8
                    } else {
                        abs_err / analytic.abs().max(numeric.abs()) <= 1e-4 || abs_err <= 1e-9
                    };
                    assert!(
                        ok,
                        "seed {seed} field {f} entry {i}: analytic {analytic} vs numeric {numeric}"
                    );
                    idx += 1;
                }
            }
        }
    }

    #[test]
    fn duplicated_sequence_doubles_loss_and_gradients() {
        let p: ModelParams<f64> = init_params(ModelConfig::new(8, 2).unwrap(), 9);
        let (inputs, targets) = random_pair(7, 5);
        let (l1, g1) = backward_sequence(&p, &inputs, &targets).unwrap();

        // two independent sequences summed
        let (l2a, g2a) = backward_sequence(&p, &inputs, &targets).unwrap();
        let (l2b, g2b) = backward_sequence(&p, &inputs, &targets).unwrap();
        assert_eq!(l2a + l2b, 2.0 * l1);
        for (((_, a), (_, b)), (_, base)) in g2a
            .fields()
            .iter()
            .zip(g2b.fields().iter())
            .zip(g1.fields().iter())
        {
            for ((x, y), g) in a.iter().zip(b.iter()).zip(base.iter()) {
                assert_eq!(x + y, 2.0 * g);
            }
        }
    }

    #[test]
    fn empty_and_mismatched_sequences_are_rejected() {
        let p: ModelParams<f64> = init_params(ModelConfig::new(4, 2).unwrap(), 0);
        assert_eq!(
            backward_sequence(&p, &[], &[]),
            Err(SequenceError::BadLengths {
                inputs: 0,
                targets: 0
            })
        );
        let one = vec![Offset::new(1.0, 1.0)];
        assert!(matches!(
            backward_sequence(&p, &one, &[]),
            Err(SequenceError::BadLengths { .. })
        ));
    }
}
