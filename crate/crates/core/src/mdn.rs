//! Bivariate Gaussian mixture math for the trajectory model.
//!
//! Raw network outputs are constrained into a valid mixture (softmax weights,
//! positive scales, correlation in the open unit interval), optionally
//! sharpened by a sampling bias `b >= 0`: weight logits are scaled by `1 + b`
//! and log-scales shifted by `-b`, so `b = 0` reproduces the unbiased
//! transforms exactly.

use rand::Rng;
use thiserror::Error;

use crate::geom::Offset;
use crate::scalar::Scalar;

/// Floor for each scale component after the bias shift; keeps the covariance
/// non-singular under large bias or overfit training.
pub const SIGMA_MIN: f64 = 1e-3;

/// Cap on |rho| after tanh; keeps `1 - rho^2` well-conditioned.
pub const RHO_MAX: f64 = 0.999;

#[derive(Debug, Error, PartialEq)]
pub enum MdnError {
    #[error("bias must be nonnegative, got {0}")]
    NegativeBias(f64),
    #[error("length mismatch: {params} parameter steps vs {targets} targets")]
    LengthMismatch { params: usize, targets: usize },
    #[error("sequence must contain at least one step")]
    EmptySequence,
    #[error("invalid mixture parameters: {0}")]
    InvalidParams(&'static str),
}

/// Unconstrained network outputs for one time step, one entry per component.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMixtureOutputs<S> {
    pub pi: Vec<S>,
    pub mu: Vec<Offset<S>>,
    pub sigma: Vec<[S; 2]>,
    pub rho: Vec<S>,
}

impl<S: Scalar> RawMixtureOutputs<S> {
    pub fn mixture_count(&self) -> usize {
        self.pi.len()
    }
}

/// Constrained mixture for one time step.
///
/// Invariants: weights are nonnegative and sum to one, every scale component
/// is at least [`SIGMA_MIN`], and every |rho| is at most [`RHO_MAX`].
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams<S> {
    pub weights: Vec<S>,
    pub means: Vec<Offset<S>>,
    pub sigmas: Vec<[S; 2]>,
    pub rhos: Vec<S>,
}

impl<S: Scalar> MixtureParams<S> {
    /// Validating constructor for hand-built mixtures.
    pub fn new(
        weights: Vec<S>,
        means: Vec<Offset<S>>,
        sigmas: Vec<[S; 2]>,
        rhos: Vec<S>,
    ) -> Result<Self, MdnError> {
        let m = weights.len();
        if m == 0 {
            return Err(MdnError::InvalidParams(
                "mixture must have at least one component",
            ));
        }
        if means.len() != m || sigmas.len() != m || rhos.len() != m {
            return Err(MdnError::InvalidParams(
                "component blocks disagree on mixture count",
            ));
        }
        let total: S = weights.iter().copied().sum();
        if (total - S::one()).abs() > S::cast(1e-9) {
            return Err(MdnError::InvalidParams("weights must sum to one"));
        }
        if weights.iter().any(|w| *w < S::zero()) {
            return Err(MdnError::InvalidParams("weights must be nonnegative"));
        }
        if sigmas
            .iter()
            .any(|s| s[0] < S::cast(SIGMA_MIN) || s[1] < S::cast(SIGMA_MIN))
        {
            return Err(MdnError::InvalidParams("sigma below the minimum scale"));
        }
        if rhos.iter().any(|r| r.abs() > S::cast(RHO_MAX)) {
            return Err(MdnError::InvalidParams("rho outside the clamped range"));
        }
        Ok(Self {
            weights,
            means,
            sigmas,
            rhos,
        })
    }

    /// Single-component mixture, handy in tests and for degenerate models.
    pub fn single(mean: Offset<S>, sigma: [S; 2], rho: S) -> Self {
        Self {
            weights: vec![S::one()],
            means: vec![mean],
            sigmas: vec![sigma],
            rhos: vec![rho],
        }
    }

    pub fn mixture_count(&self) -> usize {
        self.weights.len()
    }
}

/// Softmax of `logits * scale`, shifted by the max only when a plain
/// exponentiation would overflow or the whole vector would underflow. The
/// plain path reproduces the textbook normalization bit-for-bit.
fn softmax_scaled<S: Scalar>(logits: &[S], scale: S) -> Vec<S> {
    let max = logits
        .iter()
        .fold(S::neg_infinity(), |a, &l| a.max(l * scale));
    let safe = S::max_value().ln() * S::cast(0.5);
    let shift = if max.abs() > safe { max } else { S::zero() };
    let exps: Vec<S> = logits.iter().map(|&l| (l * scale - shift).exp()).collect();
    let total: S = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Constrains raw outputs into a valid mixture, sharpened by `bias`.
pub fn constrain<S: Scalar>(
    raw: &RawMixtureOutputs<S>,
    bias: S,
) -> Result<MixtureParams<S>, MdnError> {
    if bias < S::zero() {
        return Err(MdnError::NegativeBias(bias.to_f64().unwrap_or(f64::NAN)));
    }
    let weights = softmax_scaled(&raw.pi, S::one() + bias);
    let sigma_min = S::cast(SIGMA_MIN);
    let sigmas: Vec<[S; 2]> = raw
        .sigma
        .iter()
        .map(|s| {
            [
                (s[0] - bias).exp().max(sigma_min),
                (s[1] - bias).exp().max(sigma_min),
            ]
        })
        .collect();
    let rho_max = S::cast(RHO_MAX);
    let rhos: Vec<S> = raw
        .rho
        .iter()
        .map(|r| r.tanh().max(-rho_max).min(rho_max))
        .collect();
    Ok(MixtureParams {
        weights,
        means: raw.mu.clone(),
        sigmas,
        rhos,
    })
}

/// Log-density of one bivariate normal component at `x`.
pub(crate) fn log_normal<S: Scalar>(mean: Offset<S>, sigma: [S; 2], rho: S, x: Offset<S>) -> S {
    let two = S::cast(2.0);
    let one_minus_r2 = S::one() - rho * rho;
    let dx = (x.dx - mean.dx) / sigma[0];
    let dy = (x.dy - mean.dy) / sigma[1];
    let z = dx * dx + dy * dy - two * rho * dx * dy;
    let log_norm = S::cast(std::f64::consts::TAU).ln()
        + sigma[0].ln()
        + sigma[1].ln()
        + S::cast(0.5) * one_minus_r2.ln();
    -log_norm - z / (two * one_minus_r2)
}

/// Mixture density at `x`, evaluated by the direct formula.
pub fn density<S: Scalar>(params: &MixtureParams<S>, x: Offset<S>) -> S {
    let two = S::cast(2.0);
    let tau = S::cast(std::f64::consts::TAU);
    let mut total = S::zero();
    for k in 0..params.mixture_count() {
        let [sx, sy] = params.sigmas[k];
        let rho = params.rhos[k];
        let one_minus_r2 = S::one() - rho * rho;
        let dx = (x.dx - params.means[k].dx) / sx;
        let dy = (x.dy - params.means[k].dy) / sy;
        let z = dx * dx + dy * dy - two * rho * dx * dy;
        let norm = tau * sx * sy * one_minus_r2.sqrt();
        total = total + params.weights[k] * (-z / (two * one_minus_r2)).exp() / norm;
    }
    total
}

/// Log of the mixture density, via log-sum-exp over the components. Stays
/// finite arbitrarily far into the tails, where [`density`] underflows.
pub fn log_density<S: Scalar>(params: &MixtureParams<S>, x: Offset<S>) -> S {
    let mut terms = Vec::with_capacity(params.mixture_count());
    for k in 0..params.mixture_count() {
        let lw = params.weights[k].ln(); // -inf for zero weight, dropped by LSE
        terms.push(lw + log_normal(params.means[k], params.sigmas[k], params.rhos[k], x));
    }
    let max = terms.iter().fold(S::neg_infinity(), |a, &t| a.max(t));
    if !max.is_finite() {
        return max;
    }
    let sum: S = terms.iter().map(|&t| (t - max).exp()).sum();
    max + sum.ln()
}

/// Negative log-likelihood of a target sequence, summed over the steps.
pub fn nll_loss<S: Scalar>(
    param_seq: &[MixtureParams<S>],
    targets: &[Offset<S>],
) -> Result<S, MdnError> {
    if param_seq.len() != targets.len() {
        return Err(MdnError::LengthMismatch {
            params: param_seq.len(),
            targets: targets.len(),
        });
    }
    if param_seq.is_empty() {
        return Err(MdnError::EmptySequence);
    }
    Ok(param_seq
        .iter()
        .zip(targets)
        .map(|(p, &t)| -log_density(p, t))
        .sum())
}

/// Draws one offset: a component from the categorical weights by inverse
/// CDF, then a bivariate normal draw through the Cholesky factor of the
/// implied covariance.
pub fn sample<S: Scalar, R: Rng + ?Sized>(params: &MixtureParams<S>, rng: &mut R) -> Offset<S> {
    let u = S::uniform_01(rng);
    let mut k = params.mixture_count() - 1;
    let mut cum = S::zero();
    for (i, &w) in params.weights.iter().enumerate() {
        cum = cum + w;
        if u < cum {
            k = i;
            break;
        }
    }
    let z1 = S::standard_normal(rng);
    let z2 = S::standard_normal(rng);
    let [sx, sy] = params.sigmas[k];
    let rho = params.rhos[k];
    let mean = params.means[k];
    Offset {
        dx: mean.dx + sx * z1,
        dy: mean.dy + sy * (rho * z1 + (S::one() - rho * rho).sqrt() * z2),
    }
}

/// Mean of the highest-weight component; ties go to the lowest index.
pub fn best_mean<S: Scalar>(params: &MixtureParams<S>) -> Offset<S> {
    let mut best = 0;
    for k in 1..params.mixture_count() {
        if params.weights[k] > params.weights[best] {
            best = k;
        }
    }
    params.means[best]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn raw(
        pi: Vec<f64>,
        mu: Vec<(f64, f64)>,
        sigma: Vec<(f64, f64)>,
        rho: Vec<f64>,
    ) -> RawMixtureOutputs<f64> {
        RawMixtureOutputs {
            pi,
            mu: mu.into_iter().map(|(x, y)| Offset::new(x, y)).collect(),
            sigma: sigma.into_iter().map(|(x, y)| [x, y]).collect(),
            rho,
        }
    }

    fn random_raw(rng: &mut ChaCha8Rng, m: usize) -> RawMixtureOutputs<f64> {
        use rand::Rng as _;
        raw(
            (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            (0..m)
                .map(|_| (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)))
                .collect(),
            (0..m)
                .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect(),
            (0..m).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        )
    }

    /// Plain textbook softmax / exp / tanh transforms, kept independent of
    /// the implementation as the unbiased oracle.
    fn unbiased_oracle(raw: &RawMixtureOutputs<f64>) -> MixtureParams<f64> {
        let exps: Vec<f64> = raw.pi.iter().map(|p| p.exp()).collect();
        let total: f64 = exps.iter().sum();
        MixtureParams {
            weights: exps.iter().map(|e| e / total).collect(),
            means: raw.mu.clone(),
            sigmas: raw.sigma.iter().map(|s| [s[0].exp(), s[1].exp()]).collect(),
            rhos: raw.rho.iter().map(|r| r.tanh()).collect(),
        }
    }

    #[test]
    fn equal_logits_give_uniform_weights() {
        let p = constrain(
            &raw(
                vec![0.0; 5],
                vec![(0.0, 0.0); 5],
                vec![(0.0, 0.0); 5],
                vec![0.0; 5],
            ),
            0.0,
        )
        .unwrap();
        for w in &p.weights {
            assert!((w - 0.2).abs() < 1e-15);
        }
        assert_eq!(p.sigmas[0], [1.0, 1.0]);
        assert_eq!(p.rhos[0], 0.0);
    }

    #[test]
    fn large_bias_sharpens_to_argmax_and_sigma_floor() {
        let p = constrain(
            &raw(
                vec![1.0, 0.0],
                vec![(3.0, 4.0), (0.0, 0.0)],
                vec![(0.0, 0.0); 2],
                vec![0.0; 2],
            ),
            1e3,
        )
        .unwrap();
        assert!((p.weights[0] - 1.0).abs() < 1e-12);
        assert!(p.weights[1] < 1e-12);
        assert_eq!(p.sigmas[0], [SIGMA_MIN, SIGMA_MIN]);
    }

    #[test]
    fn negative_bias_is_rejected() {
        let r = raw(vec![0.0], vec![(0.0, 0.0)], vec![(0.0, 0.0)], vec![0.0]);
        assert_eq!(
            constrain(&r, -0.5).unwrap_err(),
            MdnError::NegativeBias(-0.5)
        );
    }

    #[test]
    fn zero_bias_matches_unbiased_transforms_bit_for_bit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let r = random_raw(&mut rng, 5);
            let got = constrain(&r, 0.0).unwrap();
            let want = unbiased_oracle(&r);
            assert_eq!(got.weights, want.weights);
            assert_eq!(got.sigmas, want.sigmas);
            assert_eq!(got.rhos, want.rhos);
            assert_eq!(got.means, want.means);
        }
    }

    #[test]
    fn density_at_standard_center() {
        let p = MixtureParams::single(Offset::zero(), [1.0, 1.0], 0.0);
        let v = density(&p, Offset::zero());
        assert!((v - 1.0 / std::f64::consts::TAU).abs() < 1e-12, "{v}");
        let off = density(&p, Offset::new(1.0, 0.0));
        assert!(
            (off - (-0.5f64).exp() / std::f64::consts::TAU).abs() < 1e-12,
            "{off}"
        );
    }

    #[test]
    fn log_density_matches_density_log() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let r = random_raw(&mut rng, 3);
            let p = constrain(&r, 0.0).unwrap();
            use rand::Rng as _;
            let x = Offset::new(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0));
            let d = density(&p, x);
            if d > 1e-300 {
                let rel = (log_density(&p, x) - d.ln()).abs() / d.ln().abs().max(1.0);
                assert!(rel < 1e-9, "rel error {rel}");
            }
        }
    }

    #[test]
    fn log_density_finite_deep_in_the_tails() {
        let p: MixtureParams<f64> = MixtureParams::single(Offset::zero(), [1.0, 1.0], 0.0);
        let far = Offset::new(100.0, -100.0);
        assert_eq!(
            density(&p, far),
            0.0,
            "direct formula underflows as expected"
        );
        let ld = log_density(&p, far);
        assert!(ld.is_finite() && ld < -5000.0, "{ld}");
        let extreme = log_density(&p, Offset::new(1e8, 0.0));
        assert!(extreme.is_finite(), "{extreme}");
    }

    #[test]
    fn grid_integration_of_density_is_one() {
        // midpoint quadrature over +-8 sigma around the means
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let mut r = random_raw(&mut rng, 4);
            for rho in &mut r.rho {
                *rho = rho.clamp(-1.4, 1.4); // tanh keeps |rho| <= ~0.89
            }
            let p = constrain(&r, 0.0).unwrap();
            let mass = quadrature(&p, 500);
            assert!((mass - 1.0).abs() < 1e-3, "mass {mass}");
        }
    }

    fn quadrature(p: &MixtureParams<f64>, n: usize) -> f64 {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for k in 0..p.mixture_count() {
            let m = [p.means[k].dx, p.means[k].dy];
            for d in 0..2 {
                lo[d] = lo[d].min(m[d] - 8.0 * p.sigmas[k][d]);
                hi[d] = hi[d].max(m[d] + 8.0 * p.sigmas[k][d]);
            }
        }
        let (hx, hy) = ((hi[0] - lo[0]) / n as f64, (hi[1] - lo[1]) / n as f64);
        let mut mass = 0.0;
        for i in 0..n {
            let x = lo[0] + (i as f64 + 0.5) * hx;
            for j in 0..n {
                let y = lo[1] + (j as f64 + 0.5) * hy;
                mass += density(p, Offset::new(x, y));
            }
        }
        mass * hx * hy
    }

    #[test]
    fn nll_single_term_and_additivity() {
        let p = MixtureParams::single(Offset::zero(), [1.0, 1.0], 0.0);
        let one = nll_loss(std::slice::from_ref(&p), &[Offset::zero()]).unwrap();
        assert!((one - std::f64::consts::TAU.ln()).abs() < 1e-12);
        let two = nll_loss(&[p.clone(), p.clone()], &[Offset::zero(); 2]).unwrap();
        assert_eq!(two, 2.0 * one);
        assert!(matches!(
            nll_loss(&[p], &[Offset::zero(); 2]),
            Err(MdnError::LengthMismatch { .. })
        ));
        assert_eq!(nll_loss::<f64>(&[], &[]), Err(MdnError::EmptySequence));
    }

    #[test]
    fn sampling_is_deterministic_and_tight_for_degenerate_width() {
        let p = MixtureParams::single(Offset::new(3.0, 4.0), [SIGMA_MIN, SIGMA_MIN], 0.0);
        let a = sample(&p, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample(&p, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert!((a.dx - 3.0).abs() < 10.0 * SIGMA_MIN);
        assert!((a.dy - 4.0).abs() < 10.0 * SIGMA_MIN);
    }

    #[test]
    fn sample_moments_match_parameters() {
        let p = MixtureParams::single(Offset::zero(), [1.0, 2.0], 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let draws: Vec<Offset<f64>> = (0..n).map(|_| sample(&p, &mut rng)).collect();
        let mx = draws.iter().map(|d| d.dx).sum::<f64>() / n as f64;
        let my = draws.iter().map(|d| d.dy).sum::<f64>() / n as f64;
        assert!(mx.abs() < 0.02, "{mx}");
        assert!(my.abs() < 0.02, "{my}");
        let cxx = draws.iter().map(|d| (d.dx - mx) * (d.dx - mx)).sum::<f64>() / n as f64;
        let cyy = draws.iter().map(|d| (d.dy - my) * (d.dy - my)).sum::<f64>() / n as f64;
        let cxy = draws.iter().map(|d| (d.dx - mx) * (d.dy - my)).sum::<f64>() / n as f64;
        // cov = [[1, 1], [1, 4]]
        assert!((cxx - 1.0).abs() < 0.03, "{cxx}");
        assert!((cyy - 4.0).abs() < 0.12, "{cyy}");
        assert!((cxy - 1.0).abs() < 0.03, "{cxy}");
    }

    #[test]
    fn best_mean_picks_heaviest_component() {
        let p = MixtureParams {
            weights: vec![0.1, 0.7, 0.2],
            means: vec![
                Offset::new(1.0, 0.0),
                Offset::new(2.0, 0.0),
                Offset::new(3.0, 0.0),
            ],
            sigmas: vec![[1.0, 1.0]; 3],
            rhos: vec![0.0; 3],
        };
        assert_eq!(best_mean(&p), Offset::new(2.0, 0.0));
    }

    #[test]
    fn best_mean_tie_breaks_to_lowest_index() {
        let p = MixtureParams {
            weights: vec![0.5, 0.5],
            means: vec![Offset::new(1.0, 0.0), Offset::new(2.0, 0.0)],
            sigmas: vec![[1.0, 1.0]; 2],
            rhos: vec![0.0; 2],
        };
        assert_eq!(best_mean(&p), Offset::new(1.0, 0.0));
    }

    #[test]
    fn best_mean_invariant_under_logit_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let r = random_raw(&mut rng, 5);
            let base = best_mean(&constrain(&r, 0.0).unwrap());
            let mut shifted = r.clone();
            for p in &mut shifted.pi {
                *p += 3.25;
            }
            assert_eq!(base, best_mean(&constrain(&shifted, 0.0).unwrap()));
        }
    }

    proptest! {
        #[test]
        fn constrain_always_yields_valid_params(
            seed in 0u64..1000, bias in 0.0f64..60.0, m in 1usize..6,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random_raw(&mut rng, m);
            let p = constrain(&r, bias).unwrap();
            let total: f64 = p.weights.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
            prop_assert!(p.weights.iter().all(|w| *w >= 0.0));
            prop_assert!(p.sigmas.iter().all(|s| s[0] >= SIGMA_MIN && s[1] >= SIGMA_MIN));
            prop_assert!(p.rhos.iter().all(|r| r.abs() <= RHO_MAX));
            prop_assert!(MixtureParams::new(p.weights, p.means, p.sigmas, p.rhos).is_ok());
        }

        #[test]
        fn bias_effect_is_monotone(
            seed in 0u64..500, b1 in 0.0f64..10.0, extra in 0.01f64..10.0,
        ) {
            let b2 = b1 + extra;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random_raw(&mut rng, 5);
            let p1 = constrain(&r, b1).unwrap();
            let p2 = constrain(&r, b2).unwrap();
            for (s1, s2) in p1.sigmas.iter().zip(&p2.sigmas) {
                prop_assert!(s2[0] <= s1[0] && s2[1] <= s1[1]);
            }
            let max1 = p1.weights.iter().cloned().fold(0.0, f64::max);
            let max2 = p2.weights.iter().cloned().fold(0.0, f64::max);
            prop_assert!(max2 >= max1 - 1e-12);
        }

        #[test]
        fn density_is_nonnegative(seed in 0u64..300, x in -20.0f64..20.0, y in -20.0f64..20.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = constrain(&random_raw(&mut rng, 4), 0.0).unwrap();
            prop_assert!(density(&p, Offset::new(x, y)) >= 0.0);
            prop_assert!(log_density(&p, Offset::new(x, y)).is_finite());
        }
    }
}
