//! Symmetrised KL divergence, Monte-Carlo estimates of the ideal selection
//! loss at the exact density ratio, and the lower bounds relating the two.
//!
//! With exact ratios `r = p+/p-` as scores, the ideal SINCERE loss satisfies
//! `L >= log|N| - (KL(p-||p+) + KL(p+||p-))`; the SupCon analogue is
//! `log(|N|+|P|-1) - |N|/(|N|+|P|-1) * symKL`, which is never below the
//! SINCERE bound and coincides with it at `|P| = 1`.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::genmodel::{check_compatible, log_ratio, sample_supervised, DensitySpec};
use crate::math::{ln, log_sum_exp, sqrt};

/// Default Monte-Carlo sample count.
pub const DEFAULT_MC_SAMPLES: usize = 100_000;
/// Smallest sample count accepted by [`ideal_loss_mc`].
pub const MIN_MC_SAMPLES: usize = 1_000;
/// Slack, in standard errors, allowed when comparing an estimate with a bound.
pub const BOUND_SLACK_SE: f64 = 3.0;

/// A point estimate with its standard error (zero for closed forms).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Estimate {
    pub value: f64,
    pub standard_error: f64,
    pub samples: usize,
}

/// Streaming mean and variance (Welford), so constant inputs give exactly zero spread.
#[derive(Debug, Default, Clone, Copy)]
struct Moments {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn estimate(&self) -> Estimate {
        let var = if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        };
        Estimate {
            value: self.mean,
            standard_error: sqrt(var.max(0.0) / self.count.max(1) as f64),
            samples: self.count,
        }
    }
}

fn gaussian_kl_1d(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    ln(s2 / s1) + (s1 * s1 + (m1 - m2) * (m1 - m2)) / (2.0 * s2 * s2) - 0.5
}

fn diagonal(spec: &DensitySpec) -> Option<(&[f64], Vec<f64>)> {
    match spec {
        DensitySpec::IsotropicGaussian { mean, sigma } => Some((mean, alloc::vec![*sigma; mean.len()])),
        DensitySpec::DiagonalGaussian { mean, sigmas } => Some((mean, sigmas.clone())),
        DensitySpec::Categorical { .. } => None,
    }
}

/// Directed `KL(p || q)` in nats, closed form for Gaussian and categorical pairs.
pub fn kl_divergence(p: &DensitySpec, q: &DensitySpec) -> Result<f64> {
    check_compatible(p, q)?;
    match (p, q) {
        (DensitySpec::Categorical { pmf: a }, DensitySpec::Categorical { pmf: b }) => {
            Ok(a.iter().zip(b).map(|(x, y)| x * ln(x / y)).sum())
        }
        _ => {
            let (m1, s1) = diagonal(p).ok_or_else(|| Error::invalid("density", "expected Gaussian"))?;
            let (m2, s2) = diagonal(q).ok_or_else(|| Error::invalid("density", "expected Gaussian"))?;
            Ok((0..m1.len())
                .map(|k| gaussian_kl_1d(m1[k], s1[k], m2[k], s2[k]))
                .sum())
        }
    }
}

/// `KL(p- || p+) + KL(p+ || p-)`.
pub fn symmetrized_kl(target: &DensitySpec, noise: &DensitySpec) -> Result<f64> {
    Ok(kl_divergence(noise, target)? + kl_divergence(target, noise)?)
}

/// Monte-Carlo symmetrised KL: `E_{p+}[log r] - E_{p-}[log r]` with `r = p+/p-`.
///
/// The standard error combines the two independent sample means.
pub fn symmetrized_kl_mc<R: Rng + ?Sized>(
    target: &DensitySpec,
    noise: &DensitySpec,
    samples: usize,
    rng: &mut R,
) -> Result<Estimate> {
    check_compatible(target, noise)?;
    if samples < 2 {
        return Err(Error::invalid("samples", "need at least 2"));
    }
    let mut from_target = Moments::default();
    let mut from_noise = Moments::default();
    for i in 0..samples {
        from_target.push(log_ratio(target, noise, &target.sample(rng), i)?);
        from_noise.push(log_ratio(target, noise, &noise.sample(rng), i)?);
    }
    let a = from_target.estimate();
    let b = from_noise.estimate();
    Ok(Estimate {
        value: a.value - b.value,
        standard_error: sqrt(a.standard_error * a.standard_error + b.standard_error * b.standard_error),
        samples,
    })
}

/// Ideal-loss estimates from one set of draws.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IdealLoss {
    pub n: usize,
    pub t: usize,
    /// `E[-log p(S | X, P)]` scored with exact ratios.
    pub sincere: Estimate,
    /// Same draws scored with the SupCon pseudo-probability, averaged over `p ∈ P`.
    /// Equal to `sincere` when `P` is empty.
    pub supcon: Estimate,
}

/// Estimates the ideal losses at the optimal scorer `exp(f) = p+/p-` by
/// sampling `(X, S, P)` from the supervised generative model.
pub fn ideal_loss_mc<R: Rng + ?Sized>(
    n: usize,
    t: usize,
    target: &DensitySpec,
    noise: &DensitySpec,
    samples: usize,
    rng: &mut R,
) -> Result<IdealLoss> {
    if samples < MIN_MC_SAMPLES {
        return Err(Error::invalid("samples", format!("{samples} < {MIN_MC_SAMPLES}")));
    }
    let mut sincere = Moments::default();
    let mut supcon = Moments::default();
    let mut log_r = Vec::with_capacity(n);
    for _ in 0..samples {
        let draw = sample_supervised(n, t, target, noise, rng)?;
        log_r.clear();
        for (i, x) in draw.data.iter().enumerate() {
            log_r.push(log_ratio(target, noise, x, i)?);
        }
        let s = draw.anchor;
        let is_pos = |i: usize| draw.positives.binary_search(&i).is_ok();
        let lse_candidates = log_sum_exp((0..n).filter(|&i| !is_pos(i)).map(|i| log_r[i]));
        let l_sincere = lse_candidates - log_r[s];
        sincere.push(l_sincere);
        if draw.positives.is_empty() {
            supcon.push(l_sincere);
        } else {
            let mut acc = 0.0;
            for &p in &draw.positives {
                acc += log_sum_exp((0..n).filter(|&i| i != p).map(|i| log_r[i])) - log_r[s];
            }
            supcon.push(acc / draw.positives.len() as f64);
        }
    }
    Ok(IdealLoss {
        n,
        t,
        sincere: sincere.estimate(),
        supcon: supcon.estimate(),
    })
}

/// `log|N| - symKL`.
pub fn sincere_bound_rhs(n_noise: usize, sym_kl: f64) -> f64 {
    ln(n_noise as f64) - sym_kl
}

/// `log(|N|+|P|-1) - |N|/(|N|+|P|-1) * symKL`; the SINCERE bound when `|P| <= 1`.
pub fn supcon_bound_rhs(n_noise: usize, n_pos: usize, sym_kl: f64) -> f64 {
    if n_pos <= 1 {
        return sincere_bound_rhs(n_noise, sym_kl);
    }
    let m = (n_noise + n_pos - 1) as f64;
    ln(m) - (n_noise as f64 / m) * sym_kl
}

/// Inputs to [`check_bounds`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub n_noise: usize,
    pub n_pos: usize,
    pub sym_kl: f64,
    pub sincere: Estimate,
    pub supcon: Option<Estimate>,
}

impl BoundInputs {
    pub fn from_ideal(loss: &IdealLoss, sym_kl: f64) -> Self {
        Self {
            n_noise: loss.n - loss.t,
            n_pos: loss.t - 1,
            sym_kl,
            sincere: loss.sincere,
            supcon: Some(loss.supcon),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundReport {
    pub n_noise: usize,
    pub n_pos: usize,
    pub sym_kl: f64,
    pub mc_loss_estimate: f64,
    pub standard_error: f64,
    pub mc_samples: usize,
    pub sincere_rhs: f64,
    /// `max(sincere_rhs, 0)`: the loss is a negative log-probability.
    pub sincere_rhs_trivial: f64,
    pub supcon_rhs: f64,
    pub supcon_rhs_trivial: f64,
    pub sincere_satisfied: bool,
    pub supcon_mc_estimate: Option<f64>,
    pub supcon_standard_error: Option<f64>,
    pub supcon_satisfied: Option<bool>,
    /// `log|N| - estimate <= symKL + 3 SE`: the estimate read as a divergence lower bound.
    pub divergence_reading_satisfied: bool,
}

impl BoundReport {
    pub fn all_satisfied(&self) -> bool {
        self.sincere_satisfied && self.supcon_satisfied.unwrap_or(true) && self.divergence_reading_satisfied
    }
}

/// Compares estimates with both bounds using [`BOUND_SLACK_SE`] standard errors of slack.
pub fn check_bounds(inputs: &BoundInputs) -> BoundReport {
    let sincere_rhs = sincere_bound_rhs(inputs.n_noise, inputs.sym_kl);
    let supcon_rhs = supcon_bound_rhs(inputs.n_noise, inputs.n_pos, inputs.sym_kl);
    let est = inputs.sincere;
    let slack = BOUND_SLACK_SE * est.standard_error;
    let supcon_satisfied = inputs
        .supcon
        .map(|e| e.value + BOUND_SLACK_SE * e.standard_error >= supcon_rhs);
    BoundReport {
        n_noise: inputs.n_noise,
        n_pos: inputs.n_pos,
        sym_kl: inputs.sym_kl,
        mc_loss_estimate: est.value,
        standard_error: est.standard_error,
        mc_samples: est.samples,
        sincere_rhs,
        sincere_rhs_trivial: sincere_rhs.max(0.0),
        supcon_rhs,
        supcon_rhs_trivial: supcon_rhs.max(0.0),
        sincere_satisfied: est.value + slack >= sincere_rhs,
        supcon_mc_estimate: inputs.supcon.map(|e| e.value),
        supcon_standard_error: inputs.supcon.map(|e| e.standard_error),
        supcon_satisfied,
        divergence_reading_satisfied: ln(inputs.n_noise as f64) - est.value <= inputs.sym_kl + slack,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::abs;
    use crate::rng::seeded;
    use alloc::vec;

    fn gauss(m: f64) -> DensitySpec {
        DensitySpec::gaussian_1d(m, 1.0)
    }

    #[test]
    fn kl_of_identical_densities_is_zero() {
        assert_eq!(symmetrized_kl(&gauss(0.3), &gauss(0.3)).unwrap(), 0.0);
        let c = DensitySpec::Categorical { pmf: vec![0.2, 0.8] };
        assert_eq!(symmetrized_kl(&c, &c).unwrap(), 0.0);
    }

    #[test]
    fn unit_gaussians_give_mean_gap_squared() {
        for mu in [0.5, 1.0, 2.0, -1.5] {
            let kl = symmetrized_kl(&gauss(mu), &gauss(0.0)).unwrap();
            assert!(abs(kl - mu * mu) < 1e-15);
            assert!(abs(kl_divergence(&gauss(mu), &gauss(0.0)).unwrap() - mu * mu / 2.0) < 1e-15);
        }
    }

    #[test]
    fn closed_form_agrees_with_monte_carlo() {
        let mut rng = seeded(10);
        for mu in [0.5, 1.0, 2.0] {
            let mc = symmetrized_kl_mc(&gauss(mu), &gauss(0.0), 200_000, &mut rng).unwrap();
            assert!(abs(mc.value - mu * mu) <= 3.0 * mc.standard_error, "{mc:?}");
        }
        let t = DensitySpec::DiagonalGaussian { mean: vec![0.0, 1.0], sigmas: vec![1.0, 0.5] };
        let n = DensitySpec::IsotropicGaussian { mean: vec![0.5, 0.0], sigma: 1.2 };
        let exact = symmetrized_kl(&t, &n).unwrap();
        let mc = symmetrized_kl_mc(&t, &n, 200_000, &mut rng).unwrap();
        assert!(abs(mc.value - exact) <= 3.0 * mc.standard_error);
    }

    #[test]
    fn categorical_kl_by_summation() {
        let p = DensitySpec::Categorical { pmf: vec![0.5, 0.5] };
        let q = DensitySpec::Categorical { pmf: vec![0.9, 0.1] };
        // python: sum of both directed KLs
        assert!(abs(symmetrized_kl(&p, &q).unwrap() - 0.878_889_830_934_487_8) < 1e-15);
    }

    #[test]
    fn isotropic_two_dimensional_kl() {
        let a = DensitySpec::IsotropicGaussian { mean: vec![0.0, 0.0], sigma: 1.0 };
        let b = DensitySpec::IsotropicGaussian { mean: vec![1.0, 2.0], sigma: 2.0 };
        assert!(abs(symmetrized_kl(&a, &b).unwrap() - 5.375) < 1e-14);
        assert!(symmetrized_kl(&a, &gauss(0.0)).is_err());
    }

    #[test]
    fn identical_densities_sit_at_chance() {
        let mut rng = seeded(11);
        let est = ideal_loss_mc(6, 2, &gauss(0.0), &gauss(0.0), 2_000, &mut rng).unwrap();
        assert_eq!(est.sincere.value, ln(5.0));
        assert_eq!(est.sincere.standard_error, 0.0);
        let report = check_bounds(&BoundInputs::from_ideal(&est, 0.0));
        assert_eq!(report.sincere_rhs, ln(4.0));
        assert!(report.all_satisfied());
    }

    #[test]
    fn gaussian_ideal_loss_respects_bound() {
        let mut rng = seeded(12);
        let est = ideal_loss_mc(6, 2, &gauss(1.0), &gauss(0.0), 20_000, &mut rng).unwrap();
        assert!(est.sincere.value >= 0.0);
        assert!(est.sincere.value + 3.0 * est.sincere.standard_error >= ln(4.0) - 1.0);
        let report = check_bounds(&BoundInputs::from_ideal(&est, 1.0));
        assert!(report.all_satisfied());
        // |P| = 1: both scorings coincide
        assert!(abs(est.supcon.value - est.sincere.value) < 1e-12);
    }

    #[test]
    fn supcon_scoring_exceeds_sincere_with_more_positives() {
        let mut rng = seeded(13);
        let est = ideal_loss_mc(8, 4, &gauss(1.0), &gauss(0.0), 5_000, &mut rng).unwrap();
        assert!(est.supcon.value > est.sincere.value);
        let sym = symmetrized_kl(&gauss(1.0), &gauss(0.0)).unwrap();
        let report = check_bounds(&BoundInputs::from_ideal(&est, sym));
        assert_eq!(report.supcon_satisfied, Some(true));
        assert!(report.sincere_satisfied);
    }

    #[test]
    fn estimate_grows_with_noise_count() {
        let mut prev = f64::NEG_INFINITY;
        for n_noise in [2usize, 4, 8, 16] {
            let mut rng = seeded(14);
            let est = ideal_loss_mc(n_noise + 2, 2, &gauss(1.0), &gauss(0.0), 5_000, &mut rng).unwrap();
            assert!(est.sincere.value - 3.0 * est.sincere.standard_error > prev);
            prev = est.sincere.value + 3.0 * est.sincere.standard_error;
        }
    }

    #[test]
    fn rhs_examples() {
        assert_eq!(supcon_bound_rhs(4, 1, 2.0), sincere_bound_rhs(4, 2.0));
        let sup = supcon_bound_rhs(4, 3, 2.0);
        assert!(abs(sup - (ln(6.0) - (4.0 / 6.0) * 2.0)) < 1e-15);
        assert!(sup > sincere_bound_rhs(4, 2.0));
        assert_eq!(sincere_bound_rhs(4, 0.0), ln(4.0));
    }

    #[test]
    fn supcon_rhs_dominates_on_grid() {
        for n_noise in 1..30 {
            for n_pos in 1..30 {
                for k in 0..40 {
                    let sym = 0.25 * k as f64;
                    let a = supcon_bound_rhs(n_noise, n_pos, sym);
                    let b = sincere_bound_rhs(n_noise, sym);
                    if n_pos == 1 {
                        assert_eq!(a, b);
                    } else {
                        assert!(a > b, "{n_noise} {n_pos} {sym}");
                    }
                }
            }
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        let mut rng = seeded(0);
        assert!(ideal_loss_mc(6, 2, &gauss(1.0), &gauss(0.0), 999, &mut rng).is_err());
    }
}
