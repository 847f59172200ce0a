//! Target/noise generative models for the selection task, their closed-form
//! posteriors over the target index, and an exhaustive enumeration oracle.
//!
//! In the supervised model a set `P` of `T - 1` indices is drawn uniformly,
//! then `S` uniformly from the rest; `P ∪ {S}` are drawn from the target
//! density and everything else i.i.d. from the noise density. Given `X` and
//! `P`, the posterior over `S` is proportional to the density ratio
//! `p+(x_S) / p-(x_S)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math::{abs, exp, ln, ln_binomial, log_sum_exp};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A probability density (or mass function) over feature vectors.
///
/// Categorical observations are one-element vectors holding the symbol index.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "family", rename_all = "snake_case"))]
pub enum DensitySpec {
    IsotropicGaussian { mean: Vec<f64>, sigma: f64 },
    DiagonalGaussian { mean: Vec<f64>, sigmas: Vec<f64> },
    Categorical { pmf: Vec<f64> },
}

impl DensitySpec {
    pub fn gaussian_1d(mean: f64, sigma: f64) -> Self {
        DensitySpec::IsotropicGaussian { mean: vec![mean], sigma }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DensitySpec::IsotropicGaussian { mean, sigma } => {
                if mean.is_empty() || mean.iter().any(|m| !m.is_finite()) {
                    return Err(Error::invalid("mean", "must be a non-empty finite vector"));
                }
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::invalid("sigma", format!("{sigma} must be positive")));
                }
            }
            DensitySpec::DiagonalGaussian { mean, sigmas } => {
                if mean.is_empty() || mean.iter().any(|m| !m.is_finite()) {
                    return Err(Error::invalid("mean", "must be a non-empty finite vector"));
                }
                if sigmas.len() != mean.len() {
                    return Err(Error::Shape {
                        expected: format!("{} sigmas", mean.len()),
                        found: format!("{}", sigmas.len()),
                    });
                }
                if sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                    return Err(Error::invalid("sigmas", "every entry must be positive"));
                }
            }
            DensitySpec::Categorical { pmf } => {
                if pmf.is_empty() {
                    return Err(Error::invalid("pmf", "empty alphabet"));
                }
                if pmf.iter().any(|&q| !(q > 0.0 && q.is_finite())) {
                    return Err(Error::invalid("pmf", "every symbol needs positive mass"));
                }
                let total: f64 = pmf.iter().sum();
                if abs(total - 1.0) > 1e-12 {
                    return Err(Error::invalid("pmf", format!("sums to {total}, not 1")));
                }
            }
        }
        Ok(())
    }

    /// Length of an observation vector.
    pub fn dim(&self) -> usize {
        match self {
            DensitySpec::IsotropicGaussian { mean, .. } | DensitySpec::DiagonalGaussian { mean, .. } => mean.len(),
            DensitySpec::Categorical { .. } => 1,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, DensitySpec::Categorical { .. })
    }

    /// Log density at `x`; `-inf` outside the support.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        match self {
            DensitySpec::IsotropicGaussian { mean, sigma } => {
                if x.len() != mean.len() {
                    return f64::NEG_INFINITY;
                }
                let sq: f64 = x.iter().zip(mean).map(|(a, m)| (a - m) * (a - m)).sum();
                let d = mean.len() as f64;
                -0.5 * sq / (sigma * sigma) - d * ln(*sigma) - 0.5 * d * LN_2PI
            }
            DensitySpec::DiagonalGaussian { mean, sigmas } => {
                if x.len() != mean.len() {
                    return f64::NEG_INFINITY;
                }
                x.iter()
                    .zip(mean)
                    .zip(sigmas)
                    .map(|((a, m), s)| {
                        let z = (a - m) / s;
                        -0.5 * z * z - ln(*s) - 0.5 * LN_2PI
                    })
                    .sum()
            }
            DensitySpec::Categorical { pmf } => match symbol(x, pmf.len()) {
                Some(k) => ln(pmf[k]),
                None => f64::NEG_INFINITY,
            },
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            DensitySpec::IsotropicGaussian { mean, sigma } => mean
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + sigma * z
                })
                .collect(),
            DensitySpec::DiagonalGaussian { mean, sigmas } => mean
                .iter()
                .zip(sigmas)
                .map(|(m, s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + s * z
                })
                .collect(),
            DensitySpec::Categorical { pmf } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut k = pmf.len() - 1;
                for (i, q) in pmf.iter().enumerate() {
                    acc += q;
                    if u < acc {
                        k = i;
                        break;
                    }
                }
                vec![k as f64]
            }
        }
    }
}

fn symbol(x: &[f64], alphabet: usize) -> Option<usize> {
    match x {
        [v] if *v >= 0.0 && libm::trunc(*v) == *v && (*v as usize) < alphabet => Some(*v as usize),
        _ => None,
    }
}

/// Checks that two densities describe the same observation space.
pub fn check_compatible(target: &DensitySpec, noise: &DensitySpec) -> Result<()> {
    target.validate()?;
    noise.validate()?;
    let ok = match (target, noise) {
        (DensitySpec::Categorical { pmf: a }, DensitySpec::Categorical { pmf: b }) => a.len() == b.len(),
        (DensitySpec::Categorical { .. }, _) | (_, DensitySpec::Categorical { .. }) => false,
        _ => target.dim() == noise.dim(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Shape {
            expected: format!("matching observation spaces ({target:?})"),
            found: format!("{noise:?}"),
        })
    }
}

/// `log p+(x) - log p-(x)`, with the support condition enforced.
///
/// A point outside both supports gets ratio 0; a point inside the target
/// support where the noise density is zero is a [`Error::SupportViolation`].
pub fn log_ratio(target: &DensitySpec, noise: &DensitySpec, x: &[f64], index: usize) -> Result<f64> {
    let lp = target.log_density(x);
    let lq = noise.log_density(x);
    if lq == f64::NEG_INFINITY {
        if lp == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        return Err(Error::SupportViolation { index });
    }
    Ok(lp - lq)
}

/// One draw `(X, S, P)` from the generative model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSample {
    pub data: Vec<Vec<f64>>,
    pub anchor: usize,
    /// Sorted; empty in the self-supervised model.
    pub positives: Vec<usize>,
    /// Number of target draws `T = |P| + 1`.
    pub t: usize,
}

impl ModelSample {
    pub fn n(&self) -> usize {
        self.data.len()
    }

    /// Indices drawn from the noise density.
    pub fn noise(&self) -> Vec<usize> {
        (0..self.n())
            .filter(|i| *i != self.anchor && !self.positives.contains(i))
            .collect()
    }
}

/// Self-supervised model: `S ~ Unif(I)`, `x_S ~ p+`, all others `~ p-`.
pub fn sample_selfsup<R: Rng + ?Sized>(
    n: usize,
    target: &DensitySpec,
    noise: &DensitySpec,
    rng: &mut R,
) -> Result<ModelSample> {
    if n < 2 {
        return Err(Error::invalid("n", format!("{n} < 2")));
    }
    check_compatible(target, noise)?;
    let anchor = rng.random_range(0..n);
    let data = (0..n)
        .map(|i| if i == anchor { target.sample(rng) } else { noise.sample(rng) })
        .collect();
    Ok(ModelSample {
        data,
        anchor,
        positives: Vec::new(),
        t: 1,
    })
}

/// Supervised model with `t` target draws; `t = 1` is the self-supervised model.
pub fn sample_supervised<R: Rng + ?Sized>(
    n: usize,
    t: usize,
    target: &DensitySpec,
    noise: &DensitySpec,
    rng: &mut R,
) -> Result<ModelSample> {
    if t == 1 {
        return sample_selfsup(n, target, noise, rng);
    }
    if t < 2 || t >= n {
        return Err(Error::invalid("t", format!("need 1 <= t < n, got t = {t}, n = {n}")));
    }
    check_compatible(target, noise)?;
    let mut positives = rand::seq::index::sample(rng, n, t - 1).into_vec();
    positives.sort_unstable();
    let rest: Vec<usize> = (0..n).filter(|i| positives.binary_search(i).is_err()).collect();
    let anchor = rest[rng.random_range(0..rest.len())];
    let data = (0..n)
        .map(|i| {
            if i == anchor || positives.binary_search(&i).is_ok() {
                target.sample(rng)
            } else {
                noise.sample(rng)
            }
        })
        .collect();
    Ok(ModelSample {
        data,
        anchor,
        positives,
        t,
    })
}

/// Distribution over the target index `S` among candidates `I \ P`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorVector {
    /// `(candidate S, probability)`, in increasing index order.
    pub probabilities: Vec<(usize, f64)>,
}

impl PosteriorVector {
    pub fn get(&self, s: usize) -> Option<f64> {
        self.probabilities.iter().find(|(i, _)| *i == s).map(|(_, p)| *p)
    }

    pub fn sum(&self) -> f64 {
        self.probabilities.iter().map(|(_, p)| p).sum()
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Largest absolute difference over matching candidates (infinite if the candidate sets differ).
    pub fn max_abs_deviation(&self, other: &PosteriorVector) -> f64 {
        if self.probabilities.len() != other.probabilities.len() {
            return f64::INFINITY;
        }
        self.probabilities
            .iter()
            .zip(&other.probabilities)
            .map(|((i, a), (j, b))| if i == j { abs(a - b) } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }
}

fn check_positives(n: usize, positives: &[usize]) -> Result<()> {
    for (k, &p) in positives.iter().enumerate() {
        if p >= n {
            return Err(Error::IndexOutOfRange { index: p, len: n });
        }
        if positives[..k].contains(&p) {
            return Err(Error::invalid("positives", format!("index {p} repeated")));
        }
    }
    if positives.len() >= n {
        return Err(Error::invalid("positives", "no candidate index left for S"));
    }
    Ok(())
}

/// `p(S | X, P) ∝ p+(x_S) / p-(x_S)` over `S ∉ P`, evaluated in log-space.
pub fn posterior_supervised(
    data: &[Vec<f64>],
    positives: &[usize],
    target: &DensitySpec,
    noise: &DensitySpec,
) -> Result<PosteriorVector> {
    check_compatible(target, noise)?;
    check_positives(data.len(), positives)?;
    let mut log_r = Vec::with_capacity(data.len());
    for (i, x) in data.iter().enumerate() {
        if !positives.contains(&i) {
            log_r.push((i, log_ratio(target, noise, x, i)?));
        }
    }
    let norm = log_sum_exp(log_r.iter().map(|(_, l)| *l));
    if norm == f64::NEG_INFINITY {
        return Err(Error::invalid("data", "no candidate lies in the target support"));
    }
    Ok(PosteriorVector {
        probabilities: log_r.into_iter().map(|(i, l)| (i, exp(l - norm))).collect(),
    })
}

/// Self-supervised posterior `p(S | X) ∝ p+(x_S) / p-(x_S)` over all indices.
pub fn posterior_selfsup(data: &[Vec<f64>], target: &DensitySpec, noise: &DensitySpec) -> Result<PosteriorVector> {
    posterior_supervised(data, &[], target, noise)
}

/// Largest `n` accepted by [`brute_force_posterior`].
pub const ENUMERATION_LIMIT: usize = 12;

/// One `(S, P)` assignment and its posterior probability `p(S, P | X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointEntry {
    pub anchor: usize,
    pub positives: Vec<usize>,
    pub probability: f64,
}

/// Exhaustive posterior over every `(S, P)` assignment of the supervised model.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForcePosterior {
    pub n: usize,
    pub t: usize,
    pub joint: Vec<JointEntry>,
}

impl BruteForcePosterior {
    pub fn total(&self) -> f64 {
        self.joint.iter().map(|e| e.probability).sum()
    }

    /// `p(S | X, P)` obtained by conditioning the joint on `P`.
    pub fn conditional(&self, positives: &[usize]) -> Result<PosteriorVector> {
        let mut key = positives.to_vec();
        key.sort_unstable();
        let rows: Vec<&JointEntry> = self.joint.iter().filter(|e| e.positives == key).collect();
        if rows.is_empty() {
            return Err(Error::invalid(
                "positives",
                format!("expected a set of {} indices below {}", self.t - 1, self.n),
            ));
        }
        let z: f64 = rows.iter().map(|e| e.probability).sum();
        let mut probabilities: Vec<(usize, f64)> = rows.iter().map(|e| (e.anchor, e.probability / z)).collect();
        probabilities.sort_by_key(|(i, _)| *i);
        Ok(PosteriorVector { probabilities })
    }
}

/// Enumerates all `(S, P)` with `|P| = t - 1` and scores each with the full
/// generative joint `p(X | S, P) p(S | P) p(P)` (raw densities, no ratio
/// simplification), then normalises over all assignments.
pub fn brute_force_posterior(
    data: &[Vec<f64>],
    t: usize,
    target: &DensitySpec,
    noise: &DensitySpec,
) -> Result<BruteForcePosterior> {
    let n = data.len();
    if n > ENUMERATION_LIMIT {
        return Err(Error::TooLarge { n, limit: ENUMERATION_LIMIT });
    }
    if t < 1 || t >= n {
        return Err(Error::invalid("t", format!("need 1 <= t < n, got t = {t}, n = {n}")));
    }
    check_compatible(target, noise)?;
    let log_target: Vec<f64> = data.iter().map(|x| target.log_density(x)).collect();
    let log_noise: Vec<f64> = data.iter().map(|x| noise.log_density(x)).collect();
    let log_prior_p = -ln_binomial(n, t - 1);
    let log_prior_s = -ln((n - t + 1) as f64);

    let mut entries = Vec::new();
    let mut log_joint = Vec::new();
    for subset in combinations(n, t - 1) {
        for s in (0..n).filter(|i| !subset.contains(i)) {
            let mut lj = log_prior_p + log_prior_s;
            for i in 0..n {
                lj += if i == s || subset.contains(&i) { log_target[i] } else { log_noise[i] };
            }
            log_joint.push(lj);
            entries.push((s, subset.clone()));
        }
    }
    let z = log_sum_exp(log_joint.iter().copied());
    if z == f64::NEG_INFINITY {
        return Err(Error::invalid("data", "every assignment has zero probability"));
    }
    let joint = entries
        .into_iter()
        .zip(log_joint)
        .map(|((anchor, positives), lj)| JointEntry {
            anchor,
            positives,
            probability: exp(lj - z),
        })
        .collect();
    Ok(BruteForcePosterior { n, t, joint })
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(current.clone());
        // advance the rightmost index that can still move
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if current[i] < n - k + i {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        current[i] += 1;
        for j in i + 1..k {
            current[j] = current[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn gauss(m: f64) -> DensitySpec {
        DensitySpec::gaussian_1d(m, 1.0)
    }

    #[test]
    fn combinations_enumerate_binomial_counts() {
        assert_eq!(combinations(4, 0), vec![Vec::<usize>::new()]);
        assert_eq!(combinations(4, 2).len(), 6);
        assert_eq!(combinations(6, 3).len(), 20);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(combinations(5, 1).len(), 5);
    }

    #[test]
    fn density_validation() {
        assert!(DensitySpec::Categorical { pmf: vec![0.5, 0.5] }.validate().is_ok());
        assert!(DensitySpec::Categorical { pmf: vec![0.5, 0.4] }.validate().is_err());
        assert!(DensitySpec::Categorical { pmf: vec![1.0, 0.0] }.validate().is_err());
        assert!(DensitySpec::gaussian_1d(0.0, 0.0).validate().is_err());
        assert!(DensitySpec::DiagonalGaussian { mean: vec![0.0, 1.0], sigmas: vec![1.0] }
            .validate()
            .is_err());
        assert!(check_compatible(&gauss(0.0), &DensitySpec::Categorical { pmf: vec![1.0] }).is_err());
    }

    #[test]
    fn gaussian_log_density_matches_formula() {
        let g = gauss(1.0);
        let x = 0.3f64;
        let expected = -0.5 * (x - 1.0) * (x - 1.0) - 0.5 * ln(2.0 * core::f64::consts::PI);
        assert!(abs(g.log_density(&[x]) - expected) < 1e-14);
        let diag = DensitySpec::DiagonalGaussian { mean: vec![1.0, 0.0], sigmas: vec![1.0, 2.0] };
        let iso = DensitySpec::IsotropicGaussian { mean: vec![1.0, 0.0], sigma: 2.0 };
        let pt = [0.1, -0.7];
        let manual = g.log_density(&[0.1]) + DensitySpec::gaussian_1d(0.0, 2.0).log_density(&[-0.7]);
        assert!(abs(diag.log_density(&pt) - manual) < 1e-14);
        let diag2 = DensitySpec::DiagonalGaussian { mean: vec![1.0, 0.0], sigmas: vec![2.0, 2.0] };
        assert!(abs(iso.log_density(&pt) - diag2.log_density(&pt)) < 1e-14);
    }

    #[test]
    fn categorical_sampler_frequencies() {
        let c = DensitySpec::Categorical { pmf: vec![0.2, 0.5, 0.3] };
        let mut rng = seeded(1);
        let mut counts = [0usize; 3];
        for _ in 0..100_000 {
            counts[c.sample(&mut rng)[0] as usize] += 1;
        }
        for (k, q) in [0.2, 0.5, 0.3].iter().enumerate() {
            assert!(abs(counts[k] as f64 / 1e5 - q) < 0.01);
        }
        assert_eq!(c.log_density(&[1.5]), f64::NEG_INFINITY);
        assert_eq!(c.log_density(&[3.0]), f64::NEG_INFINITY);
    }

    /// Pearson chi-square statistic against a uniform expectation.
    fn chi_square(counts: &[usize]) -> f64 {
        let total: usize = counts.iter().sum();
        let e = total as f64 / counts.len() as f64;
        counts.iter().map(|&c| (c as f64 - e) * (c as f64 - e) / e).sum()
    }

    #[test]
    fn selfsup_anchor_is_uniform() {
        let mut rng = seeded(2);
        let n = 5;
        let mut counts = vec![0usize; n];
        for _ in 0..100_000 {
            let s = sample_selfsup(n, &gauss(1.0), &gauss(0.0), &mut rng).unwrap();
            assert!(s.positives.is_empty());
            assert_eq!(s.t, 1);
            counts[s.anchor] += 1;
        }
        // chi-square(4 dof) 0.99 quantile
        assert!(chi_square(&counts) < 13.277);

        let mut two = [0usize; 2];
        for _ in 0..100_000 {
            two[sample_selfsup(2, &gauss(1.0), &gauss(0.0), &mut rng).unwrap().anchor] += 1;
        }
        assert!(abs(two[0] as f64 / 1e5 - 0.5) < 0.01);
        assert!(sample_selfsup(1, &gauss(1.0), &gauss(0.0), &mut rng).is_err());
    }

    #[test]
    fn supervised_positive_sets_are_uniform() {
        let mut rng = seeded(3);
        let (n, t) = (5, 3);
        let subsets = combinations(n, t - 1);
        let mut counts = vec![0usize; subsets.len()];
        for _ in 0..100_000 {
            let s = sample_supervised(n, t, &gauss(1.0), &gauss(0.0), &mut rng).unwrap();
            assert_eq!(s.positives.len(), t - 1);
            assert!(!s.positives.contains(&s.anchor));
            counts[subsets.iter().position(|p| *p == s.positives).unwrap()] += 1;
        }
        // chi-square(9 dof) 0.99 quantile
        assert!(chi_square(&counts) < 21.666);
    }

    #[test]
    fn supervised_small_case_and_errors() {
        let mut rng = seeded(4);
        for _ in 0..1000 {
            let s = sample_supervised(4, 2, &gauss(1.0), &gauss(0.0), &mut rng).unwrap();
            assert_eq!(s.positives.len(), 1);
            assert_ne!(s.positives[0], s.anchor);
            assert_eq!(s.noise().len(), 2);
        }
        let s = sample_supervised(4, 1, &gauss(1.0), &gauss(0.0), &mut rng).unwrap();
        assert!(s.positives.is_empty());
        assert!(sample_supervised(4, 4, &gauss(1.0), &gauss(0.0), &mut rng).is_err());
        assert!(sample_supervised(4, 0, &gauss(1.0), &gauss(0.0), &mut rng).is_err());
    }

    #[test]
    fn posterior_from_hand_ratios() {
        // target pmf / noise pmf gives ratios 2, 1, 1 on symbols 0, 1, 2
        let target = DensitySpec::Categorical { pmf: vec![0.5, 0.25, 0.25] };
        let noise = DensitySpec::Categorical { pmf: vec![0.25, 0.25, 0.5] };
        let data = vec![vec![0.0], vec![1.0], vec![1.0], vec![2.0]];
        // index 3 is a positive; candidates 0, 1, 2 have ratios 2, 1, 1
        let post = posterior_supervised(&data, &[3], &target, &noise).unwrap();
        assert_eq!(post.probabilities, vec![(0, 0.5), (1, 0.25), (2, 0.25)]);
        let brute = brute_force_posterior(&data, 2, &target, &noise).unwrap();
        assert!(post.max_abs_deviation(&brute.conditional(&[3]).unwrap()) < 1e-12);

        // self-supervised: ratios 3 and 1
        let target = DensitySpec::Categorical { pmf: vec![0.6, 0.4] };
        let noise = DensitySpec::Categorical { pmf: vec![0.2, 0.4, 0.4] };
        assert!(posterior_selfsup(&[vec![0.0]], &target, &noise).is_err());
        let target = DensitySpec::Categorical { pmf: vec![0.6, 0.2, 0.2] };
        let post = posterior_selfsup(&[vec![0.0], vec![1.0]], &target, &DensitySpec::Categorical {
            pmf: vec![0.2, 0.2, 0.6],
        })
        .unwrap();
        assert!(abs(post.get(0).unwrap() - 0.75) < 1e-12);
        assert!(abs(post.get(1).unwrap() - 0.25) < 1e-12);
    }

    #[test]
    fn identical_densities_give_uniform_posterior() {
        let mut rng = seeded(5);
        for _ in 0..50 {
            let s = sample_supervised(7, 3, &gauss(0.0), &gauss(0.0), &mut rng).unwrap();
            let post = posterior_supervised(&s.data, &s.positives, &gauss(0.0), &gauss(0.0)).unwrap();
            for (_, p) in &post.probabilities {
                assert!(abs(p - 0.2) < 1e-15);
            }
        }
    }

    #[test]
    fn selfsup_posterior_is_empty_positive_case() {
        let mut rng = seeded(6);
        let s = sample_selfsup(6, &gauss(1.0), &gauss(0.0), &mut rng).unwrap();
        let a = posterior_selfsup(&s.data, &gauss(1.0), &gauss(0.0)).unwrap();
        let b = posterior_supervised(&s.data, &[], &gauss(1.0), &gauss(0.0)).unwrap();
        assert_eq!(a, b);
        let brute = brute_force_posterior(&s.data, 1, &gauss(1.0), &gauss(0.0)).unwrap();
        assert!(a.max_abs_deviation(&brute.conditional(&[]).unwrap()) < 1e-12);
    }

    #[test]
    fn posterior_invariant_to_shared_log_density_shift() {
        let mut rng = seeded(7);
        let (target, noise) = (gauss(1.0), gauss(0.0));
        for _ in 0..20 {
            let s = sample_supervised(6, 2, &target, &noise, &mut rng).unwrap();
            let post = posterior_supervised(&s.data, &s.positives, &target, &noise).unwrap();
            for shift in [-300.0, 0.5, 250.0] {
                let logs: Vec<(usize, f64)> = s
                    .noise()
                    .into_iter()
                    .chain(core::iter::once(s.anchor))
                    .map(|i| (i, (target.log_density(&s.data[i]) + shift) - (noise.log_density(&s.data[i]) + shift)))
                    .collect();
                let z = log_sum_exp(logs.iter().map(|(_, l)| *l));
                for (i, l) in logs {
                    assert!(abs(post.get(i).unwrap() - exp(l - z)) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn support_violation_is_reported() {
        let target = DensitySpec::Categorical { pmf: vec![0.5, 0.5] };
        let noise = DensitySpec::Categorical { pmf: vec![0.5, 0.5] };
        // a symbol outside both supports gets ratio 0
        let data = vec![vec![0.0], vec![7.0], vec![1.0]];
        let post = posterior_selfsup(&data, &target, &noise).unwrap();
        assert_eq!(post.get(1), Some(0.0));
        // underflowing noise density with finite target density
        let target = DensitySpec::gaussian_1d(0.0, 100.0);
        let noise = DensitySpec::gaussian_1d(0.0, 1e-3);
        let data = vec![vec![0.0], vec![50.0]];
        let lq = noise.log_density(&[50.0]);
        assert!(lq.is_finite());
        // log-space keeps this finite; only a true -inf triggers the error
        assert!(posterior_selfsup(&data, &target, &noise).is_ok());
        assert_eq!(
            log_ratio(
                &DensitySpec::Categorical { pmf: vec![0.5, 0.5] },
                &DensitySpec::Categorical { pmf: vec![1.0] },
                &[1.0],
                4
            ),
            Err(Error::SupportViolation { index: 4 })
        );
    }

    #[test]
    fn brute_force_joint_is_normalised_and_matches_closed_form() {
        let mut rng = seeded(8);
        for n in 3..=8 {
            for t in 1..n {
                let target = DensitySpec::IsotropicGaussian { mean: vec![0.7, -0.2], sigma: 0.8 };
                let noise = DensitySpec::DiagonalGaussian { mean: vec![0.0, 0.3], sigmas: vec![1.0, 1.3] };
                let s = sample_supervised(n, t, &target, &noise, &mut rng).unwrap();
                let brute = brute_force_posterior(&s.data, t, &target, &noise).unwrap();
                assert!(abs(brute.total() - 1.0) < 1e-12);
                let closed = posterior_supervised(&s.data, &s.positives, &target, &noise).unwrap();
                let oracle = brute.conditional(&s.positives).unwrap();
                assert!(closed.max_abs_deviation(&oracle) < 1e-12, "n={n} t={t}");
                assert!(abs(closed.sum() - 1.0) < 1e-12);
            }
        }
    }

    #[test]
    fn brute_force_guards() {
        let data = vec![vec![0.0]; 13];
        assert_eq!(
            brute_force_posterior(&data, 2, &gauss(1.0), &gauss(0.0)),
            Err(Error::TooLarge { n: 13, limit: 12 })
        );
        let data = vec![vec![0.0]; 4];
        assert!(brute_force_posterior(&data, 4, &gauss(1.0), &gauss(0.0)).is_err());
        let b = brute_force_posterior(&data, 2, &gauss(1.0), &gauss(0.0)).unwrap();
        assert!(b.conditional(&[0, 1]).is_err());
    }

    #[test]
    fn true_anchor_identified_better_than_chance() {
        let mut rng = seeded(9);
        let (n, t) = (6, 2);
        let m = 20_000;
        let mut vals = Vec::with_capacity(m);
        for _ in 0..m {
            let s = sample_supervised(n, t, &gauss(1.0), &gauss(0.0), &mut rng).unwrap();
            let post = posterior_supervised(&s.data, &s.positives, &gauss(1.0), &gauss(0.0)).unwrap();
            vals.push(post.get(s.anchor).unwrap());
        }
        let mean = vals.iter().sum::<f64>() / m as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64;
        let se = libm::sqrt(var / m as f64);
        // one-sided 95% test against chance 1 / |I \ P|
        assert!(mean - 1.645 * se > 1.0 / 5.0, "mean {mean} se {se}");
    }
}
