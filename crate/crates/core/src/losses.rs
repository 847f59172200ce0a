//! Contrastive loss kernels and the batch aggregation rule.
//!
//! Every kernel scores a query embedding `z_p` against a target `z_S` and a
//! set of denominator partners, computing `-log softmax` in log-space with
//! the maximum logit subtracted. The kernels differ only in which partners
//! enter the denominator:
//!
//! | kind            | denominator partners of `z_p`            |
//! |-----------------|------------------------------------------|
//! | SINCERE         | `S` and noise `N`                        |
//! | SupCon          | `S`, the other positives `P \ {p}`, `N`  |
//! | ε-SupInfoNCE    | `S` with logit lowered by `ε`, and `N`   |
//! | InfoNCE         | the single augmented partner and `N`     |

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{partition_for_anchor, IndexPartition, LabelVector, Rows, SimilarityMatrix, Temperature};
use crate::math::{compensated_sum, dot, exp, log_add_exp, log_sum_exp};

/// Which contrastive objective to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum LossKind {
    /// Self-supervised instance discrimination; every anchor must have exactly one partner.
    #[cfg_attr(feature = "serde", serde(rename = "infonce"))]
    InfoNce,
    #[cfg_attr(feature = "serde", serde(rename = "supcon"))]
    SupCon,
    Sincere,
    #[cfg_attr(feature = "serde", serde(rename = "eps_supinfonce"))]
    EpsSupInfoNce { epsilon: f64 },
}

impl LossKind {
    pub fn eps_sup_info_nce(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(LossKind::EpsSupInfoNce { epsilon })
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::InfoNce => "infonce",
            LossKind::SupCon => "supcon",
            LossKind::Sincere => "sincere",
            LossKind::EpsSupInfoNce { .. } => "eps_supinfonce",
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match *self {
            LossKind::EpsSupInfoNce { epsilon } => check_epsilon(epsilon),
            _ => Ok(()),
        }
    }
}

/// Margin values searched for ε-SupInfoNCE.
pub const EPSILON_GRID: [f64; 3] = [0.1, 0.25, 0.5];

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon >= 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("epsilon", format!("{epsilon} must be finite and >= 0")))
    }
}

/// `log(sum exp(denominator)) - numerator`.
fn neg_log_softmax(numerator: f64, denominator: &[f64]) -> f64 {
    log_sum_exp(denominator.iter().copied()) - numerator
}

/// SINCERE loss for the pair `(S, p)`: only `S` and the noise set compete with `z_p`.
pub fn sincere_pair_loss(
    sim: &SimilarityMatrix,
    part: &IndexPartition,
    p: usize,
    tau: Temperature,
) -> Result<f64> {
    eps_supinfonce_pair_loss(sim, part, p, tau, 0.0)
}

/// SupCon loss for the pair `(S, p)`: the other positives also sit in the denominator.
pub fn supcon_pair_loss(
    sim: &SimilarityMatrix,
    part: &IndexPartition,
    p: usize,
    tau: Temperature,
) -> Result<f64> {
    part.require_positive(p)?;
    part.require_noise()?;
    let t = tau.get();
    let target = sim.get(part.anchor(), p) / t;
    let mut logits = Vec::with_capacity(part.universe() - 1);
    logits.push(target);
    logits.extend(
        part.positives()
            .iter()
            .filter(|&&j| j != p)
            .map(|&j| sim.get(j, p) / t),
    );
    logits.extend(part.noise().iter().map(|&n| sim.get(n, p) / t));
    Ok(neg_log_softmax(target, &logits))
}

/// ε-SupInfoNCE pair loss. `epsilon = 0` reproduces [`sincere_pair_loss`] exactly.
///
/// No sign constraint holds for `epsilon > 0`; the value is returned as computed.
pub fn eps_supinfonce_pair_loss(
    sim: &SimilarityMatrix,
    part: &IndexPartition,
    p: usize,
    tau: Temperature,
    epsilon: f64,
) -> Result<f64> {
    check_epsilon(epsilon)?;
    part.require_positive(p)?;
    part.require_noise()?;
    let t = tau.get();
    let target = sim.get(part.anchor(), p) / t;
    let mut logits = Vec::with_capacity(part.noise().len() + 1);
    logits.push(target - epsilon);
    logits.extend(part.noise().iter().map(|&n| sim.get(n, p) / t));
    Ok(neg_log_softmax(target, &logits))
}

/// Self-supervised loss for one augmented anchor.
///
/// `sim_row` holds the similarities of the query view to every batch member;
/// `target` is its augmented partner.
pub fn info_nce_loss(sim_row: &[f64], target: usize, noise: &[usize], tau: Temperature) -> Result<f64> {
    let len = sim_row.len();
    if target >= len {
        return Err(Error::IndexOutOfRange { index: target, len });
    }
    if let Some(&bad) = noise.iter().find(|&&n| n >= len) {
        return Err(Error::IndexOutOfRange { index: bad, len });
    }
    if noise.contains(&target) {
        return Err(Error::invalid("noise", format!("target {target} also listed as noise")));
    }
    if noise.is_empty() {
        return Err(Error::EmptyNoise { anchor: target });
    }
    let t = tau.get();
    let s = sim_row[target] / t;
    let mut logits = Vec::with_capacity(noise.len() + 1);
    logits.push(s - 0.0);
    logits.extend(noise.iter().map(|&n| sim_row[n] / t));
    Ok(neg_log_softmax(s, &logits))
}

/// Single-pair dispatch on [`LossKind`].
pub fn pair_loss(
    kind: LossKind,
    sim: &SimilarityMatrix,
    part: &IndexPartition,
    p: usize,
    tau: Temperature,
) -> Result<f64> {
    match kind {
        LossKind::Sincere => sincere_pair_loss(sim, part, p, tau),
        LossKind::SupCon => supcon_pair_loss(sim, part, p, tau),
        LossKind::EpsSupInfoNce { epsilon } => eps_supinfonce_pair_loss(sim, part, p, tau, epsilon),
        LossKind::InfoNce => {
            if part.positives().len() != 1 {
                return Err(Error::NotInstancePaired {
                    anchor: part.anchor(),
                    positives: part.positives().len(),
                });
            }
            part.require_positive(p)?;
            info_nce_loss(sim.row(p), part.anchor(), part.noise(), tau)
        }
    }
}

/// What to do with anchors that have no same-class partner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Aggregation {
    /// Raise [`Error::EmptyPositives`].
    #[default]
    Strict,
    /// Skip the anchor and report it in [`LossReport::skipped_anchors`].
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairLoss {
    pub anchor: usize,
    pub positive: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossReport {
    pub kind: LossKind,
    /// Ordered by anchor, then positive.
    pub pair_losses: Vec<PairLoss>,
    pub batch_loss: f64,
    pub skipped_anchors: Vec<usize>,
}

/// Per-batch quantities shared by the loss and its gradient.
///
/// Pair `(S, p)` is scored from the query row `p`, and every logit is
/// `l_j = z_j · z_p / τ`. Per row we keep the log-sum-exp of the noise logits
/// and, for SupCon, of every logit except `p` itself, which makes each
/// pair loss O(1) once the rows are summarised.
pub(crate) struct BatchTerms {
    pub n: usize,
    pub tau: f64,
    pub kind: LossKind,
    pub logits: Vec<f64>,
    pub class_of: Vec<usize>,
    pub members: Vec<Vec<usize>>,
    pub lse_noise: Vec<f64>,
    pub lse_all: Vec<f64>,
    /// Number of anchors contributing to the mean.
    pub active: usize,
    pub skipped: Vec<usize>,
}

impl BatchTerms {
    pub fn new(
        kind: LossKind,
        rows: Rows<'_>,
        labels: &LabelVector,
        tau: Temperature,
        aggregation: Aggregation,
    ) -> Result<Self> {
        kind.validate()?;
        let n = rows.n();
        if labels.len() != n {
            return Err(Error::Shape {
                expected: format!("{n} labels"),
                found: format!("{}", labels.len()),
            });
        }
        if n < 2 {
            return Err(Error::invalid("batch", "needs at least two embeddings"));
        }
        let classes = labels.classes();
        if classes.len() < 2 {
            return Err(Error::EmptyNoise { anchor: 0 });
        }
        let class_of: Vec<usize> = labels
            .as_slice()
            .iter()
            .map(|y| classes.binary_search(y).unwrap_or(0))
            .collect();
        let mut members = alloc::vec![Vec::new(); classes.len()];
        for (i, &c) in class_of.iter().enumerate() {
            members[c].push(i);
        }

        let mut skipped = Vec::new();
        for (i, &c) in class_of.iter().enumerate() {
            let partners = members[c].len() - 1;
            if let LossKind::InfoNce = kind {
                if partners != 1 {
                    return Err(Error::NotInstancePaired { anchor: i, positives: partners });
                }
            }
            if partners == 0 {
                match aggregation {
                    Aggregation::Strict => return Err(Error::EmptyPositives { anchor: i }),
                    Aggregation::Lenient => skipped.push(i),
                }
            }
        }
        let active = n - skipped.len();
        if active == 0 {
            return Err(Error::EmptyPositives { anchor: 0 });
        }

        let t = tau.get();
        let mut logits = alloc::vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let l = dot(rows.row(i), rows.row(j)) / t;
                logits[i * n + j] = l;
                logits[j * n + i] = l;
            }
        }
        let mut lse_noise = alloc::vec![0.0; n];
        let mut lse_all = alloc::vec![0.0; n];
        for p in 0..n {
            let row = &logits[p * n..(p + 1) * n];
            let cp = class_of[p];
            lse_noise[p] = log_sum_exp(
                row.iter()
                    .zip(&class_of)
                    .filter(move |(_, &c)| c != cp)
                    .map(|(&l, _)| l),
            );
            if let LossKind::SupCon = kind {
                lse_all[p] = log_sum_exp(
                    row.iter().enumerate().filter(move |(j, _)| *j != p).map(|(_, &l)| l),
                );
            }
        }
        Ok(Self {
            n,
            tau: t,
            kind,
            logits,
            class_of,
            members,
            lse_noise,
            lse_all,
            active,
            skipped,
        })
    }

    #[inline]
    pub fn logit(&self, j: usize, p: usize) -> f64 {
        self.logits[p * self.n + j]
    }

    /// Other members of `p`'s class.
    pub fn partners(&self, p: usize) -> impl Iterator<Item = usize> + '_ {
        self.members[self.class_of[p]].iter().copied().filter(move |&j| j != p)
    }

    pub fn partner_count(&self, p: usize) -> usize {
        self.members[self.class_of[p]].len() - 1
    }

    /// Weight `1 / (N |P_S|)` for every pair whose anchor shares `p`'s class.
    pub fn pair_weight(&self, p: usize) -> f64 {
        1.0 / (self.active as f64 * self.partner_count(p) as f64)
    }

    /// Log of the denominator of pair `(s, p)`.
    pub fn log_denominator(&self, s: usize, p: usize) -> f64 {
        let a = self.logit(s, p);
        match self.kind {
            LossKind::SupCon => self.lse_all[p],
            LossKind::EpsSupInfoNce { epsilon } => log_add_exp(a - epsilon, self.lse_noise[p]),
            LossKind::Sincere | LossKind::InfoNce => log_add_exp(a, self.lse_noise[p]),
        }
    }

    pub fn pair_loss(&self, s: usize, p: usize) -> f64 {
        self.log_denominator(s, p) - self.logit(s, p)
    }

    pub fn max_logit(&self) -> f64 {
        self.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn report(&self) -> LossReport {
        let mut pair_losses = Vec::new();
        let mut total = 0.0;
        for s in 0..self.n {
            let k = self.partner_count(s);
            if k == 0 {
                continue;
            }
            let mut anchor_sum = 0.0;
            for p in self.partners(s) {
                let loss = self.pair_loss(s, p);
                anchor_sum += loss;
                pair_losses.push(PairLoss { anchor: s, positive: p, loss });
            }
            total += anchor_sum / k as f64;
        }
        LossReport {
            kind: self.kind,
            pair_losses,
            batch_loss: total / self.active as f64,
            skipped_anchors: self.skipped.clone(),
        }
    }
}

/// Batch objective `Σ_S 1/(N |P_S|) Σ_{p ∈ P_S} L(S, p)` over raw rows.
///
/// Rows are not required to be unit-norm so the objective can be
/// differentiated coordinate-wise; pass `z.rows()` for an [`crate::EmbeddingMatrix`].
pub fn batch_loss(
    kind: LossKind,
    rows: Rows<'_>,
    labels: &LabelVector,
    tau: Temperature,
    aggregation: Aggregation,
) -> Result<LossReport> {
    Ok(BatchTerms::new(kind, rows, labels, tau, aggregation)?.report())
}

/// Per-anchor pair losses computed by the direct kernels rather than the batch summary.
pub fn batch_loss_by_pairs(
    kind: LossKind,
    sim: &SimilarityMatrix,
    labels: &LabelVector,
    tau: Temperature,
) -> Result<f64> {
    let n = sim.n();
    let mut total = 0.0;
    for s in 0..n {
        let part = partition_for_anchor(labels, s)?;
        if part.positives().is_empty() {
            return Err(Error::EmptyPositives { anchor: s });
        }
        let mut acc = 0.0;
        for &p in part.positives() {
            acc += pair_loss(kind, sim, &part, p, tau)?;
        }
        total += acc / part.positives().len() as f64;
    }
    Ok(total / n as f64)
}

/// Values of the SupCon pseudo-probability `r_S / (r_S + Σ_{P\{p}} r_j + Σ_N r_n)` for
/// every candidate `S ∉ P`, and their sum.
///
/// The sum is 1 when `|P| = 1` and strictly below 1 otherwise.
pub fn supcon_pseudo_probability_sum(
    ratios: &[f64],
    positives: &[usize],
    p: usize,
) -> Result<(Vec<(usize, f64)>, f64)> {
    let n = ratios.len();
    if let Some((i, &r)) = ratios.iter().enumerate().find(|(_, &r)| !(r > 0.0 && r.is_finite())) {
        return Err(Error::invalid("ratios", format!("entry {i} = {r} must be positive and finite")));
    }
    if let Some(&bad) = positives.iter().find(|&&j| j >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    if !positives.contains(&p) {
        return Err(Error::invalid("p", format!("{p} is not in the positive set")));
    }
    let mut values = Vec::new();
    for s in (0..n).filter(|s| !positives.contains(s)) {
        let other_positives: f64 = positives.iter().filter(|&&j| j != p).map(|&j| ratios[j]).sum();
        let noise: f64 = (0..n)
            .filter(|&i| i != s && !positives.contains(&i))
            .map(|i| ratios[i])
            .sum();
        values.push((s, ratios[s] / (ratios[s] + other_positives + noise)));
    }
    let sum = compensated_sum(values.iter().map(|(_, v)| *v));
    Ok((values, sum))
}

/// Softmax weights of `logits`.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits.iter().copied());
    logits.iter().map(|&l| exp(l - lse)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{renormalize_rows, EmbeddingMatrix};
    use crate::math::{abs, ln};
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tau(t: f64) -> Temperature {
        Temperature::new(t).unwrap()
    }

    fn constant_sim(n: usize, c: f64) -> SimilarityMatrix {
        let mut v = vec![c; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        SimilarityMatrix::from_values(n, v).unwrap()
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmbeddingMatrix {
        let raw = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        renormalize_rows(n, d, raw).unwrap()
    }

    #[test]
    fn sincere_equal_similarities_is_log_four() {
        // anchor 0, positive 1, three noise
        let sim = constant_sim(5, 0.3);
        let part = IndexPartition::new(5, 0, vec![1]).unwrap();
        let l = sincere_pair_loss(&sim, &part, 1, tau(0.1)).unwrap();
        assert!(abs(l - ln(4.0)) < 1e-14);
    }

    #[test]
    fn sincere_hand_evaluated_case() {
        // s(S,p) = 1, s(n,p) = -1, tau = 0.5, two noise terms
        let mut v = vec![-1.0; 16];
        for i in 0..4 {
            v[i * 4 + i] = 1.0;
        }
        v[1] = 1.0;
        v[4] = 1.0;
        let sim = SimilarityMatrix::from_values(4, v).unwrap();
        let part = IndexPartition::new(4, 0, vec![1]).unwrap();
        let l = sincere_pair_loss(&sim, &part, 1, tau(0.5)).unwrap();
        // -log(e^2 / (e^2 + 2 e^-2)) = log(1 + 2 e^-4)
        // independent scalar evaluation: python math.log(1 + 2 * math.exp(-4))
        let expected = 0.035_976_299_748_193_24;
        assert!(abs(l - expected) < 1e-15);
    }

    #[test]
    fn supcon_equal_similarities_is_log_four() {
        // |P| = 2, |N| = 2: denominator has S, one other positive and two noise terms
        let sim = constant_sim(5, -0.2);
        let part = IndexPartition::new(5, 0, vec![1, 2]).unwrap();
        let l = supcon_pair_loss(&sim, &part, 1, tau(0.2)).unwrap();
        assert!(abs(l - ln(4.0)) < 1e-14);
    }

    #[test]
    fn single_positive_kernels_coincide_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let z = random_batch(&mut rng, 6, 3);
            let sim = z.similarity();
            let part = IndexPartition::new(6, 2, vec![4]).unwrap();
            let t = tau(rng.random_range(0.05..1.0));
            let a = sincere_pair_loss(&sim, &part, 4, t).unwrap();
            let b = supcon_pair_loss(&sim, &part, 4, t).unwrap();
            let c = eps_supinfonce_pair_loss(&sim, &part, 4, t, 0.0).unwrap();
            let d = info_nce_loss(sim.row(4), 2, part.noise(), t).unwrap();
            assert_eq!(a, b);
            assert_eq!(a, c);
            assert_eq!(a, d);
        }
    }

    #[test]
    fn supcon_dominates_sincere_on_random_batches() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let n = rng.random_range(5..12);
            let z = random_batch(&mut rng, n, 4);
            let sim = z.similarity();
            let k = rng.random_range(2..n - 1);
            let positives: Vec<usize> = (1..=k).collect();
            let part = IndexPartition::new(n, 0, positives).unwrap();
            let t = tau(rng.random_range(0.05..1.0));
            for &p in part.positives() {
                let sup = supcon_pair_loss(&sim, &part, p, t).unwrap();
                let sin = sincere_pair_loss(&sim, &part, p, t).unwrap();
                assert!(sup > sin, "{sup} <= {sin}");
                assert!(sin > 0.0);
            }
        }
    }

    #[test]
    fn info_nce_examples() {
        let row = [0.5, 0.5, 0.5, 0.5];
        let l = info_nce_loss(&row, 0, &[1, 2, 3], tau(0.3)).unwrap();
        assert!(abs(l - ln(4.0)) < 1e-14);

        let mut prev = f64::INFINITY;
        for k in 0..50 {
            let s_t = -1.0 + 0.04 * k as f64;
            let row = [s_t, 0.1, -0.3, 0.2];
            let l = info_nce_loss(&row, 0, &[1, 2, 3], tau(0.2)).unwrap();
            let closed = ln(1.0 + [0.1f64, -0.3, 0.2].iter().map(|s| exp((s - s_t) / 0.2)).sum::<f64>());
            assert!(abs(l - closed) < 1e-12);
            assert!(l < prev);
            prev = l;
        }
        assert!(matches!(info_nce_loss(&row, 0, &[], tau(0.2)), Err(Error::EmptyNoise { .. })));
        assert!(info_nce_loss(&row, 1, &[1, 2], tau(0.2)).is_err());
    }

    #[test]
    fn eps_supinfonce_hand_evaluated_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z = random_batch(&mut rng, 5, 3);
        let sim = z.similarity();
        let part = IndexPartition::new(5, 0, vec![1, 2]).unwrap();
        let t = 0.3;
        let a = sim.get(0, 1) / t;
        let noise: f64 = [3usize, 4].iter().map(|&n| exp(sim.get(n, 1) / t)).sum();
        let expected = -ln(exp(a) / (exp(a - 0.25) + noise));
        let got = eps_supinfonce_pair_loss(&sim, &part, 1, tau(t), 0.25).unwrap();
        assert!(abs(got - expected) < 1e-13);

        let mut prev = f64::INFINITY;
        for e in [0.0, 0.1, 0.25, 0.5, 1.0, 5.0] {
            let l = eps_supinfonce_pair_loss(&sim, &part, 1, tau(t), e).unwrap();
            assert!(l <= prev);
            prev = l;
        }
        assert!(eps_supinfonce_pair_loss(&sim, &part, 1, tau(t), -0.1).is_err());
    }

    #[test]
    fn kernels_reject_empty_noise_and_bad_positive() {
        let sim = constant_sim(3, 0.0);
        let part = IndexPartition::new(3, 0, vec![1, 2]).unwrap();
        assert_eq!(
            sincere_pair_loss(&sim, &part, 1, tau(0.1)),
            Err(Error::EmptyNoise { anchor: 0 })
        );
        let part = IndexPartition::new(3, 0, vec![1]).unwrap();
        assert!(supcon_pair_loss(&sim, &part, 2, tau(0.1)).is_err());
    }

    #[test]
    fn two_by_two_batch_is_log_three() {
        let sim = constant_sim(4, 0.0);
        let z = EmbeddingMatrix::from_rows(&[
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert_eq!(z.similarity(), sim);
        let labels = LabelVector::new(vec![1, 1, 2, 2]);
        for kind in [LossKind::Sincere, LossKind::SupCon, LossKind::EpsSupInfoNce { epsilon: 0.0 }] {
            let r = batch_loss(kind, z.rows(), &labels, tau(0.5), Aggregation::Strict).unwrap();
            assert!(abs(r.batch_loss - ln(3.0)) < 1e-14);
            assert_eq!(r.pair_losses.len(), 4);
        }
    }

    #[test]
    fn batch_summary_matches_direct_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let n = 12;
            let z = random_batch(&mut rng, n, 4);
            let labels = LabelVector::new((0..n).map(|_| rng.random_range(0..3)).collect());
            if labels.as_slice().iter().any(|&y| labels.as_slice().iter().filter(|&&x| x == y).count() < 2)
                || labels.classes().len() < 2
            {
                continue;
            }
            let t = tau(rng.random_range(0.05..0.5));
            for kind in [LossKind::Sincere, LossKind::SupCon, LossKind::EpsSupInfoNce { epsilon: 0.25 }] {
                let fast = batch_loss(kind, z.rows(), &labels, t, Aggregation::Strict).unwrap();
                let slow = batch_loss_by_pairs(kind, &z.similarity(), &labels, t).unwrap();
                assert!(abs(fast.batch_loss - slow) < 1e-12, "{kind:?}");
                for pl in &fast.pair_losses {
                    let part = partition_for_anchor(&labels, pl.anchor).unwrap();
                    let direct = pair_loss(kind, &z.similarity(), &part, pl.positive, t).unwrap();
                    assert!(abs(direct - pl.loss) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn info_nce_batch_is_mean_of_anchor_losses() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = random_batch(&mut rng, 8, 5);
        let labels = LabelVector::new(vec![0, 0, 1, 1, 2, 2, 3, 3]);
        let t = tau(0.2);
        let r = batch_loss(LossKind::InfoNce, z.rows(), &labels, t, Aggregation::Strict).unwrap();
        let sim = z.similarity();
        let mut mean = 0.0;
        for s in 0..8 {
            let part = partition_for_anchor(&labels, s).unwrap();
            let p = part.positives()[0];
            mean += info_nce_loss(sim.row(p), s, part.noise(), t).unwrap() / 8.0;
        }
        assert!(abs(r.batch_loss - mean) < 1e-12);

        let bad = LabelVector::new(vec![0, 0, 0, 1, 2, 2, 3, 3]);
        assert!(matches!(
            batch_loss(LossKind::InfoNce, z.rows(), &bad, t, Aggregation::Strict),
            Err(Error::NotInstancePaired { .. })
        ));
    }

    #[test]
    fn aggregation_modes() {
        let z = EmbeddingMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]]).unwrap();
        let labels = LabelVector::new(vec![1, 1, 2]);
        assert_eq!(
            batch_loss(LossKind::Sincere, z.rows(), &labels, tau(0.1), Aggregation::Strict).unwrap_err(),
            Error::EmptyPositives { anchor: 2 }
        );
        let r = batch_loss(LossKind::Sincere, z.rows(), &labels, tau(0.1), Aggregation::Lenient).unwrap();
        assert_eq!(r.skipped_anchors, vec![2]);
        assert_eq!(r.pair_losses.len(), 2);
        let same = LabelVector::new(vec![1, 1, 1]);
        assert!(matches!(
            batch_loss(LossKind::Sincere, z.rows(), &same, tau(0.1), Aggregation::Lenient),
            Err(Error::EmptyNoise { .. })
        ));
    }

    #[test]
    fn pseudo_probability_examples() {
        let (vals, sum) = supcon_pseudo_probability_sum(&[0.5, 2.0, 1.0, 3.0], &[1], 1).unwrap();
        assert_eq!(vals.len(), 3);
        assert!(abs(sum - 1.0) < 1e-15);

        // |P| = 2, |N| = 2 plus S: five candidates, equal ratios
        let (_, sum) = supcon_pseudo_probability_sum(&[1.0; 5], &[0, 1], 0).unwrap();
        assert_eq!(sum, 0.75);
        assert!(supcon_pseudo_probability_sum(&[1.0, 0.0, 1.0], &[0], 0).is_err());
        assert!(supcon_pseudo_probability_sum(&[1.0, 1.0, 1.0], &[0], 2).is_err());
    }

    #[test]
    fn pseudo_probability_equal_ratio_formula() {
        for n_pos in 1..6usize {
            for n_noise in 1..6usize {
                let n = n_pos + n_noise + 1;
                let positives: Vec<usize> = (0..n_pos).collect();
                let (_, sum) = supcon_pseudo_probability_sum(&vec![2.5; n], &positives, 0).unwrap();
                let expected = (1 + n_noise) as f64 / (n_pos + n_noise) as f64;
                assert!(abs(sum - expected) < 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn pseudo_probability_below_one_and_scale_free(
            ratios in proptest::collection::vec(1e-3f64..1e3, 4..10),
            n_pos in 1usize..3,
            c in 1e-3f64..1e3,
        ) {
            let positives: Vec<usize> = (0..n_pos).collect();
            let (vals, sum) = supcon_pseudo_probability_sum(&ratios, &positives, 0).unwrap();
            if n_pos == 1 {
                prop_assert!(abs(sum - 1.0) < 1e-12);
            } else {
                prop_assert!(sum < 1.0);
            }
            let scaled: Vec<f64> = ratios.iter().map(|r| r * c).collect();
            let (vals2, _) = supcon_pseudo_probability_sum(&scaled, &positives, 0).unwrap();
            for ((_, a), (_, b)) in vals.iter().zip(&vals2) {
                prop_assert!(abs(a - b) < 1e-12);
            }
        }

        #[test]
        fn batch_loss_invariant_to_permutation_and_relabeling(
            seed in 0u64..10_000,
            offset in 1u32..50,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 10;
            let z = random_batch(&mut rng, n, 3);
            let labels = LabelVector::new(vec![0, 0, 0, 1, 1, 2, 2, 2, 2, 1]);
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let relabeled = LabelVector::new(labels.as_slice().iter().map(|y| (2 - y) * 7 + offset).collect());
            let t = tau(0.15);
            for kind in [LossKind::Sincere, LossKind::SupCon, LossKind::EpsSupInfoNce { epsilon: 0.1 }] {
                let base = batch_loss(kind, z.rows(), &labels, t, Aggregation::Strict).unwrap().batch_loss;
                let zp = z.permuted(&perm);
                let permuted = batch_loss(kind, zp.rows(), &relabeled.permuted(&perm), t, Aggregation::Strict)
                    .unwrap()
                    .batch_loss;
                prop_assert!(abs(base - permuted) < 1e-12);
            }
        }
    }
}
