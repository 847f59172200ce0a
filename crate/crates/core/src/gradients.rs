//! Analytic gradients of the contrastive losses with respect to raw
//! embedding coordinates, plus a central-difference oracle.
//!
//! The unit-norm constraint is not folded into any gradient here; training
//! projects rows back onto the sphere after each optimiser step.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{EmbeddingMatrix, IndexPartition, LabelVector, Rows, SimilarityMatrix, Temperature};
use crate::losses::{info_nce_loss, softmax, supcon_pair_loss, Aggregation, BatchTerms, LossKind};
use crate::math::{dot, exp, norm};

/// Softmax-derived factor attached to one attracted partner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attraction {
    pub partner: usize,
    /// Scalar multiplying `z_partner / τ` in the gradient, before any `1/|P|` averaging.
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairGradient {
    /// Index of the embedding differentiated against.
    pub wrt: usize,
    pub vector: Vec<f64>,
    /// Same-class partners, the principal one (`z_S`, or the first `z_p` on the anchor side) first.
    pub attraction: Vec<Attraction>,
    pub tau: f64,
}

impl PairGradient {
    /// Factor on the principal partner: `softmax[S] - 1` for SINCERE, `softmax[S] - 1/|P|` for SupCon.
    pub fn attraction_factor(&self) -> f64 {
        self.attraction[0].factor
    }

    /// The principal factor divided by `τ`, i.e. the actual coefficient on `z_S`.
    pub fn attraction_coefficient(&self) -> f64 {
        self.attraction_factor() / self.tau
    }
}

fn check_rows(rows: Rows<'_>, part: &IndexPartition) -> Result<()> {
    if rows.n() != part.universe() {
        return Err(Error::Shape {
            expected: alloc::format!("{} rows", part.universe()),
            found: alloc::format!("{}", rows.n()),
        });
    }
    Ok(())
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(y, v)| *y += a * v);
}

/// Gradient of `L_SINCERE(S, p)` with respect to `z_p`:
/// `(z_S/τ)(π_S - 1) + Σ_n (z_n/τ) π_n`, with `π` the softmax over `N ∪ {S}`.
pub fn sincere_grad_wrt_positive(
    rows: Rows<'_>,
    part: &IndexPartition,
    p: usize,
    tau: Temperature,
) -> Result<PairGradient> {
    check_rows(rows, part)?;
    part.require_positive(p)?;
    part.require_noise()?;
    let t = tau.get();
    let zp = rows.row(p);
    let s = part.anchor();
    let mut logits = Vec::with_capacity(part.noise().len() + 1);
    logits.push(dot(rows.row(s), zp) / t);
    logits.extend(part.noise().iter().map(|&n| dot(rows.row(n), zp) / t));
    let pi = softmax(&logits);

    // π_S - 1 summed from the noise side to avoid cancellation near saturation
    let factor = -pi[1..].iter().sum::<f64>();
    let mut vector = vec![0.0; rows.d()];
    axpy(&mut vector, factor / t, rows.row(s));
    for (&n, &w) in part.noise().iter().zip(&pi[1..]) {
        axpy(&mut vector, w / t, rows.row(n));
    }
    Ok(PairGradient {
        wrt: p,
        vector,
        attraction: vec![Attraction { partner: s, factor }],
        tau: t,
    })
}

/// SupCon gradient with respect to `z_p`, in the form
/// `Σ_{j ∈ T\{p}} (z_j/τ)(π_j - 1/|P|) + Σ_n (z_n/τ) π_n`, `π` the softmax over `I \ {p}`.
///
/// This is the derivative of [`supcon_positive_loss`], the SupCon loss of
/// query `p` averaged over its `|P|` same-class partners. The principal
/// attraction entry is the one for `z_S` and lies in `[-1/|P|, 1 - 1/|P|]`.
pub fn supcon_grad_wrt_positive(
    rows: Rows<'_>,
    part: &IndexPartition,
    p: usize,
    tau: Temperature,
) -> Result<PairGradient> {
    check_rows(rows, part)?;
    part.require_positive(p)?;
    part.require_noise()?;
    let t = tau.get();
    let zp = rows.row(p);
    let partners: Vec<usize> = part.targets().into_iter().filter(|&j| j != p).collect();
    let k = partners.len() as f64;
    let others: Vec<usize> = partners.iter().chain(part.noise()).copied().collect();
    let logits: Vec<f64> = others.iter().map(|&j| dot(rows.row(j), zp) / t).collect();
    let pi = softmax(&logits);

    let mut vector = vec![0.0; rows.d()];
    let mut attraction = Vec::with_capacity(partners.len());
    for (&j, &w) in partners.iter().zip(&pi) {
        let factor = w - 1.0 / k;
        axpy(&mut vector, factor / t, rows.row(j));
        attraction.push(Attraction { partner: j, factor });
    }
    for (&n, &w) in part.noise().iter().zip(&pi[partners.len()..]) {
        axpy(&mut vector, w / t, rows.row(n));
    }
    Ok(PairGradient {
        wrt: p,
        vector,
        attraction,
        tau: t,
    })
}

/// Gradient of [`sincere_anchor_loss`] with respect to the anchor `z_S`:
/// `1/(τ|P|) Σ_p [ z_p (π_p - 1) + Σ_n z_n π_n ]`, `π` the softmax of `z_S · z_i / τ` over `N ∪ {p}`.
pub fn sincere_grad_wrt_anchor(
    rows: Rows<'_>,
    part: &IndexPartition,
    tau: Temperature,
) -> Result<PairGradient> {
    check_rows(rows, part)?;
    part.require_noise()?;
    if part.positives().is_empty() {
        return Err(Error::EmptyPositives { anchor: part.anchor() });
    }
    let t = tau.get();
    let s = part.anchor();
    let zs = rows.row(s);
    let scale = 1.0 / (t * part.positives().len() as f64);
    let noise_logits: Vec<f64> = part.noise().iter().map(|&n| dot(rows.row(n), zs) / t).collect();

    let mut vector = vec![0.0; rows.d()];
    let mut attraction = Vec::with_capacity(part.positives().len());
    let mut logits = Vec::with_capacity(noise_logits.len() + 1);
    for &p in part.positives() {
        logits.clear();
        logits.push(dot(rows.row(p), zs) / t);
        logits.extend_from_slice(&noise_logits);
        let pi = softmax(&logits);
        let factor = -pi[1..].iter().sum::<f64>();
        axpy(&mut vector, scale * factor, rows.row(p));
        for (&n, &w) in part.noise().iter().zip(&pi[1..]) {
            axpy(&mut vector, scale * w, rows.row(n));
        }
        attraction.push(Attraction { partner: p, factor });
    }
    Ok(PairGradient {
        wrt: s,
        vector,
        attraction,
        tau: t,
    })
}

/// Anchor-side SINCERE objective: `1/|P| Σ_p -log softmax_{N ∪ {p}}(z_S · z_i / τ)[p]`.
pub fn sincere_anchor_loss(sim: &SimilarityMatrix, part: &IndexPartition, tau: Temperature) -> Result<f64> {
    if part.positives().is_empty() {
        return Err(Error::EmptyPositives { anchor: part.anchor() });
    }
    let row = sim.row(part.anchor());
    let mut total = 0.0;
    for &p in part.positives() {
        total += info_nce_loss(row, p, part.noise(), tau)?;
    }
    Ok(total / part.positives().len() as f64)
}

/// SupCon loss of query `p` averaged over its same-class partners `T \ {p}`.
pub fn supcon_positive_loss(
    sim: &SimilarityMatrix,
    part: &IndexPartition,
    p: usize,
    tau: Temperature,
) -> Result<f64> {
    part.require_positive(p)?;
    let partners: Vec<usize> = part.targets().into_iter().filter(|&j| j != p).collect();
    let mut total = 0.0;
    for &j in &partners {
        let view = if j == part.anchor() {
            part.clone()
        } else {
            part.swap_anchor(j)?
        };
        total += supcon_pair_loss(sim, &view, p, tau)?;
    }
    Ok(total / partners.len() as f64)
}

/// Derivative of `log Σ_{j ∈ denominator} exp(z_j·z_q/τ - ε[j = target]) - z_target·z_q/τ`
/// with respect to every row, by the generic softmax cross-entropy rule.
///
/// This is the reference path the closed forms above are checked against.
pub fn softmax_ce_gradient(
    rows: Rows<'_>,
    query: usize,
    target: usize,
    denominator: &[usize],
    target_offset: f64,
    tau: Temperature,
) -> Vec<f64> {
    let t = tau.get();
    let d = rows.d();
    let zq = rows.row(query);
    let logits: Vec<f64> = denominator
        .iter()
        .map(|&j| dot(rows.row(j), zq) / t - if j == target { target_offset } else { 0.0 })
        .collect();
    let pi = softmax(&logits);
    let mut grad = vec![0.0; rows.n() * d];
    // d(loss)/d(logit_j) = π_j - [j = target]
    let mut dlogit: Vec<(usize, f64)> = denominator.iter().copied().zip(pi).collect();
    match dlogit.iter_mut().find(|(j, _)| *j == target) {
        Some(entry) => entry.1 -= 1.0,
        None => dlogit.push((target, -1.0)),
    }
    for (j, g) in dlogit {
        axpy(&mut grad[query * d..(query + 1) * d], g / t, rows.row(j));
        axpy(&mut grad[j * d..(j + 1) * d], g / t, zq);
    }
    grad
}

impl BatchTerms {
    /// Gradient of the batch objective with respect to every row.
    pub(crate) fn gradient(&self, rows: Rows<'_>) -> Vec<f64> {
        let n = self.n;
        let d = rows.d();
        let t = self.tau;
        let mut grad = vec![0.0; n * d];
        let mut coeff = vec![0.0; n];
        for p in 0..n {
            let k = self.partner_count(p);
            if k == 0 {
                continue;
            }
            let w = self.pair_weight(p);
            coeff.iter_mut().for_each(|c| *c = 0.0);
            match self.kind {
                LossKind::SupCon => {
                    let lse = self.lse_all[p];
                    let kf = k as f64;
                    for j in (0..n).filter(|&j| j != p) {
                        let pi = exp(self.logit(j, p) - lse);
                        coeff[j] = if self.class_of[j] == self.class_of[p] {
                            w * (kf * pi - 1.0)
                        } else {
                            w * kf * pi
                        };
                    }
                }
                _ => {
                    let lse_noise = self.lse_noise[p];
                    let mut noise_mass = 0.0;
                    for s in self.partners(p) {
                        let log_den = self.log_denominator(s, p);
                        // 1 - π_S equals the noise share of the denominator
                        let rest = exp(lse_noise - log_den);
                        coeff[s] = -w * rest;
                        noise_mass += w * rest;
                    }
                    let cp = self.class_of[p];
                    for j in (0..n).filter(|&j| self.class_of[j] != cp) {
                        coeff[j] = noise_mass * exp(self.logit(j, p) - lse_noise);
                    }
                }
            }
            let zp = rows.row(p);
            for (j, &c) in coeff.iter().enumerate() {
                if c == 0.0 || j == p {
                    continue;
                }
                let zj = rows.row(j);
                for k in 0..d {
                    grad[p * d + k] += c * zj[k] / t;
                    grad[j * d + k] += c * zp[k] / t;
                }
            }
        }
        grad
    }

    pub(crate) fn loss_value(&self) -> f64 {
        let mut total = 0.0;
        for s in 0..self.n {
            let k = self.partner_count(s);
            if k == 0 {
                continue;
            }
            let acc: f64 = self.partners(s).map(|p| self.pair_loss(s, p)).sum();
            total += acc / k as f64;
        }
        total / self.active as f64
    }
}

/// Exact gradient of [`crate::losses::batch_loss`] with respect to every row (row-major `n x d`).
pub fn batch_gradient(
    kind: LossKind,
    rows: Rows<'_>,
    labels: &LabelVector,
    tau: Temperature,
    aggregation: Aggregation,
) -> Result<Vec<f64>> {
    Ok(BatchTerms::new(kind, rows, labels, tau, aggregation)?.gradient(rows))
}

/// Batch objective value, gradient and largest logit in one pass.
#[derive(Debug, Clone)]
pub struct LossAndGradient {
    pub loss: f64,
    pub gradient: Vec<f64>,
    pub max_logit: f64,
}

pub fn batch_loss_and_gradient(
    kind: LossKind,
    rows: Rows<'_>,
    labels: &LabelVector,
    tau: Temperature,
    aggregation: Aggregation,
) -> Result<LossAndGradient> {
    let terms = BatchTerms::new(kind, rows, labels, tau, aggregation)?;
    Ok(LossAndGradient {
        loss: terms.loss_value(),
        gradient: terms.gradient(rows),
        max_logit: terms.max_logit(),
    })
}

/// Central differences of `loss` with respect to row `wrt` of a raw row-major array.
///
/// The perturbed array is passed to `loss` as-is; nothing is renormalised.
pub fn finite_difference_gradient<F>(mut loss: F, data: &[f64], d: usize, wrt: usize, step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(step > 0.0) {
        return Err(Error::invalid("step", "must be positive"));
    }
    if d == 0 || (wrt + 1) * d > data.len() {
        return Err(Error::IndexOutOfRange { index: wrt, len: data.len() / d.max(1) });
    }
    let mut buf = data.to_vec();
    let mut out = Vec::with_capacity(d);
    for k in 0..d {
        let idx = wrt * d + k;
        let orig = buf[idx];
        buf[idx] = orig + step;
        let up = loss(&buf);
        buf[idx] = orig - step;
        let down = loss(&buf);
        buf[idx] = orig;
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

/// `||a - b|| / max(||a||, ||b||, 1e-12)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-12)
}

/// Range of the SINCERE attraction factor `softmax[S] - 1`.
pub const SINCERE_FACTOR_RANGE: (f64, f64) = (-1.0, 0.0);

/// Range `[-1/|P|, 1 - 1/|P|]` of the SupCon attraction factor.
pub fn supcon_factor_range(n_positives: usize) -> (f64, f64) {
    let inv = 1.0 / n_positives as f64;
    (-inv, 1.0 - inv)
}

/// A batch on which SupCon pushes `z_p` away from `z_S` while SINCERE does not.
///
/// `z_p` and `z_S` coincide, three further class members are orthogonal to
/// them and two noise points sit opposite; at `τ = 0.1` the SupCon factor on
/// `z_S` is close to `1 - 1/4`.
pub fn repulsion_witness() -> (EmbeddingMatrix, IndexPartition, usize, Temperature) {
    let z = EmbeddingMatrix::from_rows(&[
        [1.0, 0.0, 0.0],  // S
        [1.0, 0.0, 0.0],  // p
        [0.0, 1.0, 0.0],  // other positives
        [0.0, 0.0, 1.0],
        [0.0, -1.0, 0.0],
        [-1.0, 0.0, 0.0], // noise
        [-0.6, 0.0, -0.8],
    ])
    .expect("unit rows");
    let part = IndexPartition::new(7, 0, vec![1, 2, 3, 4]).expect("valid partition");
    (z, part, 1, Temperature::new(0.1).expect("positive"))
}
