use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sincere_core::gradients::{
    batch_gradient, finite_difference_gradient, relative_error, repulsion_witness, sincere_anchor_loss,
    sincere_grad_wrt_anchor, sincere_grad_wrt_positive, supcon_factor_range, supcon_grad_wrt_positive,
    supcon_positive_loss, SINCERE_FACTOR_RANGE,
};
use sincere_core::losses::{batch_loss, sincere_pair_loss, Aggregation, LossKind};
use sincere_core::rng::{stream, LabRng};
use sincere_core::{renormalize_rows, IndexPartition, LabelVector, Rows, SimilarityMatrix, Temperature};

use crate::config::{Fault, GradcheckConfig, LabConfig};
use crate::error::{LabError, Result};
use crate::output::{json_artifact, CommandOutput, MANIFEST_FILE};

pub const REPORT_FILE: &str = "gradcheck.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MaxRelativeErrors {
    pub sincere_wrt_positive: f64,
    pub supcon_wrt_positive: f64,
    pub sincere_wrt_anchor: f64,
    pub batch_sincere: f64,
    pub batch_supcon: f64,
    pub batch_eps_supinfonce: f64,
}

impl MaxRelativeErrors {
    pub fn max(&self) -> f64 {
        [
            self.sincere_wrt_positive,
            self.supcon_wrt_positive,
            self.sincere_wrt_anchor,
            self.batch_sincere,
            self.batch_supcon,
            self.batch_eps_supinfonce,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSummary {
    pub batches: usize,
    /// Every `(S, p)` pair of every batch is checked.
    pub pairs: usize,
    pub sincere_min: f64,
    pub sincere_max: f64,
    pub sincere_violations: usize,
    pub supcon_violations: usize,
}

/// The constructed batch on which SupCon pushes `z_p` away from `z_S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepulsionWitness {
    pub rows: Vec<Vec<f64>>,
    pub anchor: usize,
    pub positives: Vec<usize>,
    pub noise: Vec<usize>,
    pub query: usize,
    pub tau: f64,
    pub supcon_factor: f64,
    pub supcon_coefficient: f64,
    pub sincere_factor: f64,
    pub repulsive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub manifest: String,
    pub batches: usize,
    pub step: f64,
    pub tolerance: f64,
    pub fault: Fault,
    pub max_relative_error: MaxRelativeErrors,
    pub gradients_passed: bool,
    pub factors: FactorSummary,
    pub factors_passed: bool,
    pub witness: RepulsionWitness,
    pub passed: bool,
}

fn random_rows(rng: &mut LabRng, n: usize, d: usize) -> Vec<f64> {
    loop {
        let raw = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        if let Ok(m) = renormalize_rows(n, d, raw) {
            return m.into_values();
        }
    }
}

/// Anchor, between 1 and `n - 2` positives, and the rest as noise.
fn random_partition(rng: &mut LabRng, n: usize) -> IndexPartition {
    let k = rng.random_range(1..n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    IndexPartition::new(n, idx[0], idx[1..=k].to_vec()).expect("valid partition")
}

/// Labels with at least two classes, each holding at least two members.
fn random_labels(rng: &mut LabRng, n: usize) -> LabelVector {
    let classes = rng.random_range(2..=n / 2);
    let mut labels: Vec<u32> = (0..2 * classes).map(|i| (i / 2) as u32).collect();
    labels.extend((2 * classes..n).map(|_| rng.random_range(0..classes as u32)));
    labels.shuffle(rng);
    LabelVector::new(labels)
}

fn gram(data: &[f64], d: usize) -> SimilarityMatrix {
    SimilarityMatrix::gram(Rows::new(d, data).expect("row-major"))
}

fn validate(cfg: &GradcheckConfig) -> Result<()> {
    let bad = |m: &str| Err(LabError::Config(format!("gradcheck: {m}")));
    if cfg.max_n < 4 {
        return bad("max_n must be >= 4");
    }
    if cfg.max_d < 2 {
        return bad("max_d must be >= 2");
    }
    if !(cfg.tau_min > 0.0 && cfg.tau_min <= cfg.tau_max && cfg.tau_max.is_finite()) {
        return bad("need 0 < tau_min <= tau_max");
    }
    if !(cfg.step > 0.0 && cfg.tolerance > 0.0) {
        return bad("step and tolerance must be positive");
    }
    Ok(())
}

fn tau(rng: &mut LabRng, cfg: &GradcheckConfig) -> Temperature {
    let t = if cfg.tau_max > cfg.tau_min {
        rng.random_range(cfg.tau_min..cfg.tau_max)
    } else {
        cfg.tau_min
    };
    Temperature::new(t).expect("validated range")
}

pub fn compute(config: &LabConfig) -> Result<GradcheckReport> {
    let cfg = &config.gradcheck;
    validate(cfg)?;
    let sign = match cfg.fault {
        Fault::None => 1.0,
        Fault::FlipSign => -1.0,
    };
    let flip = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|x| sign * x).collect() };

    let mut errs = MaxRelativeErrors::default();
    let mut rng = stream(config.seed, 10);
    for _ in 0..cfg.batches {
        let n = rng.random_range(4..=cfg.max_n);
        let d = rng.random_range(2..=cfg.max_d);
        let data = random_rows(&mut rng, n, d);
        let rows = Rows::new(d, &data)?;
        let part = random_partition(&mut rng, n);
        let p = part.positives()[rng.random_range(0..part.positives().len())];
        let tau = tau(&mut rng, cfg);

        let g = flip(sincere_grad_wrt_positive(rows, &part, p, tau)?.vector);
        let fd = finite_difference_gradient(|x| sincere_pair_loss(&gram(x, d), &part, p, tau).unwrap(), &data, d, p, cfg.step)?;
        errs.sincere_wrt_positive = errs.sincere_wrt_positive.max(relative_error(&g, &fd));

        let g = flip(supcon_grad_wrt_positive(rows, &part, p, tau)?.vector);
        let fd = finite_difference_gradient(|x| supcon_positive_loss(&gram(x, d), &part, p, tau).unwrap(), &data, d, p, cfg.step)?;
        errs.supcon_wrt_positive = errs.supcon_wrt_positive.max(relative_error(&g, &fd));

        let g = flip(sincere_grad_wrt_anchor(rows, &part, tau)?.vector);
        let fd = finite_difference_gradient(
            |x| sincere_anchor_loss(&gram(x, d), &part, tau).unwrap(),
            &data,
            d,
            part.anchor(),
            cfg.step,
        )?;
        errs.sincere_wrt_anchor = errs.sincere_wrt_anchor.max(relative_error(&g, &fd));

        let labels = random_labels(&mut rng, n);
        let r = rng.random_range(0..n);
        for (kind, slot) in [
            (LossKind::Sincere, &mut errs.batch_sincere),
            (LossKind::SupCon, &mut errs.batch_supcon),
            (LossKind::EpsSupInfoNce { epsilon: 0.25 }, &mut errs.batch_eps_supinfonce),
        ] {
            let full = flip(batch_gradient(kind, rows, &labels, tau, Aggregation::Strict)?);
            let fd = finite_difference_gradient(
                |x| batch_loss(kind, Rows::new(d, x).unwrap(), &labels, tau, Aggregation::Strict).unwrap().batch_loss,
                &data,
                d,
                r,
                cfg.step,
            )?;
            *slot = slot.max(relative_error(&full[r * d..(r + 1) * d], &fd));
        }
    }
    let gradients_passed = errs.max() <= cfg.tolerance;

    let mut factors = FactorSummary {
        batches: cfg.factor_batches,
        pairs: 0,
        sincere_min: f64::INFINITY,
        sincere_max: f64::NEG_INFINITY,
        sincere_violations: 0,
        supcon_violations: 0,
    };
    let mut rng = stream(config.seed, 11);
    for _ in 0..cfg.factor_batches {
        let n = rng.random_range(4..=cfg.max_n);
        let d = rng.random_range(2..=cfg.max_d);
        let data = random_rows(&mut rng, n, d);
        let rows = Rows::new(d, &data)?;
        let part = random_partition(&mut rng, n);
        let tau = tau(&mut rng, cfg);
        let (lo, hi) = supcon_factor_range(part.positives().len());
        for &p in part.positives() {
            let f = sign * sincere_grad_wrt_positive(rows, &part, p, tau)?.attraction_factor();
            factors.sincere_min = factors.sincere_min.min(f);
            factors.sincere_max = factors.sincere_max.max(f);
            if !(SINCERE_FACTOR_RANGE.0..=SINCERE_FACTOR_RANGE.1).contains(&f) {
                factors.sincere_violations += 1;
            }
            let f = sign * supcon_grad_wrt_positive(rows, &part, p, tau)?.attraction_factor();
            if !(lo..=hi).contains(&f) {
                factors.supcon_violations += 1;
            }
            factors.pairs += 1;
        }
    }

    let (emb, part, query, wtau) = repulsion_witness();
    let sup = supcon_grad_wrt_positive(emb.rows(), &part, query, wtau)?;
    let sin = sincere_grad_wrt_positive(emb.rows(), &part, query, wtau)?;
    let witness = RepulsionWitness {
        rows: (0..emb.n()).map(|i| emb.row(i).to_vec()).collect(),
        anchor: part.anchor(),
        positives: part.positives().to_vec(),
        noise: part.noise().to_vec(),
        query,
        tau: wtau.get(),
        supcon_factor: sign * sup.attraction_factor(),
        supcon_coefficient: sign * sup.attraction_coefficient(),
        sincere_factor: sign * sin.attraction_factor(),
        repulsive: sign * sup.attraction_factor() > 0.0,
    };
    let factors_passed = factors.sincere_violations == 0 && factors.supcon_violations == 0 && witness.repulsive;

    Ok(GradcheckReport {
        manifest: MANIFEST_FILE.to_string(),
        batches: cfg.batches,
        step: cfg.step,
        tolerance: cfg.tolerance,
        fault: cfg.fault,
        max_relative_error: errs,
        gradients_passed,
        factors,
        factors_passed,
        witness,
        passed: gradients_passed && factors_passed,
    })
}

pub fn run(config: &LabConfig) -> Result<CommandOutput> {
    let report = compute(config)?;
    let summary = format!(
        "gradcheck: max relative error {:.3e} (tolerance {:.0e}), factor violations {}/{}, SupCon witness factor {:.4}",
        report.max_relative_error.max(),
        report.tolerance,
        report.factors.sincere_violations + report.factors.supcon_violations,
        report.factors.pairs,
        report.witness.supcon_factor,
    );
    Ok(CommandOutput {
        artifacts: vec![json_artifact(REPORT_FILE, &report)],
        passed: report.passed,
        summary,
    })
}
