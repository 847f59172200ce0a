use serde::{Deserialize, Serialize};
use sincere_core::bounds::{
    check_bounds, ideal_loss_mc, sincere_bound_rhs, supcon_bound_rhs, symmetrized_kl, BoundInputs, BoundReport,
    BOUND_SLACK_SE,
};
use sincere_core::genmodel::DensitySpec;
use sincere_core::rng::stream;

use crate::config::LabConfig;
use crate::error::{LabError, Result};
use crate::output::{json_artifact, CommandOutput, MANIFEST_FILE};

pub const REPORT_FILE: &str = "bound.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCell {
    pub mean: f64,
    pub sigma: f64,
    pub n: usize,
    pub t: usize,
    pub bound: BoundReport,
}

/// Estimates for one target mean ordered by `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCheck {
    pub mean: f64,
    pub n: Vec<usize>,
    pub estimates: Vec<f64>,
    /// Each estimate is at least the previous one, allowing the usual standard-error slack.
    pub monotone: bool,
}

/// Comparison of the two right-hand sides over a grid of `(|N|, |P|, symKL)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicCheck {
    pub points: usize,
    /// Points with `|P| > 1` where the SupCon side is not strictly larger.
    pub strict_violations: usize,
    /// Points with `|P| = 1` where the two sides differ.
    pub equality_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCommandReport {
    pub manifest: String,
    pub samples: usize,
    pub slack_standard_errors: f64,
    pub cells: Vec<BoundCell>,
    pub monotone: Vec<MonotoneCheck>,
    pub symbolic: SymbolicCheck,
    pub passed: bool,
}

pub fn symbolic_check(max: usize, kls: &[f64]) -> SymbolicCheck {
    let mut s = SymbolicCheck { points: 0, strict_violations: 0, equality_violations: 0 };
    for n_noise in 1..=max {
        for n_pos in 1..=max {
            for &kl in kls {
                s.points += 1;
                let a = supcon_bound_rhs(n_noise, n_pos, kl);
                let b = sincere_bound_rhs(n_noise, kl);
                if n_pos == 1 && a != b {
                    s.equality_violations += 1;
                }
                if n_pos > 1 && a <= b {
                    s.strict_violations += 1;
                }
            }
        }
    }
    s
}

pub fn compute(config: &LabConfig) -> Result<BoundCommandReport> {
    let cfg = &config.bound;
    if cfg.t < 1 || cfg.n.iter().any(|&n| n <= cfg.t) {
        return Err(LabError::Config(format!("bound: every n must exceed t = {}", cfg.t)));
    }
    let mut cells = Vec::new();
    let mut monotone = Vec::new();
    let mut ns = cfg.n.clone();
    ns.sort_unstable();
    ns.dedup();
    for (mi, &mean) in cfg.means.iter().enumerate() {
        let target = DensitySpec::gaussian_1d(mean, cfg.sigma);
        let noise = DensitySpec::gaussian_1d(0.0, cfg.sigma);
        target.validate()?;
        let kl = symmetrized_kl(&target, &noise)?;
        let mut check = MonotoneCheck { mean, n: ns.clone(), estimates: Vec::new(), monotone: true };
        let mut prev: Option<(f64, f64)> = None;
        for (ni, &n) in ns.iter().enumerate() {
            let mut rng = stream(config.seed, 30 + (mi * ns.len() + ni) as u64);
            let ideal = ideal_loss_mc(n, cfg.t, &target, &noise, cfg.samples, &mut rng)?;
            let bound = check_bounds(&BoundInputs::from_ideal(&ideal, kl));
            let (v, se) = (ideal.sincere.value, ideal.sincere.standard_error);
            if let Some((pv, pse)) = prev {
                let slack = BOUND_SLACK_SE * (se * se + pse * pse).sqrt();
                if v + slack < pv {
                    check.monotone = false;
                }
            }
            prev = Some((v, se));
            check.estimates.push(v);
            cells.push(BoundCell { mean, sigma: cfg.sigma, n, t: cfg.t, bound });
        }
        monotone.push(check);
    }
    let symbolic = symbolic_check(cfg.symbolic_max, &cfg.symbolic_kl);
    let passed = cells.iter().all(|c| c.bound.all_satisfied())
        && monotone.iter().all(|m| m.monotone)
        && symbolic.strict_violations == 0
        && symbolic.equality_violations == 0;
    Ok(BoundCommandReport {
        manifest: MANIFEST_FILE.to_string(),
        samples: cfg.samples,
        slack_standard_errors: BOUND_SLACK_SE,
        cells,
        monotone,
        symbolic,
        passed,
    })
}

pub fn run(config: &LabConfig) -> Result<CommandOutput> {
    let report = compute(config)?;
    let violated = report.cells.iter().filter(|c| !c.bound.all_satisfied()).count();
    let summary = format!(
        "bound: {} cells, {} violated beyond {} SE; symbolic grid {} points, {} violations",
        report.cells.len(),
        violated,
        report.slack_standard_errors,
        report.symbolic.points,
        report.symbolic.strict_violations + report.symbolic.equality_violations,
    );
    Ok(CommandOutput {
        artifacts: vec![json_artifact(REPORT_FILE, &report)],
        passed: report.passed,
        summary,
    })
}
