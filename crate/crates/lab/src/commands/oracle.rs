use rand::Rng;
use serde::{Deserialize, Serialize};
use sincere_core::genmodel::{
    brute_force_posterior, posterior_selfsup, posterior_supervised, sample_supervised, DensitySpec, ENUMERATION_LIMIT,
};
use sincere_core::rng::{stream, LabRng};

use crate::config::{Family, LabConfig};
use crate::error::{LabError, Result};
use crate::output::{json_artifact, CommandOutput, MANIFEST_FILE};

pub const REPORT_FILE: &str = "oracle.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub family: Family,
    pub instances: usize,
    pub max_abs_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub family: Family,
    pub n: usize,
    pub t: usize,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub manifest: String,
    pub max_n: usize,
    pub instances: usize,
    /// Instances with `t = 1`, where the self-supervised closed form is also compared.
    pub selfsup_instances: usize,
    pub tolerance: f64,
    pub max_abs_deviation: f64,
    pub worst: Option<WorstCase>,
    pub families: Vec<FamilySummary>,
    pub passed: bool,
}

fn random_pair(rng: &mut LabRng, family: Family) -> (DensitySpec, DensitySpec) {
    match family {
        Family::Gaussian => {
            let dim = rng.random_range(1..=3);
            let g = |rng: &mut LabRng| DensitySpec::IsotropicGaussian {
                mean: (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
                sigma: rng.random_range(0.5..2.0),
            };
            (g(rng), g(rng))
        }
        Family::Categorical => {
            let m = rng.random_range(2..=5);
            let pmf = |rng: &mut LabRng| {
                let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
                let z: f64 = w.iter().sum();
                DensitySpec::Categorical { pmf: w.iter().map(|v| v / z).collect() }
            };
            (pmf(rng), pmf(rng))
        }
    }
}

pub fn compute(config: &LabConfig) -> Result<OracleReport> {
    let cfg = &config.oracle;
    if cfg.max_n > ENUMERATION_LIMIT {
        return Err(LabError::Config(format!(
            "oracle: refusing max_n = {} (enumeration limit {ENUMERATION_LIMIT})",
            cfg.max_n
        )));
    }
    if cfg.max_n < 2 {
        return Err(LabError::Config("oracle: max_n must be >= 2".into()));
    }
    let mut rng = stream(config.seed, 20);
    let mut families = Vec::new();
    let mut worst: Option<WorstCase> = None;
    let mut instances = 0;
    let mut selfsup_instances = 0;
    for &family in &cfg.families {
        let mut summary = FamilySummary { family, instances: 0, max_abs_deviation: 0.0 };
        for n in 2..=cfg.max_n {
            for t in 1..n {
                for _ in 0..cfg.instances_per_cell {
                    let (target, noise) = random_pair(&mut rng, family);
                    let draw = sample_supervised(n, t, &target, &noise, &mut rng)?;
                    let closed = posterior_supervised(&draw.data, &draw.positives, &target, &noise)?;
                    let brute = brute_force_posterior(&draw.data, t, &target, &noise)?.conditional(&draw.positives)?;
                    let mut dev = closed.max_abs_deviation(&brute);
                    if t == 1 {
                        let selfsup = posterior_selfsup(&draw.data, &target, &noise)?;
                        dev = dev.max(selfsup.max_abs_deviation(&brute));
                        selfsup_instances += 1;
                    }
                    summary.instances += 1;
                    summary.max_abs_deviation = summary.max_abs_deviation.max(dev);
                    if worst.as_ref().map_or(true, |w| dev > w.deviation) {
                        worst = Some(WorstCase { family, n, t, deviation: dev });
                    }
                }
            }
        }
        instances += summary.instances;
        families.push(summary);
    }
    let max_abs_deviation = families.iter().map(|f| f.max_abs_deviation).fold(0.0, f64::max);
    Ok(OracleReport {
        manifest: MANIFEST_FILE.to_string(),
        max_n: cfg.max_n,
        instances,
        selfsup_instances,
        tolerance: cfg.tolerance,
        max_abs_deviation,
        worst,
        families,
        passed: max_abs_deviation <= cfg.tolerance,
    })
}

pub fn run(config: &LabConfig) -> Result<CommandOutput> {
    let report = compute(config)?;
    let summary = format!(
        "oracle: {} instances (n <= {}), max abs deviation {:.3e} (tolerance {:.0e})",
        report.instances, report.max_n, report.max_abs_deviation, report.tolerance
    );
    Ok(CommandOutput {
        artifacts: vec![json_artifact(REPORT_FILE, &report)],
        passed: report.passed,
        summary,
    })
}
