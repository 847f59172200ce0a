use serde::{Deserialize, Serialize};
use sincere_core::trainkit::{EncoderKind, KnnAccuracy};

use crate::commands::train::{TrainReport, METRICS_FILE};
use crate::config::LabConfig;
use crate::error::{LabError, Result};
use crate::output::{json_artifact, read_json, CommandOutput, MANIFEST_FILE};

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: String,
    pub loss: String,
    pub encoder: EncoderKind,
    pub seed: u64,
    pub final_loss: f64,
    pub margin: f64,
    pub knn_accuracy: Vec<KnnAccuracy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub first: String,
    pub second: String,
    /// `margin(first) - margin(second)`.
    pub margin_difference: f64,
    /// `final_loss(second) - final_loss(first)`: positive when the first run reaches a lower floor.
    pub loss_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub manifest: String,
    pub runs: Vec<RunSummary>,
    pub comparisons: Vec<Comparison>,
    pub largest_margin: String,
    pub lowest_final_loss: String,
}

pub fn run(config: &LabConfig) -> Result<CommandOutput> {
    let dirs = &config.report.runs;
    if dirs.len() < 2 {
        return Err(LabError::Config("report: need at least two runs (report.runs or --run)".into()));
    }
    let mut runs = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let r: TrainReport = read_json(&dir.join(METRICS_FILE))?;
        runs.push(RunSummary {
            run: dir.display().to_string(),
            loss: r.loss.name().to_string(),
            encoder: r.encoder,
            seed: r.config.seed,
            final_loss: r.final_loss,
            margin: r.margin,
            knn_accuracy: r.metrics.knn_accuracy,
        });
    }
    let mut comparisons = Vec::new();
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            comparisons.push(Comparison {
                first: runs[i].run.clone(),
                second: runs[j].run.clone(),
                margin_difference: runs[i].margin - runs[j].margin,
                loss_gap: runs[j].final_loss - runs[i].final_loss,
            });
        }
    }
    let pick = |key: &dyn Fn(&RunSummary) -> f64| {
        runs.iter()
            .fold(None::<&RunSummary>, |best, r| match best {
                Some(b) if key(b) >= key(r) => Some(b),
                _ => Some(r),
            })
            .map(|r| r.run.clone())
            .unwrap_or_default()
    };
    let largest_margin = pick(&|r| r.margin);
    let lowest_final_loss = pick(&|r| -r.final_loss);
    let summary = runs
        .iter()
        .map(|r| format!("{} [{}]: final loss {:.4}, margin {:.4}", r.run, r.loss, r.final_loss, r.margin))
        .collect::<Vec<_>>()
        .join("\n");
    let report = ComparisonReport {
        manifest: MANIFEST_FILE.to_string(),
        runs,
        comparisons,
        largest_margin,
        lowest_final_loss,
    };
    Ok(CommandOutput {
        artifacts: vec![json_artifact(REPORT_FILE, &report)],
        passed: true,
        summary,
    })
}
