use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sincere_core::trainkit::{evaluate, EvaluationMode, KnnAccuracy, MarginReport};

use crate::commands::train::{TEST_EMBEDDINGS_FILE, TRAIN_EMBEDDINGS_FILE};
use crate::config::LabConfig;
use crate::error::{LabError, Result};
use crate::output::{histogram_csv, json_artifact, read_embeddings, CommandOutput, MANIFEST_FILE};

pub const REPORT_FILE: &str = "eval.json";
pub const HISTOGRAM_FILE: &str = "histogram_all.csv";

pub fn class_histogram_file(class: u32) -> String {
    format!("histogram_class_{class}.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub manifest: String,
    pub evaluation: EvaluationMode,
    pub margin: MarginReport,
    pub knn_accuracy: Vec<KnnAccuracy>,
}

fn inputs(config: &LabConfig) -> Result<(PathBuf, Option<PathBuf>)> {
    let e = &config.eval;
    if let Some(run) = &e.run {
        let test = run.join(TEST_EMBEDDINGS_FILE);
        return Ok((run.join(TRAIN_EMBEDDINGS_FILE), test.exists().then_some(test)));
    }
    match &e.train_embeddings {
        Some(t) => Ok((t.clone(), e.test_embeddings.clone())),
        None => Err(LabError::Config("eval: set eval.run or eval.train_embeddings".into())),
    }
}

pub fn run(config: &LabConfig) -> Result<CommandOutput> {
    let (train_path, test_path) = inputs(config)?;
    let (reference, ref_labels) = read_embeddings(&train_path)?;
    let test = test_path.as_deref().map(read_embeddings).transpose()?;
    let queries = test.as_ref().map(|(e, l)| (e.rows(), l.as_slice()));
    let (evaluation, margin, knn_accuracy) = evaluate(reference.rows(), &ref_labels, queries, &config.eval.knn_k)?;
    let mut artifacts = vec![histogram_csv(HISTOGRAM_FILE, &margin.histogram)];
    for c in &margin.per_class {
        artifacts.push(histogram_csv(&class_histogram_file(c.class), &c.histogram));
    }
    let summary = format!(
        "eval ({evaluation:?}): median target-NN {:.4}, median noise-NN {:.4}, margin {:.4}",
        margin.median_target, margin.median_noise, margin.margin
    );
    let report = EvalReport {
        manifest: MANIFEST_FILE.to_string(),
        evaluation,
        margin,
        knn_accuracy,
    };
    artifacts.insert(0, json_artifact(REPORT_FILE, &report));
    Ok(CommandOutput { artifacts, passed: true, summary })
}
