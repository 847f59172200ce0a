use serde::{Deserialize, Serialize};
use sincere_core::losses::LossKind;
use sincere_core::trainkit::{generate_dataset, train, EncoderKind, MetricsReport, SyntheticDatasetSpec, TrainConfig};

use crate::config::LabConfig;
use crate::error::Result;
use crate::output::{embeddings_csv, json_artifact, loss_csv, CommandOutput, MANIFEST_FILE};

pub const METRICS_FILE: &str = "metrics.json";
pub const LOSS_FILE: &str = "loss.csv";
pub const TRAIN_EMBEDDINGS_FILE: &str = "embeddings_train.csv";
pub const TEST_EMBEDDINGS_FILE: &str = "embeddings_test.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub manifest: String,
    pub loss: LossKind,
    pub encoder: EncoderKind,
    pub dataset: SyntheticDatasetSpec,
    pub config: TrainConfig,
    pub first_epoch_loss: f64,
    pub final_loss: f64,
    pub margin: f64,
    pub metrics: MetricsReport,
}

pub fn compute(config: &LabConfig) -> Result<(TrainReport, Vec<crate::output::Artifact>)> {
    let spec = config.data.spec(config.seed);
    let dataset = generate_dataset(&spec)?;
    let tc = config.train.train_config(config.seed);
    let outcome = train(&tc, &dataset, config.train.encoder)?;
    let losses = &outcome.metrics.epoch_losses;
    let mut artifacts = vec![
        loss_csv(LOSS_FILE, losses),
        embeddings_csv(TRAIN_EMBEDDINGS_FILE, &outcome.train_embeddings, &dataset.train.labels),
    ];
    if let Some(test) = &outcome.test_embeddings {
        artifacts.push(embeddings_csv(TEST_EMBEDDINGS_FILE, test, &dataset.test.labels));
    }
    let report = TrainReport {
        manifest: MANIFEST_FILE.to_string(),
        loss: tc.loss,
        encoder: config.train.encoder,
        dataset: spec,
        first_epoch_loss: losses[0],
        final_loss: losses[losses.len() - 1],
        margin: outcome.metrics.margin.margin,
        config: tc,
        metrics: outcome.metrics,
    };
    artifacts.push(json_artifact(METRICS_FILE, &report));
    Ok((report, artifacts))
}

pub fn run(config: &LabConfig) -> Result<CommandOutput> {
    let (report, artifacts) = compute(config)?;
    let knn = report
        .metrics
        .knn_accuracy
        .iter()
        .map(|k| format!("{}-NN {:.3}", k.k, k.accuracy))
        .collect::<Vec<_>>()
        .join(", ");
    let summary = format!(
        "train {}: loss {:.4} -> {:.4}, margin {:.4}, {knn}",
        report.loss.name(),
        report.first_epoch_loss,
        report.final_loss,
        report.margin
    );
    Ok(CommandOutput { artifacts, passed: true, summary })
}
