//! Multi-seed comparison of SINCERE and SupCon training on synthetic data.

use std::thread;

use serde::{Deserialize, Serialize};
use sincere_core::losses::LossKind;
use sincere_core::trainkit::{generate_dataset, train};

use crate::config::{DataConfig, TrainSection};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendConfig {
    pub seeds: Vec<u64>,
    /// Class counts whose loss gaps are compared; the first is the reference for margins and kNN.
    pub class_counts: Vec<usize>,
    pub data: DataConfig,
    pub train: TrainSection,
}

impl Default for TrendConfig {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            class_counts: vec![2, 10],
            data: DataConfig::default(),
            train: TrainSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRun {
    pub k_classes: usize,
    pub loss: String,
    pub seed: u64,
    pub final_loss: f64,
    pub margin: f64,
    pub knn1_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTrend {
    pub k_classes: usize,
    pub sincere_final_loss: f64,
    pub supcon_final_loss: f64,
    /// Mean SupCon final loss minus mean SINCERE final loss.
    pub loss_gap: f64,
    pub sincere_margin: f64,
    pub supcon_margin: f64,
    pub min_knn1_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub runs: Vec<TrendRun>,
    pub classes: Vec<ClassTrend>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Trains every `(classes, loss, seed)` combination, one thread per run.
///
/// Each run is deterministic on its own, and results are collected in job
/// order, so the report does not depend on scheduling.
pub fn training_trends(config: &TrendConfig) -> Result<TrendReport> {
    let mut jobs = Vec::new();
    for &k in &config.class_counts {
        for kind in [LossKind::Sincere, LossKind::SupCon] {
            for &seed in &config.seeds {
                jobs.push((k, kind, seed));
            }
        }
    }
    let results: Vec<Result<TrendRun>> = thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(k, kind, seed)| {
                s.spawn(move || -> Result<TrendRun> {
                    let data = DataConfig { k_classes: k, ..config.data.clone() };
                    let dataset = generate_dataset(&data.spec(seed))?;
                    let mut tc = config.train.train_config(seed);
                    tc.loss = kind;
                    let out = train(&tc, &dataset, config.train.encoder)?;
                    let m = &out.metrics;
                    Ok(TrendRun {
                        k_classes: k,
                        loss: kind.name().to_string(),
                        seed,
                        final_loss: *m.epoch_losses.last().expect("epochs >= 1"),
                        margin: m.margin.margin,
                        knn1_accuracy: m.knn_accuracy.iter().find(|a| a.k == 1).map_or(f64::NAN, |a| a.accuracy),
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let classes = config
        .class_counts
        .iter()
        .map(|&k| {
            let of = |loss: &'static str| runs.iter().filter(move |r| r.k_classes == k && r.loss == loss);
            let sincere_final_loss = mean(of("sincere").map(|r| r.final_loss));
            let supcon_final_loss = mean(of("supcon").map(|r| r.final_loss));
            ClassTrend {
                k_classes: k,
                sincere_final_loss,
                supcon_final_loss,
                loss_gap: supcon_final_loss - sincere_final_loss,
                sincere_margin: mean(of("sincere").map(|r| r.margin)),
                supcon_margin: mean(of("supcon").map(|r| r.margin)),
                min_knn1_accuracy: runs
                    .iter()
                    .filter(|r| r.k_classes == k)
                    .map(|r| r.knn1_accuracy)
                    .fold(f64::INFINITY, f64::min),
            }
        })
        .collect();
    Ok(TrendReport { runs, classes })
}
