//! TOML run configuration.
//!
//! Every key has a default, so an empty file (apart from `schema_version`)
//! is a valid config. `--set a.b=value` edits the parsed tree before it is
//! checked, so overrides obey the same schema as the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sincere_core::losses::LossKind;
use sincere_core::trainkit::{EncoderKind, LrSchedule, SyntheticDatasetSpec, TrainConfig};

use crate::error::{LabError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub gradcheck: GradcheckConfig,
    pub oracle: OracleConfig,
    pub bound: BoundConfig,
    pub data: DataConfig,
    pub train: TrainSection,
    pub eval: EvalConfig,
    pub report: ReportConfig,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            gradcheck: GradcheckConfig::default(),
            oracle: OracleConfig::default(),
            bound: BoundConfig::default(),
            data: DataConfig::default(),
            train: TrainSection::default(),
            eval: EvalConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    #[default]
    None,
    /// Negates every analytic gradient before comparison.
    FlipSign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    /// Random batches compared against finite differences.
    pub batches: usize,
    pub max_n: usize,
    pub max_d: usize,
    pub tau_min: f64,
    pub tau_max: f64,
    pub step: f64,
    pub tolerance: f64,
    /// Random batches whose attraction factors are range-checked.
    pub factor_batches: usize,
    pub fault: Fault,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            batches: 100,
            max_n: 16,
            max_d: 8,
            tau_min: 0.1,
            tau_max: 1.0,
            step: 1e-5,
            tolerance: 1e-6,
            factor_batches: 1000,
            fault: Fault::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Every `2 <= n <= max_n` and `1 <= t < n` is visited.
    pub max_n: usize,
    pub instances_per_cell: usize,
    pub families: Vec<Family>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Categorical,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            max_n: 8,
            instances_per_cell: 1,
            families: vec![Family::Gaussian, Family::Categorical],
            tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConfig {
    /// Target means; the noise density is `N(0, sigma^2)`.
    pub means: Vec<f64>,
    pub sigma: f64,
    pub n: Vec<usize>,
    pub t: usize,
    pub samples: usize,
    /// Largest `|N|` and `|P|` in the symbolic comparison of the two right-hand sides.
    pub symbolic_max: usize,
    pub symbolic_kl: Vec<f64>,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            means: vec![0.0, 0.5, 1.0, 2.0],
            sigma: 1.0,
            n: vec![6, 10],
            t: 2,
            samples: sincere_core::bounds::DEFAULT_MC_SAMPLES,
            symbolic_max: 20,
            symbolic_kl: vec![0.0, 0.25, 1.0, 4.0, 16.0],
        }
    }
}

/// Dataset parameters; the seed comes from the top-level `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub k_classes: usize,
    pub per_class: usize,
    pub feature_dim: usize,
    pub class_separation: f64,
    pub within_class_noise: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let s = SyntheticDatasetSpec::default();
        Self {
            k_classes: s.k_classes,
            per_class: s.per_class,
            feature_dim: s.feature_dim,
            class_separation: s.class_separation,
            within_class_noise: s.within_class_noise,
        }
    }
}

impl DataConfig {
    pub fn spec(&self, seed: u64) -> SyntheticDatasetSpec {
        SyntheticDatasetSpec {
            k_classes: self.k_classes,
            per_class: self.per_class,
            feature_dim: self.feature_dim,
            class_separation: self.class_separation,
            within_class_noise: self.within_class_noise,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub loss: LossKind,
    pub tau: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_schedule: LrSchedule,
    pub augmentation_sigma: Option<f64>,
    pub knn_k: Vec<usize>,
    pub encoder: EncoderKind,
}

impl Default for TrainSection {
    fn default() -> Self {
        let c = TrainConfig::default();
        Self {
            loss: c.loss,
            tau: c.tau,
            epochs: c.epochs,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
            momentum: c.momentum,
            weight_decay: c.weight_decay,
            lr_schedule: c.lr_schedule,
            augmentation_sigma: c.augmentation_sigma,
            knn_k: c.knn_k,
            encoder: EncoderKind::default(),
        }
    }
}

impl TrainSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            loss: self.loss,
            tau: self.tau,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            lr_schedule: self.lr_schedule,
            augmentation_sigma: self.augmentation_sigma,
            knn_k: self.knn_k.clone(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Output directory of a `train` run; supplies both embedding files.
    pub run: Option<PathBuf>,
    pub train_embeddings: Option<PathBuf>,
    /// When absent the training embeddings are evaluated leave-one-out.
    pub test_embeddings: Option<PathBuf>,
    pub knn_k: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            run: None,
            train_embeddings: None,
            test_embeddings: None,
            knn_k: vec![1, 5, 20],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Output directories of `train` runs to compare.
    pub runs: Vec<PathBuf>,
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies one `dotted.key=value` override; the value is read as TOML, falling back to a bare string.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| LabError::Config(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(LabError::Config(format!("override key `{key}` is malformed")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| LabError::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Reads the config file (if any), applies overrides and validates the result.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<LabConfig> {
    let mut root = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| LabError::io(p, e))?;
            let located = |e: toml::de::Error| LabError::Config(format!("{}: {}", p.display(), e.to_string().trim_end()));
            // checked from the text first so schema errors carry line and column
            toml::from_str::<LabConfig>(&text).map_err(located)?;
            let table: toml::Table = toml::from_str(&text).map_err(located)?;
            if !table.contains_key("schema_version") {
                return Err(LabError::Config(format!("{}: missing schema_version", p.display())));
            }
            table
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    let origin = path.map_or_else(|| "<defaults>".to_string(), |p| p.display().to_string());
    let config: LabConfig = LabConfig::deserialize(toml::Value::Table(root))
        .map_err(|e| LabError::Config(format!("{origin}: {}", e.to_string().trim_end())))?;
    if config.schema_version != SCHEMA_VERSION {
        return Err(LabError::Config(format!(
            "{origin}: schema_version {} is not supported (expected {SCHEMA_VERSION})",
            config.schema_version
        )));
    }
    Ok(config)
}
