use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{EmbeddingMatrix, LabelVector, Rows, Temperature};
use crate::gradients::batch_loss_and_gradient;
use crate::losses::{Aggregation, LossKind};
use crate::rng::stream;
use crate::trainkit::batches::make_batches;
use crate::trainkit::dataset::Dataset;
use crate::trainkit::encoder::{Encoder, EncoderKind};
use crate::trainkit::metrics::{margin_report, weighted_knn, MarginReport};

/// Learning-rate multiplier over training.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "snake_case"))]
pub enum LrSchedule {
    Constant,
    /// Linear ramp from `floor_fraction` to 1 over the warm-up, then cosine decay back to `floor_fraction`.
    CosineWithWarmup { warmup_epochs: usize, floor_fraction: f64 },
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule::CosineWithWarmup {
            warmup_epochs: 10,
            floor_fraction: 0.001,
        }
    }
}

impl LrSchedule {
    /// Multiplier at fractional epoch `progress` of a run lasting `epochs`.
    pub fn factor(&self, progress: f64, epochs: usize) -> f64 {
        match *self {
            LrSchedule::Constant => 1.0,
            LrSchedule::CosineWithWarmup { warmup_epochs, floor_fraction: f } => {
                let w = warmup_epochs.min(epochs) as f64;
                if progress < w {
                    return f + (1.0 - f) * progress / w;
                }
                let span = epochs as f64 - w;
                if span <= 0.0 {
                    return 1.0;
                }
                let t = ((progress - w) / span).clamp(0.0, 1.0);
                f + (1.0 - f) * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * t))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    /// For [`LossKind::InfoNce`] the two views of an item are its only positives.
    pub loss: LossKind,
    pub tau: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_schedule: LrSchedule,
    /// Defaults to half the dataset's within-class noise.
    pub augmentation_sigma: Option<f64>,
    /// Neighbour counts reported by the weighted kNN evaluation.
    pub knn_k: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Sincere,
            tau: 0.1,
            epochs: 200,
            batch_size: 64,
            learning_rate: 0.5,
            momentum: 0.9,
            weight_decay: 1e-4,
            lr_schedule: LrSchedule::default(),
            augmentation_sigma: None,
            knn_k: vec![1, 5, 20],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        Temperature::new(self.tau)?;
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be >= 1"));
        }
        if self.batch_size < 4 || self.batch_size % 2 != 0 {
            return Err(Error::invalid("batch_size", "must be even and >= 4"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum", "must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight_decay", "must be finite and >= 0"));
        }
        if let LrSchedule::CosineWithWarmup { floor_fraction, .. } = self.lr_schedule {
            if !(0.0..=1.0).contains(&floor_fraction) {
                return Err(Error::invalid("lr_schedule.floor_fraction", "must lie in [0, 1]"));
            }
        }
        if let Some(s) = self.augmentation_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::invalid("augmentation_sigma", "must be finite and >= 0"));
            }
        }
        if self.knn_k.contains(&0) {
            return Err(Error::invalid("knn_k", "every k must be >= 1"));
        }
        Ok(())
    }
}

/// How the evaluation queries relate to the reference (training) embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EvaluationMode {
    /// Held-out test points embedded by the trained encoder.
    HeldOut,
    /// Training embeddings queried against themselves, skipping each point's own row.
    LeaveOneOut,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KnnAccuracy {
    pub k: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub epoch_losses: Vec<f64>,
    pub evaluation: EvaluationMode,
    pub margin: MarginReport,
    pub knn_accuracy: Vec<KnnAccuracy>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub encoder: Encoder,
    pub train_embeddings: EmbeddingMatrix,
    /// `None` for a table encoder, which cannot embed unseen points.
    pub test_embeddings: Option<EmbeddingMatrix>,
    pub metrics: MetricsReport,
}

/// Margin and kNN metrics of reference embeddings, queried either by held-out points or leave-one-out.
pub fn evaluate(
    reference: Rows<'_>,
    ref_labels: &[u32],
    queries: Option<(Rows<'_>, &[u32])>,
    knn_k: &[usize],
) -> Result<(EvaluationMode, MarginReport, Vec<KnnAccuracy>)> {
    let (mode, q, ql, loo) = match queries {
        Some((q, ql)) => (EvaluationMode::HeldOut, q, ql, false),
        None => (EvaluationMode::LeaveOneOut, reference, ref_labels, true),
    };
    let margin = margin_report(reference, ref_labels, q, ql, loo)?;
    let mut knn = Vec::with_capacity(knn_k.len());
    for &k in knn_k {
        let r = weighted_knn(reference, ref_labels, q, Some(ql), k, loo)?;
        knn.push(KnnAccuracy { k, accuracy: r.accuracy.unwrap_or(0.0) });
    }
    Ok((mode, margin, knn))
}

/// Runs SGD with momentum and weight decay on the chosen encoder, then evaluates it.
///
/// The update is `v <- mu v + (g + lambda w)`, `w <- w - lr v`. Table rows
/// are projected back onto the sphere after every step. Initialisation and
/// batch sampling use separate streams of the configured seed, so the whole
/// run is a deterministic function of `(config, dataset, encoder)`.
pub fn train(config: &TrainConfig, dataset: &Dataset, encoder: EncoderKind) -> Result<TrainOutcome> {
    config.validate()?;
    let tau = Temperature::new(config.tau)?;
    let split = &dataset.train;
    let mut init_rng = stream(config.seed, 0);
    let mut batch_rng = stream(config.seed, 1);
    let mut enc = Encoder::init(encoder, split.d, split.len(), &mut init_rng)?;
    let dim = enc.dim();
    let sigma = config
        .augmentation_sigma
        .unwrap_or(dataset.spec.within_class_noise / 2.0);
    let mut velocity = vec![0.0; enc.params().len()];
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let batches = make_batches(split, config.batch_size, sigma, &mut batch_rng)?;
        let nb = batches.len() as f64;
        let mut total = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let labels = match config.loss {
                LossKind::InfoNce => LabelVector::new(batch.items.iter().map(|&i| i as u32).collect()),
                _ => batch.labels.clone(),
            };
            let (out, cache) = enc.forward_batch(batch)?;
            let lg = batch_loss_and_gradient(config.loss, Rows::new(dim, &out)?, &labels, tau, Aggregation::Strict)?;
            if !lg.loss.is_finite() || lg.gradient.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    epoch,
                    batch: b,
                    max_logit: lg.max_logit,
                });
            }
            let grad = enc.backward_batch(batch, &out, cache.as_ref(), &lg.gradient);
            let lr = config.learning_rate * config.lr_schedule.factor(epoch as f64 + b as f64 / nb, config.epochs);
            let params = enc.params_mut();
            for ((w, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = config.momentum * *v + g + config.weight_decay * *w;
                *w -= lr * *v;
            }
            if params.iter().any(|w| !w.is_finite()) {
                return Err(Error::NonFinite {
                    epoch,
                    batch: b,
                    max_logit: lg.max_logit,
                });
            }
            enc.after_step()?;
            total += lg.loss;
        }
        epoch_losses.push(total / nb);
    }

    let (train_embeddings, test_embeddings) = match &enc {
        Encoder::Table(_) => (enc.table_embeddings().expect("table")?, None),
        Encoder::Mlp(_) => (
            enc.encode(&split.features).expect("mlp")?,
            Some(enc.encode(&dataset.test.features).expect("mlp")?),
        ),
    };
    let queries = test_embeddings.as_ref().map(|t| (t.rows(), dataset.test.labels.as_slice()));
    let (evaluation, margin, knn_accuracy) = evaluate(train_embeddings.rows(), &split.labels, queries, &config.knn_k)?;
    Ok(TrainOutcome {
        encoder: enc,
        train_embeddings,
        test_embeddings,
        metrics: MetricsReport {
            epoch_losses,
            evaluation,
            margin,
            knn_accuracy,
        },
    })
}
