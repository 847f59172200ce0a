//! Synthetic labelled data, direct hypersphere training under each loss, and
//! the evaluation metrics (nearest-neighbour margins, histograms, weighted kNN).

mod batches;
mod dataset;
mod encoder;
mod metrics;
mod train;

pub use batches::{make_batches, Batch, MAX_BATCH_RETRIES};
pub use dataset::{generate_dataset, Dataset, Split, SyntheticDatasetSpec};
pub use encoder::{Encoder, EncoderKind, MlpEncoder, TableEncoder};
pub use metrics::{
    margin_report, median, weighted_knn, ClassMargin, Histogram, KnnResult, MarginReport, HISTOGRAM_BINS,
};
pub use train::{evaluate, train, EvaluationMode, KnnAccuracy, LrSchedule, MetricsReport, TrainConfig, TrainOutcome};
