//! Dataset ingestion, metric-vs-human evaluation, metric combination and
//! the train/dev/test split.

mod combine;
mod dataset;
mod report;
mod scores;
mod split;

use thiserror::Error;

use crate::stats::StatsError;

pub use combine::{
    combine_rouge_lm, train_combiner, CombinedMetric, CombinerKind, FeatureNorm, RIDGE_GRID, TRAINED_COMBINER_NAME,
    TRAINED_NOTE,
};
pub use dataset::{
    aggregate_ratings, load_dataset, rating_agreement, read_dataset, DatasetRecord, MAX_RATING, MIN_RATING,
};
pub use report::{
    evaluate, ratings_by_id, reference_count_label, Cell, Column, GroupBy, MetricReport, MetricRow, MetricScores,
    SIGNIFICANCE_LEVEL,
};
pub use scores::ScoreFile;
pub use split::{split_dataset, Split, SplitSizes};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: rating {value} of record {id:?} is outside [1, 3]")]
    RatingOutOfRange { line: usize, id: String, value: f64 },
    #[error("metric {metric:?} has no score for record {id:?}")]
    MissingScore { metric: String, id: String },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("requested {requested} records but the dataset has {available}")]
    SizesExceedDataset { requested: usize, available: usize },
    #[error("{metric} has zero variance over the fitting ids")]
    DegenerateVariance { metric: String },
    #[error("id {0:?} appears in both the training and development sets")]
    OverlappingIds(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
