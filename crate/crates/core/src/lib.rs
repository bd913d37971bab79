//! Sentence-level fluency metrics without references (SLOR, NCE, PPL over
//! word or WordPiece units), reference-based overlap baselines, and tooling
//! to evaluate any metric against human fluency ratings.

pub mod harness;
pub mod ngram;
pub mod overlap;
pub mod scorers;
pub mod stats;
pub mod subword;
pub mod text;

pub use ngram::{LmError, NGramModel, SentenceLogProb, TrainConfig};
pub use overlap::{Measure, OverlapError, OverlapMetric, OverlapScore};
pub use scorers::{ExternalScoreTable, FluencyScore, ScoreError, ScoreKind, ScoreSource, SentenceStats, UnitSpace};
pub use stats::{PairedSamples, StatsError};
pub use subword::{learn_vocabulary, PieceSequence, SubwordError, SubwordVocabulary};
pub use text::{normalize, TextError, TokenSequence};
