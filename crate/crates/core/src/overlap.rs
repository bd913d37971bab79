//! Reference-based word-overlap baselines.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::TokenSequence;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OverlapError {
    #[error("at least one reference is required")]
    NoReferences,
    #[error("n-gram order must be at least 1")]
    InvalidOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Measure {
    Recall,
    FScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OverlapMetric {
    RougeL,
    NGram { n: usize, measure: Measure },
}

impl fmt::Display for OverlapMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OverlapMetric::RougeL => f.write_str("ROUGE-L"),
            OverlapMetric::NGram { n, measure: Measure::Recall } => write!(f, "LR{n}-R"),
            OverlapMetric::NGram { n, measure: Measure::FScore } => write!(f, "LR{n}-F"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapScore {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub metric: OverlapMetric,
}

impl OverlapScore {
    fn from_counts(matched: usize, candidate_total: usize, reference_total: usize, metric: OverlapMetric) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(matched, candidate_total);
        let recall = ratio(matched, reference_total);
        Self { precision, recall, f_score: f1(precision, recall), metric }
    }

    /// The headline number: recall for `LRn-R`, F otherwise.
    pub fn value(&self) -> f64 {
        match self.metric {
            OverlapMetric::NGram { measure: Measure::Recall, .. } => self.recall,
            _ => self.f_score,
        }
    }

    pub fn metric_name(&self) -> String {
        self.metric.to_string()
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Length of the longest common subsequence, O(|a|·|b|) time and
/// O(min(|a|, |b|)) memory.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut row = vec![0usize; short.len() + 1];
    for x in long {
        let mut diag = 0;
        for (j, y) in short.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[short.len()]
}

pub fn rouge_l(candidate: &TokenSequence, reference: &TokenSequence) -> OverlapScore {
    let lcs = lcs_length(candidate.tokens(), reference.tokens());
    OverlapScore::from_counts(lcs, candidate.len(), reference.len(), OverlapMetric::RougeL)
}

/// ROUGE-L against the best-matching reference (maximal F; the first
/// reference wins ties).
pub fn rouge_l_multi(candidate: &TokenSequence, references: &[TokenSequence]) -> Result<OverlapScore, OverlapError> {
    let mut best: Option<OverlapScore> = None;
    for r in references {
        let s = rouge_l(candidate, r);
        if best.is_none_or(|b| s.f_score > b.f_score) {
            best = Some(s);
        }
    }
    best.ok_or(OverlapError::NoReferences)
}

fn ngram_set(tokens: &[String], n: usize) -> HashSet<&[String]> {
    tokens.windows(n).collect()
}

/// N-gram overlap with sets on both sides; the reference side is the union of
/// every reference's n-gram set.
pub fn ngram_overlap(
    candidate: &TokenSequence,
    references: &[TokenSequence],
    n: usize,
    measure: Measure,
) -> Result<OverlapScore, OverlapError> {
    if n == 0 {
        return Err(OverlapError::InvalidOrder);
    }
    if references.is_empty() {
        return Err(OverlapError::NoReferences);
    }
    let cand = ngram_set(candidate.tokens(), n);
    let union: HashSet<&[String]> = references.iter().flat_map(|r| ngram_set(r.tokens(), n)).collect();
    let matched = cand.intersection(&union).count();
    Ok(OverlapScore::from_counts(matched, cand.len(), union.len(), OverlapMetric::NGram { n, measure }))
}
