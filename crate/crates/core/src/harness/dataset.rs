use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::stats;
use crate::text::{normalize, TokenSequence};

pub const MIN_RATING: f64 = 1.0;
pub const MAX_RATING: f64 = 3.0;

/// One system output with its references and human fluency ratings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub system: String,
    pub domain: String,
    pub output: String,
    #[serde(default)]
    pub references: Vec<String>,
    pub fluency_ratings: Vec<f64>,
}

impl DatasetRecord {
    pub fn output_tokens(&self) -> TokenSequence {
        normalize(&self.output).expect("validated at load time")
    }

    /// Normalized references; blank references are dropped.
    pub fn reference_tokens(&self) -> Vec<TokenSequence> {
        self.references.iter().filter_map(|r| normalize(r).ok()).collect()
    }
}

/// Arithmetic mean of the record's fluency ratings.
pub fn aggregate_ratings(record: &DatasetRecord) -> f64 {
    stats::mean(&record.fluency_ratings)
}

fn validate(record: &DatasetRecord, line: usize) -> Result<(), HarnessError> {
    if record.id.is_empty() || record.id.contains(char::is_whitespace) {
        return Err(HarnessError::Parse { line, message: format!("invalid id {:?}", record.id) });
    }
    if normalize(&record.output).is_err() {
        return Err(HarnessError::Parse { line, message: format!("record {:?} has an empty output", record.id) });
    }
    if record.fluency_ratings.is_empty() {
        return Err(HarnessError::Parse { line, message: format!("record {:?} has no fluency ratings", record.id) });
    }
    for &r in &record.fluency_ratings {
        if !(MIN_RATING..=MAX_RATING).contains(&r) {
            return Err(HarnessError::RatingOutOfRange { line, id: record.id.clone(), value: r });
        }
    }
    Ok(())
}

/// Parses JSONL, one record per line. Blank lines are skipped.
pub fn read_dataset<R: BufRead>(reader: R) -> Result<Vec<DatasetRecord>, HarnessError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| HarnessError::Parse { line: lineno, message: e.to_string() })?;
        validate(&record, lineno)?;
        if !seen.insert(record.id.clone()) {
            return Err(HarnessError::DuplicateId { line: lineno, id: record.id });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>, HarnessError> {
    let f = std::fs::File::open(path)?;
    read_dataset(std::io::BufReader::new(f))
}

/// Inter-rater agreement (mean pairwise quadratic weighted kappa over the
/// 1..3 scale). `None` unless every rating is a whole number.
pub fn rating_agreement(records: &[DatasetRecord]) -> Option<f64> {
    let mut items = Vec::with_capacity(records.len());
    for r in records {
        let mut item = Vec::with_capacity(r.fluency_ratings.len());
        for &v in &r.fluency_ratings {
            if v.fract() != 0.0 {
                return None;
            }
            item.push(v as u32);
        }
        items.push(item);
    }
    stats::multi_rater_kappa(&items, MAX_RATING as u32).ok()
}
