//! Referenceless fluency scores: SLOR, NCE and PPL.
//!
//! All three are functions of a sentence's LM log-probability and its scored
//! length; SLOR additionally subtracts the unigram log-probability of the
//! same events.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ngram::NGramModel;
use crate::subword::SubwordVocabulary;
use crate::text::TokenSequence;

const EXTERNAL_HEADER: &str = "#extscores v1";

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("scored length must be at least 1")]
    ZeroLength,
    #[error("WordPiece scoring requires a subword vocabulary")]
    MissingVocabulary,
    #[error("no external score for sentence {0:?}")]
    MissingExternalScore(String),
    #[error("external score file error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Lm(#[from] crate::ngram::LmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreKind {
    Slor,
    Nce,
    Ppl,
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreKind::Slor => "SLOR",
            ScoreKind::Nce => "NCE",
            ScoreKind::Ppl => "PPL",
        })
    }
}

impl FromStr for ScoreKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "slor" => Ok(ScoreKind::Slor),
            "nce" => Ok(ScoreKind::Nce),
            "ppl" => Ok(ScoreKind::Ppl),
            _ => Err(format!("unknown score kind {s:?} (expected slor, nce or ppl)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnitSpace {
    Word,
    WordPiece,
}

impl UnitSpace {
    /// Conventional metric name, e.g. `WordSLOR` or `WPNCE`.
    pub fn metric_name(self, kind: ScoreKind) -> String {
        match self {
            UnitSpace::Word => format!("Word{kind}"),
            UnitSpace::WordPiece => format!("WP{kind}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluencyScore {
    pub value: f64,
    pub kind: ScoreKind,
    pub unit_space: UnitSpace,
}

/// `(ln p_M(S) − ln p_u(S)) / |S|`
pub fn slor(log_prob: f64, unigram_log_prob: f64, scored_length: usize) -> Result<f64, ScoreError> {
    if scored_length == 0 {
        return Err(ScoreError::ZeroLength);
    }
    Ok((log_prob - unigram_log_prob) / scored_length as f64)
}

/// `ln p_M(S) / |S|`
pub fn nce(log_prob: f64, scored_length: usize) -> Result<f64, ScoreError> {
    if scored_length == 0 {
        return Err(ScoreError::ZeroLength);
    }
    Ok(log_prob / scored_length as f64)
}

/// `exp(−NCE(S))`
pub fn ppl(log_prob: f64, scored_length: usize) -> Result<f64, ScoreError> {
    Ok((-nce(log_prob, scored_length)?).exp())
}

/// LM statistics for one sentence: everything the three scores need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentenceStats {
    pub log_prob: f64,
    pub scored_length: usize,
    pub unigram_log_prob: f64,
}

impl SentenceStats {
    pub fn score(&self, kind: ScoreKind) -> Result<f64, ScoreError> {
        match kind {
            ScoreKind::Slor => slor(self.log_prob, self.unigram_log_prob, self.scored_length),
            ScoreKind::Nce => nce(self.log_prob, self.scored_length),
            ScoreKind::Ppl => ppl(self.log_prob, self.scored_length),
        }
    }

    pub fn from_model<S: AsRef<str>>(model: &NGramModel, units: &[S]) -> Result<Self, ScoreError> {
        let lp = model.sentence_logprob(units)?;
        Ok(Self {
            log_prob: lp.log_prob,
            scored_length: lp.scored_length,
            unigram_log_prob: model.unigram_logprob(units)?,
        })
    }
}

/// Per-sentence log-probabilities produced by an external LM.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalScoreTable {
    rows: BTreeMap<String, SentenceStats>,
}

impl ExternalScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, stats: SentenceStats) -> Result<(), ScoreError> {
        check_external(&stats).map_err(|message| ScoreError::Format { line: 0, message })?;
        self.rows.insert(id.into(), stats);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&SentenceStats> {
        self.rows.get(id)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, ScoreError> {
        let mut table = Self::new();
        let mut saw_header = false;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let err = |message: String| ScoreError::Format { line: lineno, message };
            if i == 0 {
                if line.trim_end() != EXTERNAL_HEADER {
                    return Err(err(format!("expected header `{EXTERNAL_HEADER}`")));
                }
                saw_header = true;
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, lp, len, ulp] = fields[..] else {
                return Err(err(format!("expected 4 tab-separated fields, found {}", fields.len())));
            };
            let parse = |s: &str, what: &str| s.trim().parse::<f64>().map_err(|_| err(format!("bad {what} {s:?}")));
            let stats = SentenceStats {
                log_prob: parse(lp, "log_prob")?,
                scored_length: len.trim().parse().map_err(|_| err(format!("bad scored_length {len:?}")))?,
                unigram_log_prob: parse(ulp, "unigram_log_prob")?,
            };
            check_external(&stats).map_err(err)?;
            if table.rows.insert(id.to_string(), stats).is_some() {
                return Err(err(format!("duplicate id {id:?}")));
            }
        }
        if !saw_header {
            return Err(ScoreError::Format { line: 1, message: "empty file".into() });
        }
        Ok(table)
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{EXTERNAL_HEADER}")?;
        for (id, s) in &self.rows {
            writeln!(w, "{id}\t{}\t{}\t{}", s.log_prob, s.scored_length, s.unigram_log_prob)?;
        }
        Ok(())
    }
}

fn check_external(s: &SentenceStats) -> Result<(), String> {
    if s.scored_length == 0 {
        return Err("scored_length must be positive".into());
    }
    if s.log_prob.is_nan() || s.log_prob > 0.0 || s.unigram_log_prob.is_nan() || s.unigram_log_prob > 0.0 {
        return Err("log-probabilities must be <= 0".into());
    }
    Ok(())
}

/// Where sentence log-probabilities come from.
#[derive(Debug, Clone, Copy)]
pub enum ScoreSource<'a> {
    Model(&'a NGramModel),
    External(&'a ExternalScoreTable),
}

/// Scores every `(id, sentence)` pair. In WordPiece space the sentence is
/// segmented first and `|S|` counts pieces; the model must then be a piece
/// model. External tables are used as given.
pub fn score_dataset(
    source: ScoreSource<'_>,
    sentences: &[(String, TokenSequence)],
    kind: ScoreKind,
    unit_space: UnitSpace,
    vocab: Option<&SubwordVocabulary>,
) -> Result<HashMap<String, FluencyScore>, ScoreError> {
    let mut out = HashMap::with_capacity(sentences.len());
    for (id, seq) in sentences {
        let stats = match source {
            ScoreSource::External(table) => {
                *table.get(id).ok_or_else(|| ScoreError::MissingExternalScore(id.clone()))?
            }
            ScoreSource::Model(model) => match unit_space {
                UnitSpace::Word => SentenceStats::from_model(model, seq.tokens())?,
                UnitSpace::WordPiece => {
                    let vocab = vocab.ok_or(ScoreError::MissingVocabulary)?;
                    SentenceStats::from_model(model, vocab.segment_sequence(seq).pieces())?
                }
            },
        };
        out.insert(id.clone(), FluencyScore { value: stats.score(kind)?, kind, unit_space });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ngram::TrainConfig;
    use crate::subword::learn_vocabulary;
    use crate::text::normalize;
    use proptest::prelude::*;

    #[test]
    fn slor_arithmetic() {
        assert_eq!(slor(-4.0, -6.0, 2).unwrap(), 1.0);
        assert_eq!(slor(-6.0, -6.0, 3).unwrap(), 0.0);
        assert!(matches!(slor(-1.0, -1.0, 0), Err(ScoreError::ZeroLength)));
    }

    #[test]
    fn nce_arithmetic() {
        assert_eq!(nce(-4.0, 2).unwrap(), -2.0);
        assert_eq!(nce(-3.25, 1).unwrap(), -3.25);
        assert_eq!(nce(0.0, 5).unwrap(), 0.0);
    }

    #[test]
    fn ppl_arithmetic() {
        assert_eq!(ppl(-4.0, 2).unwrap(), 2.0f64.exp());
        assert!((ppl(-4.0, 2).unwrap() - 7.3891).abs() < 1e-4);
        assert_eq!(ppl(0.0, 3).unwrap(), 1.0);
    }

    #[test]
    fn uniform_unigram_model_has_perplexity_equal_to_vocab_size() {
        // Four types (a, b, c, </s>) each seen exactly twice.
        let corpus: Vec<_> = ["a b c", "c b a"].iter().map(|s| normalize(s).unwrap()).collect();
        let m = NGramModel::train(&corpus, TrainConfig { order: 1, unk_threshold: 1, discount: 0.5 }).unwrap();
        for s in [vec!["a"], vec!["b", "c", "a", "a"]] {
            let p = ppl(m.sentence_logprob(&s).unwrap().log_prob, s.len() + 1).unwrap();
            assert!((p - 4.0).abs() < 1e-12, "{p}");
        }
    }

    fn word_sentences(lines: &[&str]) -> Vec<(String, TokenSequence)> {
        lines.iter().enumerate().map(|(i, l)| (format!("s{i}"), normalize(l).unwrap())).collect()
    }

    #[test]
    fn unigram_model_slor_collapses_to_zero() {
        let lines = ["the cat sat", "the dog ran away", "a cat ran"];
        let corpus: Vec<_> = lines.iter().map(|l| normalize(l).unwrap()).collect();
        let m = NGramModel::train(&corpus, TrainConfig { order: 1, ..Default::default() }).unwrap();
        let scores = score_dataset(
            ScoreSource::Model(&m),
            &word_sentences(&["the cat ran", "zebra"]),
            ScoreKind::Slor,
            UnitSpace::Word,
            None,
        )
        .unwrap();
        assert!(scores.values().all(|s| s.value == 0.0));
    }

    #[test]
    fn external_table_slor() {
        let mut t = ExternalScoreTable::new();
        t.insert("x", SentenceStats { log_prob: -4.0, scored_length: 2, unigram_log_prob: -6.0 }).unwrap();
        let sents = vec![("x".to_string(), normalize("whatever").unwrap())];
        let s = score_dataset(ScoreSource::External(&t), &sents, ScoreKind::Slor, UnitSpace::Word, None).unwrap();
        assert_eq!(s["x"].value, 1.0);

        let missing = vec![("y".to_string(), normalize("whatever").unwrap())];
        assert!(matches!(
            score_dataset(ScoreSource::External(&t), &missing, ScoreKind::Slor, UnitSpace::Word, None),
            Err(ScoreError::MissingExternalScore(id)) if id == "y"
        ));
    }

    #[test]
    fn wordpiece_scoring_needs_vocabulary_and_counts_pieces() {
        let lines = ["the cats sat", "the cat sits", "a cat sat on the mat"];
        let corpus: Vec<_> = lines.iter().map(|l| normalize(l).unwrap()).collect();
        let vocab = learn_vocabulary(&corpus, 30).unwrap();
        let pieces: Vec<_> = corpus.iter().map(|s| vocab.segment_sequence(s)).collect();
        let wp_model = NGramModel::train(&pieces, TrainConfig { order: 2, ..Default::default() }).unwrap();
        let word_model = NGramModel::train(&corpus, TrainConfig { order: 2, ..Default::default() }).unwrap();
        let sents = word_sentences(&["the cats sits"]);

        assert!(matches!(
            score_dataset(ScoreSource::Model(&wp_model), &sents, ScoreKind::Nce, UnitSpace::WordPiece, None),
            Err(ScoreError::MissingVocabulary)
        ));
        let wp =
            score_dataset(ScoreSource::Model(&wp_model), &sents, ScoreKind::Nce, UnitSpace::WordPiece, Some(&vocab))
                .unwrap();
        let seg = vocab.segment_sequence(&sents[0].1);
        let lp = wp_model.sentence_logprob(seg.pieces()).unwrap();
        assert_eq!(lp.scored_length, seg.len() + 1);
        assert_eq!(wp["s0"].value, lp.log_prob / lp.scored_length as f64);
        assert_eq!(wp["s0"].unit_space, UnitSpace::WordPiece);

        let word =
            score_dataset(ScoreSource::Model(&word_model), &sents, ScoreKind::Nce, UnitSpace::Word, None).unwrap();
        assert!(word["s0"].value.is_finite());
    }

    #[test]
    fn external_file_round_trip_and_errors() {
        let text = "#extscores v1\nb\t-3.5\t4\t-7\na\t-1\t1\t-2\n";
        let t = ExternalScoreTable::read(text.as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("b").unwrap().scored_length, 4);
        let mut out = Vec::new();
        t.write(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "#extscores v1\na\t-1\t1\t-2\nb\t-3.5\t4\t-7\n");

        for bad in [
            "a\t-1\t1\t-2\n",
            "#extscores v1\na\t-1\t1\n",
            "#extscores v1\na\t1\t1\t-2\n",
            "#extscores v1\na\t-1\t0\t-2\n",
            "#extscores v1\na\t-1\t1\t-2\na\t-1\t1\t-2\n",
        ] {
            assert!(matches!(ExternalScoreTable::read(bad.as_bytes()), Err(ScoreError::Format { .. })), "{bad:?}");
        }
    }

    #[test]
    fn metric_names() {
        assert_eq!(UnitSpace::Word.metric_name(ScoreKind::Slor), "WordSLOR");
        assert_eq!(UnitSpace::WordPiece.metric_name(ScoreKind::Ppl), "WPPPL");
        assert_eq!("NcE".parse::<ScoreKind>().unwrap(), ScoreKind::Nce);
    }

    proptest! {
        #[test]
        fn ppl_is_exp_of_negative_nce(lp in -500.0f64..0.0, len in 1usize..200) {
            prop_assert_eq!(ppl(lp, len).unwrap(), (-nce(lp, len).unwrap()).exp());
            prop_assert!(ppl(lp, len).unwrap() >= 1.0);
        }
    }
}
