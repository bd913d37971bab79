//! WordPiece-style subword vocabulary.
//!
//! Learning starts from the observed character alphabet and greedily applies
//! the adjacent-pair merge with the largest gain in corpus unigram
//! log-likelihood (pieces scored by their MLE frequency). Continuation pieces
//! carry a `##` prefix; a word-initial piece never starts with `##`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::text::{TextError, TokenSequence};

pub const UNK: &str = "<unk>";
pub const CONTINUATION_PREFIX: &str = "##";

const VOCAB_HEADER: &str = "#wpvocab v1";

#[derive(Debug, Error)]
pub enum SubwordError {
    #[error("training corpus is empty")]
    CorpusEmpty,
    #[error("target size {target} is below the character floor {floor}")]
    TargetTooSmall { target: usize, floor: usize },
    #[error("piece sequence contains <unk>; the original word is lost")]
    ContainsUnk,
    #[error("piece sequence is malformed: {0}")]
    Malformed(String),
    #[error("vocabulary format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<TextError> for SubwordError {
    fn from(e: TextError) -> Self {
        SubwordError::Malformed(e.to_string())
    }
}

fn is_continuation(piece: &str) -> bool {
    piece.starts_with(CONTINUATION_PREFIX)
}

/// Learned piece inventory, kept in insertion order (alphabet, `<unk>`,
/// then merges).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubwordVocabulary {
    pieces: Vec<String>,
    lookup: HashSet<String>,
    target_size: usize,
    max_piece_chars: usize,
}

impl SubwordVocabulary {
    fn from_pieces(pieces: Vec<String>, target_size: usize) -> Self {
        let lookup = pieces.iter().cloned().collect();
        let max_piece_chars =
            pieces.iter().map(|p| p.strip_prefix(CONTINUATION_PREFIX).unwrap_or(p).chars().count()).max().unwrap_or(1);
        Self { pieces, lookup, target_size, max_piece_chars }
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn target_size(&self) -> usize {
        self.target_size
    }

    pub fn contains(&self, piece: &str) -> bool {
        self.lookup.contains(piece)
    }

    /// Greedy longest-match segmentation of a single token. Falls back to a
    /// lone `<unk>` if any position cannot be matched.
    pub fn segment(&self, token: &str) -> PieceSequence {
        let chars: Vec<char> = token.chars().collect();
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let longest = (chars.len() - start).min(self.max_piece_chars);
            let mut matched = None;
            for width in (1..=longest).rev() {
                let surface: String = chars[start..start + width].iter().collect();
                let key = if start == 0 {
                    if is_continuation(&surface) {
                        continue;
                    }
                    surface
                } else {
                    format!("{CONTINUATION_PREFIX}{surface}")
                };
                if key != UNK && self.lookup.contains(&key) {
                    matched = Some((key, width));
                    break;
                }
            }
            match matched {
                Some((key, width)) => {
                    pieces.push(key);
                    start += width;
                }
                None => return PieceSequence { pieces: vec![UNK.to_string()] },
            }
        }
        PieceSequence { pieces }
    }

    /// Segments every token of `seq`, concatenating the pieces.
    pub fn segment_sequence(&self, seq: &TokenSequence) -> PieceSequence {
        let pieces = seq.iter().flat_map(|t| self.segment(t).pieces).collect();
        PieceSequence { pieces }
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{VOCAB_HEADER} target={}", self.target_size)?;
        for p in &self.pieces {
            writeln!(w, "{p}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, SubwordError> {
        let mut lines = r.lines();
        let header =
            lines.next().ok_or_else(|| SubwordError::Format { line: 1, message: "missing header".into() })??;
        let target_size = header
            .strip_prefix(VOCAB_HEADER)
            .and_then(|rest| rest.strip_prefix(" target="))
            .and_then(|n| n.parse::<usize>().ok())
            .ok_or_else(|| SubwordError::Format {
                line: 1,
                message: format!("expected `{VOCAB_HEADER} target=<N>`, got {header:?}"),
            })?;
        let mut pieces = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if line.is_empty() || line.chars().any(char::is_whitespace) || line == CONTINUATION_PREFIX {
                return Err(SubwordError::Format { line: lineno, message: format!("invalid piece {line:?}") });
            }
            if !seen.insert(line.clone()) {
                return Err(SubwordError::Format { line: lineno, message: format!("duplicate piece {line:?}") });
            }
            pieces.push(line);
        }
        if !seen.contains(UNK) {
            return Err(SubwordError::Format { line: 1, message: "vocabulary lacks <unk>".into() });
        }
        Ok(Self::from_pieces(pieces, target_size))
    }
}

/// Pieces of one or more words. A word starts at every piece without the
/// continuation prefix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PieceSequence {
    pieces: Vec<String>,
}

impl PieceSequence {
    pub fn new(pieces: Vec<String>) -> Result<Self, SubwordError> {
        match pieces.first() {
            None => Err(SubwordError::Malformed("empty piece sequence".into())),
            Some(p) if is_continuation(p) => {
                Err(SubwordError::Malformed(format!("sequence starts with continuation piece {p:?}")))
            }
            Some(_) => Ok(Self { pieces }),
        }
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    /// Number of pieces (`|S|` in WordPiece space).
    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn contains_unk(&self) -> bool {
        self.pieces.iter().any(|p| p == UNK)
    }

    /// Inverse of [`SubwordVocabulary::segment_sequence`] for `<unk>`-free
    /// sequences.
    pub fn reconstruct(&self) -> Result<TokenSequence, SubwordError> {
        if self.contains_unk() {
            return Err(SubwordError::ContainsUnk);
        }
        let mut words: Vec<String> = Vec::new();
        for p in &self.pieces {
            match p.strip_prefix(CONTINUATION_PREFIX) {
                Some(rest) => match words.last_mut() {
                    Some(w) => w.push_str(rest),
                    None => return Err(SubwordError::Malformed(format!("leading continuation {p:?}"))),
                },
                None => words.push(p.clone()),
            }
        }
        Ok(TokenSequence::new(words)?)
    }
}

impl AsRef<[String]> for PieceSequence {
    fn as_ref(&self) -> &[String] {
        &self.pieces
    }
}

/// One applied merge.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeStep {
    pub left: String,
    pub right: String,
    pub merged: String,
    pub pair_count: u64,
    pub gain: f64,
}

/// Merge history of a training run. `log_likelihoods[0]` is the character
/// segmentation; entry `i + 1` follows `merges[i]`.
#[derive(Debug, Clone, Default)]
pub struct LearnTrace {
    pub merges: Vec<MergeStep>,
    pub log_likelihoods: Vec<f64>,
}

fn xlogx(c: u64) -> f64 {
    if c == 0 {
        0.0
    } else {
        let c = c as f64;
        c * c.ln()
    }
}

/// Corpus log-likelihood under piece-frequency MLE: Σ c ln(c / N).
pub fn piece_log_likelihood<'a, I: IntoIterator<Item = &'a u64>>(counts: I) -> f64 {
    let mut total = 0u64;
    let mut acc = 0.0;
    for &c in counts {
        total += c;
        acc += xlogx(c);
    }
    acc - xlogx(total)
}

struct Word {
    pieces: Vec<String>,
    freq: u64,
}

fn character_split(word: &str) -> Vec<String> {
    word.chars()
        .enumerate()
        .map(|(i, c)| if i == 0 { c.to_string() } else { format!("{CONTINUATION_PREFIX}{c}") })
        .collect()
}

fn join_pieces(left: &str, right: &str) -> String {
    let mut merged = String::with_capacity(left.len() + right.len());
    merged.push_str(left);
    merged.push_str(right.strip_prefix(CONTINUATION_PREFIX).unwrap_or(right));
    merged
}

fn piece_counts(words: &[Word]) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    for w in words {
        for p in &w.pieces {
            *counts.entry(p.clone()).or_insert(0) += w.freq;
        }
    }
    counts
}

/// Pair counts as the left-to-right merge would realize them: in a run
/// `x x x` the pair `(x, x)` is only counted at non-overlapping positions.
fn pair_counts(words: &[Word]) -> BTreeMap<(String, String), u64> {
    let mut counts = BTreeMap::new();
    for w in words {
        let mut skip_next = false;
        for pair in w.pieces.windows(2) {
            if skip_next {
                skip_next = false;
                continue;
            }
            if pair[0] == pair[1] {
                skip_next = true;
            }
            *counts.entry((pair[0].clone(), pair[1].clone())).or_insert(0) += w.freq;
        }
    }
    counts
}

fn apply_merge(pieces: &mut Vec<String>, left: &str, right: &str, merged: &str) {
    let mut out = Vec::with_capacity(pieces.len());
    let mut i = 0;
    while i < pieces.len() {
        if i + 1 < pieces.len() && pieces[i] == left && pieces[i + 1] == right {
            out.push(merged.to_string());
            i += 2;
        } else {
            out.push(std::mem::take(&mut pieces[i]));
            i += 1;
        }
    }
    *pieces = out;
}

fn merge_gain(counts: &HashMap<String, u64>, total: u64, left: &str, right: &str, merged: &str, m: u64) -> f64 {
    let count = |p: &str| counts.get(p).copied().unwrap_or(0);
    let mut delta = 0.0;
    if left == right {
        let c = count(left);
        delta += xlogx(c - 2 * m) - xlogx(c);
    } else {
        let (cl, cr) = (count(left), count(right));
        delta += xlogx(cl - m) - xlogx(cl) + xlogx(cr - m) - xlogx(cr);
    }
    let cm = count(merged);
    delta += xlogx(cm + m) - xlogx(cm);
    delta - (xlogx(total - m) - xlogx(total))
}

/// Learns a vocabulary of (at most) `target_size` pieces.
pub fn learn_vocabulary(corpus: &[TokenSequence], target_size: usize) -> Result<SubwordVocabulary, SubwordError> {
    learn_vocabulary_traced(corpus, target_size).map(|(v, _)| v)
}

/// Like [`learn_vocabulary`], also returning the merge history.
pub fn learn_vocabulary_traced(
    corpus: &[TokenSequence],
    target_size: usize,
) -> Result<(SubwordVocabulary, LearnTrace), SubwordError> {
    if corpus.is_empty() {
        return Err(SubwordError::CorpusEmpty);
    }
    let mut word_freq: BTreeMap<&str, u64> = BTreeMap::new();
    for seq in corpus {
        for t in seq.iter() {
            *word_freq.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let distinct_chars: BTreeSet<char> = word_freq.keys().flat_map(|w| w.chars()).collect();
    let floor = distinct_chars.len() * 2;
    if target_size < floor {
        return Err(SubwordError::TargetTooSmall { target: target_size, floor });
    }

    let mut words: Vec<Word> = word_freq.iter().map(|(w, &freq)| Word { pieces: character_split(w), freq }).collect();

    let alphabet: BTreeSet<String> = words.iter().flat_map(|w| w.pieces.iter().cloned()).collect();
    let mut pieces: Vec<String> = alphabet.into_iter().collect();
    pieces.push(UNK.to_string());
    let mut in_vocab: HashSet<String> = pieces.iter().cloned().collect();

    let mut counts = piece_counts(&words);
    let mut total: u64 = counts.values().sum();
    let mut trace = LearnTrace { merges: Vec::new(), log_likelihoods: vec![piece_log_likelihood(counts.values())] };

    while pieces.len() < target_size {
        let mut best: Option<MergeStep> = None;
        for ((left, right), &m) in &pair_counts(&words) {
            let merged = join_pieces(left, right);
            if merged == UNK || (!is_continuation(left) && is_continuation(&merged)) {
                continue;
            }
            let gain = merge_gain(&counts, total, left, right, &merged, m);
            // Candidates arrive in lexicographic pair order, so a strict
            // comparison keeps the smallest pair among exact ties.
            let better = match &best {
                None => true,
                Some(b) => gain > b.gain || (gain == b.gain && m > b.pair_count),
            };
            if better {
                best = Some(MergeStep { left: left.clone(), right: right.clone(), merged, pair_count: m, gain });
            }
        }
        let Some(step) = best.filter(|s| s.gain > 0.0) else {
            break;
        };
        for w in &mut words {
            apply_merge(&mut w.pieces, &step.left, &step.right, &step.merged);
        }
        counts = piece_counts(&words);
        total = counts.values().sum();
        trace.log_likelihoods.push(piece_log_likelihood(counts.values()));
        if in_vocab.insert(step.merged.clone()) {
            pieces.push(step.merged.clone());
        }
        trace.merges.push(step);
    }

    Ok((SubwordVocabulary::from_pieces(pieces, target_size), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::normalize;

    fn corpus(lines: &[&str]) -> Vec<TokenSequence> {
        lines.iter().map(|l| normalize(l).unwrap()).collect()
    }

    fn repeat(line: &str, n: usize) -> Vec<TokenSequence> {
        (0..n).map(|_| normalize(line).unwrap()).collect()
    }

    fn vocab_of(pieces: &[&str]) -> SubwordVocabulary {
        let mut v: Vec<String> = pieces.iter().map(|p| p.to_string()).collect();
        v.push(UNK.into());
        SubwordVocabulary::from_pieces(v, 100)
    }

    #[test]
    fn repeated_word_merges_into_whole_word() {
        let (vocab, trace) = learn_vocabulary_traced(&repeat("abab", 100), 50).unwrap();
        assert!(vocab.contains("abab"), "{:?}", vocab.pieces());
        assert_eq!(vocab.segment("abab").pieces(), ["abab"]);
        assert!(trace.merges.iter().all(|m| m.gain > 0.0));
    }

    #[test]
    fn single_character_corpus_has_no_merges() {
        let (vocab, trace) = learn_vocabulary_traced(&corpus(&["a"]), 2).unwrap();
        let mut pieces: Vec<&str> = vocab.pieces().iter().map(String::as_str).collect();
        pieces.sort();
        assert_eq!(pieces, ["<unk>", "a"]);
        assert!(trace.merges.is_empty());
    }

    #[test]
    fn equal_gain_pairs_are_both_merged() {
        let mut c = repeat("ab", 3);
        c.extend(repeat("cd", 3));
        let floor = 4 * 2;
        let (vocab, trace) = learn_vocabulary_traced(&c, floor + 2).unwrap();
        assert!(vocab.contains("ab") && vocab.contains("cd"));
        // ab sorts first among the tied candidates.
        assert_eq!(trace.merges[0].merged, "ab");
        assert_eq!(trace.merges[1].merged, "cd");
    }

    #[test]
    fn target_below_floor_and_empty_corpus_fail() {
        assert!(matches!(
            learn_vocabulary(&corpus(&["abc"]), 5),
            Err(SubwordError::TargetTooSmall { target: 5, floor: 6 })
        ));
        assert!(matches!(learn_vocabulary(&[], 10), Err(SubwordError::CorpusEmpty)));
    }

    #[test]
    fn greedy_longest_match() {
        let v = vocab_of(&["h", "he", "##l", "##llo", "##o", "a"]);
        assert_eq!(v.segment("hello").pieces(), ["he", "##llo"]);
        assert_eq!(v.segment("a").pieces(), ["a"]);
        assert_eq!(v.segment("qx").pieces(), ["<unk>"]);
        // Unmatched tail also collapses to <unk>.
        assert_eq!(v.segment("hez").pieces(), ["<unk>"]);
    }

    #[test]
    fn sequence_segmentation_and_reconstruction() {
        let v = vocab_of(&["the", "cat", "he", "##llo", "a"]);
        let s = normalize("the cat").unwrap();
        let p = v.segment_sequence(&s);
        assert_eq!(p.pieces(), ["the", "cat"]);
        assert_eq!(p.reconstruct().unwrap(), s);

        let s = normalize("hello a").unwrap();
        let p = v.segment_sequence(&s);
        assert_eq!(p.pieces(), ["he", "##llo", "a"]);
        assert_eq!(p.reconstruct().unwrap(), s);

        let s = normalize("a").unwrap();
        assert_eq!(v.segment_sequence(&s).reconstruct().unwrap(), s);
    }

    #[test]
    fn reconstruct_flags_unk() {
        let v = vocab_of(&["a"]);
        let p = v.segment_sequence(&normalize("a zz").unwrap());
        assert!(p.contains_unk());
        assert!(matches!(p.reconstruct(), Err(SubwordError::ContainsUnk)));
    }

    #[test]
    fn piece_sequence_rejects_leading_continuation() {
        assert!(PieceSequence::new(vec!["##a".into()]).is_err());
        assert!(PieceSequence::new(vec![]).is_err());
    }

    #[test]
    fn hash_prefixed_words_stay_unambiguous() {
        let c = repeat("##x #", 20);
        let v = learn_vocabulary(&c, 40).unwrap();
        assert!(v.pieces().iter().all(|p| p != CONTINUATION_PREFIX));
        for w in ["##x", "#"] {
            let seq = normalize(w).unwrap();
            let p = v.segment_sequence(&seq);
            assert!(!p.contains_unk());
            assert_eq!(p.reconstruct().unwrap(), seq);
        }
    }

    /// Gain reported for each merge equals the likelihood difference measured
    /// by re-segmenting from scratch.
    #[test]
    fn incremental_gain_matches_recomputed_likelihood() {
        let c = corpus(&["the cat sat on the mat", "a cat and a hat", "that hat is flat", "banana bandana"]);
        let (_, trace) = learn_vocabulary_traced(&c, 60).unwrap();
        assert!(!trace.merges.is_empty());
        for (i, step) in trace.merges.iter().enumerate() {
            let diff = trace.log_likelihoods[i + 1] - trace.log_likelihoods[i];
            assert!((diff - step.gain).abs() < 1e-9, "step {i}: {diff} vs {}", step.gain);
            assert!(diff >= 0.0);
        }
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let c = corpus(&["the cat sat on the mat", "a cat and a hat"]);
        let v = learn_vocabulary(&c, 40).unwrap();
        let mut buf = Vec::new();
        v.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("#wpvocab v1 target=40\n"));
        let back = SubwordVocabulary::read(buf.as_slice()).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn vocabulary_file_errors() {
        assert!(matches!(SubwordVocabulary::read("nope\n".as_bytes()), Err(SubwordError::Format { line: 1, .. })));
        let dup = "#wpvocab v1 target=3\na\na\n<unk>\n";
        assert!(matches!(SubwordVocabulary::read(dup.as_bytes()), Err(SubwordError::Format { line: 3, .. })));
        let no_unk = "#wpvocab v1 target=3\na\n";
        assert!(SubwordVocabulary::read(no_unk.as_bytes()).is_err());
    }
}
