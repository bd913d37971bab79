//! Interpolated Kneser-Ney n-gram language model.
//!
//! Training produces, for every order `k`, the interpolated probability of
//! each k-gram with a positive (continuation) count plus a backoff weight for
//! every k-gram that serves as a history. With those tables a lookup is the
//! usual ARPA walk: `p(w|h) = p*(hw)` if stored, else `bow(h) * p(w|h')`, which
//! for interpolated KN is exact rather than an approximation.
//!
//! An order-1 model is the plain MLE unigram distribution, identical to the
//! model's unigram table, so SLOR collapses to exactly zero for it.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::subword::UNK;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

const MODEL_HEADER: &str = "#nglm v1";

const BOS_ID: u32 = 0;
const EOS_ID: u32 = 1;
const UNK_ID: u32 = 2;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("training corpus is empty")]
    CorpusEmpty,
    #[error("discount must lie in (0, 1), got {0}")]
    InvalidDiscount(f64),
    #[error("order must be at least 1")]
    InvalidOrder,
    #[error("cannot score an empty sequence")]
    EmptySequence,
    #[error("model format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub order: usize,
    /// Tokens seen fewer times than this are mapped to `<unk>`.
    pub unk_threshold: u64,
    pub discount: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { order: 3, unk_threshold: 1, discount: 0.75 }
    }
}

/// Log-probability of one sequence, including the end-of-sentence event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentenceLogProb {
    pub log_prob: f64,
    /// Number of prediction events: tokens plus the terminator.
    pub scored_length: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    log_prob: f64,
    backoff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    discount: f64,
    words: Vec<String>,
    ids: HashMap<String, u32>,
    /// `tables[k - 1]` holds k-grams.
    tables: Vec<HashMap<Vec<u32>, Entry>>,
    unigram_mle: HashMap<u32, f64>,
    events: u64,
}

fn xid(ids: &HashMap<String, u32>, token: &str) -> u32 {
    ids.get(token).copied().filter(|&id| id != BOS_ID).unwrap_or(UNK_ID)
}

impl NGramModel {
    pub fn train<S: AsRef<[String]>>(corpus: &[S], config: TrainConfig) -> Result<Self, LmError> {
        let TrainConfig { order, unk_threshold, discount } = config;
        if order == 0 {
            return Err(LmError::InvalidOrder);
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(LmError::InvalidDiscount(discount));
        }
        if corpus.is_empty() || corpus.iter().all(|s| s.as_ref().is_empty()) {
            return Err(LmError::CorpusEmpty);
        }

        let mut raw_counts: BTreeMap<&str, u64> = BTreeMap::new();
        for s in corpus {
            for t in s.as_ref() {
                *raw_counts.entry(t.as_str()).or_insert(0) += 1;
            }
        }
        let mut words = vec![BOS.to_string(), EOS.to_string(), UNK.to_string()];
        for (&t, &c) in &raw_counts {
            if c >= unk_threshold && t != BOS && t != EOS && t != UNK {
                words.push(t.to_string());
            }
        }
        let ids: HashMap<String, u32> = words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();

        // Raw counts of every k-gram suffix of every prediction event.
        let pad = order - 1;
        let mut raw: Vec<HashMap<Vec<u32>, u64>> = vec![HashMap::new(); order];
        let mut events = 0u64;
        for s in corpus {
            let tokens = s.as_ref();
            if tokens.is_empty() {
                continue;
            }
            let mut seq = vec![BOS_ID; pad];
            seq.extend(tokens.iter().map(|t| xid(&ids, t)));
            seq.push(EOS_ID);
            for i in pad..seq.len() {
                events += 1;
                for k in 1..=order {
                    *raw[k - 1].entry(seq[i + 1 - k..=i].to_vec()).or_insert(0) += 1;
                }
            }
        }

        let unigram_mle: HashMap<u32, f64> =
            raw[0].iter().map(|(g, &c)| (g[0], (c as f64 / events as f64).ln())).collect();

        let mut model = Self { order, discount, words, ids, tables: vec![HashMap::new(); order], unigram_mle, events };

        if order == 1 {
            model.tables[0] =
                model.unigram_mle.iter().map(|(&w, &lp)| (vec![w], Entry { log_prob: lp, backoff: None })).collect();
            return Ok(model);
        }

        let adjusted = adjusted_counts(&raw);
        let stats: Vec<HashMap<Vec<u32>, (f64, usize)>> = adjusted
            .iter()
            .map(|counts| {
                let mut s: HashMap<Vec<u32>, (f64, usize)> = HashMap::new();
                for (g, &c) in counts {
                    let e = s.entry(g[..g.len() - 1].to_vec()).or_insert((0.0, 0));
                    e.0 += c;
                    e.1 += 1;
                }
                s
            })
            .collect();
        let kn = KnCounts { adjusted: &adjusted, history: &stats, discount, vocab_size: model.words.len() - 1 };

        for k in 1..=order {
            let table = &mut model.tables[k - 1];
            let grams: Vec<&Vec<u32>> = if k == 1 {
                // Every predictable token needs a unigram entry so lookups
                // always terminate.
                Vec::new()
            } else {
                adjusted[k - 1].keys().collect()
            };
            for g in grams {
                let p = kn.prob(k, &g[..k - 1], g[k - 1]);
                table.insert(g.clone(), Entry { log_prob: p.ln(), backoff: None });
            }
            if k == 1 {
                for w in 1..model.words.len() as u32 {
                    let p = kn.prob(1, &[], w);
                    table.insert(vec![w], Entry { log_prob: p.ln(), backoff: None });
                }
            }
        }
        for k in 2..=order {
            for (h, &(denom, distinct)) in &stats[k - 1] {
                let bow = (discount * distinct as f64 / denom).ln();
                model.tables[k - 2]
                    .entry(h.clone())
                    .or_insert(Entry { log_prob: f64::NEG_INFINITY, backoff: None })
                    .backoff = Some(bow);
            }
        }
        Ok(model)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Number of prediction events in the training corpus.
    pub fn training_events(&self) -> u64 {
        self.events
    }

    fn id(&self, token: &str) -> u32 {
        xid(&self.ids, token)
    }

    /// Tokens the model can predict: `</s>`, `<unk>` and the in-vocabulary
    /// types. For an order-1 model only types with nonzero MLE mass.
    pub fn predictable_tokens(&self) -> Vec<&str> {
        let mut out: Vec<&str> = if self.order == 1 {
            self.unigram_mle.keys().map(|&w| self.words[w as usize].as_str()).collect()
        } else {
            self.words[1..].iter().map(String::as_str).collect()
        };
        out.sort_unstable();
        out
    }

    /// Full-length (order − 1) histories observed in training.
    pub fn observed_histories(&self) -> Vec<Vec<&str>> {
        let mut out: Vec<Vec<&str>> = self.tables[self.order - 1]
            .keys()
            .map(|g| g[..g.len() - 1].iter().map(|&i| self.words[i as usize].as_str()).collect())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Log-probability assigned to `<unk>` when it never occurred in
    /// training: one pseudo-observation, `ln(1 / (N + 1))`.
    pub fn unk_floor(&self) -> f64 {
        -((self.events + 1) as f64).ln()
    }

    fn lookup(&self, history: &[u32], w: u32) -> f64 {
        let mut backoff = 0.0;
        for start in 0..=history.len() {
            let ctx = &history[start..];
            let mut key = ctx.to_vec();
            key.push(w);
            if let Some(e) = self.tables[key.len() - 1].get(&key) {
                if e.log_prob.is_finite() {
                    return backoff + e.log_prob;
                }
            }
            if !ctx.is_empty() {
                if let Some(bow) = self.tables[ctx.len() - 1].get(ctx).and_then(|e| e.backoff) {
                    backoff += bow;
                }
            }
        }
        // Only reachable for an order-1 model without any <unk> mass.
        backoff + self.unk_floor()
    }

    /// `ln p(token | history)`; the history is truncated to the model order
    /// and unknown tokens are mapped to `<unk>`.
    pub fn conditional_log_prob<S: AsRef<str>>(&self, history: &[S], token: &str) -> f64 {
        let keep = history.len().min(self.order - 1);
        let ids: Vec<u32> = history[history.len() - keep..]
            .iter()
            .map(|t| if t.as_ref() == BOS { BOS_ID } else { self.id(t.as_ref()) })
            .collect();
        let w = if token == EOS { EOS_ID } else { self.id(token) };
        self.lookup(&ids, w)
    }

    fn event_ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        let mut seq = vec![BOS_ID; self.order - 1];
        seq.extend(tokens.iter().map(|t| self.id(t.as_ref())));
        seq.push(EOS_ID);
        seq
    }

    /// Natural-log probability of `tokens` followed by `</s>`.
    pub fn sentence_logprob<S: AsRef<str>>(&self, tokens: &[S]) -> Result<SentenceLogProb, LmError> {
        if tokens.is_empty() {
            return Err(LmError::EmptySequence);
        }
        let seq = self.event_ids(tokens);
        let pad = self.order - 1;
        let mut log_prob = 0.0;
        for i in pad..seq.len() {
            log_prob += self.lookup(&seq[i - pad..i], seq[i]);
        }
        Ok(SentenceLogProb { log_prob, scored_length: seq.len() - pad })
    }

    /// Σ ln p(t) under the MLE unigram table over the same events as
    /// [`Self::sentence_logprob`].
    pub fn unigram_logprob<S: AsRef<str>>(&self, tokens: &[S]) -> Result<f64, LmError> {
        if tokens.is_empty() {
            return Err(LmError::EmptySequence);
        }
        let seq = self.event_ids(tokens);
        Ok(seq[self.order - 1..].iter().map(|w| self.unigram_token_log_prob(*w)).sum())
    }

    fn unigram_token_log_prob(&self, w: u32) -> f64 {
        self.unigram_mle.get(&w).copied().unwrap_or_else(|| self.unk_floor())
    }

    /// `ln p(t)` from the MLE unigram table.
    pub fn unigram_log_prob(&self, token: &str) -> f64 {
        let w = if token == EOS { EOS_ID } else { self.id(token) };
        self.unigram_token_log_prob(w)
    }

    fn gram_string(&self, g: &[u32]) -> String {
        g.iter().map(|&i| self.words[i as usize].as_str()).collect::<Vec<_>>().join(" ")
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{MODEL_HEADER} order={} discount={}", self.order, self.discount)?;
        writeln!(w, "\\unigram-mle events={}", self.events)?;
        let mut mle: Vec<(&str, f64)> =
            self.unigram_mle.iter().map(|(&i, &lp)| (self.words[i as usize].as_str(), lp)).collect();
        mle.sort_by(|a, b| a.0.cmp(b.0));
        for (t, lp) in mle {
            writeln!(w, "{lp}\t{t}")?;
        }
        for (k, table) in self.tables.iter().enumerate() {
            writeln!(w, "\\{}-grams", k + 1)?;
            let mut rows: Vec<(String, &Entry)> = table.iter().map(|(g, e)| (self.gram_string(g), e)).collect();
            rows.sort_by(|a, b| a.0.cmp(&b.0));
            for (g, e) in rows {
                match e.backoff {
                    Some(b) => writeln!(w, "{}\t{g}\t{b}", e.log_prob)?,
                    None => writeln!(w, "{}\t{g}", e.log_prob)?,
                }
            }
        }
        writeln!(w, "\\end")
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, LmError> {
        ModelReader::default().read(r)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), LmError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, LmError> {
        let f = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(f))
    }
}

/// Kneser-Ney adjusted counts: raw counts at the top order and for n-grams
/// beginning with `<s>`, left-continuation counts N1+(• g) otherwise.
fn adjusted_counts(raw: &[HashMap<Vec<u32>, u64>]) -> Vec<HashMap<Vec<u32>, f64>> {
    let order = raw.len();
    let mut out = Vec::with_capacity(order);
    for k in 1..=order {
        let mut adj: HashMap<Vec<u32>, f64> = HashMap::new();
        if k == order {
            for (g, &c) in &raw[k - 1] {
                adj.insert(g.clone(), c as f64);
            }
        } else {
            for (g, &c) in &raw[k - 1] {
                if g[0] == BOS_ID {
                    adj.insert(g.clone(), c as f64);
                }
            }
            for g in raw[k].keys() {
                let suffix = &g[1..];
                if suffix[0] != BOS_ID {
                    *adj.entry(suffix.to_vec()).or_insert(0.0) += 1.0;
                }
            }
        }
        out.push(adj);
    }
    out
}

struct KnCounts<'a> {
    adjusted: &'a [HashMap<Vec<u32>, f64>],
    /// Per order: history → (Σ adjusted counts, number of distinct followers).
    history: &'a [HashMap<Vec<u32>, (f64, usize)>],
    discount: f64,
    vocab_size: usize,
}

impl KnCounts<'_> {
    fn prob(&self, k: usize, history: &[u32], w: u32) -> f64 {
        if k == 0 {
            return 1.0 / self.vocab_size as f64;
        }
        let lower = self.prob(k - 1, &history[history.len().min(1)..], w);
        match self.history[k - 1].get(history) {
            None => lower,
            Some(&(denom, distinct)) => {
                let mut key = history.to_vec();
                key.push(w);
                let c = self.adjusted[k - 1].get(&key).copied().unwrap_or(0.0);
                ((c - self.discount).max(0.0) + self.discount * distinct as f64 * lower) / denom
            }
        }
    }
}

#[derive(Default)]
struct ModelReader {
    line: usize,
}

impl ModelReader {
    fn err(&self, message: impl Into<String>) -> LmError {
        LmError::Format { line: self.line, message: message.into() }
    }

    fn parse_log_prob(&self, s: &str) -> Result<f64, LmError> {
        let v: f64 = s.parse().map_err(|_| self.err(format!("bad log-probability {s:?}")))?;
        if v.is_nan() || v > 0.0 {
            return Err(self.err(format!("log-probability {v} outside (-inf, 0]")));
        }
        Ok(v)
    }

    fn read<R: BufRead>(&mut self, r: R) -> Result<NGramModel, LmError> {
        let mut lines = r.lines();
        let mut next = |this: &mut Self| -> Result<Option<String>, LmError> {
            this.line += 1;
            Ok(lines.next().transpose()?)
        };

        let header = next(self)?.ok_or_else(|| self.err("missing header"))?;
        let (order, discount) = header
            .strip_prefix(MODEL_HEADER)
            .and_then(|rest| rest.strip_prefix(" order="))
            .and_then(|rest| rest.split_once(" discount="))
            .and_then(|(o, d)| Some((o.parse::<usize>().ok()?, d.parse::<f64>().ok()?)))
            .ok_or_else(|| self.err(format!("expected `{MODEL_HEADER} order=<n> discount=<d>`")))?;
        if order == 0 {
            return Err(self.err("order must be at least 1"));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(self.err("discount must lie in (0, 1)"));
        }

        let mle_header = next(self)?.ok_or_else(|| self.err("missing unigram-mle block"))?;
        let events: u64 = mle_header
            .strip_prefix("\\unigram-mle events=")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| self.err("expected `\\unigram-mle events=<N>`"))?;

        let mut words = vec![BOS.to_string(), EOS.to_string(), UNK.to_string()];
        let mut ids: HashMap<String, u32> = words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        let mut intern = |t: &str| -> u32 {
            if let Some(&id) = ids.get(t) {
                return id;
            }
            let id = words.len() as u32;
            words.push(t.to_string());
            ids.insert(t.to_string(), id);
            id
        };

        let mut unigram_mle = HashMap::new();
        let mut tables: Vec<HashMap<Vec<u32>, Entry>> = Vec::new();
        let mut line = next(self)?;
        while let Some(l) = line.as_deref() {
            if l.starts_with('\\') {
                break;
            }
            let (lp, tok) = l.split_once('\t').ok_or_else(|| self.err("expected `logprob<TAB>token`"))?;
            let lp = self.parse_log_prob(lp)?;
            if tok.is_empty() || tok.contains(char::is_whitespace) || tok == BOS {
                return Err(self.err(format!("bad unigram token {tok:?}")));
            }
            unigram_mle.insert(intern(tok), lp);
            line = next(self)?;
        }

        for k in 1..=order {
            let expected = format!("\\{k}-grams");
            if line.as_deref() != Some(expected.as_str()) {
                return Err(self.err(format!("expected `{expected}`")));
            }
            let mut table = HashMap::new();
            line = next(self)?;
            while let Some(l) = line.as_deref() {
                if l.starts_with('\\') {
                    break;
                }
                let fields: Vec<&str> = l.split('\t').collect();
                if !(2..=3).contains(&fields.len()) {
                    return Err(self.err("expected `logprob<TAB>ngram[<TAB>backoff]`"));
                }
                let log_prob = self.parse_log_prob(fields[0])?;
                let gram: Vec<u32> = fields[1].split(' ').map(&mut intern).collect();
                if gram.len() != k || fields[1].split(' ').any(str::is_empty) {
                    return Err(self.err(format!("expected a {k}-gram, got {:?}", fields[1])));
                }
                let backoff = match fields.get(2) {
                    Some(b) => Some(
                        b.parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| self.err(format!("bad backoff {b:?}")))?,
                    ),
                    None => None,
                };
                if table.insert(gram, Entry { log_prob, backoff }).is_some() {
                    return Err(self.err(format!("duplicate n-gram {:?}", fields[1])));
                }
                line = next(self)?;
            }
            tables.push(table);
        }
        if line.as_deref() != Some("\\end") {
            return Err(self.err("expected `\\end`"));
        }
        if let Some(extra) = next(self)? {
            return Err(self.err(format!("trailing content {extra:?}")));
        }
        Ok(NGramModel { order, discount, words, ids, tables, unigram_mle, events })
    }
}
