//! Independent recomputation of interpolated Kneser-Ney probabilities from
//! raw counts, compared against the trained model's table walk.

use std::collections::{BTreeMap, BTreeSet};

use fluency_core::{NGramModel, TokenSequence, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Gram = Vec<String>;

struct Oracle {
    order: usize,
    discount: f64,
    vocab: Vec<String>,
    raw: Vec<BTreeMap<Gram, f64>>,
}

impl Oracle {
    fn new(corpus: &[Vec<String>], order: usize, discount: f64) -> Self {
        let mut vocab: BTreeSet<String> = ["</s>", "<unk>"].iter().map(|s| s.to_string()).collect();
        let mut raw = vec![BTreeMap::new(); order + 1];
        for s in corpus {
            vocab.extend(s.iter().cloned());
            let mut seq: Gram = vec!["<s>".into(); order - 1];
            seq.extend(s.iter().cloned());
            seq.push("</s>".into());
            for i in order - 1..seq.len() {
                for k in 1..=order {
                    *raw[k].entry(seq[i + 1 - k..=i].to_vec()).or_insert(0.0) += 1.0;
                }
            }
        }
        Self { order, discount, vocab: vocab.into_iter().collect(), raw }
    }

    fn adjusted(&self, g: &[String]) -> f64 {
        let k = g.len();
        if k == self.order || g[0] == "<s>" {
            return self.raw[k].get(g).copied().unwrap_or(0.0);
        }
        self.raw[k + 1].keys().filter(|longer| longer[1..] == *g).count() as f64
    }

    fn prob(&self, history: &[String], w: &str) -> f64 {
        let lower = if history.is_empty() { 1.0 / self.vocab.len() as f64 } else { self.prob(&history[1..], w) };
        let mut denom = 0.0;
        let mut distinct = 0.0;
        for v in &self.vocab {
            let mut g = history.to_vec();
            g.push(v.clone());
            let c = self.adjusted(&g);
            denom += c;
            if c > 0.0 {
                distinct += 1.0;
            }
        }
        if denom == 0.0 {
            return lower;
        }
        let mut g = history.to_vec();
        g.push(w.to_string());
        ((self.adjusted(&g) - self.discount).max(0.0) + self.discount * distinct * lower) / denom
    }
}

fn random_corpus(seed: u64, sentences: usize) -> Vec<Vec<String>> {
    let words = ["the", "cat", "dog", "sat", "on", "mat", "a", "ran"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..sentences)
        .map(|_| {
            let len = rng.random_range(1..=6);
            (0..len).map(|_| words[rng.random_range(0..words.len())].to_string()).collect()
        })
        .collect()
}

fn histories(vocab: &[String], order: usize) -> Vec<Gram> {
    let mut contexts: Vec<String> = vec!["<s>".into()];
    contexts.extend(vocab.iter().filter(|v| *v != "</s>").cloned());
    let mut out: Vec<Gram> = vec![Vec::new()];
    for _ in 0..order - 1 {
        out = out.iter().flat_map(|h| contexts.iter().map(move |c| [h.clone(), vec![c.clone()]].concat())).collect();
    }
    out
}

#[test]
fn kn_probabilities_match_independent_oracle() {
    for (order, seed) in [(2, 1), (3, 2), (3, 3)] {
        let corpus = random_corpus(seed, 25);
        let seqs: Vec<TokenSequence> = corpus.iter().map(|s| TokenSequence::new(s.clone()).unwrap()).collect();
        let model = NGramModel::train(&seqs, TrainConfig { order, unk_threshold: 1, discount: 0.75 }).unwrap();
        let oracle = Oracle::new(&corpus, order, 0.75);
        for h in histories(&oracle.vocab, order) {
            for w in &oracle.vocab {
                let expected = oracle.prob(&h, w).ln();
                let got = model.conditional_log_prob(&h, w);
                assert!((expected - got).abs() < 1e-10, "order {order} p({w}|{h:?}): oracle {expected}, model {got}");
            }
        }
    }
}

#[test]
fn every_history_normalizes() {
    let corpus = random_corpus(9, 100);
    let seqs: Vec<TokenSequence> = corpus.iter().map(|s| TokenSequence::new(s.clone()).unwrap()).collect();
    let model = NGramModel::train(&seqs, TrainConfig::default()).unwrap();
    let predictable = model.predictable_tokens();
    let mut all = histories(&Oracle::new(&corpus, 3, 0.75).vocab, 3);
    all.extend(model.observed_histories().into_iter().map(|h| h.into_iter().map(String::from).collect()));
    for h in all {
        let total: f64 = predictable.iter().map(|w| model.conditional_log_prob(&h, w).exp()).sum();
        assert!((total - 1.0).abs() < 1e-9, "history {h:?} sums to {total}");
    }
}

#[test]
fn higher_order_fits_training_data_better() {
    let corpus = random_corpus(4, 40);
    let seqs: Vec<TokenSequence> = corpus.iter().map(|s| TokenSequence::new(s.clone()).unwrap()).collect();
    let total = |order| {
        let m = NGramModel::train(&seqs, TrainConfig { order, unk_threshold: 1, discount: 0.75 }).unwrap();
        seqs.iter().map(|s| m.sentence_logprob(s.tokens()).unwrap().log_prob).sum::<f64>()
    };
    let (uni, bi, tri) = (total(1), total(2), total(3));
    assert!(bi >= uni && tri >= uni, "{uni} {bi} {tri}");
}
