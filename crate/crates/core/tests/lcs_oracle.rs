use fluency_core::overlap::{lcs_length, rouge_l, rouge_l_multi};
use fluency_core::TokenSequence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn is_subsequence(needle: &[u8], hay: &[u8]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|c| it.any(|h| h == c))
}

/// Longest subsequence of `a` (found by trying all 2^|a| subsets) that is
/// also a subsequence of `b`.
fn brute_lcs(a: &[u8], b: &[u8]) -> usize {
    (0u32..1 << a.len())
        .map(|mask| a.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &c)| c).collect::<Vec<_>>())
        .filter(|sub| is_subsequence(sub, b))
        .map(|sub| sub.len())
        .max()
        .unwrap_or(0)
}

fn random_seq(rng: &mut ChaCha8Rng, max_len: usize, alphabet: u8) -> Vec<u8> {
    let len = rng.random_range(0..=max_len);
    (0..len).map(|_| rng.random_range(0..alphabet)).collect()
}

#[test]
fn dp_matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let a = random_seq(&mut rng, 8, 3);
        let b = random_seq(&mut rng, 8, 3);
        assert_eq!(lcs_length(&a, &b), brute_lcs(&a, &b), "{a:?} vs {b:?}");
        assert_eq!(lcs_length(&a, &b), lcs_length(&b, &a));
    }
}

fn words(rng: &mut ChaCha8Rng) -> TokenSequence {
    let vocab = ["a", "b", "c", "d", "e"];
    let len = rng.random_range(1..=10);
    TokenSequence::new((0..len).map(|_| vocab[rng.random_range(0..vocab.len())].to_string()).collect()).unwrap()
}

#[test]
fn multi_reference_dominates_each_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let cand = words(&mut rng);
        let n = rng.random_range(1..=5);
        let refs: Vec<TokenSequence> = (0..n).map(|_| words(&mut rng)).collect();
        let best = rouge_l_multi(&cand, &refs).unwrap();
        for r in &refs {
            assert!(best.f_score >= rouge_l(&cand, r).f_score);
        }
    }
}
