use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    /// `None` takes every remaining id.
    pub test: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

/// Shuffles `ids` with a ChaCha8 stream seeded from `seed`, then slices off
/// train, dev and test in that order.
pub fn split_dataset(ids: &[String], sizes: SplitSizes, seed: u64) -> Result<Split, HarnessError> {
    let n = ids.len();
    let fixed = sizes.train + sizes.dev;
    let test = sizes.test.unwrap_or(n.saturating_sub(fixed));
    let requested = fixed + test;
    if requested > n {
        return Err(HarnessError::SizesExceedDataset { requested, available: n });
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut rest = shuffled.into_iter();
    let train = rest.by_ref().take(sizes.train).collect();
    let dev = rest.by_ref().take(sizes.dev).collect();
    let test = rest.take(test).collect();
    Ok(Split { seed, train, dev, test })
}
