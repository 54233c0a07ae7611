//! Subset-weighted sampling with replacement.
//!
//! One epoch is `Σ_subset weight × size` draws and each draw picks clip `i`
//! with probability proportional to its subset's weight, so every clip is
//! expected to appear `weight` times per epoch.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct WeightedSampler {
    subsets: Vec<String>,
    dist: WeightedIndex<f64>,
    epoch_len: usize,
}

impl WeightedSampler {
    /// `subsets[i]` is the subset of clip `i`.
    pub fn new(subsets: &[String], weights: &BTreeMap<String, f64>) -> Result<Self> {
        if subsets.is_empty() {
            return Err(Error::Config("cannot sample from an empty manifest".into()));
        }
        let w: Vec<f64> = subsets
            .iter()
            .map(|s| {
                weights
                    .get(s)
                    .copied()
                    .filter(|w| *w > 0.0)
                    .ok_or_else(|| Error::Config(format!("subset `{s}` has no positive sampler weight")))
            })
            .collect::<Result<_>>()?;
        let epoch_len = w.iter().sum::<f64>().round().max(1.0) as usize;
        let dist = WeightedIndex::new(&w).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            subsets: subsets.to_vec(),
            dist,
            epoch_len,
        })
    }

    pub fn epoch_len(&self) -> usize {
        self.epoch_len
    }

    pub fn subset_of(&self, clip: usize) -> &str {
        &self.subsets[clip]
    }

    pub fn draw(&self, rng: &mut impl Rng) -> usize {
        self.dist.sample(rng)
    }

    /// One epoch of clip indices.
    pub fn epoch(&self, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.epoch_len).map(|_| self.draw(&mut rng)).collect()
    }
}
