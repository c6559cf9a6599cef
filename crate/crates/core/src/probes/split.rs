// SPDX-License-Identifier: Apache-2.0

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Train/test split over whole units (utterances), never over frames.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Self {
        Self { train_fraction, seed }
    }

    /// Sorted `(train, test)` unit indices; both sides are nonempty.
    pub fn split(&self, n_units: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::input(format!(
                "train fraction must lie in (0,1), got {}",
                self.train_fraction
            )));
        }
        if n_units < 2 {
            return Err(Error::input(format!("need at least 2 units to split, got {n_units}")));
        }
        let mut order: Vec<usize> = (0..n_units).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        let n_train = ((n_units as f64 * self.train_fraction).round() as usize).clamp(1, n_units - 1);
        let mut train = order[..n_train].to_vec();
        let mut test = order[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Ok((train, test))
    }
}
