//! Train/val/test splitting.

use std::collections::BTreeMap;

use fut_core::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.7,
            val: 0.2,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::Config(format!("split fractions must be non-negative, got {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions must sum to 1, got {sum}")));
        }
        Ok(())
    }

    /// Train and val sizes are rounded to the nearest integer; test takes the
    /// remainder.
    pub fn counts(&self, n: usize) -> Result<(usize, usize, usize)> {
        self.validate()?;
        let train = ((n as f64 * self.train).round() as usize).min(n);
        let val = ((n as f64 * self.val).round() as usize).min(n - train);
        Ok((train, val, n - train - val))
    }
}

pub type Splits<T> = (Vec<T>, Vec<T>, Vec<T>);

/// Contiguous split in the given order: train first, test last.
pub fn split_chronological<T>(mut items: Vec<T>, fractions: &SplitFractions) -> Result<Splits<T>> {
    let (train, val, _) = fractions.counts(items.len())?;
    let mut rest = items.split_off(train);
    let test = rest.split_off(val);
    Ok((items, rest, test))
}

/// Per-class seeded shuffle, then a per-class split, so every class keeps the
/// global proportions up to rounding.
pub fn split_stratified<T>(
    items: Vec<T>,
    label: impl Fn(&T) -> usize,
    fractions: &SplitFractions,
    seed: u64,
) -> Result<Splits<T>> {
    fractions.validate()?;
    let mut by_class: BTreeMap<usize, Vec<T>> = BTreeMap::new();
    for item in items {
        by_class.entry(label(&item)).or_default().push(item);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (_, mut group) in by_class {
        group.shuffle(&mut rng);
        let (a, b, c) = split_chronological(group, fractions)?;
        train.extend(a);
        val.extend(b);
        test.extend(c);
    }
    Ok((train, val, test))
}
