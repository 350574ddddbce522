//! Pairing of image and window samples for fusion models.
//!
//! The two datasets have no natural correspondence. Each epoch the longer one
//! is visited exactly once in a seeded random order and the shorter one is
//! cycled through its own seeded permutation.

use fut_core::train::derive_seed;
use fut_core::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::images::ImageSample;
use crate::windows::WindowSample;

#[derive(Clone, Debug, PartialEq)]
pub struct FusionSample {
    pub image: ImageSample,
    pub window: WindowSample,
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// `(image, window)` index pairs, `max(n_images, n_windows)` of them.
pub fn pair_indices(n_images: usize, n_windows: usize, seed: u64, epoch: usize) -> Result<Vec<(usize, usize)>> {
    if n_images == 0 || n_windows == 0 {
        return Err(Error::Data(format!(
            "fusion pairing needs both datasets non-empty (images: {n_images}, windows: {n_windows})"
        )));
    }
    let images = permutation(n_images, derive_seed(seed, epoch as u64, 1));
    let windows = permutation(n_windows, derive_seed(seed, epoch as u64, 2));
    let n = n_images.max(n_windows);
    Ok((0..n).map(|i| (images[i % n_images], windows[i % n_windows])).collect())
}

pub fn pair_fusion(
    images: &[ImageSample],
    windows: &[WindowSample],
    seed: u64,
    epoch: usize,
) -> Result<Vec<FusionSample>> {
    Ok(pair_indices(images.len(), windows.len(), seed, epoch)?
        .into_iter()
        .map(|(i, w)| FusionSample {
            image: images[i].clone(),
            window: windows[w].clone(),
        })
        .collect())
}
