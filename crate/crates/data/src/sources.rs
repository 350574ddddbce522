//! Training data sources built from windows, images, or both.

use fut_core::dataset::{DataSource, Example, Split, Target};
use fut_core::model::{HORIZON_TARGET, IMAGE_INPUT, LABEL_TARGET, SERIES_INPUT};
use fut_core::train::derive_seed;
use fut_core::{Result, Scalar};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::augment::augment;
use crate::fusion::pair_indices;
use crate::images::{ImageSet, ImageSample};
use crate::normalize::{normalize, NormStats};
use crate::split::{split_chronological, split_stratified, SplitFractions};
use crate::timeseries::TimeSeriesTable;
use crate::windows::{make_windows, WindowSample, WindowSpec};

const AUGMENT_STREAM: u64 = 0xa1;

fn window_example<T: Scalar>(w: &WindowSample) -> Example<T> {
    Example::new()
        .with_input(SERIES_INPUT, w.x.cast())
        .with_target(HORIZON_TARGET, Target::Values(w.y.cast()))
}

fn image_example<T: Scalar>(s: &ImageSample, pixels: fut_core::Tensor<f64>) -> Example<T> {
    Example::new()
        .with_input(IMAGE_INPUT, pixels.cast())
        .with_target(LABEL_TARGET, Target::Class(s.label))
}

#[derive(Clone, Debug, Default)]
pub struct WindowSource {
    pub train: Vec<WindowSample>,
    pub val: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
}

impl WindowSource {
    pub fn split(&self, split: Split) -> &[WindowSample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// Chronological split of already built windows.
    pub fn from_windows(windows: Vec<WindowSample>, fractions: &SplitFractions) -> Result<Self> {
        let (train, val, test) = split_chronological(windows, fractions)?;
        Ok(WindowSource { train, val, test })
    }
}

impl<T: Scalar> DataSource<T> for WindowSource {
    fn examples(&self, split: Split, _epoch: usize, _training: bool) -> Result<Vec<Example<T>>> {
        Ok(self.split(split).iter().map(window_example).collect())
    }
}

/// A standardized, windowed time series ready for training.
#[derive(Clone, Debug)]
pub struct PreparedSeries {
    pub source: WindowSource,
    pub stats: NormStats,
}

/// Splits the table's rows chronologically, standardizes every split with
/// the training rows' statistics, then windows each split on its own so no
/// window crosses a split boundary.
pub fn prepare_series(table: &TimeSeriesTable, spec: &WindowSpec, fractions: &SplitFractions) -> Result<PreparedSeries> {
    let (train, val, _) = fractions.counts(table.len())?;
    let parts = [
        table.slice(0..train),
        table.slice(train..train + val),
        table.slice(train + val..table.len()),
    ];
    let ([a, b, c], stats) = normalize(&parts[0], &parts[1], &parts[2])?;
    // a val or test split shorter than one window contributes nothing
    let windows = |t: &TimeSeriesTable| {
        if t.len() < spec.s_in + spec.s_out {
            Ok(Vec::new())
        } else {
            make_windows(t, spec)
        }
    };
    Ok(PreparedSeries {
        source: WindowSource {
            train: make_windows(&a, spec)?,
            val: windows(&b)?,
            test: windows(&c)?,
        },
        stats,
    })
}

#[derive(Clone, Debug, Default)]
pub struct ImageSource {
    pub train: Vec<ImageSample>,
    pub val: Vec<ImageSample>,
    pub test: Vec<ImageSample>,
    /// Random flips on the training split when asked for training examples.
    pub augment: bool,
    pub seed: u64,
}

impl ImageSource {
    pub fn split(&self, split: Split) -> &[ImageSample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// Stratified split with a fixed seed.
    pub fn from_samples(samples: Vec<ImageSample>, fractions: &SplitFractions, seed: u64, augment: bool) -> Result<Self> {
        let (train, val, test) = split_stratified(samples, |s| s.label, fractions, seed)?;
        Ok(ImageSource {
            train,
            val,
            test,
            augment,
            seed,
        })
    }

    pub fn from_set(set: ImageSet, fractions: &SplitFractions, seed: u64, augment: bool) -> Result<Self> {
        Self::from_samples(set.samples, fractions, seed, augment)
    }

    /// Pixels of the split in order, flipped when training on the train split.
    fn pixels(&self, split: Split, epoch: usize, training: bool) -> Vec<fut_core::Tensor<f64>> {
        let flip = self.augment && training && split == Split::Train;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, epoch as u64, AUGMENT_STREAM));
        self.split(split).iter().map(|s| augment(&s.pixels, &mut rng, flip)).collect()
    }
}

impl<T: Scalar> DataSource<T> for ImageSource {
    fn examples(&self, split: Split, epoch: usize, training: bool) -> Result<Vec<Example<T>>> {
        let pixels = self.pixels(split, epoch, training);
        Ok(self.split(split).iter().zip(pixels).map(|(s, p)| image_example(s, p)).collect())
    }
}

/// Image and window splits paired per epoch. Each example carries both
/// inputs and both targets.
#[derive(Clone, Debug, Default)]
pub struct FusionSource {
    pub images: ImageSource,
    pub windows: WindowSource,
    pub seed: u64,
}

impl<T: Scalar> DataSource<T> for FusionSource {
    fn examples(&self, split: Split, epoch: usize, training: bool) -> Result<Vec<Example<T>>> {
        let images = self.images.split(split);
        let windows = self.windows.split(split);
        if images.is_empty() && windows.is_empty() {
            return Ok(Vec::new());
        }
        let stream = Split::ALL.iter().position(|s| *s == split).unwrap_or(0) as u64;
        let pairs = pair_indices(images.len(), windows.len(), derive_seed(self.seed, stream, 0), epoch)?;
        let pixels = self.images.pixels(split, epoch, training);
        Ok(pairs
            .into_iter()
            .map(|(i, w)| {
                let mut ex = image_example(&images[i], pixels[i].clone());
                let win: Example<T> = window_example(&windows[w]);
                ex.inputs.extend(win.inputs);
                ex.targets.extend(win.targets);
                ex
            })
            .collect())
    }
}
