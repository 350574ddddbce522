//! Run and sweep configuration files (TOML).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fut_core::model::{ModelSpec, ModelTemplate};
use fut_core::train::{AdamConfig, FitConfig, HyperGrid, LrSchedule};
use fut_core::{Error, Result};
use fut_data::SplitFractions;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

fn default_epochs() -> usize {
    30
}

fn default_batch_size() -> usize {
    256
}

fn default_noise() -> f64 {
    0.05
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    /// `constant`, `step_decay` or `warmup_inverse_sqrt`.
    #[serde(default = "OptimizerConfig::default_schedule")]
    pub schedule: String,
    /// Base rate; the scale factor for `warmup_inverse_sqrt`.
    #[serde(default = "OptimizerConfig::default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub every: Option<usize>,
    #[serde(default)]
    pub warmup: Option<usize>,
    #[serde(default = "OptimizerConfig::default_beta1")]
    pub beta1: f64,
    #[serde(default = "OptimizerConfig::default_beta2")]
    pub beta2: f64,
    #[serde(default = "OptimizerConfig::default_epsilon")]
    pub epsilon: f64,
}

impl OptimizerConfig {
    fn default_schedule() -> String {
        "constant".into()
    }
    fn default_lr() -> f64 {
        1e-3
    }
    fn default_beta1() -> f64 {
        0.9
    }
    fn default_beta2() -> f64 {
        0.999
    }
    fn default_epsilon() -> f64 {
        1e-8
    }

    pub fn adam(&self) -> Result<AdamConfig> {
        let schedule = LrSchedule::from_kind(&self.schedule, self.lr, self.gamma, self.every, self.warmup)?;
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config("optimizer needs 0 ≤ beta1, beta2 < 1 and epsilon > 0".into()));
        }
        Ok(AdamConfig {
            schedule,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        })
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            schedule: Self::default_schedule(),
            lr: Self::default_lr(),
            gamma: None,
            every: None,
            warmup: None,
            beta1: Self::default_beta1(),
            beta2: Self::default_beta2(),
            epsilon: Self::default_epsilon(),
        }
    }
}

/// Generated windows; window length, features and outputs follow the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSeries {
    pub samples: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
}

/// Generated quadrant images; size and class count follow the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticImages {
    pub samples: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
}

/// Exactly one of `csv` and `synthetic`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesData {
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSeries>,
}

/// Exactly one of `dir` and `synthetic`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageData {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticImages>,
    /// Random flips on training images.
    #[serde(default = "yes")]
    pub augment: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub split: SplitFractions,
    #[serde(default)]
    pub series: Option<SeriesData>,
    #[serde(default)]
    pub images: Option<ImageData>,
}

impl DataConfig {
    /// Synthetic data of `samples` items for every modality the model uses.
    pub fn synthetic(spec: &ModelSpec, samples: usize) -> Self {
        let series = spec.input(fut_core::model::SERIES_INPUT).map(|_| SeriesData {
            csv: None,
            synthetic: Some(SyntheticSeries {
                samples,
                noise: default_noise(),
            }),
        });
        let images = spec.input(fut_core::model::IMAGE_INPUT).map(|_| ImageData {
            dir: None,
            synthetic: Some(SyntheticImages {
                samples,
                noise: default_noise(),
            }),
            augment: true,
        });
        DataConfig {
            split: SplitFractions::default(),
            series,
            images,
        }
    }

    fn resolve(&mut self, base: &Path) {
        if let Some(csv) = self.series.as_mut().and_then(|s| s.csv.as_mut()) {
            *csv = base.join(&*csv);
        }
        if let Some(dir) = self.images.as_mut().and_then(|s| s.dir.as_mut()) {
            *dir = base.join(&*dir);
        }
    }
}

/// Training settings shared by run and sweep files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub seed: u64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub drop_last: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_weights: Option<BTreeMap<String, f64>>,
    /// Relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl TrainSettings {
    pub fn fit_config(&self, optimizer: &OptimizerConfig) -> Result<FitConfig> {
        let mut config = FitConfig::new(self.epochs, self.batch_size, self.seed, optimizer.adam()?);
        config.loss_weights = self.loss_weights.clone();
        config.drop_last = self.drop_last;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainSettings,
    pub model: ModelTemplate,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub train: TrainSettings,
    pub grid: HyperGrid,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub data: DataConfig,
}

/// Command-line values that replace config scalars.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub lr: Option<f64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, train: &mut TrainSettings, optimizer: &mut OptimizerConfig) {
        if let Some(v) = self.epochs {
            train.epochs = v;
        }
        if let Some(v) = self.batch_size {
            train.batch_size = v;
        }
        if let Some(v) = self.seed {
            train.seed = v;
        }
        if let Some(v) = self.lr {
            optimizer.lr = v;
        }
        if let Some(v) = &self.out {
            train.output_dir = Some(v.clone());
        }
    }
}

fn read_toml<C: DeserializeOwned>(path: &Path) -> Result<C> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

impl RunConfig {
    /// Parses the file and resolves relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut config: RunConfig = read_toml(path)?;
        let base = base_dir(path);
        if let Some(data) = &mut config.data {
            data.resolve(&base);
        }
        if let Some(out) = &mut config.train.output_dir {
            *out = base.join(&*out);
        }
        Ok(config)
    }

    /// The model spec and fit settings, checked against each other.
    pub fn validate(&self) -> Result<(ModelSpec, FitConfig)> {
        let spec = self.model.spec()?;
        let fit = self.train.fit_config(&self.optimizer)?;
        fit.multitask_loss(&spec)?;
        Ok((spec, fit))
    }
}

impl SweepConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut config: SweepConfig = read_toml(path)?;
        let base = base_dir(path);
        config.data.resolve(&base);
        if let Some(out) = &mut config.train.output_dir {
            *out = base.join(&*out);
        }
        Ok(config)
    }
}
