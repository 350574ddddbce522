//! Builds a training data source from a config's `[data]` section.

use fut_core::dataset::DataSource;
use fut_core::model::{InputHeadSpec, ModelSpec, TaskHeadSpec, IMAGE_INPUT, SERIES_INPUT};
use fut_core::train::derive_seed;
use fut_core::{Error, Result};
use fut_data::{
    ingest_images, ingest_timeseries_csv, prepare_series, FusionSource, ImageSource, IngestReport, LinearWindows,
    NormStats, QuadrantImages, WindowSource, WindowSpec,
};
use serde::Serialize;

use crate::config::{DataConfig, ImageData, SeriesData};

/// What ingestion found, kept next to the run outputs.
#[derive(Clone, Debug, Default, Serialize)]
pub struct DataNotes {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ingest: Option<IngestReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormStats>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<String>,
    pub skipped_images: usize,
    pub samples: [usize; 3],
}

pub struct BuiltData {
    pub source: Box<dyn DataSource<f64>>,
    pub notes: DataNotes,
}

struct Needs {
    series: Option<(usize, usize)>,
    image: Option<(usize, usize, usize)>,
    outputs: Option<usize>,
    classes: Option<usize>,
}

fn needs(spec: &ModelSpec) -> Needs {
    let series = spec.input(SERIES_INPUT).and_then(|i| match i.head {
        InputHeadSpec::TimeSeries { window, features, .. } => Some((window, features)),
        _ => None,
    });
    let image = spec.input(IMAGE_INPUT).and_then(|i| match i.head {
        InputHeadSpec::Image {
            height, width, channels, ..
        } => Some((height, width, channels)),
        _ => None,
    });
    let mut outputs = None;
    let mut classes = None;
    for task in &spec.tasks {
        match &task.head {
            TaskHeadSpec::Regression(h) => outputs = Some(h.f_out),
            TaskHeadSpec::FusionRegression(h) => outputs = Some(h.f_out),
            TaskHeadSpec::Classification(h) | TaskHeadSpec::FusionClassification(h) => classes = Some(h.n_classes),
        }
    }
    Needs {
        series,
        image,
        outputs,
        classes,
    }
}

fn series_source(
    data: &SeriesData,
    config: &DataConfig,
    (window, features): (usize, usize),
    outputs: usize,
    seed: u64,
    notes: &mut DataNotes,
) -> Result<WindowSource> {
    match (&data.csv, &data.synthetic) {
        (Some(path), None) => {
            let spec = WindowSpec {
                s_in: window,
                ..WindowSpec::default()
            };
            if features != spec.x_cols.len() || outputs != spec.y_cols.len() {
                return Err(Error::Config(format!(
                    "CSV windows have {} features and {} targets, the model expects {features} and {outputs}",
                    spec.x_cols.len(),
                    spec.y_cols.len()
                )));
            }
            let (table, report) = ingest_timeseries_csv(path)?;
            let prepared = prepare_series(&table, &spec, &config.split)?;
            notes.ingest = Some(report);
            notes.normalization = Some(prepared.stats);
            Ok(prepared.source)
        }
        (None, Some(synthetic)) => {
            let windows = LinearWindows {
                samples: synthetic.samples,
                window,
                features,
                outputs,
                noise: synthetic.noise,
            }
            .generate(derive_seed(seed, 1, 0))?;
            WindowSource::from_windows(windows, &config.split)
        }
        _ => Err(Error::Config("[data.series] needs exactly one of `csv` and `synthetic`".into())),
    }
}

fn image_source(
    data: &ImageData,
    config: &DataConfig,
    (height, width, channels): (usize, usize, usize),
    classes: Option<usize>,
    seed: u64,
    notes: &mut DataNotes,
) -> Result<ImageSource> {
    let split_seed = derive_seed(seed, 2, 0);
    match (&data.dir, &data.synthetic) {
        (Some(dir), None) => {
            if height != width || channels != 3 {
                return Err(Error::Config(format!(
                    "image directories load square RGB images, the model expects ({height}, {width}, {channels})"
                )));
            }
            let set = ingest_images(dir, height)?;
            if let Some(n) = classes {
                if set.classes.len() != n {
                    return Err(Error::Data(format!(
                        "{} has {} class directories, the model classifies {n}",
                        dir.display(),
                        set.classes.len()
                    )));
                }
            }
            notes.classes = set.classes.clone();
            notes.skipped_images = set.skipped.len();
            ImageSource::from_set(set, &config.split, split_seed, data.augment)
        }
        (None, Some(synthetic)) => {
            if height != width || channels != 3 {
                return Err(Error::Config("synthetic images are square RGB".into()));
            }
            let samples = QuadrantImages {
                samples: synthetic.samples,
                size: height,
                classes: classes.unwrap_or(4),
                noise: synthetic.noise,
            }
            .generate(derive_seed(seed, 1, 1))?;
            ImageSource::from_samples(samples, &config.split, split_seed, data.augment)
        }
        _ => Err(Error::Config("[data.images] needs exactly one of `dir` and `synthetic`".into())),
    }
}

fn missing(spec: &ModelSpec, what: &str, section: &str) -> Error {
    Error::Input(format!(
        "model `{}` needs {what} but the data section has no `{section}`",
        spec.id
    ))
}

/// The source a model with `spec` trains on: windows, images, or both paired.
pub fn build_source(config: &DataConfig, spec: &ModelSpec, seed: u64) -> Result<BuiltData> {
    config.split.validate()?;
    let need = needs(spec);
    let mut notes = DataNotes::default();
    let windows = match need.series {
        None => None,
        Some(shape) => {
            let data = config.series.as_ref().ok_or_else(|| missing(spec, "a time-series input", "series"))?;
            let outputs = need.outputs.unwrap_or(2);
            Some(series_source(data, config, shape, outputs, seed, &mut notes)?)
        }
    };
    let images = match need.image {
        None => None,
        Some(shape) => {
            let data = config.images.as_ref().ok_or_else(|| missing(spec, "an image input", "images"))?;
            Some(image_source(data, config, shape, need.classes, seed, &mut notes)?)
        }
    };
    let (source, samples): (Box<dyn DataSource<f64>>, [usize; 3]) = match (windows, images) {
        (Some(w), None) => {
            let n = [w.train.len(), w.val.len(), w.test.len()];
            (Box::new(w), n)
        }
        (None, Some(i)) => {
            let n = [i.train.len(), i.val.len(), i.test.len()];
            (Box::new(i), n)
        }
        (Some(w), Some(i)) => {
            let n = [
                w.train.len().max(i.train.len()),
                w.val.len().max(i.val.len()),
                w.test.len().max(i.test.len()),
            ];
            let fusion = FusionSource {
                images: i,
                windows: w,
                seed: derive_seed(seed, 3, 0),
            };
            (Box::new(fusion), n)
        }
        (None, None) => return Err(Error::Config(format!("model `{}` has no inputs", spec.id))),
    };
    notes.samples = samples;
    Ok(BuiltData { source, notes })
}
