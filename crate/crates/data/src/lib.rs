//! Dataset ingestion and preparation: hourly CSV time series cut into
//! sliding windows, directory-per-class image sets, splitting,
//! standardization, flip augmentation, and pairing of the two for fusion
//! models.

pub mod augment;
pub mod fusion;
pub mod images;
pub mod normalize;
pub mod sources;
pub mod split;
pub mod synthetic;
pub mod timeseries;
pub mod windows;

pub use augment::{augment, flip_horizontal, flip_vertical, Flips};
pub use fusion::{pair_fusion, pair_indices, FusionSample};
pub use images::{ingest_images, load_image, ImageSample, ImageSet, IMAGE_SIZE};
pub use normalize::{normalize, ColumnStats, NormStats};
pub use sources::{prepare_series, FusionSource, ImageSource, PreparedSeries, WindowSource};
pub use split::{split_chronological, split_stratified, SplitFractions};
pub use synthetic::{LinearWindows, QuadrantImages};
pub use timeseries::{ingest_timeseries_csv, read_timeseries, IngestReport, TimeSeriesTable};
pub use windows::{make_windows, WindowSample, WindowSpec};
