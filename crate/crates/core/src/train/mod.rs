//! Losses, optimizer, multi-task aggregation, the fit loop and sweeps.

mod fit;
pub mod loss;
mod multitask;
mod optim;
mod sweep;

pub use fit::{
    config_hash, derive_seed, evaluate, evaluate_split, fit, fit_with, head_losses, EpochRecord, FitConfig, FitOutcome, HeadMetrics, MetricKind,
    SplitMetrics, TrainReport,
};
pub use multitask::MultiTaskLoss;
pub use optim::{Adam, AdamConfig, AdamState, LrSchedule};
pub use sweep::{rank_order, run_sweep, HyperGrid, SweepReport, VariantResult};
