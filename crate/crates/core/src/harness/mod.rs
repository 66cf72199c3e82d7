//! Small end-to-end training runs: datasets, differentiable models and the
//! two-stage select-then-update loop.

pub mod data;
pub mod model;
pub mod train;

pub use data::{iris, load_csv, low_rank_classes, two_gaussians, DataError, Dataset, Labels, Target};
pub use model::Model;
pub use train::{
    train, EpochRecord, FeatureSource, IterationRecord, RunTrace, Sampler, Schedule, SelectionRecord, TrainConfig,
    TrainError,
};
