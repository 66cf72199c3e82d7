//! Gradient-aligned data subset selection for in-training sample pruning.
//!
//! The pipeline per mini-batch is: embed the batch into a relevance-ordered
//! low-rank feature matrix ([`features`]), pick rows by fast max-volume
//! sampling ([`maxvol`]), and size the subset so that the selected samples'
//! gradients span the batch gradient up to a tolerance ([`alignment`]).
//! [`harness`] drives this inside an SGD loop and [`metrics`] turns run
//! traces into efficiency and emissions figures.

pub mod alignment;
pub mod cli;
pub mod features;
pub mod harness;
pub mod linalg;
pub mod maxvol;
pub mod metrics;
pub mod par;

pub use alignment::{select_rank, ErrorMode, GradientBundle, RankDecision};
pub use features::{extract_svd_features, extract_variance_features, FeatureMatrix};
pub use linalg::{DenseMatrix, ThinSvd};
pub use maxvol::{brute_force_maxvol, conventional_maxvol, fast_maxvol, SelectionResult};
