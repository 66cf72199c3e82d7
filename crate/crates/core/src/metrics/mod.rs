//! Analytics over finished runs: gain-curve fits, accuracy ratios against a
//! full-data baseline, emissions estimates and file export.

pub mod curve;
pub mod emissions;
pub mod export;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::RunTrace;

pub use curve::{fit_gain_curve, CurveError, EfficiencyCurve};
pub use emissions::{
    emissions, emissions_from_evals, emissions_integrated, EmissionsError, EmissionsEstimate,
    DEFAULT_INTENSITY_KG_PER_KWH, DEFAULT_JOULES_PER_EVAL,
};
pub use export::{export_trace, read_trace, ExportError, MetricOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FidelityError {
    #[error("baseline accuracy is zero")]
    DegenerateBaseline,
}

/// Accuracy relative to a full-data run.
///
/// `phi` is read against the run's emissions and `psi` against its data
/// fraction; both are the same ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub phi: f64,
    pub psi: f64,
    pub fraction: f64,
    pub gradient_evaluations: u64,
}

pub fn fidelity_and_utilization(trace: &RunTrace, full: &RunTrace) -> Result<Fidelity, FidelityError> {
    if full.final_test_accuracy == 0.0 {
        return Err(FidelityError::DegenerateBaseline);
    }
    let ratio = trace.final_test_accuracy / full.final_test_accuracy;
    Ok(Fidelity {
        phi: ratio,
        psi: ratio,
        fraction: trace.mean_subset_fraction,
        gradient_evaluations: trace.total_gradient_evaluations,
    })
}

/// `0.25 (1 − f) / f`, the rule-of-thumb gap in `Ψ` between a subset
/// method and random selection at fraction `f`. Reported, not enforced.
pub fn utilization_gap_rule(fraction: f64) -> f64 {
    0.25 * (1.0 - fraction) / fraction
}
