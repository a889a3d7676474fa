//! Named experiments turning the flow monitors into pass/fail reports.

pub mod delay;
pub mod plots;
pub mod report;
pub mod smoothing;

pub use delay::{
    default_mu_grid, delay_comparison, mu_admissible, precheck, synthetic_exponential, DelayInequalityCase,
    DelayOutcome, Violation,
};
pub use report::{
    convergence_report, evaluate_trace, measured_delay_case, tail_fit, Check, ExperimentReport, ReportSummary,
    CURVATURE_FLOOR, CURVATURE_NOISE, ITERATION_LAG, POTENTIAL_FLOOR, P_EXPONENT, Y_FLOOR,
};
pub use smoothing::{prepare_epsilon_state, smoothing_experiment, SmoothingCase, SmoothingConfig, SmoothingReport};

use rayon::prelude::*;

use crate::error::Result;
use crate::flow::FlowConfig;

/// Runs independent convergence reports concurrently; the output order
/// matches the input order.
pub fn sweep(configs: &[FlowConfig]) -> Result<Vec<ExperimentReport>> {
    for c in configs {
        c.validate()?;
    }
    configs.par_iter().map(convergence_report).collect()
}
