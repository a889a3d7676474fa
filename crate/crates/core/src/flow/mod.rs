//! Normalized Kähler–Ricci flow in potential form on symmetric metrics.

pub mod config;
pub mod integrator;
pub mod potential;
pub mod trace;

pub use config::{profile_state, FlowConfig, InitialData, Profile, POSITIVITY_GUARD};
pub use integrator::{advance_c, flow_step, hat_u, stability_bound, FlowState, Integrator, Step, StepControl};
pub use potential::{average_b, exp_normalization, poisson_residual, ricci_potential, ricci_potential_from_speed};
pub use trace::{
    calibrate_amplitude, initial_state, run_flow, sample_record, sample_times, FlowFailure, FlowRecord,
    FlowTrace, Snapshot, TRACE_COLUMNS,
};
