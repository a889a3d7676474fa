//! Short-time smoothing experiment: a `C⁰` bound `ε` on `u` at `t₀` should give
//! `‖∇u‖_{C⁰} + ‖R − n‖_{C⁰} ≤ Kε` at `t₀ + 2` with `K` independent of `ε`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{calibrate_amplitude, hat_u, profile_state, FlowState, Integrator, Profile, StepControl};
use crate::geometry::{self, GridSpec, MetricState, DIM};

/// Largest `ε` the experiment accepts.
pub const MAX_EPSILON: f64 = 0.05;
const HORIZON: f64 = 2.0;

/// Scales a profile so that the Ricci potential has `‖u‖_{C⁰} = ε`.
pub fn prepare_epsilon_state(grid: &Arc<GridSpec>, profile: &Profile, epsilon: f64) -> Result<MetricState> {
    if !(epsilon > 0.0 && epsilon <= 0.1) {
        return Err(Error::config("experiments", format!("epsilon = {epsilon} outside (0, 0.1]")));
    }
    let a = calibrate_amplitude(grid, profile, epsilon)?;
    profile_state(grid, profile, a)
}

fn default_profile() -> Profile {
    Profile::Legendre(2)
}
fn default_nodes() -> usize {
    64
}
fn default_cadence() -> f64 {
    0.01
}
fn default_tolerance() -> f64 {
    1e-11
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingConfig {
    pub epsilons: Vec<f64>,
    #[serde(default = "default_profile")]
    pub profile: Profile,
    #[serde(default = "default_nodes")]
    pub node_count: usize,
    #[serde(default = "default_cadence")]
    pub cadence: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Also measure `K` on a grid with twice the nodes.
    #[serde(default)]
    pub refine: bool,
}

impl SmoothingConfig {
    pub fn new(epsilons: Vec<f64>) -> Self {
        SmoothingConfig {
            epsilons,
            profile: default_profile(),
            node_count: default_nodes(),
            cadence: default_cadence(),
            tolerance: default_tolerance(),
            refine: false,
        }
    }
}

/// Barrier monitors for one `ε`. All maxima are over sample times and nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingCase {
    pub epsilon: f64,
    pub amplitude: f64,
    /// `(‖∇u‖_{C⁰} + ‖R − n‖_{C⁰})(t₀+2) / ε`.
    pub k_measured: f64,
    pub k_refined: Option<f64>,
    /// `max_{[t₀, t₀+2]} ‖û‖_{C⁰}` against `e²ε`.
    pub hat_u_max: f64,
    pub hat_u_bound: f64,
    /// `max_{[t₀+1, t₀+2]} ‖∇û‖²_{C⁰}` against `e⁴ε²`.
    pub grad_sq_max: f64,
    pub grad_sq_bound: f64,
    /// `max_{[t₀+1, t₀+2]} H` and the companion quantity with `+Δû`, against `2e⁴ε²`.
    pub h_max: f64,
    pub k_quantity_max: f64,
    pub h_bound: f64,
    /// `‖Δû‖_{C⁰}(t₀+2)` against `2ne⁵ε`.
    pub lap_hat_u: f64,
    pub lap_bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub config: SmoothingConfig,
    pub cases: Vec<SmoothingCase>,
    /// `max K / min K` over the positive `ε`.
    pub k_spread: f64,
    /// Largest relative change of `K` under grid doubling, when measured.
    pub k_refinement_change: Option<f64>,
    pub pass: bool,
}

struct Monitors {
    k: f64,
    hat_u_max: f64,
    grad_sq_max: f64,
    h_max: f64,
    k_quantity_max: f64,
    lap_hat_u: f64,
}

fn run_window(state: MetricState, epsilon: f64, config: &SmoothingConfig) -> Result<Monitors> {
    let mut fs = FlowState::start(state, 0.0)?;
    let mut integrator = Integrator::new(
        StepControl {
            tolerance: config.tolerance,
            dt_min: 1e-10,
            dt_max: config.cadence,
        },
        1e-4,
    );
    let times = crate::flow::sample_times(HORIZON, config.cadence);
    let mut m = Monitors {
        k: 0.0,
        hat_u_max: 0.0,
        grad_sq_max: 0.0,
        h_max: f64::NEG_INFINITY,
        k_quantity_max: f64::NEG_INFINITY,
        lap_hat_u: 0.0,
    };
    for (i, &t) in times.iter().enumerate() {
        if i > 0 {
            fs = integrator.advance_to(fs, t)?;
        }
        let s = &fs.state;
        let hat = hat_u(&fs);
        m.hat_u_max = m.hat_u_max.max(s.c0_norm(&hat.values));
        if t >= 1.0 - 1e-12 {
            let grad = geometry::grad_norm_sq(s, &hat)?;
            let lap = geometry::laplacian(s, &hat)?;
            m.grad_sq_max = m.grad_sq_max.max(s.c0_norm(&grad.values));
            let w = (-(t - 1.0)).exp();
            let sc = epsilon / DIM * (t - 1.0);
            let h: Vec<f64> = grad.values.iter().zip(&lap.values).map(|(g, l)| w * (g - sc * l)).collect();
            let k: Vec<f64> = grad.values.iter().zip(&lap.values).map(|(g, l)| w * (g + sc * l)).collect();
            let top = |v: &[f64]| s.grid().refined(v).into_iter().fold(f64::NEG_INFINITY, f64::max);
            m.h_max = m.h_max.max(top(&h));
            m.k_quantity_max = m.k_quantity_max.max(top(&k));
        }
        if i + 1 == times.len() {
            let lap = geometry::laplacian(s, &hat)?;
            m.lap_hat_u = s.c0_norm(&lap.values);
            let grad = geometry::grad_norm_sq(s, &fs.u)?;
            let rn: Vec<f64> = s.curvature().iter().map(|r| r - 1.0).collect();
            let total = s.c0_norm(&grad.values).sqrt() + s.c0_norm(&rn);
            m.k = if epsilon > 0.0 { total / epsilon } else { total };
        }
    }
    Ok(m)
}

fn measure(epsilon: f64, config: &SmoothingConfig) -> Result<SmoothingCase> {
    if !(0.0..=MAX_EPSILON).contains(&epsilon) {
        return Err(Error::config(
            "experiments",
            format!("smoothing epsilon = {epsilon} outside [0, {MAX_EPSILON}]"),
        ));
    }
    let build = |n: usize| -> Result<(MetricState, f64)> {
        let grid = geometry::build_grid(n)?;
        if epsilon == 0.0 {
            return Ok((MetricState::reference(grid), 0.0));
        }
        let a = calibrate_amplitude(&grid, &config.profile, epsilon)?;
        Ok((profile_state(&grid, &config.profile, a)?, a))
    };
    let (state, amplitude) = build(config.node_count)?;
    let m = run_window(state, epsilon, config)?;
    let k_refined = if config.refine && epsilon > 0.0 {
        let (fine, _) = build(2 * config.node_count)?;
        Some(run_window(fine, epsilon, config)?.k)
    } else {
        None
    };

    let e = std::f64::consts::E;
    let hat_u_bound = e * e * epsilon;
    let grad_sq_bound = e.powi(4) * epsilon * epsilon;
    let h_bound = 2.0 * e.powi(4) * epsilon * epsilon;
    let lap_bound = 2.0 * DIM * e.powi(5) * epsilon;
    // At ε = 0 every monitored quantity must vanish to round-off.
    let slack = if epsilon == 0.0 { 1e-12 } else { 0.0 };
    let pass = m.k.is_finite()
        && m.hat_u_max <= hat_u_bound + slack
        && m.grad_sq_max <= grad_sq_bound + slack
        && m.h_max < h_bound + slack
        && m.k_quantity_max < h_bound + slack
        && m.lap_hat_u < lap_bound + slack;
    Ok(SmoothingCase {
        epsilon,
        amplitude,
        k_measured: m.k,
        k_refined,
        hat_u_max: m.hat_u_max,
        hat_u_bound,
        grad_sq_max: m.grad_sq_max,
        grad_sq_bound,
        h_max: m.h_max,
        k_quantity_max: m.k_quantity_max,
        h_bound,
        lap_hat_u: m.lap_hat_u,
        lap_bound,
        pass,
    })
}

pub fn smoothing_experiment(config: &SmoothingConfig) -> Result<SmoothingReport> {
    if config.epsilons.is_empty() {
        return Err(Error::config("experiments", "smoothing needs at least one epsilon"));
    }
    if !(config.cadence > 0.0 && config.tolerance > 0.0) {
        return Err(Error::config("experiments", "smoothing cadence and tolerance must be positive"));
    }
    let cases: Vec<SmoothingCase> = config
        .epsilons
        .par_iter()
        .map(|&e| measure(e, config))
        .collect::<Result<_>>()?;
    let ks: Vec<f64> = cases.iter().filter(|c| c.epsilon > 0.0).map(|c| c.k_measured).collect();
    let k_spread = if ks.is_empty() {
        1.0
    } else {
        ks.iter().cloned().fold(0.0, f64::max) / ks.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let k_refinement_change = cases
        .iter()
        .filter_map(|c| c.k_refined.map(|r| (r - c.k_measured).abs() / c.k_measured))
        .reduce(f64::max);
    let pass = cases.iter().all(|c| c.pass)
        && k_spread.is_finite()
        && k_spread <= 2.0
        && k_refinement_change.map_or(true, |c| c <= 0.1);
    Ok(SmoothingReport {
        config: config.clone(),
        cases,
        k_spread,
        k_refinement_change,
        pass,
    })
}
