//! Adaptive integration of the potential flow `φ̇ = log ρ + φ`.
//!
//! The reference metric is Kähler–Einstein, so its own Ricci potential
//! vanishes and the flow needs no extra source term. The potential is
//! stored as a mean-zero shape `φ̃` plus a scalar offset `m`; only `φ̃`
//! enters the metric, while `m` carries the exponentially drifting
//! constant mode separately so it cannot pollute the shape.

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, MetricState, ScalarField, DENSITY_FLOOR, VOLUME};

use super::potential::{average_b, ricci_potential};

/// Real-axis extent of the RK4 stability region.
const RK4_STABILITY: f64 = 2.785;
const SAFETY: f64 = 0.9;

/// A point of the flow together with the derived fields the monitors need.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub state: MetricState,
    pub u: ScalarField,
    pub b: f64,
    pub c: f64,
    pub phi_dot: ScalarField,
    /// `Y = ∫|∇u|² ω`.
    pub y: f64,
    /// Mabuchi energy relative to the starting metric.
    pub mabuchi: f64,
}

impl FlowState {
    /// Starts a flow at `state` with time origin `t0`, `c(t0) = 0`, and the
    /// potential constant chosen so that `φ̇(t0) = u(t0)`.
    pub fn start(state: MetricState, t0: f64) -> Result<Self> {
        let grid = state.grid().clone();
        let shape = state.phi_shape();
        let mean = grid.quad(shape) / 2.0;
        let shape: Vec<f64> = shape.iter().map(|p| p - mean).collect();
        let provisional = MetricState::from_potential(grid.clone(), shape.clone(), 0.0)?;
        let u = ricci_potential(&provisional)?;
        let gap: Vec<f64> = u
            .values
            .iter()
            .zip(provisional.density())
            .zip(&shape)
            .map(|((u, rho), p)| u - rho.ln() - p)
            .collect();
        let kappa = grid.quad(&gap) / 2.0;
        let state = MetricState::from_potential(grid, shape, kappa)?;
        Self::assemble(t0, state, 0.0, 0.0)
    }

    fn assemble(t: f64, state: MetricState, c: f64, mabuchi: f64) -> Result<Self> {
        let u = ricci_potential(&state)?;
        let b = average_b(&state, &u);
        let phi_dot: Vec<f64> = state
            .density()
            .iter()
            .zip(state.phi_shape())
            .map(|(rho, p)| rho.ln() + p + state.phi_offset())
            .collect();
        let y = crate::functionals::y_functional(&state, &u);
        Ok(FlowState {
            t,
            state,
            u,
            b,
            c,
            phi_dot: ScalarField::detect(phi_dot),
            y,
            mabuchi,
        })
    }

    /// Spatial mean and spread (max − min) of `φ̇ − u`.
    pub fn time_constant(&self) -> (f64, f64) {
        let d: Vec<f64> = self
            .phi_dot
            .values
            .iter()
            .zip(&self.u.values)
            .map(|(a, b)| a - b)
            .collect();
        let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (self.state.grid().quad(&d) / 2.0, hi - lo)
    }
}

/// `û = −u − c`.
pub fn hat_u(fs: &FlowState) -> ScalarField {
    ScalarField::detect(fs.u.values.iter().map(|u| -u - fs.c).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub tolerance: f64,
    pub dt_min: f64,
    pub dt_max: f64,
}

#[derive(Debug, Clone)]
pub struct Step {
    pub next: FlowState,
    pub dt: f64,
    pub dt_suggested: f64,
    pub rejections: usize,
    pub error_estimate: f64,
}

/// Largest stable RK4 step for the linearized operator `φ ↦ L₀φ/ρ + φ`.
/// The collocated `L₀` has spectrum `{−l(l+1)/2 : l < N}`.
pub fn stability_bound(state: &MetricState) -> f64 {
    let n = state.grid().node_count() as f64;
    let lmax = 0.5 * n * (n - 1.0);
    SAFETY * RK4_STABILITY / (lmax / state.min_density() + 1.0)
}

fn rhs(grid: &GridSpec, phi: &[f64], m: f64) -> Result<(Vec<f64>, f64)> {
    let lap = grid.apply_lap0(phi);
    let mut f = Vec::with_capacity(phi.len());
    for (i, (l, p)) in lap.iter().zip(phi).enumerate() {
        let rho = 1.0 + l;
        if !(rho > DENSITY_FLOOR) {
            return Err(Error::Positivity {
                module: "flow",
                min_density: rho,
                node: i,
                floor: DENSITY_FLOOR,
            });
        }
        f.push(rho.ln() + p);
    }
    let mean = grid.quad(&f) / 2.0;
    f.iter_mut().for_each(|v| *v -= mean);
    Ok((f, mean + m))
}

fn axpy(y: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(y, k)| y + a * k).collect()
}

fn rk4(grid: &GridSpec, phi: &[f64], m: f64, h: f64) -> Result<(Vec<f64>, f64)> {
    let (k1, l1) = rhs(grid, phi, m)?;
    let (k2, l2) = rhs(grid, &axpy(phi, 0.5 * h, &k1), m + 0.5 * h * l1)?;
    let (k3, l3) = rhs(grid, &axpy(phi, 0.5 * h, &k2), m + 0.5 * h * l2)?;
    let (k4, l4) = rhs(grid, &axpy(phi, h, &k3), m + h * l3)?;
    let out = (0..phi.len())
        .map(|i| phi[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    Ok((out, m + h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4)))
}

/// `c(t+h)` for `ċ = c + b` with `b` linear across the step.
pub fn advance_c(c0: f64, b0: f64, b1: f64, h: f64) -> f64 {
    let e1 = h.exp_m1();
    // e^h − 1 − h, accurate for small h
    let e2 = if h < 1e-3 {
        h * h * (0.5 + h / 6.0 + h * h / 24.0)
    } else {
        e1 - h
    };
    (1.0 + e1) * c0 + b0 * e1 + (b1 - b0) * e2 / h
}

/// One accepted step of size at most `dt`, halving on rejection.
pub fn flow_step(fs: &FlowState, dt: f64, ctl: &StepControl) -> Result<Step> {
    if !(dt > 0.0 && dt <= ctl.dt_max * (1.0 + 1e-12)) {
        return Err(Error::config(
            "flow",
            format!("step size {dt} outside (0, dt_max = {}]", ctl.dt_max),
        ));
    }
    let grid = fs.state.grid().clone();
    let phi = fs.state.phi_shape();
    let m = fs.state.phi_offset();
    let mut h = dt;
    let mut rejections = 0;
    loop {
        let attempt = (|| -> Result<_> {
            let (full, mf) = rk4(&grid, phi, m, h)?;
            let (half, mh) = rk4(&grid, phi, m, 0.5 * h)?;
            let (two, m2) = rk4(&grid, &half, mh, 0.5 * h)?;
            let diff: Vec<f64> = two.iter().zip(&full).map(|(a, b)| a - b).collect();
            let dl = grid.apply_lap0(&diff);
            let err = diff
                .iter()
                .chain(&dl)
                .map(|v| v.abs())
                .fold((m2 - mf).abs() / (1.0 + m2.abs()), f64::max);
            Ok((two, m2, err))
        })();
        let failure = match attempt {
            Ok((phi1, m1, err)) if err <= ctl.tolerance => {
                let state = MetricState::from_potential(grid.clone(), phi1, m1)?;
                let provisional = FlowState::assemble(fs.t + h, state, 0.0, 0.0)?;
                let c = advance_c(fs.c, fs.b, provisional.b, h);
                let mabuchi = fs.mabuchi - 0.5 * h * (fs.y + provisional.y) / VOLUME;
                let next = FlowState {
                    c,
                    mabuchi,
                    ..provisional
                };
                let factor = if err > 0.0 {
                    (SAFETY * (ctl.tolerance / err).powf(0.2)).clamp(0.2, 2.0)
                } else {
                    2.0
                };
                let suggested = (h * factor).min(ctl.dt_max).min(stability_bound(&next.state));
                return Ok(Step {
                    next,
                    dt: h,
                    dt_suggested: suggested.max(ctl.dt_min),
                    rejections,
                    error_estimate: err,
                });
            }
            Ok((_, _, err)) => Error::Stepping {
                t: fs.t,
                dt: 0.5 * h,
                dt_min: ctl.dt_min,
                estimate: err,
            },
            Err(e) => e,
        };
        rejections += 1;
        h *= 0.5;
        if h < ctl.dt_min {
            return Err(failure);
        }
    }
}

/// Drives `flow_step` across sample times, carrying the controller state.
#[derive(Debug, Clone)]
pub struct Integrator {
    pub control: StepControl,
    dt: f64,
    pub accepted: usize,
    pub rejected: usize,
}

impl Integrator {
    pub fn new(control: StepControl, dt_init: f64) -> Self {
        Integrator {
            control,
            dt: dt_init,
            accepted: 0,
            rejected: 0,
        }
    }

    pub fn advance_to(&mut self, mut fs: FlowState, t_target: f64) -> Result<FlowState> {
        let eps = 1e-12 * t_target.abs().max(1.0);
        while fs.t < t_target - eps {
            let dt = self.dt.min(stability_bound(&fs.state)).min(self.control.dt_max);
            let remaining = t_target - fs.t;
            let landing = dt >= remaining;
            let h = if landing { remaining } else { dt };
            let step = flow_step(&fs, h, &self.control)?;
            self.accepted += 1;
            self.rejected += step.rejections;
            let landed = landing && step.rejections == 0;
            if !landed || step.dt_suggested > self.dt {
                self.dt = step.dt_suggested;
            }
            fs = step.next;
            if landed {
                fs.t = t_target;
            }
        }
        Ok(fs)
    }
}
