//! Scalar functionals of the Ricci potential and the inequality monitors
//! built on them.

pub mod decay;
pub mod futaki;
pub mod oscillation;
pub mod monitor;

pub use decay::{decay_fit, envelope_holds, DecayCertificate, MIN_FIT_SAMPLES};
pub use futaki::{futaki_projection, FutakiProjection};
pub use oscillation::{oscillation_bound, OscillationBound, OSCILLATION_DENOMINATOR_FLOOR};
pub use monitor::{monitor_csv, monitor_records, MonitorRecord, MONITOR_COLUMNS};

use crate::error::{Error, Result};
use crate::flow::FlowTrace;
use crate::geometry::{self, MetricState, ScalarField, DIM, VOLUME};

/// `Y = ∫|∇u|² ω = π∫ψ₀ u'² dx`.
pub fn y_functional(state: &MetricState, u: &ScalarField) -> f64 {
    let grid = state.grid();
    let d = grid.diff(&u.values);
    let f: Vec<f64> = d.iter().zip(grid.psi0()).map(|(d, p)| p * d * d).collect();
    std::f64::consts::PI * grid.quad(&f)
}

/// `(n+1)Y − ∫|∇u|²R − ∫|∇∇̄u|² − ∫|∇∇u|²`.
pub fn y_identity_rhs(state: &MetricState, u: &ScalarField) -> Result<f64> {
    let grad = geometry::grad_norm_sq(state, u)?;
    let (mixed, pure) = geometry::hessian_norms(state, u)?;
    let ric = state.integrate(&geometry::ops::product(&grad.values, state.curvature()));
    Ok((DIM + 1.0) * y_functional(state, u) - ric - state.integrate(&mixed.values) - state.integrate(&pure.values))
}

fn locate(times: &[f64], t: f64) -> Option<usize> {
    let tol = 1e-9 * t.abs().max(1.0);
    times.iter().position(|s| (s - t).abs() <= tol)
}

/// Three-point derivative at `times[i]` using neighbours `stride` samples away.
pub fn central_derivative(times: &[f64], values: &[f64], i: usize, stride: usize) -> Option<f64> {
    if i < stride || i + stride >= times.len() {
        return None;
    }
    let (t0, t1, t2) = (times[i - stride], times[i], times[i + stride]);
    let (h1, h2) = (t1 - t0, t2 - t1);
    let (f0, f1, f2) = (values[i - stride], values[i], values[i + stride]);
    Some(-h2 / (h1 * (h1 + h2)) * f0 + (h2 - h1) / (h1 * h2) * f1 + h1 / (h2 * (h1 + h2)) * f2)
}

/// `|Ẏ_fd − RHS| / (1 + |Y|)` at sample time `t`, differencing across
/// neighbours `stride` samples away.
pub fn y_identity_residual_stride(trace: &FlowTrace, t: f64, stride: usize) -> Result<f64> {
    let times = trace.times();
    let i = locate(&times, t).ok_or_else(|| Error::numerical("functionals", "y_identity", format!("t = {t} is not a sample time")))?;
    let y = trace.series(|r| r.y);
    let dy = central_derivative(&times, &y, i, stride).ok_or(Error::NeedsNeighbors {
        t,
        h: trace.config.monitor_cadence * stride as f64,
    })?;
    let r = &trace.records[i];
    Ok((dy - r.y_rhs).abs() / (1.0 + r.y.abs()))
}

pub fn y_identity_residual(trace: &FlowTrace, t: f64) -> Result<f64> {
    y_identity_residual_stride(trace, t, 1)
}

/// Residual with the Richardson-extrapolated derivative `(4D_h − D_{2h})/3`,
/// which removes the leading `h²` error of the central difference.
pub fn y_identity_residual_extrapolated(trace: &FlowTrace, t: f64) -> Result<f64> {
    let times = trace.times();
    let i = locate(&times, t).ok_or_else(|| Error::numerical("functionals", "y_identity", format!("t = {t} is not a sample time")))?;
    let y = trace.series(|r| r.y);
    let d1 = central_derivative(&times, &y, i, 1);
    let d2 = central_derivative(&times, &y, i, 2);
    let (Some(d1), Some(d2)) = (d1, d2) else {
        return Err(Error::NeedsNeighbors {
            t,
            h: 2.0 * trace.config.monitor_cadence,
        });
    };
    let r = &trace.records[i];
    Ok(((4.0 * d1 - d2) / 3.0 - r.y_rhs).abs() / (1.0 + r.y.abs()))
}

/// Identity residuals over a whole trace with a cadence-resolution guard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityScan {
    /// Largest extrapolated residual over the resolved samples.
    pub max_residual: f64,
    /// Samples whose central difference error estimate `|D_h − D_{2h}|/3`
    /// exceeds `tol·(1 + Y)`: the cadence does not resolve `Ẏ` there.
    pub unresolved: usize,
    pub last_unresolved: Option<f64>,
}

pub fn y_identity_scan(trace: &FlowTrace, tol: f64) -> IdentityScan {
    let times = trace.times();
    let y = trace.series(|r| r.y);
    let mut scan = IdentityScan {
        max_residual: 0.0,
        unresolved: 0,
        last_unresolved: None,
    };
    for (i, r) in trace.records.iter().enumerate() {
        let (Some(d1), Some(d2)) = (central_derivative(&times, &y, i, 1), central_derivative(&times, &y, i, 2)) else {
            continue;
        };
        let scale = 1.0 + r.y.abs();
        if (d1 - d2).abs() / 3.0 > tol * scale {
            scan.unresolved += 1;
            scan.last_unresolved = Some(r.t);
            continue;
        }
        let res = ((4.0 * d1 - d2) / 3.0 - r.y_rhs).abs() / scale;
        scan.max_residual = scan.max_residual.max(res);
    }
    scan
}

/// `M(t)` by trapezoidal quadrature of `−Y/V` from `M(t₀) = 0`.
pub fn mabuchi_along_flow(trace: &FlowTrace) -> Vec<f64> {
    let mut out = Vec::with_capacity(trace.records.len());
    let mut m = 0.0;
    for (k, r) in trace.records.iter().enumerate() {
        if k > 0 {
            let p = &trace.records[k - 1];
            m -= 0.5 * (r.t - p.t) * (r.y + p.y) / VOLUME;
        }
        out.push(m);
    }
    out
}

/// Running trapezoidal integral of `values^p`.
pub fn p_integral(times: &[f64], values: &[f64], p: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    for k in 0..times.len() {
        if k > 0 {
            acc += 0.5 * (times[k] - times[k - 1]) * (values[k].abs().powf(p) + values[k - 1].abs().powf(p));
        }
        out.push(acc);
    }
    out
}

/// Increments of a running series over `[k, k+1]`, `k = 0, 1, …`, with
/// linear interpolation between samples.
pub fn unit_increments(times: &[f64], running: &[f64]) -> Vec<f64> {
    let at = |t: f64| -> f64 {
        match times.iter().position(|s| *s >= t - 1e-12) {
            Some(0) => running[0],
            Some(j) => {
                let w = (t - times[j - 1]) / (times[j] - times[j - 1]);
                running[j - 1] + w * (running[j] - running[j - 1])
            }
            None => *running.last().unwrap_or(&0.0),
        }
    };
    let end = times.last().copied().unwrap_or(0.0);
    let mut out = Vec::new();
    let mut k = 0.0;
    while k + 1.0 <= end + 1e-12 {
        out.push(at(k + 1.0) - at(k));
        k += 1.0;
    }
    out
}

/// Largest observed `‖∇u‖_{C⁰}(t) / (‖∇u‖_{C⁰}^{n/(n+1)} ‖∇u‖_{L²}^{1/(n+1)})(t − lag)`
/// over samples whose lagged norms exceed `floor`.
pub fn iteration_ratio(trace: &FlowTrace, lag: f64, floor: f64) -> Option<f64> {
    let times = trace.times();
    let e = DIM / (DIM + 1.0);
    let mut best: Option<f64> = None;
    for r in &trace.records {
        if r.t < lag - 1e-12 {
            continue;
        }
        let Some(j) = locate(&times, r.t - lag).or_else(|| {
            times
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - (r.t - lag)).abs().total_cmp(&(b.1 - (r.t - lag)).abs()))
                .map(|(j, _)| j)
        }) else {
            continue;
        };
        let p = &trace.records[j];
        if p.grad_u_c0 <= floor || p.grad_u_l2 <= floor {
            continue;
        }
        let ratio = r.grad_u_c0 / (p.grad_u_c0.powf(e) * p.grad_u_l2.powf(1.0 - e));
        best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
    }
    best
}
