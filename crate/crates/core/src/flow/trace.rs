use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{profile_state, FlowConfig, InitialData, Profile};
use super::integrator::{hat_u, FlowState, Integrator, StepControl};
use super::potential::{exp_normalization, poisson_residual, ricci_potential, ricci_potential_from_speed};
use crate::error::{Error, Result};
use crate::functionals::{self, futaki_projection, oscillation_bound};
use crate::geometry::{self, ball_volume_ratio, GridDescriptor, GridSpec, MetricState};
use crate::spectral;

/// Column order of the trace CSV.
pub const TRACE_COLUMNS: [&str; 14] = [
    "t", "Y", "b", "c", "M", "u_c0", "grad_u_c0", "grad_u_l2", "Rn_c0", "Rn_l2", "lambda", "mu",
    "noncollapse", "futaki",
];

/// Scalar monitors at one sample time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub t: f64,
    pub y: f64,
    pub b: f64,
    pub c: f64,
    pub mabuchi: f64,
    pub u_c0: f64,
    pub grad_u_c0: f64,
    pub grad_u_l2: f64,
    pub rn_c0: f64,
    pub rn_l2: f64,
    /// Lowest positive eigenvalue of `∂̄†∂̄` on vector fields.
    pub lambda: Option<f64>,
    /// Lowest positive eigenvalue of the weighted Poincaré problem.
    pub mu: Option<f64>,
    pub noncollapse: Option<f64>,
    /// Futaki pairing evaluated on the projection of `∇u`.
    pub futaki: f64,
    /// Largest `|Fut(X)|` over the basis of holomorphic fields.
    pub futaki_character: f64,
    pub vector_kernel: Option<usize>,
    pub mu_kernel: Option<usize>,
    pub r_c0: f64,
    pub u_minus_b_c0: f64,
    pub average_bound_holds: bool,
    pub oscillation_constant: Option<f64>,
    /// Right-hand side of the differential identity for `Y`.
    pub y_rhs: f64,
    pub volume: f64,
    pub exp_normalization: f64,
    /// Spatial mean and spread of `φ̇ − u`.
    pub time_constant: f64,
    pub time_constant_spread: f64,
    /// `‖u_Poisson − u_speed‖_{C⁰}`.
    pub u_route_gap: f64,
    pub poisson_residual: f64,
    pub min_density: f64,
    pub hat_u_c0: f64,
    pub phi_offset: f64,
}

impl FlowRecord {
    fn is_finite(&self) -> bool {
        let opt = |v: Option<f64>| v.map_or(true, f64::is_finite);
        [
            self.t, self.y, self.b, self.c, self.mabuchi, self.u_c0, self.grad_u_c0, self.grad_u_l2,
            self.rn_c0, self.rn_l2, self.futaki, self.r_c0, self.y_rhs,
        ]
        .iter()
        .all(|v| v.is_finite())
            && opt(self.lambda)
            && opt(self.mu)
            && opt(self.noncollapse)
    }
}

/// Metric snapshot: grid, potential and enough metadata to restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub grid: GridDescriptor,
    pub phi: Vec<f64>,
    pub phi_offset: f64,
    pub c: f64,
    pub profile: String,
    pub amplitude: f64,
}

impl Snapshot {
    pub fn state(&self) -> Result<MetricState> {
        let grid = Arc::new(GridSpec::new(self.grid.node_count)?);
        MetricState::from_potential(grid, self.phi.clone(), self.phi_offset)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowTrace {
    pub config: FlowConfig,
    /// Amplitude actually used for the initial potential.
    pub amplitude: f64,
    /// Potential constant chosen at `t = 0` so that `φ̇(0) = u(0)`.
    pub initial_offset: f64,
    pub records: Vec<FlowRecord>,
    pub snapshots: Vec<Snapshot>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl FlowTrace {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn series(&self, f: impl Fn(&FlowRecord) -> f64) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = TRACE_COLUMNS.join(",");
        s.push('\n');
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.12e}")).unwrap_or_default();
        for r in &self.records {
            let _ = writeln!(
                s,
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{},{},{:.12e}",
                r.t,
                r.y,
                r.b,
                r.c,
                r.mabuchi,
                r.u_c0,
                r.grad_u_c0,
                r.grad_u_l2,
                r.rn_c0,
                r.rn_l2,
                opt(r.lambda),
                opt(r.mu),
                opt(r.noncollapse),
                r.futaki
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// A run that stopped early, carrying everything recorded before the failure.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct FlowFailure {
    #[source]
    pub error: Error,
    pub trace: Box<FlowTrace>,
}

impl From<FlowFailure> for Error {
    fn from(f: FlowFailure) -> Error {
        f.error
    }
}

/// Amplitude `a` for which `φ₀ = aP` has `‖u‖_{C⁰} = target` to relative
/// accuracy `1e-6`, found by bisection.
pub fn calibrate_amplitude(grid: &Arc<GridSpec>, profile: &Profile, target: f64) -> Result<f64> {
    if *profile == Profile::Reference {
        return Err(Error::config("flow", "the reference profile cannot reach a positive target"));
    }
    let norm = |a: f64| -> Result<f64> {
        let s = profile_state(grid, profile, a)?;
        let u = ricci_potential(&s)?;
        Ok(s.c0_norm(&u.values))
    };
    let (mut lo, mut hi) = (0.0, target);
    loop {
        match norm(hi) {
            Ok(v) if v >= target => break,
            Ok(_) => {
                lo = hi;
                hi *= 2.0;
            }
            Err(e) if e.is_config() => {
                // Guard hit: bisect for the largest admissible amplitude.
                let (mut ok, mut bad) = (lo, hi);
                for _ in 0..60 {
                    let mid = 0.5 * (ok + bad);
                    if profile_state(grid, profile, mid).is_ok() {
                        ok = mid;
                    } else {
                        bad = mid;
                    }
                }
                let reach = if ok > 0.0 { norm(ok)? } else { 0.0 };
                if reach < target {
                    return Err(Error::config(
                        "flow",
                        format!(
                            "profile {} reaches at most ‖u‖ = {reach:.4e} before losing positivity; target {target}",
                            profile.name()
                        ),
                    ));
                }
                hi = ok;
                break;
            }
            Err(e) => return Err(e),
        }
        if hi > 1e6 {
            return Err(Error::config("flow", format!("profile {} cannot reach target {target}", profile.name())));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = norm(mid)?;
        if (v - target).abs() <= 1e-6 * target {
            return Ok(mid);
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Initial metric described by `init`, with the amplitude it resolved to.
pub fn initial_state(init: &InitialData, grid: &Arc<GridSpec>) -> Result<(MetricState, f64)> {
    if init.profile == Profile::Reference {
        return Ok((MetricState::reference(grid.clone()), 0.0));
    }
    let a = match (init.amplitude, init.target_u_c0) {
        (Some(a), _) => a,
        (None, Some(e)) => calibrate_amplitude(grid, &init.profile, e)?,
        (None, None) => return Err(Error::config("flow", "initial amplitude missing")),
    };
    Ok((profile_state(grid, &init.profile, a)?, a))
}

/// All scalar monitors of a flow state; the eigenvalue and ball-volume
/// monitors only when `spectral` is set.
pub fn sample_record(fs: &FlowState, kmax: usize, noncollapse_radius: f64, spectral: bool) -> Result<FlowRecord> {
    let s = &fs.state;
    let u = &fs.u;
    let grad = geometry::grad_norm_sq(s, u)?;
    let grad_c0 = s.c0_norm(&grad.values).sqrt();
    let rn: Vec<f64> = s.curvature().iter().map(|r| r - 1.0).collect();
    let fut = futaki_projection(s, u)?;
    let l3 = oscillation_bound(s, u, fs.b);
    let (tc, spread) = fs.time_constant();
    let alt = ricci_potential_from_speed(s)?;
    let gap = u
        .values
        .iter()
        .zip(&alt.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let hat = hat_u(fs);

    let (lambda, vector_kernel, mu, mu_kernel, noncollapse) = if spectral {
        let v = spectral::vector_laplacian_spectrum(s, kmax)?;
        let p = spectral::poincare_mu(s, u, kmax)?;
        let nc = ball_volume_ratio(s, noncollapse_radius);
        (
            Some(v.lambda_min_positive),
            Some(v.kernel_dimension),
            Some(p.lambda_min_positive),
            Some(p.kernel_dimension),
            Some(nc.ratio),
        )
    } else {
        (None, None, None, None, None)
    };

    Ok(FlowRecord {
        t: fs.t,
        y: fs.y,
        b: fs.b,
        c: fs.c,
        mabuchi: fs.mabuchi,
        u_c0: s.c0_norm(&u.values),
        grad_u_c0: grad_c0,
        grad_u_l2: fs.y.max(0.0).sqrt(),
        rn_c0: s.c0_norm(&rn),
        rn_l2: s.l2_norm(&rn),
        lambda,
        mu,
        noncollapse,
        futaki: fut.futaki_value,
        futaki_character: fut.character.iter().fold(0.0, |m, v| m.max(v.abs())),
        vector_kernel,
        mu_kernel,
        r_c0: s.c0_norm(s.curvature()),
        u_minus_b_c0: l3.u_minus_b_c0,
        average_bound_holds: l3.inequality_holds,
        oscillation_constant: l3.constant,
        y_rhs: functionals::y_identity_rhs(s, u)?,
        volume: s.volume(),
        exp_normalization: exp_normalization(s, &u.values),
        time_constant: tc,
        time_constant_spread: spread,
        u_route_gap: gap,
        poisson_residual: poisson_residual(s, u),
        min_density: s.min_density(),
        hat_u_c0: s.c0_norm(&hat.values),
        phi_offset: s.phi_offset(),
    })
}

fn snapshot(fs: &FlowState, config: &FlowConfig, amplitude: f64) -> Snapshot {
    Snapshot {
        t: fs.t,
        grid: fs.state.grid().descriptor(),
        phi: fs.state.phi_shape().to_vec(),
        phi_offset: fs.state.phi_offset(),
        c: fs.c,
        profile: config.initial.profile.name(),
        amplitude,
    }
}

/// Sample times `0, h, 2h, …, T`; the last one is `T` exactly.
pub fn sample_times(end: f64, cadence: f64) -> Vec<f64> {
    let n = (end / cadence - 1e-9).ceil().max(1.0) as usize;
    let mut t: Vec<f64> = (0..n).map(|k| k as f64 * cadence).collect();
    t.push(end);
    t
}

pub fn run_flow(config: &FlowConfig) -> std::result::Result<FlowTrace, FlowFailure> {
    let mut trace = FlowTrace {
        config: config.clone(),
        amplitude: 0.0,
        initial_offset: 0.0,
        records: Vec::new(),
        snapshots: Vec::new(),
        accepted_steps: 0,
        rejected_steps: 0,
    };
    let fail = |error: Error, trace: &FlowTrace| FlowFailure {
        error,
        trace: Box::new(trace.clone()),
    };
    if let Err(e) = config.validate() {
        return Err(fail(e, &trace));
    }
    let start = (|| -> Result<_> {
        let grid = geometry::build_grid(config.node_count)?;
        let (state, a) = initial_state(&config.initial, &grid)?;
        Ok((FlowState::start(state, 0.0)?, a))
    })();
    let (mut fs, amplitude) = match start {
        Ok(v) => v,
        Err(e) => return Err(fail(e, &trace)),
    };
    trace.amplitude = amplitude;
    trace.initial_offset = fs.state.phi_offset();

    let times = sample_times(config.end_time, config.monitor_cadence);
    let every = if config.spectral_cadence > 0.0 {
        Some(((config.spectral_cadence / config.monitor_cadence).round() as usize).max(1))
    } else {
        None
    };
    let checkpoint_index: Vec<usize> = config
        .checkpoints
        .iter()
        .map(|&c| {
            times
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - c).abs().total_cmp(&(b.1 - c).abs()))
                .map(|(i, _)| i)
                .unwrap_or(0)
        })
        .collect();

    let mut integrator = Integrator::new(
        StepControl {
            tolerance: config.tolerance,
            dt_min: config.dt_min,
            dt_max: config.dt_max,
        },
        config.dt_init,
    );
    for (i, &t) in times.iter().enumerate() {
        if i > 0 {
            fs = match integrator.advance_to(fs, t) {
                Ok(next) => next,
                Err(e) => {
                    trace.accepted_steps = integrator.accepted;
                    trace.rejected_steps = integrator.rejected;
                    return Err(fail(e, &trace));
                }
            };
        }
        let spectral = every.is_some_and(|k| i % k == 0 || i + 1 == times.len());
        let record = match sample_record(&fs, config.kmax, config.noncollapse_radius, spectral) {
            Ok(r) if r.is_finite() => r,
            Ok(_) => {
                let e = Error::numerical("flow", "trace", format!("non-finite monitor at t = {t}"));
                return Err(fail(e, &trace));
            }
            Err(e) => return Err(fail(e, &trace)),
        };
        trace.records.push(record);
        if checkpoint_index.contains(&i) {
            trace.snapshots.push(snapshot(&fs, config, amplitude));
        }
    }
    trace.accepted_steps = integrator.accepted;
    trace.rejected_steps = integrator.rejected;
    Ok(trace)
}
