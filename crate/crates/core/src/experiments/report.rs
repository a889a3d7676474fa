//! End-to-end convergence report: runs the flow and evaluates every module
//! invariant on the trace.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::delay::{default_mu_grid, delay_comparison, DelayInequalityCase, DelayOutcome};
use crate::error::{Error, Result};
use crate::flow::{run_flow, FlowConfig, FlowTrace};
use crate::functionals::{
    self, decay_fit, mabuchi_along_flow, p_integral, unit_increments, DecayCertificate, MIN_FIT_SAMPLES,
};
use crate::geometry::{self, MetricState, DIM, VOLUME};
use crate::spectral;

/// Below these levels the monitored quantities are dominated by round-off
/// (fourth derivatives of the potential for `R`), so monotonicity and decay
/// checks only use samples above them.
pub const CURVATURE_FLOOR: f64 = 1e-10;
pub const POTENTIAL_FLOOR: f64 = 1e-10;
pub const Y_FLOOR: f64 = 1e-20;
/// Absolute round-off level of `‖R − 1‖_{C⁰}` at the default grid sizes;
/// sample-to-sample increases below it are not counted as non-monotone.
pub const CURVATURE_NOISE: f64 = 1e-12;

/// Exponent of the curvature integral.
pub const P_EXPONENT: f64 = 2.5;
/// Lag of the gradient iteration inequality and the delay used for the
/// measured delay certificate.
pub const ITERATION_LAG: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub module: String,
    pub monitor: String,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub detail: String,
}

impl Check {
    fn new(module: &str, monitor: &str, pass: bool, value: Option<f64>, threshold: Option<f64>, detail: impl Into<String>) -> Self {
        Check {
            module: module.to_string(),
            monitor: monitor.to_string(),
            pass,
            value,
            threshold,
            detail: detail.into(),
        }
    }

    /// `value ≤ threshold`.
    fn at_most(module: &str, monitor: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Check::new(module, monitor, value.is_finite() && value <= threshold, Some(value), Some(threshold), detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub amplitude: f64,
    pub final_time: f64,
    pub final_rn_c0: f64,
    pub final_y: f64,
    pub y_decay_rate: Option<f64>,
    pub lambda_inf: Option<f64>,
    pub lambda_reference: Option<f64>,
    pub mu_min: Option<f64>,
    pub noncollapse_min: Option<f64>,
    pub mabuchi_final: f64,
    pub oscillation_constant_max: Option<f64>,
    pub iteration_ratio: Option<f64>,
    pub p_integral: f64,
    pub a_priori_max: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub config: FlowConfig,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub checks: Vec<Check>,
    pub summary: ReportSummary,
    /// Exponential envelopes keyed by monitored quantity.
    pub envelopes: BTreeMap<String, DecayCertificate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay: Option<DelayOutcome>,
    #[serde(skip)]
    pub trace: Option<FlowTrace>,
}

impl ExperimentReport {
    pub fn failing(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    /// Plain-text digest: one line per check plus the headline numbers.
    pub fn text(&self) -> String {
        let mut s = format!(
            "report {}: {}\n",
            self.name,
            if self.pass { "PASS" } else { "FAIL" }
        );
        if let Some(f) = &self.failure {
            s.push_str(&format!("  failure: {f}\n"));
        }
        let m = &self.summary;
        s.push_str(&format!(
            "  T = {}  |R-1|_C0(T) = {:.3e}  Y(T) = {:.3e}  M(T) = {:.6e}  steps = {} (+{} rejected)\n",
            m.final_time, m.final_rn_c0, m.final_y, m.mabuchi_final, m.accepted_steps, m.rejected_steps
        ));
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
        s.push_str(&format!(
            "  Y rate = {}  inf lambda = {} (reference {})  min mu = {}  min ball ratio = {}\n",
            opt(m.y_decay_rate),
            opt(m.lambda_inf),
            opt(m.lambda_reference),
            opt(m.mu_min),
            opt(m.noncollapse_min)
        ));
        for c in &self.checks {
            s.push_str(&format!(
                "  [{}] {}/{}: {}\n",
                if c.pass { "ok" } else { "FAIL" },
                c.module,
                c.monitor,
                c.detail
            ));
        }
        s
    }
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Envelope fit on `[start, first time value < floor)`. A series already
/// below the floor at `start` counts as converged.
pub fn tail_fit(times: &[f64], values: &[f64], start: f64, floor: f64) -> Result<DecayCertificate> {
    let first = times.iter().position(|t| *t >= start - 1e-12).unwrap_or(times.len());
    let mut end = first;
    while end < times.len() && values[end] > floor {
        end += 1;
    }
    if end - first < MIN_FIT_SAMPLES {
        if first < times.len() && values[first] <= floor {
            let upto = times.len() - 1;
            let zeros = vec![0.0; times.len()];
            return decay_fit(times, &zeros, [times[first], times[upto]]);
        }
        return Err(Error::numerical(
            "functionals",
            "decay_fit",
            format!("only {} samples above the floor {floor:e} after t = {start}", end - first),
        ));
    }
    decay_fit(times, values, [times[first], times[end - 1]])
}

/// Delay-inequality case built from a trace's `Y`, cut where `Y` reaches
/// the round-off floor.
pub fn measured_delay_case(trace: &FlowTrace, lambda: f64, k0: f64) -> Option<DelayInequalityCase> {
    let cut = trace.records.iter().position(|r| r.y <= Y_FLOOR).unwrap_or(trace.records.len());
    let records = &trace.records[..cut];
    if records.last().is_none_or(|r| r.t <= k0 + 2.0 * trace.config.monitor_cadence) {
        return None;
    }
    Some(DelayInequalityCase {
        times: records.iter().map(|r| r.t).collect(),
        values: records.iter().map(|r| r.y).collect(),
        lambda,
        delays: vec![ITERATION_LAG as u32],
        weights: vec![1.0],
        k0,
    })
}

pub fn evaluate_trace(trace: &FlowTrace) -> (Vec<Check>, ReportSummary, BTreeMap<String, DecayCertificate>, Option<DelayOutcome>) {
    let cfg = &trace.config;
    let recs = &trace.records;
    let times = trace.times();
    let last = recs.last().expect("trace has at least the initial sample");
    let transient = cfg.transient.min(last.t);
    let mut checks = Vec::new();
    let mut summary = ReportSummary {
        amplitude: trace.amplitude,
        final_time: last.t,
        final_rn_c0: last.rn_c0,
        final_y: last.y,
        mabuchi_final: last.mabuchi,
        accepted_steps: trace.accepted_steps,
        rejected_steps: trace.rejected_steps,
        ..Default::default()
    };

    // flow invariants
    checks.push(Check::at_most(
        "flow",
        "normalization",
        max_of(recs.iter().map(|r| (r.exp_normalization - 1.0).abs())),
        1e-9,
        "max |(1/V)∫e^{-u}ω − 1|",
    ));
    checks.push(Check::at_most(
        "flow",
        "volume",
        max_of(recs.iter().map(|r| (r.volume / VOLUME - 1.0).abs())),
        1e-9,
        "max relative volume drift",
    ));
    checks.push(Check::at_most(
        "flow",
        "time_constant",
        max_of(recs.iter().map(|r| r.time_constant_spread)),
        1e-8,
        "max spatial spread of φ̇ − u",
    ));
    checks.push(Check::at_most(
        "flow",
        "potential_routes",
        max_of(recs.iter().map(|r| r.u_route_gap)),
        1e-7,
        "max |u_Poisson − u_speed|",
    ));
    checks.push(Check::at_most(
        "flow",
        "poisson_residual",
        max_of(recs.iter().map(|r| r.poisson_residual)),
        1e-9,
        "max |Δu − (1 − R)|",
    ));
    let a_priori: Vec<f64> = recs.iter().map(|r| r.u_c0 + r.grad_u_c0 + r.r_c0).collect();
    let quarter = (a_priori.len() / 4).max(1);
    let early = max_of(a_priori[..quarter].iter().copied());
    summary.a_priori_max = max_of(a_priori.iter().copied());
    checks.push(Check::at_most(
        "flow",
        "a_priori_bound",
        summary.a_priori_max,
        10.0 * early,
        "‖u‖ + ‖∇u‖ + ‖R‖ never exceeds 10× its first-quarter maximum",
    ));

    // functionals
    checks.push(Check::new(
        "functionals",
        "y_nonnegative",
        recs.iter().all(|r| r.y >= 0.0),
        None,
        None,
        "Y ≥ 0 at every sample",
    ));
    let b_drop = max_of(recs.windows(2).map(|w| w[0].b - w[1].b).chain([0.0]));
    checks.push(Check::at_most("functionals", "b_monotone", b_drop, 1e-8, "largest decrease of b between samples"));
    let m_series = mabuchi_along_flow(trace);
    let m_rise = max_of(
        recs.windows(2)
            .map(|w| w[1].mabuchi - w[0].mabuchi)
            .chain(m_series.windows(2).map(|w| w[1] - w[0]))
            .chain([0.0]),
    );
    checks.push(Check::at_most("functionals", "mabuchi_monotone", m_rise, 1e-10, "largest increase of M between samples"));
    let i34 = times.iter().position(|t| *t >= 0.75 * last.t).unwrap_or(0);
    let plateau = (last.mabuchi - recs[i34].mabuchi).abs();
    let plateau_tol = 1e-3 * last.mabuchi.abs() + 1e-14;
    checks.push(Check::at_most(
        "functionals",
        "mabuchi_plateau",
        plateau,
        plateau_tol,
        "|M(T) − M(3T/4)|: K-energy bounded below along the run",
    ));
    let chain = max_of(recs.iter().map(|r| r.rn_l2 - VOLUME.sqrt() * r.rn_c0 * (1.0 + 1e-12)));
    checks.push(Check::at_most("functionals", "norm_chain", chain, 1e-15, "‖R−n‖_{L²} − V^{1/2}‖R−n‖_{C⁰}"));
    checks.push(Check::new(
        "functionals",
        "average_bound",
        recs.iter().all(|r| r.average_bound_holds),
        None,
        None,
        "0 ≤ −b ≤ ‖u − b‖_{C⁰} at every sample",
    ));
    let l3: Vec<f64> = recs.iter().filter_map(|r| r.oscillation_constant).collect();
    summary.oscillation_constant_max = (!l3.is_empty()).then(|| max_of(l3.iter().copied()));
    checks.push(Check::new(
        "functionals",
        "oscillation_constant",
        l3.iter().all(|c| c.is_finite()),
        summary.oscillation_constant_max,
        None,
        "extracted constant finite wherever the denominator is resolvable",
    ));
    let fut = max_of(recs.iter().map(|r| r.futaki.abs().max(r.futaki_character)));
    checks.push(Check::at_most("functionals", "futaki", fut, 1e-7, "max |Fut| over samples and basis fields"));
    let rmax = max_of(recs.iter().map(|r| r.r_c0));
    let identity_bound = max_of(recs.iter().map(|r| r.y_rhs - (DIM + 1.0 + rmax) * r.y * (1.0 + 1e-9)));
    checks.push(Check::at_most(
        "functionals",
        "y_growth_bound",
        identity_bound,
        1e-18,
        "Ẏ ≤ (n + 1 + max‖R‖)·Y",
    ));
    let h = cfg.monitor_cadence;
    let tol = 10.0 * h * h;
    let scan = functionals::y_identity_scan(trace, tol);
    let resolved_after_transient = scan.last_unresolved.is_none_or(|t| t < transient);
    checks.push(Check::new(
        "functionals",
        "y_identity",
        scan.max_residual <= tol && resolved_after_transient,
        Some(scan.max_residual),
        Some(tol),
        match scan.last_unresolved {
            None => "max |Ẏ_fd − RHS|/(1+Y) with the Richardson-extrapolated central difference".to_string(),
            Some(t) => format!(
                "max |Ẏ_fd − RHS|/(1+Y) with the Richardson-extrapolated central difference; {} samples up to t = {t} not resolved by the cadence",
                scan.unresolved
            ),
        },
    ));
    summary.iteration_ratio = functionals::iteration_ratio(trace, ITERATION_LAG, POTENTIAL_FLOOR);
    checks.push(Check::new(
        "functionals",
        "iteration_inequality",
        summary.iteration_ratio.is_none_or(f64::is_finite),
        summary.iteration_ratio,
        None,
        "largest ‖∇u‖(t) / (‖∇u‖_{C⁰}^{1/2} ‖∇u‖_{L²}^{1/2})(t−2)",
    ));

    // Convergence monitors
    checks.push(Check::at_most(
        "functionals",
        "curvature_convergence",
        last.rn_c0,
        1e-4,
        "‖R − 1‖_{C⁰} at the final time",
    ));
    let non_monotone = recs
        .windows(2)
        .filter(|w| w[0].t >= transient && w[1].rn_c0 > CURVATURE_FLOOR)
        .filter(|w| w[1].rn_c0 > w[0].rn_c0 * (1.0 + 1e-9) + CURVATURE_NOISE)
        .count();
    checks.push(Check::new(
        "functionals",
        "curvature_monotone",
        non_monotone == 0,
        Some(non_monotone as f64),
        Some(0.0),
        format!("‖R − 1‖_{{C⁰}} nonincreasing after t = {transient} while above {CURVATURE_FLOOR:e}"),
    ));

    let mut envelopes = BTreeMap::new();
    let fit_specs: [(&str, fn(&crate::flow::FlowRecord) -> f64, f64); 4] = [
        ("Y", |r| r.y, Y_FLOOR),
        ("u_c0", |r| r.u_c0, POTENTIAL_FLOOR),
        ("grad_u_c0", |r| r.grad_u_c0, POTENTIAL_FLOOR),
        ("Rn_c0", |r| r.rn_c0, CURVATURE_FLOOR),
    ];
    for (name, f, floor) in fit_specs {
        match tail_fit(&times, &trace.series(f), transient, floor) {
            Ok(c) => {
                envelopes.insert(name.to_string(), c);
            }
            Err(e) => checks.push(Check::new("functionals", "decay_fit", false, None, None, format!("{name}: {e}"))),
        }
    }
    if let Some(y) = envelopes.get("Y") {
        summary.y_decay_rate = (!y.degenerate).then_some(y.rate);
        checks.push(Check::new(
            "functionals",
            "y_decay",
            y.pass,
            Some(y.rate),
            Some(0.0),
            format!("Y ≤ R e^{{−μt}} on [{:.2}, {:.2}] with μ > 0", y.window[0], y.window[1]),
        ));
        let needed = if y.degenerate { 0.0 } else { y.rate / (2.0 * (DIM + 1.0)) };
        for name in ["u_c0", "grad_u_c0", "Rn_c0"] {
            if let Some(c) = envelopes.get(name) {
                checks.push(Check::new(
                    "functionals",
                    &format!("{name}_decay"),
                    c.pass && (c.degenerate || c.rate >= needed),
                    Some(c.rate),
                    Some(needed),
                    format!("{name} envelope rate ≥ μ_Y/(2(n+1))"),
                ));
            }
        }
    }

    let rn = trace.series(|r| r.rn_c0);
    let running = p_integral(&times, &rn, P_EXPONENT);
    summary.p_integral = *running.last().unwrap_or(&0.0);
    let inc = unit_increments(&times, &running);
    let rn_at = |t: f64| -> f64 {
        let i = times.iter().position(|s| *s >= t - 1e-12).unwrap_or(times.len() - 1);
        rn[i]
    };
    let start = transient.ceil() as usize;
    let ratios: Vec<f64> = (start..inc.len().saturating_sub(1))
        .filter(|&k| rn_at(k as f64 + 2.0) > CURVATURE_FLOOR)
        .map(|k| inc[k + 1] / inc[k])
        .collect();
    checks.push(Check::at_most(
        "functionals",
        "p_integral_ratio",
        max_of(ratios.iter().copied().chain([0.0])),
        0.9,
        format!("ratio of successive unit-interval increments of ∫‖R−1‖^{P_EXPONENT} while above the floor"),
    ));
    if last.t >= 30.0 - 1e-9 {
        checks.push(Check::at_most(
            "functionals",
            "p_integral_tail",
            *inc.last().unwrap_or(&0.0),
            1e-8,
            "last unit-interval increment",
        ));
    }

    // spectral monitors
    let sampled: Vec<&crate::flow::FlowRecord> = recs.iter().filter(|r| r.lambda.is_some()).collect();
    if !sampled.is_empty() {
        let reference = geometry::build_grid(cfg.node_count)
            .and_then(|g| spectral::vector_laplacian_spectrum(&MetricState::reference(g), cfg.kmax))
            .map(|s| s.lambda_min_positive)
            .ok();
        summary.lambda_reference = reference;
        let after: Vec<f64> = sampled
            .iter()
            .filter(|r| r.t >= transient)
            .filter_map(|r| r.lambda)
            .collect();
        let lambda_inf = (!after.is_empty()).then(|| after.iter().cloned().fold(f64::INFINITY, f64::min));
        summary.lambda_inf = lambda_inf;
        let half_ref = reference.map(|r| 0.5 * r);
        checks.push(Check::new(
            "spectral",
            "condition_s",
            lambda_inf.is_some_and(|l| l > 0.0 && half_ref.is_none_or(|h| l >= h)),
            lambda_inf,
            half_ref,
            "inf λ after the transient is positive and at least half the reference value",
        ));
        checks.push(Check::new(
            "spectral",
            "vector_kernel",
            sampled.iter().all(|r| r.vector_kernel == Some(3)),
            None,
            Some(3.0),
            "holomorphic vector fields: kernel dimension 3 at every sampled state",
        ));
        let mu_min = sampled.iter().filter_map(|r| r.mu).fold(f64::INFINITY, f64::min);
        summary.mu_min = Some(mu_min);
        checks.push(Check::new(
            "spectral",
            "poincare",
            mu_min >= 1.0 - 1e-3 && sampled.iter().all(|r| r.mu_kernel == Some(1)),
            Some(mu_min),
            Some(1.0 - 1e-3),
            "weighted Poincaré eigenvalue ≥ 1 − 1e-3 with one-dimensional kernel",
        ));
        let nc = sampled.iter().filter_map(|r| r.noncollapse).fold(f64::INFINITY, f64::min);
        summary.noncollapse_min = Some(nc);
        checks.push(Check::new(
            "geometry",
            "noncollapse",
            nc > 0.0 && nc.is_finite(),
            Some(nc),
            Some(0.0),
            "min vol(B_r)/r² over sampled states",
        ));
    }

    // delay certificate on the measured trajectory
    let mut delay = None;
    if let Some(lambda) = summary.lambda_inf {
        let k0 = transient.max(ITERATION_LAG);
        match measured_delay_case(trace, lambda, k0) {
            Some(case) => {
                let out = delay_comparison(&case, &default_mu_grid(lambda, 200));
                let (pass, detail) = match &out {
                    Ok(DelayOutcome::Certificate { certificate, .. }) => {
                        (true, format!("certificate with μ = {:.4}", certificate.rate))
                    }
                    Ok(DelayOutcome::Violation(v)) => (false, format!("inequality violated at t = {}", v.t)),
                    Ok(DelayOutcome::NoCertificate { reason }) => (false, reason.clone()),
                    Err(e) => (false, e.to_string()),
                };
                checks.push(Check::new("experiments", "delay_certificate", pass, None, None, detail));
                delay = out.ok();
            }
            None => checks.push(Check::new(
                "experiments",
                "delay_certificate",
                true,
                None,
                None,
                "Y below the round-off floor before the delay window; nothing to certify",
            )),
        }
    }

    (checks, summary, envelopes, delay)
}

pub fn convergence_report(config: &FlowConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let name = config.initial.profile.name();
    match run_flow(config) {
        Ok(trace) => {
            let (checks, summary, envelopes, delay) = evaluate_trace(&trace);
            Ok(ExperimentReport {
                name,
                config: config.clone(),
                pass: checks.iter().all(|c| c.pass),
                failure: None,
                checks,
                summary,
                envelopes,
                delay,
                trace: Some(trace),
            })
        }
        Err(f) if f.error.is_config() => Err(f.error),
        Err(f) => {
            let monitor = match &f.error {
                Error::Stepping { .. } => "stepping",
                Error::Positivity { .. } => "positivity",
                Error::Regularity { .. } => "regularity",
                Error::Numerical { monitor, .. } => monitor,
                _ => "run",
            };
            let t = f.trace.records.last().map_or(0.0, |r| r.t);
            Ok(ExperimentReport {
                name,
                config: config.clone(),
                pass: false,
                failure: Some(f.error.to_string()),
                checks: vec![Check::new(
                    "flow",
                    monitor,
                    false,
                    Some(t),
                    None,
                    format!("run stopped after t = {t}: {}", f.error),
                )],
                summary: ReportSummary {
                    accepted_steps: f.trace.accepted_steps,
                    rejected_steps: f.trace.rejected_steps,
                    amplitude: f.trace.amplitude,
                    final_time: t,
                    ..Default::default()
                },
                envelopes: BTreeMap::new(),
                delay: None,
                trace: Some(*f.trace),
            })
        }
    }
}
