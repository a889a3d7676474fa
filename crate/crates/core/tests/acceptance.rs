//! Acceptance suite: one line per criterion on stderr, then a single assert.
//!
//! Run with `cargo test --test acceptance` (add `-- --nocapture` to also see
//! the per-criterion details for passing runs; the summary lines are always
//! printed).

use std::io::Write;
use std::path::PathBuf;

use krflow::experiments::{
    self, default_mu_grid, delay_comparison, measured_delay_case, smoothing_experiment, synthetic_exponential,
    tail_fit, DelayInequalityCase, DelayOutcome, ExperimentReport, SmoothingConfig, CURVATURE_FLOOR,
    CURVATURE_NOISE, P_EXPONENT, POTENTIAL_FLOOR, Y_FLOOR,
};
use krflow::flow::{initial_state, ricci_potential, run_flow, FlowConfig, FlowTrace, InitialData, Profile};
use krflow::functionals::{decay_fit, envelope_holds, p_integral, unit_increments, y_identity_residual_stride};
use krflow::geometry::{build_grid, reference_metric, scalar_curvature, scalar_curvature_moment};
use krflow::spectral::{poincare_mu, vector_laplacian_spectrum, DEFAULT_KMAX};
use krflow::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: u32, name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, name, pass, detail }
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Every shipped config that is a flow run, by file stem.
fn shipped_runs() -> Vec<(String, FlowConfig)> {
    let mut out: Vec<(String, FlowConfig)> = std::fs::read_dir(configs_dir())
        .expect("configs directory")
        .filter_map(|e| {
            let path = e.ok()?.path();
            let text = std::fs::read_to_string(&path).ok()?;
            let cfg: FlowConfig = serde_json::from_str(&text).ok()?;
            Some((path.file_stem()?.to_string_lossy().into_owned(), cfg))
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn even_small(node_count: usize, cadence: f64) -> FlowConfig {
    let mut cfg = FlowConfig::new(
        InitialData {
            profile: Profile::Legendre(2),
            amplitude: None,
            target_u_c0: Some(0.1),
        },
        30.0,
    );
    cfg.node_count = node_count;
    cfg.monitor_cadence = cadence;
    cfg
}

fn trace_of(report: &ExperimentReport) -> &FlowTrace {
    report.trace.as_ref().expect("report keeps its trace")
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn criterion_1() -> Outcome {
    let mut cfg = FlowConfig::new(InitialData::reference(), 5.0);
    cfg.node_count = 128;
    let trace = run_flow(&cfg).expect("reference run");
    let worst = max_of(trace.records.iter().map(|r| r.rn_c0));
    outcome(1, "fixed point", worst < 1e-6, format!("max ‖R−1‖ on [0,5] at N=128: {worst:.3e} (< 1e-6)"))
}

fn criterion_2(trace: &FlowTrace) -> Outcome {
    let last = trace.records.last().unwrap();
    let transient = trace.config.transient;
    let increases: Vec<(f64, f64)> = trace
        .records
        .windows(2)
        .filter(|w| w[0].t >= transient && w[1].rn_c0 > CURVATURE_FLOOR)
        .filter(|w| w[1].rn_c0 > w[0].rn_c0 + CURVATURE_NOISE)
        .map(|w| (w[1].t, w[1].rn_c0 - w[0].rn_c0))
        .collect();
    let u0 = trace.records[0].u_c0;
    let pass = last.t == 30.0 && last.rn_c0 < 1e-4 && increases.is_empty() && (u0 - 0.1).abs() < 1e-6;
    outcome(
        2,
        "curvature convergence",
        pass,
        format!(
            "‖u(0)‖={u0:.6}, ‖R−1‖(30)={:.3e} (< 1e-4), {} increases after t={transient} above {CURVATURE_FLOOR:e}",
            last.rn_c0,
            increases.len()
        ),
    )
}

fn criterion_3(trace: &FlowTrace) -> Outcome {
    let times = trace.times();
    let start = trace.config.transient;
    let mut parts = Vec::new();
    let mut pass = true;
    let y = trace.series(|r| r.y);
    let first = times.iter().position(|t| *t >= start).unwrap();
    let end = first + y[first..].iter().take_while(|v| **v > Y_FLOOR).count() - 1;
    match decay_fit(&times, &y, [times[first], times[end]]) {
        Ok(c) => {
            let verified = envelope_holds(&times, &y, c.window, c.amplitude, c.rate);
            pass &= c.pass && c.rate > 0.0 && verified && !c.degenerate;
            parts.push(format!("Y: μ={:.4} on [{:.2},{:.2}] verified={verified}", c.rate, c.window[0], c.window[1]));
        }
        Err(e) => {
            pass = false;
            parts.push(format!("Y: {e}"));
        }
    }
    type Getter = fn(&krflow::flow::FlowRecord) -> f64;
    let norms: [(&str, Getter, f64); 3] = [
        ("u_c0", |r| r.u_c0, POTENTIAL_FLOOR),
        ("grad_u_c0", |r| r.grad_u_c0, POTENTIAL_FLOOR),
        ("Rn_c0", |r| r.rn_c0, CURVATURE_FLOOR),
    ];
    for (name, f, floor) in norms {
        let v = trace.series(f);
        match tail_fit(&times, &v, start, floor) {
            Ok(c) => {
                let verified = envelope_holds(&times, &v, c.window, c.amplitude, c.rate);
                pass &= c.pass && c.rate > 0.0 && verified;
                parts.push(format!("{name}: rate={:.4}", c.rate));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{name}: {e}"));
            }
        }
    }
    outcome(3, "exponential decay", pass, parts.join("; "))
}

fn criterion_4(runs: &[(String, ExperimentReport)]) -> Outcome {
    let mut worst = 0.0_f64;
    let mut detail = Vec::new();
    for (name, r) in runs {
        let drop = max_of(trace_of(r).records.windows(2).map(|w| w[0].b - w[1].b).chain([0.0]));
        worst = worst.max(drop);
        detail.push(format!("{name}:{drop:.1e}"));
    }
    outcome(
        4,
        "b monotone",
        worst <= 1e-8 && !runs.is_empty(),
        format!("largest decrease of b over {} runs: {worst:.3e} (≤ 1e-8) [{}]", runs.len(), detail.join(" ")),
    )
}

fn criterion_5(runs: &[(String, ExperimentReport)]) -> Outcome {
    let mut min_mu = f64::INFINITY;
    let mut kernels_ok = true;
    let mut sampled = 0;
    for (_, r) in runs {
        for rec in &trace_of(r).records {
            if let Some(mu) = rec.mu {
                sampled += 1;
                min_mu = min_mu.min(mu);
                kernels_ok &= rec.mu_kernel == Some(1);
            }
        }
    }
    let grid = build_grid(64).unwrap();
    let reference = reference_metric(&grid);
    let u = ricci_potential(&reference).unwrap();
    let spec = poincare_mu(&reference, &u, DEFAULT_KMAX).unwrap();
    let mu_ref = spec.lambda_min_positive;
    let pass = sampled > 0
        && min_mu >= 1.0 - 1e-3
        && kernels_ok
        && (mu_ref - 1.0).abs() <= 1e-6
        && spec.kernel_dimension == 1;
    outcome(
        5,
        "weighted Poincaré",
        pass,
        format!(
            "min μ over {sampled} sampled states = {min_mu:.9}, kernels 1: {kernels_ok}; reference μ = {mu_ref:.12}, kernel {}",
            spec.kernel_dimension
        ),
    )
}

fn criterion_6(runs: &[(String, ExperimentReport)]) -> Outcome {
    let grid = build_grid(64).unwrap();
    let lambda_ref = vector_laplacian_spectrum(&reference_metric(&grid), DEFAULT_KMAX)
        .unwrap()
        .lambda_min_positive;
    let mut pass = lambda_ref > 0.0;
    let mut parts = vec![format!("reference λ = {lambda_ref:.9}")];
    for (name, r) in runs {
        let trace = trace_of(r);
        let kernels = trace.records.iter().filter_map(|r| r.vector_kernel).collect::<Vec<_>>();
        let inf = trace
            .records
            .iter()
            .filter(|r| r.t >= trace.config.transient.min(trace.config.end_time))
            .filter_map(|r| r.lambda)
            .fold(f64::INFINITY, f64::min);
        let ok = !kernels.is_empty() && kernels.iter().all(|&k| k == 3) && inf > 0.0 && inf >= 0.5 * lambda_ref;
        pass &= ok;
        parts.push(format!("{name}: inf λ = {inf:.6}"));
    }
    let init = InitialData {
        profile: Profile::Legendre(2),
        amplitude: None,
        target_u_c0: Some(0.1),
    };
    let lam = |n: usize| {
        let grid = build_grid(n).unwrap();
        let (state, _) = initial_state(&init, &grid).unwrap();
        vector_laplacian_spectrum(&state, DEFAULT_KMAX).unwrap().lambda_min_positive
    };
    let (l128, l256) = (lam(128), lam(256));
    let gap = (l128 - l256).abs();
    pass &= gap < 1e-6;
    parts.push(format!("|λ₁₂₈ − λ₂₅₆| = {gap:.2e} (< 1e-6)"));
    outcome(6, "spectral gap", pass, parts.join("; "))
}

fn criterion_7() -> Outcome {
    let report = smoothing_experiment(&SmoothingConfig::new(vec![0.01, 0.005, 0.0025])).expect("smoothing runs");
    let all_barriers = report.cases.iter().all(|c| {
        c.hat_u_max <= c.hat_u_bound
            && c.grad_sq_max <= c.grad_sq_bound
            && c.h_max < c.h_bound
            && c.lap_hat_u < c.lap_bound
    });
    let ks: Vec<String> = report.cases.iter().map(|c| format!("{:.5}", c.k_measured)).collect();
    outcome(
        7,
        "short-time smoothing",
        report.k_spread <= 2.0 && all_barriers && report.cases.len() == 3,
        format!("K = [{}], spread {:.4} (≤ 2), all barriers: {all_barriers}", ks.join(", "), report.k_spread),
    )
}

fn criterion_8(trace: &FlowTrace) -> Outcome {
    let strides = [1usize, 2, 4];
    // Residuals are compared on a window where Y is far above round-off.
    let window = |t: f64| (0.5..=5.0).contains(&t);
    let mut maxima = Vec::new();
    for s in strides {
        let m = trace
            .records
            .iter()
            .filter(|r| window(r.t))
            .filter_map(|r| y_identity_residual_stride(trace, r.t, s).ok())
            .fold(0.0_f64, f64::max);
        maxima.push(m);
    }
    let orders: Vec<f64> = maxima.windows(2).map(|w| (w[1] / w[0]).log2()).collect();
    let full = trace
        .records
        .iter()
        .map(|r| match y_identity_residual_stride(trace, r.t, 1) {
            Ok(v) => Some(v),
            Err(Error::NeedsNeighbors { .. }) => None,
            Err(e) => panic!("{e}"),
        })
        .fold(0.0_f64, |a, v| a.max(v.unwrap_or(0.0)));
    let pass = orders.iter().all(|p| (p - 2.0).abs() < 0.3) && full < 1e-5;
    outcome(
        8,
        "Y identity",
        pass,
        format!(
            "max residual at h = 1e-3: {full:.3e} (< 1e-5); orders from h, 2h, 4h: {:.3}, {:.3}",
            orders[0], orders[1]
        ),
    )
}

fn criterion_9(runs: &[(String, ExperimentReport)], coarse: &FlowTrace, fine: &FlowTrace) -> Outcome {
    let mut holds = true;
    let mut bounded = true;
    for (_, r) in runs {
        for rec in &trace_of(r).records {
            holds &= rec.average_bound_holds;
            bounded &= rec.oscillation_constant.is_none_or(f64::is_finite);
        }
    }
    let cmax = |t: &FlowTrace| max_of(t.records.iter().filter_map(|r| r.oscillation_constant));
    let (c64, c128) = (cmax(coarse), cmax(fine));
    let change = (c64 - c128).abs() / c128;
    outcome(
        9,
        "Ricci potential bounds",
        holds && bounded && c64.is_finite() && change < 0.1,
        format!("(i) at every sample: {holds}; constant N=64: {c64:.6}, N=128: {c128:.6}, change {change:.2e} (< 0.1)"),
    )
}

fn criterion_10(trace: &FlowTrace) -> Outcome {
    let times = trace.times();
    let rn = trace.series(|r| r.rn_c0);
    let running = p_integral(&times, &rn, P_EXPONENT);
    let inc = unit_increments(&times, &running);
    // Ratios are meaningful while the increments are above the round-off
    // contribution of the curvature floor.
    let floor = CURVATURE_FLOOR.powf(P_EXPONENT);
    let ratios: Vec<f64> = inc
        .windows(2)
        .skip(1)
        .filter(|w| w[1] > floor)
        .map(|w| w[1] / w[0])
        .collect();
    let worst = max_of(ratios.iter().copied());
    outcome(
        10,
        "curvature integral",
        ratios.len() >= 3 && worst < 0.9,
        format!("{} unit increments above the floor, largest ratio {worst:.4} (< 0.9), total {:.6e}", ratios.len(), running.last().unwrap()),
    )
}

fn criterion_11(trace: &FlowTrace, lambda: f64) -> Outcome {
    let grid_for = |l: f64| default_mu_grid(l, 200);
    let (times, values) = synthetic_exponential(20.0, 0.01);
    let exp_case = DelayInequalityCase {
        times: times.clone(),
        values,
        lambda: 1.0,
        delays: vec![0],
        weights: vec![1.0],
        k0: 0.0,
    };
    let synthetic = delay_comparison(&exp_case, &grid_for(1.0)).unwrap();
    let synthetic_ok = synthetic
        .certificate()
        .is_some_and(|c| c.pass && c.rate > 0.0 && envelope_holds(&exp_case.times, &exp_case.values, c.window, c.amplitude, c.rate));
    let constant_case = DelayInequalityCase {
        values: vec![1.0; times.len()],
        k0: 1.0,
        ..exp_case.clone()
    };
    let constant = delay_comparison(&constant_case, &grid_for(1.0)).unwrap();
    let constant_ok = matches!(&constant, DelayOutcome::Violation(v) if (v.t - 1.0).abs() < 1e-9);
    let k0 = trace.config.transient.max(experiments::report::ITERATION_LAG);
    let measured = measured_delay_case(trace, lambda, k0).expect("measured case");
    let measured_outcome = delay_comparison(&measured, &grid_for(lambda)).unwrap();
    let measured_ok = measured_outcome
        .certificate()
        .is_some_and(|c| c.pass && c.rate > 0.0 && envelope_holds(&measured.times, &measured.values, c.window, c.amplitude, c.rate));
    let rate = |o: &DelayOutcome| o.certificate().map_or(f64::NAN, |c| c.rate);
    outcome(
        11,
        "delay certificate",
        synthetic_ok && constant_ok && measured_ok,
        format!(
            "e^(-t): μ = {:.4} ({synthetic_ok}); constant → violation at first sample past K₀ ({constant_ok}); measured with λ = {lambda:.6}: μ = {:.4} ({measured_ok})",
            rate(&synthetic),
            rate(&measured_outcome)
        ),
    )
}

fn criterion_12(runs: &[(String, ExperimentReport)]) -> Outcome {
    let grid = build_grid(128).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        // Small random potentials: ‖φ‖_{C⁰} drawn from [0.01, 0.05].
        let profile = Profile::Random {
            max_degree: 8,
            seed: rng.gen(),
        };
        let peak = grid.nodes().iter().map(|&x| profile.eval(x).abs()).fold(0.0, f64::max);
        let init = InitialData {
            profile,
            amplitude: Some(rng.gen_range(0.01..0.05) / peak),
            target_u_c0: None,
        };
        let (state, _) = initial_state(&init, &grid).unwrap();
        let a = scalar_curvature(&state);
        let b = scalar_curvature_moment(&state);
        let gap = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        worst = worst.max(gap);
    }
    let fut = max_of(
        runs.iter()
            .flat_map(|(_, r)| trace_of(r).records.iter().map(|r| r.futaki.abs().max(r.futaki_character))),
    );
    outcome(
        12,
        "oracle equivalence",
        worst < 1e-8 && fut < 1e-7,
        format!("curvature routes on 20 random states at N=128: {worst:.3e} (< 1e-8); max |Fut| over all samples {fut:.3e} (< 1e-7)"),
    )
}

#[test]
fn acceptance_criteria() {
    let shipped = shipped_runs();
    let configs: Vec<FlowConfig> = shipped.iter().map(|(_, c)| c.clone()).collect();
    let ((reports, main), (coarse, fine)) = rayon::join(
        || {
            rayon::join(
                || experiments::sweep(&configs).expect("shipped configs run"),
                || experiments::convergence_report(&even_small(64, 1e-3)).expect("criterion 2 run"),
            )
        },
        || {
            rayon::join(
                || run_flow(&even_small(64, 0.01)).expect("N = 64 run"),
                || run_flow(&even_small(128, 0.01)).expect("N = 128 run"),
            )
        },
    );
    let runs: Vec<(String, ExperimentReport)> = shipped.iter().map(|(n, _)| n.clone()).zip(reports).collect();
    let main_trace = trace_of(&main);
    let lambda = main.summary.lambda_inf.expect("spectral samples after the transient");
    let mut all = vec![runs.clone(), vec![("criterion_2".to_string(), main.clone())]].concat();
    all.sort_by(|a, b| a.0.cmp(&b.0));

    let outcomes = vec![
        criterion_1(),
        criterion_2(main_trace),
        criterion_3(main_trace),
        criterion_4(&runs),
        criterion_5(&runs),
        criterion_6(&runs),
        criterion_7(),
        criterion_8(main_trace),
        criterion_9(&all, &coarse, &fine),
        criterion_10(main_trace),
        criterion_11(main_trace, lambda),
        criterion_12(&all),
    ];

    let mut err = std::io::stderr().lock();
    for o in &outcomes {
        let _ = writeln!(err, "acceptance {:>2} {:<24} {}  {}", o.id, o.name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
