use std::f64::consts::PI;
use std::sync::Arc;

use krflow::flow::{average_b, ricci_potential, run_flow, FlowConfig, InitialData, Profile};
use krflow::functionals::{
    decay_fit, envelope_holds, futaki_projection, oscillation_bound, monitor_csv, monitor_records, p_integral,
    unit_increments, y_functional, y_identity_residual, MONITOR_COLUMNS,
};
use krflow::geometry::{build_grid, field_from_fn, GridSpec, MetricState, Parity, ScalarField, VOLUME};
use proptest::prelude::*;

fn state(grid: &Arc<GridSpec>, a: f64, b: f64) -> MetricState {
    let phi = grid
        .nodes()
        .iter()
        .map(|&x| a * 0.5 * (3.0 * x * x - 1.0) + b * (x.powi(3) - 0.6 * x) + 0.01 * (3.0 * x).cos())
        .collect();
    MetricState::from_potential(grid.clone(), phi, 0.0).unwrap()
}

/// Integrals over the affine chart, written in `(s, θ)` with `z = e^s e^{iθ}`
/// and derivatives taken by Cartesian central differences. `f` is a
/// rotation-invariant function of `x = tanh s`.
struct PlaneOracle<'a> {
    grid: &'a GridSpec,
    density: &'a [f64],
}

impl PlaneOracle<'_> {
    fn x_of(px: f64, py: f64) -> f64 {
        let r2 = px * px + py * py;
        (r2 - 1.0) / (r2 + 1.0)
    }

    /// Area density of `ω` with respect to `dx dy`.
    fn g(&self, px: f64, py: f64) -> f64 {
        let r2 = px * px + py * py;
        2.0 * self.grid.interpolate_at(self.density, Self::x_of(px, py)) / ((1.0 + r2) * (1.0 + r2))
    }

    fn integrate(&self, integrand: impl Fn(f64, f64) -> f64) -> f64 {
        let (s_max, ns, nt) = (14.0, 5600, 12);
        let ds = 2.0 * s_max / ns as f64;
        let dt = 2.0 * PI / nt as f64;
        let mut total = 0.0;
        for i in 0..=ns {
            let s = -s_max + i as f64 * ds;
            let w = if i == 0 || i == ns { 0.5 } else { 1.0 };
            let r = s.exp();
            for j in 0..nt {
                let th = (j as f64 + 0.25) * dt;
                total += w * r * r * integrand(r * th.cos(), r * th.sin());
            }
        }
        total * ds * dt
    }

    /// `(Re z∂_z f, |∂_z f|²)` at a point, from Cartesian differences.
    fn derivatives(&self, f: &dyn Fn(f64) -> f64, px: f64, py: f64) -> (f64, f64) {
        let h = 1e-4 * (px * px + py * py).sqrt();
        let at = |a: f64, b: f64| f(Self::x_of(a, b));
        let fx = (at(px + h, py) - at(px - h, py)) / (2.0 * h);
        let fy = (at(px, py + h) - at(px, py - h)) / (2.0 * h);
        (0.5 * (px * fx + py * fy), 0.25 * (fx * fx + fy * fy))
    }
}

#[test]
fn futaki_character_matches_a_planar_quadrature() {
    let grid = build_grid(64).unwrap();
    let s = state(&grid, 0.08, 0.05);
    let oracle = PlaneOracle {
        grid: &grid,
        density: s.density(),
    };
    let f = |x: f64| x.powi(3) + 0.3 * x;
    let field = field_from_fn(&grid, f, Parity::Odd);
    let ours = futaki_projection(&s, &field).unwrap().character[1];
    let brute = oracle.integrate(|px, py| oracle.derivatives(&f, px, py).0 * oracle.g(px, py)) / VOLUME;
    assert!(ours.abs() > 0.1);
    assert!((ours - brute).abs() < 1e-6, "{ours} vs {brute}");

    let u = ricci_potential(&s).unwrap();
    let fu = futaki_projection(&s, &u).unwrap();
    assert!(fu.character.iter().all(|c| c.abs() < 1e-10), "{:?}", fu.character);
    assert!(fu.futaki_value.abs() < 1e-18);
}

#[test]
fn dirichlet_energy_matches_a_planar_quadrature() {
    let grid = build_grid(64).unwrap();
    let s = state(&grid, 0.1, 0.03);
    let u = ricci_potential(&s).unwrap();
    let oracle = PlaneOracle {
        grid: &grid,
        density: s.density(),
    };
    let uv = u.values.clone();
    let f = |x: f64| grid.interpolate_at(&uv, x);
    // |∂_z u|² dx dy is conformally invariant, so no metric factor enters.
    let brute = oracle.integrate(|px, py| oracle.derivatives(&f, px, py).1);
    let ours = y_functional(&s, &u);
    assert!(ours > 1e-4);
    assert!((ours - brute).abs() < 1e-6 * ours, "{ours} vs {brute}");
}

#[test]
fn planar_oracle_recovers_the_volume() {
    let grid = build_grid(48).unwrap();
    let s = state(&grid, 0.1, 0.05);
    let oracle = PlaneOracle {
        grid: &grid,
        density: s.density(),
    };
    let v = oracle.integrate(|px, py| oracle.g(px, py));
    assert!((v - VOLUME).abs() < 1e-8, "{v}");
}

#[test]
fn running_power_integral_of_an_exponential() {
    let h = 1e-3;
    let t: Vec<f64> = (0..=5000).map(|k| k as f64 * h).collect();
    let v: Vec<f64> = t.iter().map(|t| (-t).exp()).collect();
    let p = 2.5;
    let run = p_integral(&t, &v, p);
    for (ti, ri) in t.iter().zip(&run) {
        let exact = (1.0 - (-p * ti).exp()) / p;
        assert!((ri - exact).abs() < 1e-6, "t = {ti}");
    }
    let inc = unit_increments(&t, &run);
    assert_eq!(inc.len(), 5);
    for (k, d) in inc.iter().enumerate() {
        let exact = ((-p * k as f64).exp() - (-p * (k + 1) as f64).exp()) / p;
        assert!((d - exact).abs() < 1e-6);
    }
    assert!(inc.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn decay_fit_recovers_a_noisy_exponential() {
    let t: Vec<f64> = (0..400).map(|k| k as f64 * 0.05).collect();
    let y: Vec<f64> = t
        .iter()
        .enumerate()
        .map(|(k, t)| 3.0 * (-1.7 * t).exp() * (1.0 + 0.01 * (k as f64 * 1.3).sin()))
        .collect();
    let fit = decay_fit(&t, &y, [1.0, 15.0]).unwrap();
    assert!((fit.rate - 1.7).abs() < 1e-3, "{}", fit.rate);
    assert!(fit.amplitude >= fit.fitted_amplitude);
    assert!(envelope_holds(&t, &y, [1.0, 15.0], fit.amplitude, fit.rate));
    assert!(!envelope_holds(&t, &y, [1.0, 15.0], 0.9 * fit.fitted_amplitude, fit.rate));
    assert!(fit.pass && !fit.degenerate);
}

#[test]
fn decay_fit_handles_zero_and_short_windows() {
    let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
    let zero = vec![0.0; 50];
    let fit = decay_fit(&t, &zero, [0.0, 4.9]).unwrap();
    assert!(fit.degenerate && fit.pass);
    let y: Vec<f64> = t.iter().map(|t| (-t).exp()).collect();
    assert!(decay_fit(&t, &y, [0.0, 0.5]).is_err());
}

#[test]
fn monitors_follow_the_trace() {
    let mut c = FlowConfig::new(
        InitialData {
            profile: Profile::Legendre(2),
            amplitude: None,
            target_u_c0: Some(0.05),
        },
        0.5,
    );
    c.node_count = 32;
    c.spectral_cadence = 0.25;
    let trace = run_flow(&c).unwrap();
    let recs = monitor_records(&trace);
    assert_eq!(recs.len(), trace.records.len());
    assert!(recs[0].y_identity_residual.is_none() && recs.last().unwrap().y_identity_residual.is_none());
    assert!(recs[1..recs.len() - 1].iter().all(|r| r.y_identity_residual.is_some()));
    assert!(recs.iter().filter(|r| r.noncollapse_ratio.is_some()).count() == 3);
    let csv = monitor_csv(&recs);
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), MONITOR_COLUMNS.join(","));
    assert_eq!(lines.count(), recs.len());
    let mid = trace.records[25].t;
    assert!(y_identity_residual(&trace, mid).unwrap() < 1e-3);
    assert!(y_identity_residual(&trace, 0.0).is_err());
}

/// `b = −(1/V)∫(u²/2 + O(u³))ω` and `u` is linear in the amplitude to
/// leading order, so halving the amplitude quarters `b`.
#[test]
fn average_is_quadratic_in_the_amplitude() {
    let grid = build_grid(48).unwrap();
    let b_at = |a: f64| {
        let s = state_pure(&grid, a);
        average_b(&s, &ricci_potential(&s).unwrap())
    };
    let mut prev_ratio = f64::NAN;
    for a in [0.04, 0.02, 0.01] {
        let ratio = b_at(a / 2.0) / b_at(a);
        assert!((ratio - 0.25).abs() < 0.02, "a = {a}: {ratio}");
        if prev_ratio.is_finite() {
            assert!((ratio - 0.25).abs() < (prev_ratio - 0.25).abs());
        }
        prev_ratio = ratio;
    }
    assert!(b_at(1e-4).abs() < 1e-8);
}

fn state_pure(grid: &Arc<GridSpec>, a: f64) -> MetricState {
    let phi = grid.nodes().iter().map(|&x| a * (0.5 * (3.0 * x * x - 1.0) + 0.4 * x.powi(3))).collect();
    MetricState::from_potential(grid.clone(), phi, 0.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn potential_inequalities(a in -0.15f64..0.15, b in -0.08f64..0.08) {
        let grid = build_grid(40).unwrap();
        let s = state(&grid, a, b);
        let u = ricci_potential(&s).unwrap();
        let avg = average_b(&s, &u);
        prop_assert!(avg <= 0.0);
        prop_assert!(y_functional(&s, &u) >= 0.0);
        let l3 = oscillation_bound(&s, &u, avg);
        prop_assert!(l3.inequality_holds, "{:?}", l3);
        // b equals the plain weighted mean once u is normalized
        let direct: Vec<f64> = u.values.iter().map(|v| v * (-v).exp()).collect();
        prop_assert!((s.integrate(&direct) / VOLUME - avg).abs() < 1e-12);
    }

    #[test]
    fn norm_chain(a in -0.15f64..0.15, k in 0.3f64..4.0, shift in -1.0f64..1.0) {
        let grid = build_grid(40).unwrap();
        let s = state(&grid, a, 0.02);
        let f = ScalarField::detect(grid.nodes().iter().map(|&x| (k * x).sin() + shift).collect());
        let l2 = s.l2_norm(&f.values);
        let l1 = s.integrate(&f.values.iter().map(|v| v.abs()).collect::<Vec<_>>());
        prop_assert!(l1 <= l2 * VOLUME.sqrt() * (1.0 + 1e-12));
        prop_assert!(l2 <= s.c0_norm(&f.values) * VOLUME.sqrt() * (1.0 + 1e-12));
    }
}
