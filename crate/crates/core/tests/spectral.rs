use std::sync::Arc;

use krflow::flow::ricci_potential;
use krflow::geometry::{build_grid, reference_metric, GridSpec, MetricState};
use krflow::spectral::{poincare_mu, vector_laplacian_spectrum, OperatorTag};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

/// Lowest eigenvalues of `−(p A')' = λ m A` on `(−1, 1)` with `p` vanishing
/// at both ends, by a cell-centred finite-volume scheme. The degenerate
/// endpoints need no boundary condition: the outer faces carry zero flux.
fn finite_volume(p: &dyn Fn(f64) -> f64, m: &dyn Fn(f64) -> f64, cells: usize, count: usize) -> Vec<f64> {
    let h = 2.0 / cells as f64;
    let centre = |j: usize| -1.0 + (j as f64 + 0.5) * h;
    let mass: Vec<f64> = (0..cells).map(|j| m(centre(j)) * h).collect();
    let mut k = DMatrix::<f64>::zeros(cells, cells);
    for j in 0..cells - 1 {
        let face = -1.0 + (j + 1) as f64 * h;
        let w = p(face) / h;
        k[(j, j)] += w;
        k[(j + 1, j + 1)] += w;
        k[(j, j + 1)] -= w;
        k[(j + 1, j)] -= w;
    }
    for i in 0..cells {
        for j in 0..cells {
            k[(i, j)] /= (mass[i] * mass[j]).sqrt();
        }
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(k).eigenvalues.iter().cloned().collect();
    ev.sort_by(f64::total_cmp);
    ev.truncate(count);
    ev
}

/// Richardson extrapolation of `finite_volume` assuming second-order error.
fn oracle(p: &dyn Fn(f64) -> f64, m: &dyn Fn(f64) -> f64, count: usize) -> Vec<f64> {
    let coarse = finite_volume(p, m, 300, count);
    let fine = finite_volume(p, m, 600, count);
    coarse.iter().zip(&fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect()
}

fn perturbed(grid: &Arc<GridSpec>) -> MetricState {
    let phi = grid
        .nodes()
        .iter()
        .map(|&x| 0.12 * 0.5 * (3.0 * x * x - 1.0) + 0.05 * (x.powi(3) - 0.6 * x) + 0.02 * (2.5 * x).sin())
        .collect();
    MetricState::from_potential(grid.clone(), phi, 0.0).unwrap()
}

fn psi0(x: f64) -> f64 {
    0.5 * (1.0 - x * x)
}

#[test]
fn oracle_reproduces_legendre_spectrum() {
    // p = ψ₀, m = 1: eigenvalues l(l+1)/2
    let ev = oracle(&psi0, &|_| 1.0, 5);
    for (l, e) in ev.iter().enumerate() {
        let exact = (l * (l + 1)) as f64 / 2.0;
        assert!((e - exact).abs() < 1e-5 * (1.0 + exact), "l = {l}: {e}");
    }
}

#[test]
fn reference_spectra_are_the_sphere_spectra() {
    let s = reference_metric(&build_grid(64).unwrap());
    let v = vector_laplacian_spectrum(&s, 6).unwrap();
    assert_eq!(v.operator, OperatorTag::VectorLaplacian);
    assert_eq!(v.kernel_dimension, 3);
    assert!((v.lambda_min_positive - 2.0).abs() < 1e-10);
    let modes0 = &v.modes[&0];
    for (l, e) in (1..).zip(modes0.iter()) {
        let exact = (l * (l + 1)) as f64 / 2.0 - 1.0;
        assert!((e - exact).abs() < 1e-9, "vector mode 0, l = {l}: {e}");
    }
    let lows: Vec<f64> = (2..=6).map(|k| v.mode_min_positive(k).unwrap()).collect();
    assert!(lows.windows(2).all(|w| w[1] > w[0]));
    assert!(v.minima_monotone_from(1));

    let u = ricci_potential(&s).unwrap();
    let p = poincare_mu(&s, &u, 6).unwrap();
    assert_eq!(p.kernel_dimension, 1);
    assert!((p.lambda_min_positive - 1.0).abs() < 1e-10);
    for k in -6i32..=6 {
        let l0 = k.unsigned_abs() as usize;
        for (l, e) in (l0..).zip(p.modes[&k].iter()) {
            let exact = (l * (l + 1)) as f64 / 2.0;
            assert!((e - exact).abs() < 1e-9 * (1.0 + exact), "Poincaré mode {k}, l = {l}: {e}");
        }
    }
    assert!(v.hermiticity_defect < 1e-12 && p.hermiticity_defect < 1e-12);
}

#[test]
fn weighted_poincare_mode_zero_matches_finite_volumes() {
    let g = build_grid(64).unwrap();
    let s = perturbed(&g);
    let u = ricci_potential(&s).unwrap();
    let rho = s.density().to_vec();
    let uv = u.values.clone();
    let p = |x: f64| psi0(x) * (-g.interpolate_at(&uv, x)).exp();
    let m = |x: f64| g.interpolate_at(&rho, x) * (-g.interpolate_at(&uv, x)).exp();
    let ev = oracle(&p, &m, 3);
    let ours = poincare_mu(&s, &u, 4).unwrap();
    let mode0 = &ours.modes[&0];
    assert!(ev[0].abs() < 1e-8 && mode0[0].abs() < 1e-8);
    for i in 1..3 {
        assert!((ev[i] - mode0[i]).abs() < 1e-7, "eigenvalue {i}: oracle {} vs {}", ev[i], mode0[i]);
    }
    // the holomorphy potential of z∂_z keeps the lowest eigenvalue at one
    assert!((mode0[1] - 1.0).abs() < 1e-8, "{}", mode0[1]);
}

#[test]
fn vector_operator_mode_zero_matches_finite_volumes() {
    let g = build_grid(64).unwrap();
    for s in [reference_metric(&g), perturbed(&g)] {
        let rho = s.density().to_vec();
        let p = |x: f64| psi0(x) * psi0(x) * g.interpolate_at(&rho, x);
        let m = |x: f64| {
            let r = g.interpolate_at(&rho, x);
            psi0(x) * r * r
        };
        let ev = oracle(&p, &m, 3);
        let ours = vector_laplacian_spectrum(&s, 4).unwrap();
        let mode0 = &ours.modes[&0];
        assert!(ev[0].abs() < 1e-8 && mode0[0].abs() < 1e-8);
        for i in 1..3 {
            assert!((ev[i] - mode0[i]).abs() < 1e-7, "eigenvalue {i}: oracle {} vs {}", ev[i], mode0[i]);
        }
    }
}

#[test]
fn too_few_modes_is_a_config_error() {
    let s = reference_metric(&build_grid(32).unwrap());
    assert!(vector_laplacian_spectrum(&s, 2).unwrap_err().is_config());
}

#[test]
fn eigenvalues_converge_under_refinement() {
    let at = |n| {
        let g = build_grid(n).unwrap();
        let s = perturbed(&g);
        let u = ricci_potential(&s).unwrap();
        (
            vector_laplacian_spectrum(&s, 6).unwrap().lambda_min_positive,
            poincare_mu(&s, &u, 6).unwrap().modes[&2][0],
        )
    };
    let (a, b) = (at(48), at(96));
    assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9, "{a:?} {b:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn kernels_survive_small_perturbations(a in -0.1f64..0.1, b in -0.05f64..0.05, k in 1.0f64..3.0) {
        let g = build_grid(48).unwrap();
        let phi = g.nodes().iter().map(|&x| a * 0.5 * (3.0 * x * x - 1.0) + b * (k * x).sin()).collect();
        let s = MetricState::from_potential(g, phi, 0.0).unwrap();
        let u = ricci_potential(&s).unwrap();
        let v = vector_laplacian_spectrum(&s, 4).unwrap();
        let p = poincare_mu(&s, &u, 4).unwrap();
        prop_assert_eq!(v.kernel_dimension, 3);
        prop_assert_eq!(p.kernel_dimension, 1);
        prop_assert!(p.lambda_min_positive >= 1.0 - 1e-8, "μ = {}", p.lambda_min_positive);
        prop_assert!(v.lambda_min_positive > 0.5);
    }
}
