//! Differential operators of a symmetric metric, written in the fixed
//! reference moment coordinate `x`. With `ρ = ω_φ/ω₀` and `ψ₀ = (1 − x²)/2`:
//!
//! * `Δf = (ψ₀ f')' / ρ`
//! * `|∇f|² = ψ₀ f'² / ρ`
//! * `|∇∇̄f|² = (Δf)²` (complex dimension one)
//! * `|∇∇f|² = ψ₀² ((f'/ρ)')²`
//! * `ω_φ = π ρ dx` after integrating out the angle.

use std::sync::Arc;

use super::grid::GridSpec;
use super::state::{MetricState, Parity, ScalarField};
use crate::error::Result;

pub fn build_grid(node_count: usize) -> Result<Arc<GridSpec>> {
    GridSpec::new(node_count).map(Arc::new)
}

pub fn reference_metric(grid: &Arc<GridSpec>) -> MetricState {
    MetricState::reference(grid.clone())
}

/// Scalar curvature from the conformal formula `R = (1 − Δ₀ log ρ)/ρ`.
pub fn scalar_curvature(state: &MetricState) -> ScalarField {
    ScalarField::detect(state.curvature().to_vec())
}

/// Scalar curvature from the moment-coordinate formula `R = −d²ψ/dy²`,
/// where `y = x + w`, `w = ψ₀ φ'`, is the metric's own moment coordinate and
/// `ψ = ψ₀ dy/dx` its momentum profile. Independent of the cached route: it
/// never forms `log ρ` and never uses the assembled second-derivative
/// operator. The reference parts (`dx/dx = 1`, `dψ₀/dx = −x`) are taken
/// exactly, so every numerical derivative acts on a quantity proportional
/// to `φ`:
///
/// `dψ/dy = −x + q` with `q = ((ψ₀w')' + x w')/(1 + w')`, and
/// `R = (1 − q')/(1 + w')`.
pub fn scalar_curvature_moment(state: &MetricState) -> ScalarField {
    let grid = state.grid();
    let psi0 = grid.psi0();
    let x = grid.nodes();
    let dphi = grid.diff(state.phi_shape());
    let w: Vec<f64> = psi0.iter().zip(&dphi).map(|(p, d)| p * d).collect();
    let dw = grid.diff(&w);
    let psi0_dw: Vec<f64> = psi0.iter().zip(&dw).map(|(p, d)| p * d).collect();
    let v = grid.diff(&psi0_dw);
    let q: Vec<f64> = (0..x.len()).map(|i| (v[i] + x[i] * dw[i]) / (1.0 + dw[i])).collect();
    let dq = grid.diff(&q);
    let r = dq.iter().zip(&dw).map(|(dq, dw)| (1.0 - dq) / (1.0 + dw)).collect();
    ScalarField::detect(r)
}

pub fn laplacian(state: &MetricState, f: &ScalarField) -> Result<ScalarField> {
    f.check(state.grid())?;
    let l = state.grid().apply_lap0(&f.values);
    let v = l.iter().zip(state.density()).map(|(a, r)| a / r).collect();
    Ok(ScalarField::detect(v))
}

pub fn grad_norm_sq(state: &MetricState, f: &ScalarField) -> Result<ScalarField> {
    f.check(state.grid())?;
    let d = state.grid().diff(&f.values);
    let v = d
        .iter()
        .zip(state.grid().psi0())
        .zip(state.density())
        .map(|((d, p), r)| p * d * d / r)
        .collect();
    Ok(ScalarField::detect(v))
}

/// `(|∇∇̄f|², |∇∇f|²)`.
pub fn hessian_norms(state: &MetricState, f: &ScalarField) -> Result<(ScalarField, ScalarField)> {
    let lap = laplacian(state, f)?;
    let mixed: Vec<f64> = lap.values.iter().map(|v| v * v).collect();
    let grid = state.grid();
    let d = grid.diff(&f.values);
    let q: Vec<f64> = d.iter().zip(state.density()).map(|(a, r)| a / r).collect();
    let dq = grid.diff(&q);
    let pure: Vec<f64> = dq
        .iter()
        .zip(grid.psi0())
        .map(|(a, p)| (p * a) * (p * a))
        .collect();
    Ok((ScalarField::detect(mixed), ScalarField::detect(pure)))
}

pub fn integrate(state: &MetricState, f: &ScalarField) -> f64 {
    state.integrate(&f.values)
}

pub fn c0_norm(state: &MetricState, f: &ScalarField) -> f64 {
    state.c0_norm(&f.values)
}

pub fn l2_norm(state: &MetricState, f: &ScalarField) -> f64 {
    state.l2_norm(&f.values)
}

/// Pointwise product helper used by the functionals.
pub(crate) fn product(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// Samples `f` at the grid nodes.
pub fn field_from_fn(grid: &GridSpec, f: impl Fn(f64) -> f64, parity: Parity) -> ScalarField {
    ScalarField::new(grid.nodes().iter().map(|&x| f(x)).collect(), parity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::state::VOLUME;

    fn bumped(grid: &Arc<GridSpec>, a: f64) -> MetricState {
        let phi = grid
            .nodes()
            .iter()
            .map(|&x| a * ((1.3 * x).sin() + 0.5 * (x * x - 1.0 / 3.0)))
            .collect();
        MetricState::from_potential(grid.clone(), phi, 0.0).unwrap()
    }

    #[test]
    fn reference_is_einstein() {
        let g = build_grid(64).unwrap();
        let s = reference_metric(&g);
        let r = scalar_curvature(&s);
        assert!(r.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!((s.volume() - VOLUME).abs() < 1e-10);
        let rm = scalar_curvature_moment(&s);
        assert!(rm.values.iter().all(|v| (v - 1.0).abs() < 1e-8));
    }

    #[test]
    fn laplacian_of_moment_coordinate() {
        let g = build_grid(64).unwrap();
        let s = reference_metric(&g);
        let x = field_from_fn(&g, |x| x, Parity::Odd);
        let l = laplacian(&s, &x).unwrap();
        for (a, b) in l.values.iter().zip(&x.values) {
            assert!((a + b).abs() < 1e-8);
        }
    }

    #[test]
    fn parity_mismatch_is_a_regularity_error() {
        let g = build_grid(32).unwrap();
        let s = reference_metric(&g);
        let f = field_from_fn(&g, |x| x + 0.2, Parity::Odd);
        assert!(matches!(
            laplacian(&s, &f),
            Err(crate::Error::Regularity { .. })
        ));
    }

    #[test]
    fn integration_by_parts_and_bochner() {
        let g = build_grid(64).unwrap();
        let s = bumped(&g, 0.05);
        let f = field_from_fn(&g, |x| (2.0 * x).cos() + 0.3 * x, Parity::Mixed);
        let lap = laplacian(&s, &f).unwrap();
        let grad = grad_norm_sq(&s, &f).unwrap();
        let lhs = -s.integrate(&product(&f.values, &lap.values));
        assert!((lhs - s.integrate(&grad.values)).abs() < 1e-9);
        assert!(s.integrate(&lap.values).abs() < 1e-9);

        // ∫|∇∇f|² = ∫(Δf)² − ∫R|∇f|² on a Kähler curve.
        let (mixed, pure) = hessian_norms(&s, &f).unwrap();
        let ric = s.integrate(&product(s.curvature(), &grad.values));
        let lhs = s.integrate(&pure.values);
        let rhs = s.integrate(&mixed.values) - ric;
        assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
    }

    #[test]
    fn total_curvature_is_topological() {
        let g = build_grid(64).unwrap();
        for a in [0.01, 0.05, 0.1] {
            let s = bumped(&g, a);
            assert!((s.integrate(s.curvature()) / VOLUME - 1.0).abs() < 1e-8);
            assert!((s.volume() - VOLUME).abs() < 1e-10);
        }
    }
}
