//! Ricci potential `u` and its weighted average `b`.
//!
//! On a curve `R_{k̄j} − g_{k̄j} = −∂_j∂_k̄u` reduces to its trace
//! `Δu = 1 − R`. In the reference moment coordinate this is the Poisson
//! problem `L₀u = ρ(1 − R)`, whose solution is fixed up to a constant; the
//! constant is then set by `(1/V)∫e^{−u}ω = 1`, which is linear in `e^{−κ}`
//! and therefore solved in closed form.

use crate::error::{Error, Result};
use crate::geometry::{MetricState, ScalarField, VOLUME};

/// `(1/V)∫ e^{−f} ω_φ`.
pub fn exp_normalization(state: &MetricState, f: &[f64]) -> f64 {
    let e: Vec<f64> = f.iter().map(|v| (-v).exp()).collect();
    state.integrate(&e) / VOLUME
}

/// Shifts `f` by the constant that makes `(1/V)∫e^{−f}ω = 1`.
pub(crate) fn normalize(state: &MetricState, f: &mut [f64]) -> Result<()> {
    let m = exp_normalization(state, f);
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::numerical(
            "flow",
            "ricci_potential",
            format!("exponential normalization integral is {m}"),
        ));
    }
    let k = m.ln();
    f.iter_mut().for_each(|v| *v += k);
    Ok(())
}

pub fn ricci_potential(state: &MetricState) -> Result<ScalarField> {
    let rhs: Vec<f64> = state
        .density()
        .iter()
        .zip(state.curvature())
        .map(|(rho, r)| rho * (1.0 - r))
        .collect();
    let (mut u, _) = state.grid().solve_lap0(&rhs)?;
    normalize(state, &mut u)?;
    Ok(ScalarField::detect(u))
}

/// The same potential obtained from the flow speed: along the potential flow
/// `φ̇ = log ρ + φ`, and `L₀(log ρ + φ) = ρ(1 − R)` identically, so `u` is
/// `log ρ + φ` renormalized. Used as an independent consistency route.
pub fn ricci_potential_from_speed(state: &MetricState) -> Result<ScalarField> {
    let mut u: Vec<f64> = state
        .density()
        .iter()
        .zip(state.phi_shape())
        .map(|(rho, p)| rho.ln() + p)
        .collect();
    normalize(state, &mut u)?;
    Ok(ScalarField::detect(u))
}

/// `‖Δu − (1 − R)‖_{C⁰}` on the nodes.
pub fn poisson_residual(state: &MetricState, u: &ScalarField) -> f64 {
    let l = state.grid().apply_lap0(&u.values);
    l.iter()
        .zip(state.density())
        .zip(state.curvature())
        .map(|((l, rho), r)| (l / rho - (1.0 - r)).abs())
        .fold(0.0, f64::max)
}

/// `b = (1/V)∫ u e^{−u} ω`, evaluated as `−(1/V)∫(1 − (1+u)e^{−u}) ω`,
/// which is the same number once `u` is normalized but has a nonnegative
/// integrand and no cancellation for small `u`.
pub fn average_b(state: &MetricState, u: &ScalarField) -> f64 {
    let f: Vec<f64> = u.values.iter().map(|&v| entropy_density(v)).collect();
    -state.integrate(&f) / VOLUME
}

/// `1 − (1+u)e^{−u} ≥ 0`.
fn entropy_density(u: f64) -> f64 {
    if u.abs() < 1e-3 {
        u * u * (0.5 - u / 3.0 + u * u / 8.0 - u * u * u / 30.0)
    } else {
        -(-u).exp_m1() - u * (-u).exp()
    }
}
