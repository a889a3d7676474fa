//! Futaki pairing on the holomorphic vector fields of CP¹.
//!
//! In the affine chart the holomorphic fields are spanned by `∂_z`, `z∂_z`
//! and `z²∂_z`. For a rotation-invariant `u` the gradient field is
//! `∇^{1,0}u = (u'/ρ) z∂_z`, and `z^j∂_z` carries angular weight
//! `e^{i(j−1)θ}`, so the Gram matrix is diagonal and only `z∂_z` can pair
//! with invariant data. With `e^s = |z|² = (1+x)/(1−x)`:
//!
//! * `‖z^j∂_z‖² = π∫ψ₀ρ² e^{(j−1)s} dx`
//! * `⟨∇u, z∂_z⟩ = π∫ψ₀ρ u' dx`
//! * `Fut(z∂_z) = (1/V)∫ z∂_z(u) ω = (π/V)∫ψ₀ρ u' dx`

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MetricState, ScalarField, VOLUME};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FutakiProjection {
    /// Coefficients of `π(∇u)` on `∂_z, z∂_z, z²∂_z`.
    pub coefficients: [f64; 3],
    /// Diagonal of the Gram matrix of the basis.
    pub gram: [f64; 3],
    /// `Fut(X)` for each basis field.
    pub character: [f64; 3],
    /// `Fut(π(∇u))`.
    pub futaki_value: f64,
}

pub fn futaki_projection(state: &MetricState, u: &ScalarField) -> Result<FutakiProjection> {
    let grid = state.grid();
    let du = grid.diff(&u.values);
    let pi = std::f64::consts::PI;
    let mut gram = [0.0; 3];
    for (j, g) in gram.iter_mut().enumerate() {
        let f: Vec<f64> = grid
            .nodes()
            .iter()
            .zip(grid.psi0())
            .zip(state.density())
            .map(|((&x, p), r)| {
                // ψ₀ e^{(j−1)s} written without the singular factor
                let w = match j {
                    0 => 0.5 * (1.0 - x) * (1.0 - x),
                    1 => *p,
                    _ => 0.5 * (1.0 + x) * (1.0 + x),
                };
                w * r * r
            })
            .collect();
        *g = pi * grid.quad(&f);
    }
    if gram.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
        return Err(Error::numerical(
            "functionals",
            "futaki_projection",
            format!("degenerate Gram diagonal {gram:?}"),
        ));
    }
    let pairing: Vec<f64> = grid
        .psi0()
        .iter()
        .zip(state.density())
        .zip(&du)
        .map(|((p, r), d)| p * r * d)
        .collect();
    let pairing = pi * grid.quad(&pairing);
    let coefficients = [0.0, pairing / gram[1], 0.0];
    let character = [0.0, pairing / VOLUME, 0.0];
    Ok(FutakiProjection {
        coefficients,
        gram,
        character,
        futaki_value: coefficients[1] * character[1],
    })
}
