//! Eigenvalue problems along the flow, decomposed into angular Fourier modes.
//!
//! Both operators reduce, for a mode `e^{ikθ}`, to a generalized symmetric
//! eigenproblem for a radial profile `G(x)` of the form
//!
//! ```text
//!   E[G] = ∫ p(x) (ψ₀ G' + c(x) G)² dx ,   M[G] = ∫ m(x) G² dx ,
//! ```
//!
//! with a weight factor `w_k(x)` pulled out of the eigenfunction so that `G`
//! is a polynomial whenever the section is smooth at both poles. `G` is
//! expanded in Jacobi polynomials orthogonal for the reference mass weight
//! and the forms are assembled with Gauss–Legendre quadrature, so the
//! discrete matrices are symmetric by construction.

pub mod basis;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MetricState, ScalarField};
use basis::{gauss_legendre, jacobi_with_derivatives};

/// Relative kernel threshold: eigenvalues below `KERNEL_REL·(1 + λ_est)` are kernel.
pub const KERNEL_REL: f64 = 1e-7;
pub const DEFAULT_KMAX: usize = 8;
/// Eigenvalues kept per mode in reports.
const KEEP: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorTag {
    /// `−Δf + ⟨∂̄f, ∂̄u⟩` on functions, self-adjoint for `e^{−u}ω`.
    WeightedPoincare,
    /// `∂̄†∂̄` on `T^{1,0}` vector fields.
    VectorLaplacian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub operator: OperatorTag,
    /// Lowest eigenvalues per angular mode, ascending.
    pub modes: BTreeMap<i32, Vec<f64>>,
    pub kernel_dimension: usize,
    pub kernel_threshold: f64,
    pub lambda_min_positive: f64,
    /// Largest relative asymmetry of the assembled matrices.
    pub hermiticity_defect: f64,
}

impl SpectrumResult {
    /// Smallest eigenvalue above the kernel threshold in mode `k`.
    pub fn mode_min_positive(&self, k: i32) -> Option<f64> {
        self.modes
            .get(&k)?
            .iter()
            .cloned()
            .find(|&v| v >= self.kernel_threshold)
    }

    /// Whether the lowest positive eigenvalue per mode grows with `|k|` from
    /// `|k| = from` on, which justifies the mode truncation.
    pub fn minima_monotone_from(&self, from: i32) -> bool {
        let kmax = self.modes.keys().map(|k| k.abs()).max().unwrap_or(0);
        let mut prev = f64::NEG_INFINITY;
        for m in from..=kmax {
            let lo = [m, -m]
                .iter()
                .filter_map(|&k| self.mode_min_positive(k))
                .fold(f64::INFINITY, f64::min);
            if lo < prev - 1e-9 {
                return false;
            }
            prev = lo;
        }
        true
    }
}

/// Coefficients of one reduced mode problem evaluated at quadrature nodes.
struct ModeForm {
    mode: i32,
    /// Jacobi parameters `(a, b)` of the basis: weight `(1−x)^a (1+x)^b`.
    jacobi: (f64, f64),
    p: Vec<f64>,
    c: Vec<f64>,
    m: Vec<f64>,
}

struct Quadrature {
    x: Vec<f64>,
    w: Vec<f64>,
    psi0: Vec<f64>,
}

impl Quadrature {
    fn new(q: usize) -> Self {
        let (x, w) = gauss_legendre(q);
        let psi0 = x.iter().map(|x| 0.5 * (1.0 - x * x)).collect();
        Quadrature { x, w, psi0 }
    }
}

/// Solves the generalized problem for one mode; returns ascending
/// eigenvalues and the hermiticity defect.
fn solve_mode(form: &ModeForm, quad: &Quadrature, nb: usize) -> Result<(Vec<f64>, f64)> {
    let q = quad.x.len();
    let (a, b) = form.jacobi;
    let mut phi = DMatrix::zeros(q, nb);
    let mut dphi = DMatrix::zeros(q, nb);
    for (i, &x) in quad.x.iter().enumerate() {
        let (v, d) = jacobi_with_derivatives(nb - 1, a, b, x);
        for n in 0..nb {
            phi[(i, n)] = v[n];
            dphi[(i, n)] = d[n];
        }
    }
    // Rows of the energy "gradient" ψ₀G' + cG and the mass values, both
    // scaled by the square roots of the quadrature weights and coefficients.
    let mut ge = DMatrix::zeros(q, nb);
    let mut gm = DMatrix::zeros(q, nb);
    for i in 0..q {
        let se = (quad.w[i] * form.p[i]).sqrt();
        let sm = (quad.w[i] * form.m[i]).sqrt();
        for n in 0..nb {
            ge[(i, n)] = se * (quad.psi0[i] * dphi[(i, n)] + form.c[i] * phi[(i, n)]);
            gm[(i, n)] = sm * phi[(i, n)];
        }
    }
    let mut stiff = ge.transpose() * &ge;
    let mut mass = gm.transpose() * &gm;

    // Diagonal scaling to unit mass diagonal keeps the Cholesky well conditioned.
    let scale: Vec<f64> = (0..nb).map(|n| 1.0 / mass[(n, n)].sqrt()).collect();
    for i in 0..nb {
        for j in 0..nb {
            stiff[(i, j)] *= scale[i] * scale[j];
            mass[(i, j)] *= scale[i] * scale[j];
        }
    }
    let defect = asymmetry(&stiff).max(asymmetry(&mass));

    let chol = mass.clone().cholesky().ok_or_else(|| {
        Error::numerical(
            "spectral",
            "mass_matrix",
            format!("mass matrix of mode {} is not positive definite", form.mode),
        )
    })?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::numerical("spectral", "mass_matrix", "singular Cholesky factor"))?;
    let mut c = &linv * &stiff * linv.transpose();
    c = 0.5 * (&c + c.transpose());
    let eig = c.symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    Ok((vals, defect))
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (m - m.transpose()).amax() / scale
}

fn assemble(
    operator: OperatorTag,
    forms: Vec<ModeForm>,
    quad: &Quadrature,
    nb: usize,
) -> Result<SpectrumResult> {
    let solved: Vec<Result<(i32, Vec<f64>, f64)>> = forms
        .par_iter()
        .map(|f| solve_mode(f, quad, nb).map(|(v, d)| (f.mode, v, d)))
        .collect();
    let mut modes = BTreeMap::new();
    let mut defect: f64 = 0.0;
    let mut all = Vec::new();
    for r in solved {
        let (k, vals, d) = r?;
        defect = defect.max(d);
        all.extend(vals.iter().cloned());
        modes.insert(k, vals.into_iter().take(KEEP).collect::<Vec<_>>());
    }
    let estimate = all
        .iter()
        .cloned()
        .filter(|&v| v > 1e-4)
        .fold(f64::INFINITY, f64::min);
    let estimate = if estimate.is_finite() { estimate } else { 0.0 };
    let threshold = KERNEL_REL * (1.0 + estimate);
    let kernel_dimension = all.iter().filter(|v| v.abs() < threshold).count();
    let lambda_min_positive = all
        .iter()
        .cloned()
        .filter(|&v| v >= threshold)
        .fold(f64::INFINITY, f64::min);
    Ok(SpectrumResult {
        operator,
        modes,
        kernel_dimension,
        kernel_threshold: threshold,
        lambda_min_positive,
        hermiticity_defect: defect,
    })
}

fn sizes(state: &MetricState, kmax: usize) -> (usize, usize) {
    let n = state.grid().node_count();
    let nb = (n / 2).max(12);
    let q = 2 * n + kmax + 8;
    (nb, q)
}

/// Lowest positive eigenvalue `μ` of `−Δf + g^{jk̄}∂_k̄f ∂_j u = μ f`.
///
/// For a mode `f = F(x) e^{ikθ}` with `F = (1−x²)^{|k|/2} G`:
/// `p = (1−x²)^{|k|} e^{−u}/ψ₀`, `c = −(|k|x + k)/2`, `m = (1−x²)^{|k|} ρ e^{−u}`.
pub fn poincare_mu(state: &MetricState, u: &ScalarField, kmax: usize) -> Result<SpectrumResult> {
    if u.values.len() != state.grid().node_count() {
        return Err(Error::config("spectral", "Ricci potential does not match the grid"));
    }
    let (nb, q) = sizes(state, kmax);
    let quad = Quadrature::new(q);
    let grid = state.grid();
    let rho = grid.interpolate(state.density(), &quad.x);
    let ew: Vec<f64> = grid
        .interpolate(&u.values, &quad.x)
        .iter()
        .map(|v| (-v).exp())
        .collect();
    let k = kmax as i32;
    let forms = (-k..=k)
        .map(|k| {
            let ka = k.unsigned_abs() as f64;
            let wt: Vec<f64> = quad.x.iter().map(|x| (1.0 - x * x).powf(ka)).collect();
            ModeForm {
                mode: k,
                jacobi: (ka, ka),
                p: (0..q).map(|i| wt[i] * ew[i] / quad.psi0[i]).collect(),
                c: quad.x.iter().map(|x| -0.5 * (ka * x + k as f64)).collect(),
                m: (0..q).map(|i| wt[i] * rho[i] * ew[i]).collect(),
            }
        })
        .collect();
    assemble(OperatorTag::WeightedPoincare, forms, &quad, nb)
}

/// Spectrum of `∂̄†∂̄ = −g^{jk̄}∇_j∇_k̄` on `T^{1,0}` vector fields.
///
/// A field `V = z A(x) e^{ikθ} ∂_z` is smooth at `z = 0` iff
/// `A ~ (1+x)^{(|k+1|−1)/2}` and at `z = ∞` iff `A ~ (1−x)^{(|k−1|−1)/2}`;
/// writing `A = (1+x)^α (1−x)^β G` gives
/// `p = (1+x)^{2α}(1−x)^{2β} ρ`, `c = ((α−β) − (α+β)x − k)/2`,
/// `m = ψ₀ ρ² (1+x)^{2α}(1−x)^{2β}`. Holomorphic fields `∂_z, z∂_z, z²∂_z`
/// are `G ≡ 1` in modes `k = −1, 0, 1`.
pub fn vector_laplacian_spectrum(state: &MetricState, kmax: usize) -> Result<SpectrumResult> {
    if kmax < 3 {
        return Err(Error::config(
            "spectral",
            format!("kmax = {kmax} is too small; modes |k| ≤ 3 are needed to separate the kernel"),
        ));
    }
    let (nb, q) = sizes(state, kmax);
    let quad = Quadrature::new(q);
    let rho = state.grid().interpolate(state.density(), &quad.x);
    let k = kmax as i32;
    let forms = (-k..=k)
        .map(|k| {
            let alpha = ((k + 1).abs() as f64 - 1.0) / 2.0;
            let beta = ((k - 1).abs() as f64 - 1.0) / 2.0;
            let wt: Vec<f64> = quad
                .x
                .iter()
                .map(|x| (1.0 + x).powf(2.0 * alpha) * (1.0 - x).powf(2.0 * beta))
                .collect();
            ModeForm {
                mode: k,
                jacobi: (2.0 * beta + 1.0, 2.0 * alpha + 1.0),
                p: (0..q).map(|i| wt[i] * rho[i]).collect(),
                c: quad
                    .x
                    .iter()
                    .map(|x| 0.5 * ((alpha - beta) - (alpha + beta) * x - k as f64))
                    .collect(),
                m: (0..q)
                    .map(|i| quad.psi0[i] * rho[i] * rho[i] * wt[i])
                    .collect(),
            }
        })
        .collect();
    assemble(OperatorTag::VectorLaplacian, forms, &quad, nb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, reference_metric, ScalarField};

    #[test]
    fn reference_poincare_spectrum() {
        let g = build_grid(48).unwrap();
        let s = reference_metric(&g);
        let u = ScalarField::constant(48, 0.0);
        let r = poincare_mu(&s, &u, 4).unwrap();
        assert_eq!(r.kernel_dimension, 1);
        assert!((r.lambda_min_positive - 1.0).abs() < 1e-10);
        // mode 0 carries the Legendre spectrum l(l+1)/2
        let m0 = &r.modes[&0];
        for (l, v) in m0.iter().enumerate() {
            let exact = (l * (l + 1)) as f64 / 2.0;
            assert!((v - exact).abs() < 1e-9 * (1.0 + exact), "{l}: {v}");
        }
        assert!(r.hermiticity_defect < 1e-10);
    }

    #[test]
    fn reference_vector_spectrum() {
        let g = build_grid(48).unwrap();
        let s = reference_metric(&g);
        let r = vector_laplacian_spectrum(&s, 4).unwrap();
        assert_eq!(r.kernel_dimension, 3);
        for k in [-1, 0, 1] {
            assert!(r.modes[&k][0].abs() < 1e-10);
        }
        assert!((r.lambda_min_positive - 2.0).abs() < 1e-10);
        assert!(r.minima_monotone_from(1));
    }

    #[test]
    fn kmax_below_three_rejected() {
        let g = build_grid(24).unwrap();
        let s = reference_metric(&g);
        assert!(matches!(vector_laplacian_spectrum(&s, 2), Err(Error::Config { .. })));
    }
}
