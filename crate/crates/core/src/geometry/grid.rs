//! Chebyshev–Gauss–Lobatto collocation on the moment interval `[-1, 1]`.
//!
//! The coordinate `x` is the moment coordinate of the reference Fubini–Study
//! metric, `x = tanh(log|z|)`; the poles sit at `x = ±1`. All operators are
//! dense matrices acting on nodal values and are assembled once per grid.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, LU, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest grid accepted by [`GridSpec::new`].
pub const MIN_NODES: usize = 16;

/// Oversampling factor used by the refined C⁰ norm.
pub const REFINEMENT: usize = 4;

#[derive(Debug)]
pub struct GridSpec {
    node_count: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    bary: Vec<f64>,
    /// ψ₀(x) = (1 − x²)/2, the reference momentum profile.
    psi0: Vec<f64>,
    d1: DMatrix<f64>,
    d2: DMatrix<f64>,
    /// Reference Laplacian d/dx(ψ₀ d/dx).
    lap0: DMatrix<f64>,
    refine: DMatrix<f64>,
    poisson: LU<f64, Dyn, Dyn>,
}

/// Serializable description of a grid; the operators are rebuilt on load.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GridDescriptor {
    pub node_count: usize,
    pub nodes: Vec<f64>,
}

impl GridSpec {
    pub fn new(node_count: usize) -> Result<Self> {
        if node_count < MIN_NODES {
            return Err(Error::config(
                "geometry",
                format!("node_count = {node_count} is below the minimum of {MIN_NODES}"),
            ));
        }
        let n = node_count;
        let deg = n - 1;
        // x_j = −cos(πj/deg) written as a sine, which is symmetric bit for
        // bit and accurate near the poles.
        let nodes: Vec<f64> = (0..n)
            .map(|j| (PI * (2.0 * j as f64 - deg as f64) / (2.0 * deg as f64)).sin())
            .collect();

        let weights = clenshaw_curtis(deg);
        let bary: Vec<f64> = (0..n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == deg {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();

        let d1 = diff_matrix(&nodes, &bary);
        let d2 = &d1 * &d1;
        let psi0: Vec<f64> = nodes.iter().map(|x| 0.5 * (1.0 - x * x)).collect();
        let mut lap0 = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                lap0[(i, j)] = psi0[i] * d2[(i, j)] - nodes[i] * d1[(i, j)];
            }
        }
        // Row sums vanish exactly in exact arithmetic; remove the round-off.
        for i in 0..n {
            let s: f64 = (0..n).map(|j| lap0[(i, j)]).sum();
            lap0[(i, i)] -= s;
        }

        let fine_count = REFINEMENT * deg + 1;
        let fine: Vec<f64> = (0..fine_count)
            .map(|j| -(PI * j as f64 / (fine_count - 1) as f64).cos())
            .collect();
        let refine = interpolation_matrix(&nodes, &bary, &fine);

        // Bordered system [L0 1; w^T 0] fixes the additive constant of the
        // Poisson problem by a zero reference mean.
        let mut bordered = DMatrix::zeros(n + 1, n + 1);
        bordered.view_mut((0, 0), (n, n)).copy_from(&lap0);
        for i in 0..n {
            bordered[(i, n)] = 1.0;
            bordered[(n, i)] = weights[i];
        }
        let poisson = bordered.lu();

        Ok(GridSpec {
            node_count: n,
            nodes,
            weights,
            bary,
            psi0,
            d1,
            d2,
            lap0,
            refine,
            poisson,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Clenshaw–Curtis weights for `∫_{-1}^{1} f dx`.
    pub fn quadrature_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn psi0(&self) -> &[f64] {
        &self.psi0
    }

    pub fn d1(&self) -> &DMatrix<f64> {
        &self.d1
    }

    pub fn d2(&self) -> &DMatrix<f64> {
        &self.d2
    }

    pub fn lap0(&self) -> &DMatrix<f64> {
        &self.lap0
    }

    pub fn descriptor(&self) -> GridDescriptor {
        GridDescriptor {
            node_count: self.node_count,
            nodes: self.nodes.clone(),
        }
    }

    pub fn diff(&self, f: &[f64]) -> Vec<f64> {
        apply(&self.d1, f)
    }

    pub fn diff2(&self, f: &[f64]) -> Vec<f64> {
        apply(&self.d2, f)
    }

    /// Reference Laplacian `(ψ₀ f')'`.
    pub fn apply_lap0(&self, f: &[f64]) -> Vec<f64> {
        apply(&self.lap0, f)
    }

    /// `∫_{-1}^{1} f dx` (the Lebesgue measure in the moment coordinate).
    pub fn quad(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// Nodal values on the refined evaluation grid (includes the original nodes).
    pub fn refined(&self, f: &[f64]) -> Vec<f64> {
        apply(&self.refine, f)
    }

    /// Max of `|f|` over the nodes and the refined interpolant.
    pub fn c0_norm(&self, f: &[f64]) -> f64 {
        let nodal = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        self.refined(f)
            .iter()
            .fold(nodal, |m, v| m.max(v.abs()))
    }

    /// Barycentric interpolation of nodal values at arbitrary points.
    pub fn interpolate(&self, f: &[f64], at: &[f64]) -> Vec<f64> {
        at.iter().map(|&x| self.interpolate_at(f, x)).collect()
    }

    pub fn interpolate_at(&self, f: &[f64], x: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..self.node_count {
            let dx = x - self.nodes[j];
            if dx == 0.0 {
                return f[j];
            }
            let w = self.bary[j] / dx;
            num += w * f[j];
            den += w;
        }
        num / den
    }

    /// Solves `(ψ₀ u')' = rhs` with zero reference mean. The right-hand side
    /// is projected onto the range of the operator; the size of the removed
    /// component is returned alongside the solution.
    pub fn solve_lap0(&self, rhs: &[f64]) -> Result<(Vec<f64>, f64)> {
        let n = self.node_count;
        let mut b = DVector::zeros(n + 1);
        b.as_mut_slice()[..n].copy_from_slice(rhs);
        let sol = self.poisson.solve(&b).ok_or_else(|| {
            Error::numerical("geometry", "poisson", "bordered Laplacian is singular")
        })?;
        let x = sol.as_slice();
        Ok((x[..n].to_vec(), x[n]))
    }
}

/// Column-major dense matrix-vector product on plain slices.
pub(crate) fn apply(m: &DMatrix<f64>, f: &[f64]) -> Vec<f64> {
    let (rows, cols) = m.shape();
    debug_assert_eq!(cols, f.len());
    let data = m.as_slice();
    let mut out = vec![0.0; rows];
    for (j, &fj) in f.iter().enumerate() {
        if fj == 0.0 {
            continue;
        }
        let col = &data[j * rows..(j + 1) * rows];
        for (o, a) in out.iter_mut().zip(col) {
            *o += a * fj;
        }
    }
    out
}

fn clenshaw_curtis(deg: usize) -> Vec<f64> {
    // clencurt from Trefethen, Spectral Methods in MATLAB.
    let n = deg;
    let mut w = vec![0.0; n + 1];
    let theta: Vec<f64> = (0..=n).map(|k| PI * k as f64 / n as f64).collect();
    let ii: Vec<usize> = (1..n).collect();
    let mut v = vec![1.0; ii.len()];
    if n % 2 == 0 {
        let w0 = 1.0 / ((n * n) as f64 - 1.0);
        w[0] = w0;
        w[n] = w0;
        for k in 1..n / 2 {
            for (vi, &i) in v.iter_mut().zip(&ii) {
                *vi -= 2.0 * (2.0 * k as f64 * theta[i]).cos() / (4.0 * (k * k) as f64 - 1.0);
            }
        }
        for (vi, &i) in v.iter_mut().zip(&ii) {
            *vi -= (n as f64 * theta[i]).cos() / ((n * n) as f64 - 1.0);
        }
    } else {
        let w0 = 1.0 / (n * n) as f64;
        w[0] = w0;
        w[n] = w0;
        for k in 1..=(n - 1) / 2 {
            for (vi, &i) in v.iter_mut().zip(&ii) {
                *vi -= 2.0 * (2.0 * k as f64 * theta[i]).cos() / (4.0 * (k * k) as f64 - 1.0);
            }
        }
    }
    for (vi, &i) in v.iter().zip(&ii) {
        w[i] = 2.0 * vi / n as f64;
    }
    w
}

fn diff_matrix(x: &[f64], bary: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            if i != j {
                let v = bary[j] / bary[i] / (x[i] - x[j]);
                d[(i, j)] = v;
                row += v;
            }
        }
        d[(i, i)] = -row;
    }
    d
}

pub(crate) fn interpolation_matrix(nodes: &[f64], bary: &[f64], at: &[f64]) -> DMatrix<f64> {
    let n = nodes.len();
    let mut m = DMatrix::zeros(at.len(), n);
    for (r, &x) in at.iter().enumerate() {
        if let Some(j) = nodes.iter().position(|&xj| (x - xj).abs() < 1e-15) {
            m[(r, j)] = 1.0;
            continue;
        }
        let mut den = 0.0;
        for j in 0..n {
            let w = bary[j] / (x - nodes[j]);
            m[(r, j)] = w;
            den += w;
        }
        for j in 0..n {
            m[(r, j)] /= den;
        }
    }
    m
}
