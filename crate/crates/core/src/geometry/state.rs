use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::grid::GridSpec;
use crate::error::{Error, Result};

/// Metrics whose density `ω_φ/ω₀` dips below this value are rejected.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Volume of the class `π c₁(CP¹)`.
pub const VOLUME: f64 = 2.0 * PI;

/// Complex dimension.
pub const DIM: f64 = 1.0;

/// Behaviour of a field under the antipodal reflection `x ↦ −x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
    Mixed,
}

impl Parity {
    /// Classifies nodal values on a symmetric grid.
    pub fn detect(values: &[f64], tol: f64) -> Parity {
        let n = values.len();
        let scale = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let (mut even, mut odd) = (true, true);
        for j in 0..n {
            let (a, b) = (values[j], values[n - 1 - j]);
            even &= (a - b).abs() <= tol * scale;
            odd &= (a + b).abs() <= tol * scale;
        }
        match (even, odd) {
            (true, _) => Parity::Even,
            (false, true) => Parity::Odd,
            _ => Parity::Mixed,
        }
    }

    fn consistent_with(self, values: &[f64], tol: f64) -> bool {
        let n = values.len();
        let scale = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        (0..n).all(|j| {
            let (a, b) = (values[j], values[n - 1 - j]);
            match self {
                Parity::Even => (a - b).abs() <= tol * scale,
                Parity::Odd => (a + b).abs() <= tol * scale,
                Parity::Mixed => true,
            }
        })
    }
}

/// Nodal values of a rotationally invariant function.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub values: Vec<f64>,
    pub parity: Parity,
}

impl ScalarField {
    pub fn new(values: Vec<f64>, parity: Parity) -> Self {
        ScalarField { values, parity }
    }

    /// Field with parity read off from the values.
    pub fn detect(values: Vec<f64>) -> Self {
        let parity = Parity::detect(&values, 1e-9);
        ScalarField { values, parity }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        ScalarField {
            values: vec![c; n],
            parity: Parity::Even,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn check(&self, grid: &GridSpec) -> Result<()> {
        if self.values.len() != grid.node_count() {
            return Err(Error::Regularity {
                module: "geometry",
                message: format!(
                    "field has {} values on a grid of {} nodes",
                    self.values.len(),
                    grid.node_count()
                ),
            });
        }
        if let Some(j) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Regularity {
                module: "geometry",
                message: format!("non-finite value at node {j}"),
            });
        }
        if !self.parity.consistent_with(&self.values, 1e-8) {
            return Err(Error::Regularity {
                module: "geometry",
                message: format!("field declared {:?} does not have that symmetry", self.parity),
            });
        }
        Ok(())
    }
}

/// A rotationally symmetric Kähler metric `ω_φ = ω₀ + (i/2)∂∂̄φ` in `π c₁(CP¹)`.
///
/// The potential is stored as a nodal shape plus a separate additive
/// constant. Constants do not change the metric, and keeping the (possibly
/// large) constant out of the nodal array keeps it out of the differentiation
/// matrices.
#[derive(Debug, Clone)]
pub struct MetricState {
    grid: Arc<GridSpec>,
    phi: Vec<f64>,
    phi_offset: f64,
    density: Vec<f64>,
    metric: Vec<f64>,
    curvature: Vec<f64>,
}

impl MetricState {
    /// The Fubini–Study metric, `φ ≡ 0`.
    pub fn reference(grid: Arc<GridSpec>) -> Self {
        let n = grid.node_count();
        let metric = grid.psi0().to_vec();
        MetricState {
            grid,
            phi: vec![0.0; n],
            phi_offset: 0.0,
            density: vec![1.0; n],
            metric,
            curvature: vec![1.0; n],
        }
    }

    pub fn from_potential(grid: Arc<GridSpec>, phi: Vec<f64>, phi_offset: f64) -> Result<Self> {
        if phi.len() != grid.node_count() {
            return Err(Error::config(
                "geometry",
                format!("potential has {} values, grid has {}", phi.len(), grid.node_count()),
            ));
        }
        let lap = grid.apply_lap0(&phi);
        let density: Vec<f64> = lap.iter().map(|l| 1.0 + l).collect();
        check_density(&density)?;
        let metric = grid.psi0().iter().zip(&density).map(|(p, r)| p * r).collect();
        let log_rho: Vec<f64> = density.iter().map(|r| r.ln()).collect();
        let l = grid.apply_lap0(&log_rho);
        let curvature = l.iter().zip(&density).map(|(l, r)| (1.0 - l) / r).collect();
        Ok(MetricState {
            grid,
            phi,
            phi_offset,
            density,
            metric,
            curvature,
        })
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    /// Nodal shape of the potential (without the additive constant).
    pub fn phi_shape(&self) -> &[f64] {
        &self.phi
    }

    pub fn phi_offset(&self) -> f64 {
        self.phi_offset
    }

    /// Full potential `φ` at the nodes.
    pub fn phi(&self) -> Vec<f64> {
        self.phi.iter().map(|p| p + self.phi_offset).collect()
    }

    /// `ω_φ / ω₀`.
    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Metric coefficient of the symmetric reduction, `h = ψ₀ ρ`; the
    /// metric is `g_{zz̄} = h / |z|²`.
    pub fn metric(&self) -> &[f64] {
        &self.metric
    }

    /// Scalar curvature `R = g^{zz̄} R_{zz̄}`, cached at construction.
    pub fn curvature(&self) -> &[f64] {
        &self.curvature
    }

    pub fn min_density(&self) -> f64 {
        self.density.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `∫ f ω_φ`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        let g: Vec<f64> = f.iter().zip(&self.density).map(|(a, r)| a * r).collect();
        PI * self.grid.quad(&g)
    }

    pub fn volume(&self) -> f64 {
        PI * self.grid.quad(&self.density)
    }

    /// `(∫ f² ω_φ)^{1/2}`.
    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        let sq: Vec<f64> = f.iter().map(|v| v * v).collect();
        self.integrate(&sq).max(0.0).sqrt()
    }

    pub fn c0_norm(&self, f: &[f64]) -> f64 {
        self.grid.c0_norm(f)
    }
}

fn check_density(density: &[f64]) -> Result<()> {
    let (node, min) = density
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(i, m), (j, &v)| if v < m || v.is_nan() { (j, v) } else { (i, m) });
    if !(min > DENSITY_FLOOR) {
        return Err(Error::Positivity {
            module: "geometry",
            min_density: min,
            node,
            floor: DENSITY_FLOOR,
        });
    }
    Ok(())
}
