//! Geodesic ball volumes for the non-collapsing monitor.
//!
//! In the colatitude chart `x = −cos τ`, `θ ∈ [0, 2π)` of the reference
//! sphere the Riemannian metric `2 g_{zz̄}|dz|²` is `ρ(x)(dτ² + sin²τ dθ²)`,
//! i.e. conformal to the unit round sphere. Distances from a pole are exact
//! meridian integrals; distances from other centres solve the eikonal
//! equation `|∇T|_round = √ρ` by fast sweeping on a `(τ, θ)` lattice.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::state::MetricState;
use crate::spectral::basis::gauss_legendre;

/// Number of interior centres sampled along a meridian.
const INTERIOR_CENTERS: usize = 7;
/// Radii per centre.
const RADII: usize = 8;
const LATTICE: usize = 121;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonCollapse {
    /// `min vol(B_r(x)) / r²` over the sampled centres and radii.
    pub ratio: f64,
    /// Radius bound actually used after clamping.
    pub rho_max: f64,
    /// Set when the requested radius exceeded the pole-to-pole distance.
    pub clamped: bool,
    /// Moment coordinate of the minimising centre.
    pub center_x: f64,
    pub radius: f64,
}

/// Meridian data of a symmetric metric: exact distance and cap volume
/// measured from the south pole `x = −1`.
struct Meridian<'a> {
    state: &'a MetricState,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl<'a> Meridian<'a> {
    fn new(state: &'a MetricState) -> Self {
        let (nodes, weights) = gauss_legendre(48);
        Meridian {
            state,
            nodes,
            weights,
        }
    }

    fn rho(&self, x: f64) -> f64 {
        self.state
            .grid()
            .interpolate_at(self.state.density(), x)
            .max(0.0)
    }

    /// Geodesic distance from the south pole to colatitude `tau`.
    fn distance(&self, tau: f64) -> f64 {
        let h = 0.5 * tau;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| {
                let t = h * (s + 1.0);
                w * h * self.rho(-t.cos()).sqrt()
            })
            .sum()
    }

    /// `ω`-volume of the cap `{τ' ≤ tau}`.
    fn cap_volume(&self, tau: f64) -> f64 {
        let x1 = -tau.cos();
        let h = 0.5 * (x1 + 1.0);
        PI * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| w * h * self.rho(-1.0 + h * (s + 1.0)))
            .sum::<f64>()
    }

    /// Colatitude at which the distance from the pole equals `r`.
    fn colatitude_at(&self, r: f64) -> f64 {
        let total = self.distance(PI);
        if r >= total {
            return PI;
        }
        let (mut lo, mut hi) = (0.0, PI);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.distance(mid) < r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// `vol(B_r(pole)) / r²` for a ball centred at the south (`north = false`)
/// or north pole.
pub fn pole_ball_ratio(state: &MetricState, north: bool, r: f64) -> f64 {
    let mirrored;
    let state = if north {
        mirrored = mirror(state);
        &mirrored
    } else {
        state
    };
    let m = Meridian::new(state);
    let tau = m.colatitude_at(r);
    m.cap_volume(tau) / (r * r)
}

/// Pole-to-pole distance along a meridian.
pub fn meridian_length(state: &MetricState) -> f64 {
    Meridian::new(state).distance(PI)
}

fn mirror(state: &MetricState) -> MetricState {
    let mut phi = state.phi_shape().to_vec();
    phi.reverse();
    MetricState::from_potential(state.grid().clone(), phi, state.phi_offset())
        .expect("reflection preserves positivity")
}

/// Distance field from `(τ_c, θ = 0)` on the `(τ, θ ∈ [0, π])` lattice; the
/// ball is symmetric under `θ ↦ −θ`.
fn distance_field(slowness: &[f64], center_row: usize) -> Vec<f64> {
    let m = LATTICE;
    let k = LATTICE;
    let ht = PI / (m - 1) as f64;
    let hth = PI / (k - 1) as f64;
    let sin: Vec<f64> = (0..m).map(|i| (i as f64 * ht).sin()).collect();
    let idx = |i: usize, j: usize| i * k + j;
    let mut t = vec![f64::INFINITY; m * k];

    // Near the source the metric is nearly the scaled round metric, so seed
    // a few cells with `√ρ_c · d_round` to suppress the point-source error.
    let tc = center_row as f64 * ht;
    let seed_radius = 4.0 * ht;
    for i in 0..m {
        for j in 0..k {
            let (ti, th) = (i as f64 * ht, j as f64 * hth);
            let cosd = tc.cos() * ti.cos() + tc.sin() * ti.sin() * th.cos();
            let d = cosd.clamp(-1.0, 1.0).acos();
            if d <= seed_radius {
                t[idx(i, j)] = 0.5 * (slowness[center_row] + slowness[i]) * d;
            }
        }
    }
    let seeded: Vec<bool> = t.iter().map(|v| v.is_finite()).collect();

    let update = |t: &mut Vec<f64>, i: usize, j: usize| {
        if i == 0 || i == m - 1 {
            // A pole is a single point; every column holds the same value.
            let ring = if i == 0 { 1 } else { m - 2 };
            let f = 0.5 * (slowness[i] + slowness[ring]);
            let best = (0..k).map(|jj| t[idx(ring, jj)]).fold(f64::INFINITY, f64::min) + f * ht;
            if best < t[idx(i, 0)] {
                for jj in 0..k {
                    t[idx(i, jj)] = best;
                }
            }
            return;
        }
        let f = slowness[i];
        let a = t[idx(i - 1, j)].min(t[idx(i + 1, j)]);
        let jl = if j == 0 { 1 } else { j - 1 };
        let jr = if j == k - 1 { k - 2 } else { j + 1 };
        let b = t[idx(i, jl)].min(t[idx(i, jr)]);
        let h1 = ht;
        let h2 = sin[i] * hth;
        let cand = (a + f * h1).min(b + f * h2);
        let new = if cand <= a.max(b) || !a.is_finite() || !b.is_finite() {
            cand
        } else {
            // ((T − a)/h1)² + ((T − b)/h2)² = f²
            let (p, q) = (1.0 / (h1 * h1), 1.0 / (h2 * h2));
            let aa = p + q;
            let bb = -2.0 * (a * p + b * q);
            let cc = a * a * p + b * b * q - f * f;
            let disc = bb * bb - 4.0 * aa * cc;
            if disc >= 0.0 {
                (-bb + disc.sqrt()) / (2.0 * aa)
            } else {
                cand
            }
        };
        if new < t[idx(i, j)] {
            t[idx(i, j)] = new;
        }
    };

    for _ in 0..6 {
        let before: f64 = t.iter().filter(|v| v.is_finite()).sum();
        for &(rev_i, rev_j) in &[(false, false), (true, false), (false, true), (true, true)] {
            for ii in 0..m {
                let i = if rev_i { m - 1 - ii } else { ii };
                for jj in 0..k {
                    let j = if rev_j { k - 1 - jj } else { jj };
                    if seeded[idx(i, j)] {
                        continue;
                    }
                    update(&mut t, i, j);
                }
            }
        }
        let after: f64 = t.iter().filter(|v| v.is_finite()).sum();
        if (before - after).abs() <= 1e-12 * after.abs() {
            break;
        }
    }
    t
}

/// Minimum of `vol(B_r(x)) / r²` over sampled centres and radii `r ≤ rho_max`.
pub fn ball_volume_ratio(state: &MetricState, rho_max: f64) -> NonCollapse {
    assert!(rho_max > 0.0, "rho_max must be positive");
    let diameter = meridian_length(state);
    let clamped = rho_max > diameter;
    let rho_max = rho_max.min(diameter);

    let mut best = NonCollapse {
        ratio: f64::INFINITY,
        rho_max,
        clamped,
        center_x: -1.0,
        radius: rho_max,
    };
    let mut consider = |ratio: f64, x: f64, r: f64| {
        if ratio < best.ratio {
            best.ratio = ratio;
            best.center_x = x;
            best.radius = r;
        }
    };

    for north in [false, true] {
        for k in 1..=2 * RADII {
            let r = rho_max * k as f64 / (2 * RADII) as f64;
            consider(pole_ball_ratio(state, north, r), if north { 1.0 } else { -1.0 }, r);
        }
    }

    let m = LATTICE;
    let k = LATTICE;
    let ht = PI / (m - 1) as f64;
    let hth = PI / (k - 1) as f64;
    let grid = state.grid();
    let rho: Vec<f64> = (0..m)
        .map(|i| grid.interpolate_at(state.density(), -(i as f64 * ht).cos()).max(0.0))
        .collect();
    let slowness: Vec<f64> = rho.iter().map(|r| r.sqrt()).collect();

    // Node weights for ω = ½ ρ sin τ dτ dθ over both halves θ ∈ (−π, π],
    // rescaled so that they reproduce the exact total volume.
    let mut weights = vec![0.0; m * k];
    for i in 0..m {
        for j in 0..k {
            let wj = if j == 0 || j == k - 1 { 0.5 } else { 1.0 };
            let w = if i == 0 || i == m - 1 {
                PI * rho[i] * (1.0 - (0.5 * ht).cos()) / (k as f64)
            } else {
                rho[i] * (i as f64 * ht).sin() * ht * hth * wj
            };
            weights[i * k + j] = w;
        }
    }
    let total: f64 = weights.iter().sum();
    let scale = state.volume() / total;
    weights.iter_mut().for_each(|w| *w *= scale);

    // Radii below a few lattice cells are resolved only by the pole caps.
    let s_max = slowness.iter().cloned().fold(0.0, f64::max);
    let r_min = (8.0 * ht * s_max).min(rho_max);
    // Nodes within half a cell of the sphere count fractionally.
    let blur = ht * s_max;
    for c in 1..=INTERIOR_CENTERS {
        let row = c * (m - 1) / (INTERIOR_CENTERS + 1);
        let t = distance_field(&slowness, row);
        let mut pairs: Vec<(f64, f64)> = t.iter().cloned().zip(weights.iter().cloned()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for q in 0..RADII {
            let r = r_min + (rho_max - r_min) * q as f64 / (RADII - 1).max(1) as f64;
            let vol: f64 = pairs
                .iter()
                .take_while(|p| p.0 <= r + 0.5 * blur)
                .map(|p| p.1 * ((r - p.0) / blur + 0.5).clamp(0.0, 1.0))
                .sum();
            consider(vol / (r * r), -(row as f64 * ht).cos(), r);
        }
    }
    best
}
