use serde::{Deserialize, Serialize};

use crate::geometry::{MetricState, ScalarField};

/// Denominators below this make the extracted constant meaningless.
pub const OSCILLATION_DENOMINATOR_FLOOR: f64 = 1e-14;
/// Round-off allowance on the sign of `b`.
const SIGN_SLACK: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationBound {
    pub b: f64,
    pub u_minus_b_c0: f64,
    /// `0 ≤ −b ≤ ‖u − b‖_{C⁰}`.
    pub inequality_holds: bool,
    /// `‖u − b‖²_{C⁰} / (‖∇u‖_{L²} ‖∇u‖_{C⁰})` when the denominator is resolvable.
    pub constant: Option<f64>,
}

pub fn oscillation_bound(state: &MetricState, u: &ScalarField, b: f64) -> OscillationBound {
    let shifted: Vec<f64> = u.values.iter().map(|v| v - b).collect();
    let umb = state.c0_norm(&shifted);
    let holds = -b >= -SIGN_SLACK && -b <= umb + SIGN_SLACK;
    let y = super::y_functional(state, u);
    let grad = crate::geometry::grad_norm_sq(state, u)
        .map(|g| state.c0_norm(&g.values).sqrt())
        .unwrap_or(0.0);
    let dim = crate::geometry::DIM;
    let den = y.max(0.0).sqrt() * grad.powf(dim);
    OscillationBound {
        b,
        u_minus_b_c0: umb,
        inequality_holds: holds,
        constant: (den > OSCILLATION_DENOMINATOR_FLOOR).then(|| umb.powf(dim + 1.0) / den),
    }
}
