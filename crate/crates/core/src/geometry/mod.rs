//! Discrete geometry of rotationally symmetric Kähler metrics on CP¹.
//!
//! Conventions: `ω = (i/2) g_{zz̄} dz∧dz̄`, reference `g_{zz̄} = 2/(1+|z|²)²`,
//! so the class volume is `2π` and the reference scalar curvature is `1`.

pub mod balls;
pub mod grid;
pub mod ops;
pub mod state;

pub use balls::{ball_volume_ratio, NonCollapse};
pub use grid::{GridDescriptor, GridSpec};
pub use ops::{
    build_grid, c0_norm, field_from_fn, grad_norm_sq, hessian_norms, integrate, l2_norm, laplacian,
    reference_metric, scalar_curvature, scalar_curvature_moment,
};
pub use state::{MetricState, Parity, ScalarField, DENSITY_FLOOR, DIM, VOLUME};
