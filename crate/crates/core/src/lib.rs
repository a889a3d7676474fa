//! Numerical laboratory for the normalized Kähler–Ricci flow on
//! rotationally symmetric metrics on CP¹.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod functionals;
pub mod geometry;
pub mod spectral;

pub use error::{Error, Result};
