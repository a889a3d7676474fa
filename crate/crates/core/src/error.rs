use thiserror::Error;

/// Errors surfaced by every module of the crate.
///
/// Each variant names the module and the quantity that failed so that CLI
/// messages can point at the offending monitor directly.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error in {module}: {message}")]
    Config {
        module: &'static str,
        message: String,
    },

    #[error("positivity violation in {module}: density {min_density:.3e} at node {node} (floor {floor:.1e})")]
    Positivity {
        module: &'static str,
        min_density: f64,
        node: usize,
        floor: f64,
    },

    #[error("regularity error in {module}: {message}")]
    Regularity {
        module: &'static str,
        message: String,
    },

    #[error("numerical failure in {module}/{monitor}: {message}")]
    Numerical {
        module: &'static str,
        monitor: &'static str,
        message: String,
    },

    #[error("stepping failure at t = {t:.6}: dt = {dt:.3e} fell below dt_min = {dt_min:.3e} (error estimate {estimate:.3e})")]
    Stepping {
        t: f64,
        dt: f64,
        dt_min: f64,
        estimate: f64,
    },

    #[error("finite difference at t = {t} needs neighbours at distance {h} inside the trace")]
    NeedsNeighbors { t: f64, h: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(module: &'static str, message: impl Into<String>) -> Self {
        Error::Config {
            module,
            message: message.into(),
        }
    }

    pub(crate) fn numerical(
        module: &'static str,
        monitor: &'static str,
        message: impl Into<String>,
    ) -> Self {
        Error::Numerical {
            module,
            monitor,
            message: message.into(),
        }
    }

    /// True for failures caused by bad input rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Json(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
