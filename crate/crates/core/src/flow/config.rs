use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, MetricState};
use crate::spectral::basis::jacobi_values;

/// Initial densities must stay above this value.
pub const POSITIVITY_GUARD: f64 = 0.02;

/// Shape `P(x)` of an initial potential `φ₀ = a P(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Reference,
    /// Legendre polynomial `P_l`; even `l` gives antipodally symmetric data.
    Legendre(usize),
    /// `P₂ + ½P₃`, no symmetry.
    Mixed,
    /// Random combination of `P_2 … P_max_degree` with `1/l²` decay.
    Random { max_degree: usize, seed: u64 },
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Reference => 0.0,
            Profile::Legendre(l) => legendre(*l, x),
            Profile::Mixed => legendre(2, x) + 0.5 * legendre(3, x),
            Profile::Random { max_degree, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (2..=*max_degree)
                    .map(|l| {
                        let c: f64 = rng.gen_range(-1.0..1.0);
                        c * legendre(l, x) / (l * l) as f64
                    })
                    .sum()
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            Profile::Reference => "reference".into(),
            Profile::Legendre(l) => format!("p{l}"),
            Profile::Mixed => "mixed".into(),
            Profile::Random { max_degree, seed } => format!("random{max_degree}_s{seed}"),
        }
    }
}

fn legendre(l: usize, x: f64) -> f64 {
    jacobi_values(l, 0.0, 0.0, x)[l]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    pub profile: Profile,
    /// Explicit amplitude `a`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// Alternatively, the amplitude is tuned until `‖u(0)‖_{C⁰}` hits this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_u_c0: Option<f64>,
}

impl InitialData {
    pub fn reference() -> Self {
        InitialData {
            profile: Profile::Reference,
            amplitude: None,
            target_u_c0: None,
        }
    }
}

fn default_nodes() -> usize {
    64
}
fn default_dt_init() -> f64 {
    1e-4
}
fn default_dt_min() -> f64 {
    1e-9
}
fn default_dt_max() -> f64 {
    0.05
}
fn default_tolerance() -> f64 {
    1e-10
}
fn default_cadence() -> f64 {
    0.01
}
fn default_spectral_cadence() -> f64 {
    0.5
}
fn default_kmax() -> usize {
    crate::spectral::DEFAULT_KMAX
}
fn default_rho() -> f64 {
    1.0
}
fn default_transient() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    #[serde(default = "default_nodes")]
    pub node_count: usize,
    pub initial: InitialData,
    pub end_time: f64,
    #[serde(default = "default_dt_init")]
    pub dt_init: f64,
    #[serde(default = "default_dt_min")]
    pub dt_min: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    /// Local error tolerance of the step-doubling controller.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Spacing of recorded samples.
    #[serde(default = "default_cadence")]
    pub monitor_cadence: f64,
    /// Spacing of the eigenvalue and ball-volume monitors (0 disables them).
    #[serde(default = "default_spectral_cadence")]
    pub spectral_cadence: f64,
    #[serde(default = "default_kmax")]
    pub kmax: usize,
    /// Largest radius for the non-collapsing monitor.
    #[serde(default = "default_rho")]
    pub noncollapse_radius: f64,
    /// End of the initial transient excluded from monotonicity and decay checks.
    #[serde(default = "default_transient")]
    pub transient: f64,
    /// Times at which full metric snapshots are stored.
    #[serde(default)]
    pub checkpoints: Vec<f64>,
}

impl FlowConfig {
    pub fn new(initial: InitialData, end_time: f64) -> Self {
        FlowConfig {
            node_count: default_nodes(),
            initial,
            end_time,
            dt_init: default_dt_init(),
            dt_min: default_dt_min(),
            dt_max: default_dt_max(),
            tolerance: default_tolerance(),
            monitor_cadence: default_cadence(),
            spectral_cadence: default_spectral_cadence(),
            kmax: default_kmax(),
            noncollapse_radius: default_rho(),
            transient: default_transient(),
            checkpoints: Vec::new(),
        }
    }

    /// Checks every invariant and names all offending fields at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.node_count < crate::geometry::grid::MIN_NODES {
            bad.push(format!("node_count = {} < {}", self.node_count, crate::geometry::grid::MIN_NODES));
        }
        if !(self.end_time > 0.0 && self.end_time.is_finite()) {
            bad.push(format!("end_time = {} must be positive", self.end_time));
        }
        if !(self.dt_min > 0.0) {
            bad.push(format!("dt_min = {} must be positive", self.dt_min));
        }
        if self.dt_min > self.dt_max {
            bad.push(format!("dt_min = {} exceeds dt_max = {}", self.dt_min, self.dt_max));
        }
        if self.dt_init < self.dt_min || self.dt_init > self.dt_max {
            bad.push(format!(
                "dt_init = {} outside [dt_min, dt_max] = [{}, {}]",
                self.dt_init, self.dt_min, self.dt_max
            ));
        }
        if !(self.tolerance > 0.0) {
            bad.push(format!("tolerance = {} must be positive", self.tolerance));
        }
        if !(self.monitor_cadence > 0.0) {
            bad.push(format!("monitor_cadence = {} must be positive", self.monitor_cadence));
        }
        if self.spectral_cadence < 0.0 {
            bad.push(format!("spectral_cadence = {} must be non-negative", self.spectral_cadence));
        }
        if self.spectral_cadence > 0.0 && self.kmax < 3 {
            bad.push(format!("kmax = {} must be at least 3", self.kmax));
        }
        if !(self.noncollapse_radius > 0.0) {
            bad.push(format!("noncollapse_radius = {} must be positive", self.noncollapse_radius));
        }
        match (&self.initial.profile, self.initial.amplitude, self.initial.target_u_c0) {
            (Profile::Reference, _, _) => {}
            (_, Some(_), Some(_)) => bad.push("initial: give either amplitude or target_u_c0, not both".into()),
            (_, None, None) => bad.push("initial: amplitude or target_u_c0 is required".into()),
            (_, _, Some(e)) if !(e > 0.0 && e <= 0.1) => {
                bad.push(format!("initial.target_u_c0 = {e} outside (0, 0.1]"))
            }
            _ => {}
        }
        if let Profile::Random { max_degree, .. } = self.initial.profile {
            if max_degree < 2 {
                bad.push(format!("initial.profile.random.max_degree = {max_degree} must be ≥ 2"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::config("flow", bad.join("; ")))
        }
    }
}

/// `φ₀ = a P(x)` with the positivity guard applied.
pub fn profile_state(grid: &Arc<GridSpec>, profile: &Profile, amplitude: f64) -> Result<MetricState> {
    let phi: Vec<f64> = grid.nodes().iter().map(|&x| amplitude * profile.eval(x)).collect();
    let mean = grid.quad(&phi) / 2.0;
    let phi: Vec<f64> = phi.iter().map(|p| p - mean).collect();
    let lap = grid.apply_lap0(&phi);
    let min = lap.iter().map(|l| 1.0 + l).fold(f64::INFINITY, f64::min);
    if !(min >= POSITIVITY_GUARD) {
        return Err(Error::config(
            "flow",
            format!(
                "profile {} with amplitude {amplitude} has minimum density {min:.3e} below the guard {POSITIVITY_GUARD}",
                profile.name()
            ),
        ));
    }
    MetricState::from_potential(grid.clone(), phi, 0.0)
}
