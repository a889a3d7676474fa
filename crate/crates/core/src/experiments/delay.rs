//! Comparison argument for the delay inequality
//! `Ẏ ≤ −λY + (λ/2) Y(t)^{1/2} Π_j Y(t − a_j)^{δ_j/2}`, made constructive:
//! after checking the inequality on the samples, search `μ` on a grid for
//! the largest value for which the contradiction step closes, and verify
//! the resulting envelope `Y ≤ R e^{−μt}` directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{central_derivative, envelope_holds, DecayCertificate};

/// Relative slack of the discrete precheck.
const PRECHECK_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayInequalityCase {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub lambda: f64,
    pub delays: Vec<u32>,
    pub weights: Vec<f64>,
    pub k0: f64,
}

impl DelayInequalityCase {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.times.len() != self.values.len() || self.times.len() < 3 {
            bad.push(format!(
                "times ({}) and values ({}) must have equal length ≥ 3",
                self.times.len(),
                self.values.len()
            ));
        }
        if !self.times.windows(2).all(|w| w[1] > w[0]) {
            bad.push("times must be strictly increasing".to_string());
        }
        if self.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            bad.push("values must be finite and nonnegative".to_string());
        }
        if !(self.lambda > 0.0) {
            bad.push(format!("lambda = {} must be positive", self.lambda));
        }
        if self.delays.is_empty() || self.delays.len() != self.weights.len() {
            bad.push("delays and weights must be nonempty and of equal length".to_string());
        }
        let total: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| *w < 0.0) || (total - 1.0).abs() > 1e-12 {
            bad.push(format!("weights must be nonnegative and sum to 1 (sum = {total})"));
        }
        let amax = self.delays.iter().copied().max().unwrap_or(0) as f64;
        if let (Some(first), Some(last)) = (self.times.first(), self.times.last()) {
            if self.k0 - amax < first - 1e-12 || self.k0 >= *last {
                bad.push(format!(
                    "samples [{first}, {last}] must cover [k0 − max a_j, k0] = [{}, {}] and extend past it",
                    self.k0 - amax,
                    self.k0
                ));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::config("experiments", bad.join("; ")))
        }
    }

    fn value_at(&self, t: f64) -> f64 {
        let j = self.times.partition_point(|s| *s < t - 1e-12);
        if j == 0 {
            return self.values[0];
        }
        if j >= self.times.len() {
            return *self.values.last().unwrap_or(&0.0);
        }
        if (self.times[j] - t).abs() <= 1e-12 {
            return self.values[j];
        }
        let w = (t - self.times[j - 1]) / (self.times[j] - self.times[j - 1]);
        self.values[j - 1] + w * (self.values[j] - self.values[j - 1])
    }

    /// `Σ a_j δ_j`.
    pub fn mean_delay(&self) -> f64 {
        self.delays.iter().zip(&self.weights).map(|(a, d)| *a as f64 * d).sum()
    }
}

/// The first sample at which the discrete inequality fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub derivative: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum DelayOutcome {
    Certificate {
        certificate: DecayCertificate,
        /// The envelope with `R` taken from `[k0 − max a_j, k0]` alone also
        /// holds on every later sample, as the comparison argument predicts.
        closes_from_initial_segment: bool,
        mu_grid_size: usize,
    },
    Violation(Violation),
    NoCertificate {
        reason: String,
    },
}

impl DelayOutcome {
    pub fn certificate(&self) -> Option<&DecayCertificate> {
        match self {
            DelayOutcome::Certificate { certificate, .. } => Some(certificate),
            _ => None,
        }
    }
}

/// Geometric grid of `count` values from `λ/1000` to `λ/3`.
pub fn default_mu_grid(lambda: f64, count: usize) -> Vec<f64> {
    let (lo, hi) = (lambda / 1000.0, lambda / 3.0);
    let count = count.max(2);
    (0..count)
        .map(|k| lo * (hi / lo).powf(k as f64 / (count - 1) as f64))
        .collect()
}

/// `e^{−μ S/2} > λ / (2(λ − 3μ))` with `S = Σ a_j δ_j`: the comparison
/// function's contradiction step closes for this `μ`.
pub fn mu_admissible(lambda: f64, mean_delay: f64, mu: f64) -> bool {
    mu > 0.0 && lambda - 3.0 * mu > 0.0 && (-mu * mean_delay / 2.0).exp() > lambda / (2.0 * (lambda - 3.0 * mu))
}

pub fn precheck(case: &DelayInequalityCase) -> Option<Violation> {
    for (i, &t) in case.times.iter().enumerate() {
        if t < case.k0 - 1e-12 {
            continue;
        }
        let Some(dy) = central_derivative(&case.times, &case.values, i, 1) else {
            continue;
        };
        let y = case.values[i];
        let product: f64 = case
            .delays
            .iter()
            .zip(&case.weights)
            .map(|(a, d)| case.value_at(t - *a as f64).powf(d / 2.0))
            .product();
        let bound = -case.lambda * y + 0.5 * case.lambda * y.sqrt() * product;
        if dy > bound + PRECHECK_SLACK * (dy.abs() + case.lambda * y) {
            return Some(Violation {
                t,
                derivative: dy,
                bound,
            });
        }
    }
    None
}

pub fn delay_comparison(case: &DelayInequalityCase, mu_grid: &[f64]) -> Result<DelayOutcome> {
    case.validate()?;
    if let Some(v) = precheck(case) {
        return Ok(DelayOutcome::Violation(v));
    }
    let s = case.mean_delay();
    let Some(mu) = mu_grid
        .iter()
        .copied()
        .filter(|&m| mu_admissible(case.lambda, s, m))
        .reduce(f64::max)
    else {
        return Ok(DelayOutcome::NoCertificate {
            reason: format!("no μ in the grid satisfies the closing condition for λ = {}", case.lambda),
        });
    };

    let window = [case.times[0], *case.times.last().unwrap_or(&0.0)];
    let amplitude = case
        .times
        .iter()
        .zip(&case.values)
        .map(|(t, y)| y * (mu * t).exp())
        .fold(0.0, f64::max);
    if !envelope_holds(&case.times, &case.values, window, amplitude, mu) {
        return Ok(DelayOutcome::NoCertificate {
            reason: format!("envelope verification failed for μ = {mu}"),
        });
    }
    let amax = case.delays.iter().copied().max().unwrap_or(0) as f64;
    let initial = case
        .times
        .iter()
        .zip(&case.values)
        .filter(|(t, _)| **t >= case.k0 - amax - 1e-12 && **t <= case.k0 + 1e-12)
        .map(|(t, y)| y * (mu * t).exp())
        .fold(0.0, f64::max);
    let closes = case
        .times
        .iter()
        .zip(&case.values)
        .filter(|(t, _)| **t >= case.k0)
        .all(|(t, y)| *y <= initial * (-mu * t).exp() * (1.0 + 1e-9));
    let residual = case
        .times
        .iter()
        .zip(&case.values)
        .map(|(t, y)| {
            let e = amplitude * (-mu * t).exp();
            if e > 0.0 {
                (e - y) / e
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    let degenerate = amplitude == 0.0;
    Ok(DelayOutcome::Certificate {
        certificate: DecayCertificate {
            window,
            amplitude,
            rate: mu,
            fitted_amplitude: amplitude,
            max_relative_residual: residual,
            samples: case.times.len(),
            degenerate,
            pass: true,
        },
        closes_from_initial_segment: closes,
        mu_grid_size: mu_grid.len(),
    })
}

/// `Y(t) = e^{−t}` on `[0, end]` at spacing `h`.
pub fn synthetic_exponential(end: f64, h: f64) -> (Vec<f64>, Vec<f64>) {
    let t = crate::flow::sample_times(end, h);
    let y = t.iter().map(|t| (-t).exp()).collect();
    (t, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case(values: fn(f64) -> f64) -> DelayInequalityCase {
        let (times, _) = synthetic_exponential(10.0, 0.01);
        DelayInequalityCase {
            values: times.iter().map(|t| values(*t)).collect(),
            times,
            lambda: 1.0,
            delays: vec![0],
            weights: vec![1.0],
            k0: 1.0,
        }
    }

    #[test]
    fn admissibility_without_delay_is_mu_below_sixth_of_lambda() {
        assert!(mu_admissible(1.0, 0.0, 0.16));
        assert!(!mu_admissible(1.0, 0.0, 0.17));
        assert!(!mu_admissible(1.0, 0.0, 0.34));
    }

    #[test]
    fn exponential_gets_certificate() {
        let c = case(|t| (-t).exp());
        let out = delay_comparison(&c, &default_mu_grid(1.0, 200)).unwrap();
        let cert = out.certificate().expect("certificate");
        assert!(cert.rate > 0.15 && cert.rate < 1.0 / 6.0);
        assert!((cert.amplitude - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_reports_violation_at_k0() {
        let c = case(|_| 0.5);
        match delay_comparison(&c, &default_mu_grid(1.0, 50)).unwrap() {
            DelayOutcome::Violation(v) => assert!((v.t - 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn weights_must_sum_to_one() {
        let mut c = case(|t| (-t).exp());
        c.weights = vec![0.5];
        assert!(delay_comparison(&c, &[0.1]).unwrap_err().is_config());
    }
}
