use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of positive samples for a fit.
pub const MIN_FIT_SAMPLES: usize = 10;

/// Exponential envelope `Y ≤ R e^{−μt}` on a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCertificate {
    pub window: [f64; 2],
    /// Smallest `R` for which the envelope holds at every sample.
    pub amplitude: f64,
    pub rate: f64,
    /// Least-squares amplitude before inflation.
    pub fitted_amplitude: f64,
    /// `max |Y − R_fit e^{−μt}| / (R_fit e^{−μt})` over the window.
    pub max_relative_residual: f64,
    pub samples: usize,
    /// Set when every sample in the window is zero.
    pub degenerate: bool,
    pub pass: bool,
}

pub fn envelope_holds(times: &[f64], values: &[f64], window: [f64; 2], amplitude: f64, rate: f64) -> bool {
    times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window[0] && **t <= window[1])
        .all(|(t, v)| *v <= amplitude * (-rate * t).exp() * (1.0 + 1e-12))
}

/// Least-squares fit of `log Y` against `t` on `window`, then the amplitude
/// is inflated to the smallest value making the envelope valid.
pub fn decay_fit(times: &[f64], values: &[f64], window: [f64; 2]) -> Result<DecayCertificate> {
    let inside: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window[0] && **t <= window[1])
        .map(|(t, v)| (*t, *v))
        .collect();
    let positive: Vec<(f64, f64)> = inside.iter().cloned().filter(|p| p.1 > 0.0).collect();
    if positive.is_empty() && !inside.is_empty() {
        return Ok(DecayCertificate {
            window,
            amplitude: 0.0,
            rate: f64::INFINITY,
            fitted_amplitude: 0.0,
            max_relative_residual: 0.0,
            samples: inside.len(),
            degenerate: true,
            pass: true,
        });
    }
    if positive.len() < MIN_FIT_SAMPLES {
        return Err(Error::numerical(
            "functionals",
            "decay_fit",
            format!(
                "window [{}, {}] has {} positive samples, need {MIN_FIT_SAMPLES}",
                window[0],
                window[1],
                positive.len()
            ),
        ));
    }
    let n = positive.len() as f64;
    let mt = positive.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = positive.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, v) in &positive {
        sxy += (t - mt) * (v.ln() - ml);
        sxx += (t - mt) * (t - mt);
    }
    let slope = sxy / sxx;
    let rate = -slope;
    let fitted = (ml - slope * mt).exp();
    let amplitude = inside
        .iter()
        .map(|(t, v)| v * (rate * t).exp())
        .fold(0.0, f64::max);
    let max_relative_residual = positive
        .iter()
        .map(|(t, v)| {
            let e = fitted * (-rate * t).exp();
            (v - e).abs() / e
        })
        .fold(0.0, f64::max);
    let holds = envelope_holds(times, values, window, amplitude, rate);
    Ok(DecayCertificate {
        window,
        amplitude,
        rate,
        fitted_amplitude: fitted,
        max_relative_residual,
        samples: inside.len(),
        degenerate: false,
        pass: rate > 0.0 && holds,
    })
}
