//! Comparison forecasters: additive Holt-Winters and the random walk.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SEASON_LENGTH: usize = 96;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HwesVariant {
    #[default]
    Additive,
}

/// Additive-seasonal triple exponential smoothing state after the last
/// training observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HwesModel {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub season_length: usize,
    pub level: f64,
    pub trend: f64,
    /// Seasonal offsets indexed by position in the season; sums to 0.
    pub seasonal: Vec<f64>,
    /// Season position of the first forecast step.
    pub phase: usize,
    pub variant: HwesVariant,
    /// In-sample one-step sum of squared errors at the chosen parameters.
    pub sse: f64,
}

struct Init {
    level: f64,
    trend: f64,
    seasonal: Vec<f64>,
}

// Classical decomposition of the first two seasons: a line through the two
// season means, seasonal offsets from the detrended values, level taken one
// step before the first observation.
fn initial_state(y: &[f64], m: usize) -> Init {
    let mean1 = y[..m].iter().sum::<f64>() / m as f64;
    let mean2 = y[m..2 * m].iter().sum::<f64>() / m as f64;
    let trend = (mean2 - mean1) / m as f64;
    let centre = (m as f64 - 1.0) / 2.0;
    let line = |t: usize| mean1 + trend * (t as f64 - centre);
    let mut seasonal: Vec<f64> = (0..m)
        .map(|i| 0.5 * ((y[i] - line(i)) + (y[i + m] - line(i + m))))
        .collect();
    let shift = seasonal.iter().sum::<f64>() / m as f64;
    seasonal.iter_mut().for_each(|s| *s -= shift);
    Init {
        level: mean1 - trend * (centre + 1.0) + shift,
        trend,
        seasonal,
    }
}

struct Smoothed {
    level: f64,
    trend: f64,
    seasonal: Vec<f64>,
    sse: f64,
}

fn smooth(y: &[f64], init: &Init, alpha: f64, beta: f64, gamma: f64, sse_bound: f64) -> Smoothed {
    let m = init.seasonal.len();
    let mut level = init.level;
    let mut trend = init.trend;
    let mut seasonal = init.seasonal.clone();
    let mut sse = 0.0;
    for (t, &obs) in y.iter().enumerate() {
        let i = t % m;
        let err = obs - (level + trend + seasonal[i]);
        sse += err * err;
        if sse > sse_bound {
            break;
        }
        let new_level = alpha * (obs - seasonal[i]) + (1.0 - alpha) * (level + trend);
        trend = beta * (new_level - level) + (1.0 - beta) * trend;
        level = new_level;
        seasonal[i] = gamma * (obs - level) + (1.0 - gamma) * seasonal[i];
    }
    Smoothed {
        level,
        trend,
        seasonal,
        sse,
    }
}

fn smoothing_grid() -> Vec<f64> {
    (1..=19).map(|k| k as f64 * 0.05).collect()
}

/// Fits by exhaustive search of `{0.05, ..., 0.95}^3` for the smallest
/// in-sample one-step squared error (first minimum in grid order wins).
pub fn fit_hwes(values: &[f64], season_length: usize) -> Result<HwesModel> {
    let m = season_length;
    if m == 0 {
        return Err(Error::InvalidParams("season_length must be >= 1".into()));
    }
    if values.len() < 2 * m {
        return Err(Error::SeriesTooShort {
            len: values.len(),
            min: 2 * m,
        });
    }
    let init = initial_state(values, m);
    let grid = smoothing_grid();
    let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
    for &a in &grid {
        for &b in &grid {
            for &g in &grid {
                let s = smooth(values, &init, a, b, g, best.0);
                if s.sse < best.0 {
                    best = (s.sse, a, b, g);
                }
            }
        }
    }
    let (_, alpha, beta, gamma) = best;
    let s = smooth(values, &init, alpha, beta, gamma, f64::INFINITY);
    let shift = s.seasonal.iter().sum::<f64>() / m as f64;
    Ok(HwesModel {
        alpha,
        beta,
        gamma,
        season_length: m,
        level: s.level + shift,
        trend: s.trend,
        seasonal: s.seasonal.iter().map(|v| v - shift).collect(),
        phase: values.len() % m,
        variant: HwesVariant::Additive,
        sse: s.sse,
    })
}

impl HwesModel {
    /// `level + h * trend + seasonal[(phase + h - 1) mod m]`, clamped at 0.
    pub fn forecast(&self, steps: usize) -> Vec<f64> {
        let m = self.season_length;
        (1..=steps)
            .map(|h| {
                let s = self.seasonal[(self.phase + h - 1) % m];
                (self.level + h as f64 * self.trend + s).max(0.0)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomWalkModel {
    pub last_value: f64,
}

impl RandomWalkModel {
    pub fn fit(values: &[f64]) -> Result<Self> {
        values
            .last()
            .map(|&last_value| Self { last_value })
            .ok_or(Error::Empty)
    }

    pub fn forecast(&self, steps: usize) -> Vec<f64> {
        vec![self.last_value; steps]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use std::f64::consts::PI;

    #[test]
    fn constant_series() {
        let m = fit_hwes(&[2.5; 300], 96).unwrap();
        assert!(m.forecast(100).iter().all(|v| (v - 2.5).abs() < 1e-12));
        assert!(m.seasonal.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn sinusoid_is_captured() {
        let y: Vec<f64> = (0..7 * 96).map(|t| 2.0 + (2.0 * PI * t as f64 / 96.0).sin()).collect();
        let m = fit_hwes(&y, 96).unwrap();
        let f = m.forecast(48);
        let truth: Vec<f64> = (7 * 96..7 * 96 + 48).map(|t| 2.0 + (2.0 * PI * t as f64 / 96.0).sin()).collect();
        let mse = f.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 48.0;
        assert!(mse <= 0.05 * 0.5, "{mse}");
    }

    #[test]
    fn ramp_continues() {
        let y: Vec<f64> = (0..400).map(|t| 10.0 + 0.1 * t as f64).collect();
        let m = fit_hwes(&y, 24).unwrap();
        for (h, f) in m.forecast(48).iter().enumerate() {
            let truth = 10.0 + 0.1 * (400 + h) as f64;
            assert!((f - truth).abs() <= 0.02 * truth);
        }
    }

    // A known additive pattern plus noise is recovered as the seasonal component.
    #[test]
    fn recovers_seasonal_pattern() {
        let m = 24;
        let pattern: Vec<f64> = (0..m).map(|i| (2.0 * PI * i as f64 / m as f64).cos()).collect();
        let noise = synth::white_noise(20 * m, 3);
        let y: Vec<f64> = (0..20 * m).map(|t| 5.0 + pattern[t % m] + 0.02 * noise[t]).collect();
        let fit = fit_hwes(&y, m).unwrap();
        for (s, p) in fit.seasonal.iter().zip(&pattern) {
            assert!((s - p).abs() < 0.1, "{s} vs {p}");
        }
    }

    #[test]
    fn too_short() {
        assert!(matches!(fit_hwes(&[1.0; 100], 96), Err(Error::SeriesTooShort { .. })));
    }

    #[test]
    fn random_walk() {
        let m = RandomWalkModel::fit(&[1.0, 3.0]).unwrap();
        assert_eq!(m.forecast(4), vec![3.0; 4]);
        let cum: f64 = m.forecast(5).iter().sum();
        assert_eq!(cum, 15.0);
        assert!(RandomWalkModel::fit(&[]).is_err());
    }
}
