//! Seeded synthetic series: ARMA simulators and household-like load traces.
//!
//! Every generator draws from a `ChaCha8Rng` seeded with the given value, so
//! outputs are identical across platforms and runs.

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::series::EnergySeries;

const BURN_IN: usize = 500;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// iid standard normal draws.
pub fn white_noise(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect()
}

/// Cumulative sums applied `d` times.
pub fn integrate_n(x: &[f64], d: usize) -> Vec<f64> {
    let mut out = x.to_vec();
    for _ in 0..d {
        let mut acc = 0.0;
        for v in out.iter_mut() {
            acc += *v;
            *v = acc;
        }
    }
    out
}

/// Zero-mean ARMA(p, q) with `x_t = sum phi_i x_{t-i} + e_t + sum theta_j e_{t-j}`.
pub fn arma(phi: &[f64], theta: &[f64], sigma: f64, n: usize, seed: u64) -> Vec<f64> {
    let e: Vec<f64> = white_noise(n + BURN_IN, seed).into_iter().map(|v| v * sigma).collect();
    let mut x = vec![0.0; n + BURN_IN];
    for t in 0..x.len() {
        let mut v = e[t];
        for (i, p) in phi.iter().enumerate() {
            if t > i {
                v += p * x[t - 1 - i];
            }
        }
        for (j, th) in theta.iter().enumerate() {
            if t > j {
                v += th * e[t - 1 - j];
            }
        }
        x[t] = v;
    }
    x.split_off(BURN_IN)
}

pub fn ar1_series(phi: f64, n: usize, seed: u64) -> Vec<f64> {
    arma(&[phi], &[], 1.0, n, seed)
}

/// ARIMA(p, d, q) sample path: ARMA output integrated `d` times.
pub fn arima(phi: &[f64], d: usize, theta: &[f64], n: usize, seed: u64) -> Vec<f64> {
    integrate_n(&arma(phi, theta, 1.0, n, seed), d)
}

/// AR(p) driven by an exogenous input: `x_t = sum phi_i x_{t-i} + sum beta_i u_{t-i} + e_t`.
///
/// `u` is itself a smooth AR(1) (coefficient 0.8) with unit innovations.
/// Returns `(x, u)`.
pub fn arx(phi: &[f64], beta: &[f64], n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let total = n + BURN_IN;
    let u = arma(&[0.8], &[], 1.0, total, seed.wrapping_add(0x9e37_79b9));
    let e = white_noise(total, seed);
    let mut x = vec![0.0; total];
    for t in 0..total {
        let mut v = e[t];
        for (i, p) in phi.iter().enumerate() {
            if t > i {
                v += p * x[t - 1 - i];
            }
        }
        for (i, b) in beta.iter().enumerate() {
            if t > i {
                v += b * u[t - 1 - i];
            }
        }
        x[t] = v;
    }
    (x.split_off(BURN_IN), u[BURN_IN..].to_vec())
}

pub fn default_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

/// Knobs for the household-like load generator.
#[derive(Clone, Debug, PartialEq)]
pub struct HouseholdProfile {
    /// Standby consumption, kWh per interval.
    pub base: f64,
    /// Height of the morning and evening occupancy bumps, kWh per interval.
    pub daily_amplitude: f64,
    /// Day-to-day jitter of the bump timing, hours.
    pub phase_jitter_hours: f64,
    /// Persistence and scale of the AR(1) occupancy noise.
    pub ar_coef: f64,
    pub ar_sigma: f64,
    /// Appliance events per day and their energy per interval.
    pub events_per_day: f64,
    pub event_kwh: f64,
}

impl Default for HouseholdProfile {
    fn default() -> Self {
        Self {
            base: 0.08,
            daily_amplitude: 0.12,
            phase_jitter_hours: 1.5,
            ar_coef: 0.85,
            ar_sigma: 0.04,
            events_per_day: 3.0,
            event_kwh: 0.25,
        }
    }
}

fn bump(hour: f64, center: f64, width: f64) -> f64 {
    let mut d = (hour - center).abs();
    d = d.min(24.0 - d);
    (-0.5 * (d / width).powi(2)).exp()
}

/// Household-like 15-minute load: occupancy bumps with daily timing jitter,
/// persistent AR noise, and short appliance events. Values are kWh per interval.
pub fn household_series(profile: &HouseholdProfile, days: usize, seed: u64) -> EnergySeries {
    let per_day = 96;
    let n = days * per_day;
    let mut r = rng(seed);
    let jitter = Normal::new(0.0, profile.phase_jitter_hours.max(1e-12)).unwrap();
    let noise = Normal::new(0.0, profile.ar_sigma.max(1e-12)).unwrap();
    let scale = 0.7 + 0.6 * r.random::<f64>();
    let mut ar = 0.0;
    let mut event_left = 0usize;
    let mut values = Vec::with_capacity(n);
    let (mut morning, mut evening) = (7.0, 19.0);
    for i in 0..n {
        if i % per_day == 0 {
            morning = 7.0 + jitter.sample(&mut r);
            evening = 19.0 + jitter.sample(&mut r);
        }
        let hour = (i % per_day) as f64 * 0.25;
        let occupancy = 0.6 * bump(hour, morning, 1.2) + bump(hour, evening, 2.0);
        ar = profile.ar_coef * ar + noise.sample(&mut r);
        if event_left == 0 && r.random::<f64>() < profile.events_per_day / per_day as f64 {
            event_left = r.random_range(1..=4);
        }
        let event = if event_left > 0 {
            event_left -= 1;
            profile.event_kwh
        } else {
            0.0
        };
        let v = scale * (profile.base + profile.daily_amplitude * occupancy + ar) + event;
        values.push(v.max(0.0));
    }
    EnergySeries::new(default_start(), 15, values, format!("synthetic-{seed}"))
        .expect("generator output is valid")
}

/// `n_series` household traces with seeds derived from `seed`.
pub fn household_suite(n_series: usize, days: usize, seed: u64) -> Vec<EnergySeries> {
    let profile = HouseholdProfile::default();
    (0..n_series)
        .map(|k| household_series(&profile, days, seed.wrapping_mul(1_000_003).wrapping_add(k as u64)))
        .collect()
}

/// Non-negative 15-minute trace whose ARMA structure changes at `switch_at`.
///
/// The first regime is a strongly persistent AR(2) and the second an
/// MA(2) with a negative first-lag correlation, so the best order differs
/// between the two halves.
pub fn regime_switch_series(n: usize, switch_at: usize, seed: u64) -> EnergySeries {
    let a = arma(&[1.2, -0.35], &[], 0.05, n, seed);
    let b = arma(&[], &[-0.7, 0.3], 0.12, n, seed.wrapping_add(17));
    let values = (0..n)
        .map(|t| {
            let x = if t < switch_at { a[t] } else { b[t] };
            (1.0 + x).max(0.0)
        })
        .collect();
    EnergySeries::new(default_start(), 15, values, format!("regime-{seed}"))
        .expect("generator output is valid")
}

/// Wraps a zero-mean simulation as a non-negative energy series around `level`.
pub fn as_energy(x: &[f64], level: f64, meter_id: &str) -> EnergySeries {
    let values = x.iter().map(|v| (level + v).max(0.0)).collect();
    EnergySeries::new(default_start(), 15, values, meter_id).expect("generator output is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        assert_eq!(white_noise(10, 3), white_noise(10, 3));
        assert_ne!(white_noise(10, 3), white_noise(10, 4));
        let a = household_suite(3, 2, 9);
        let b = household_suite(3, 2, 9);
        assert_eq!(a, b);
    }

    #[test]
    fn arma_moments() {
        let x = ar1_series(0.6, 20000, 1);
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((var - 1.0 / (1.0 - 0.36)).abs() < 0.1, "{var}");
    }

    #[test]
    fn household_is_valid() {
        let s = household_series(&HouseholdProfile::default(), 7, 5);
        assert_eq!(s.len(), 7 * 96);
        assert!(s.values().iter().all(|v| *v >= 0.0));
    }
}
