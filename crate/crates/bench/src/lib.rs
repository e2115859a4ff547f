//! Shared inputs for the criterion benchmarks.

use clpu_core::{synth, EnergySeries};

/// One week of 15-minute intervals.
pub const WEEK: usize = 7 * 96;

/// Zero-mean ARMA(1,1) with phi = 0.6, theta = 0.3.
pub fn arma11(n: usize) -> Vec<f64> {
    synth::arma(&[0.6], &[0.3], 1.0, n, 1)
}

/// ARIMA(2,1,0) with phi = (0.5, -0.3).
pub fn arima210(n: usize) -> Vec<f64> {
    synth::arima(&[0.5, -0.3], 1, &[], n, 2)
}

/// A household load record of `days` days.
pub fn household(days: usize) -> EnergySeries {
    synth::household_series(&synth::HouseholdProfile::default(), days, 3)
}

/// The trailing training week of a household record.
pub fn household_week() -> Vec<f64> {
    let s = household(8);
    s.values()[s.len() - WEEK..].to_vec()
}
