//! Percentile summaries in the two report layouts.

use serde::{Deserialize, Serialize};

/// Percentile `q` in `[0, 1]` of ascending `sorted`, interpolating linearly
/// between the closest ranks (`pos = q (n - 1)`).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let w = pos - lo as f64;
            sorted[lo] + w * (sorted[hi] - sorted[lo])
        }
    }
}

fn sorted_finite(values: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// `{min, 25%, 50%, 75%, max, average}`, used for error-increase tables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table1Stats {
    pub min: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub max: f64,
    pub avg: f64,
}

impl Table1Stats {
    pub const HEADER: [&'static str; 6] = ["min", "p25", "p50", "p75", "max", "avg"];

    /// Non-finite inputs are ignored.
    pub fn from_values(values: &[f64]) -> Self {
        let s = sorted_finite(values);
        Self {
            min: percentile(&s, 0.0),
            p25: percentile(&s, 0.25),
            p50: percentile(&s, 0.5),
            p75: percentile(&s, 0.75),
            max: percentile(&s, 1.0),
            avg: mean(&s),
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.min, self.p25, self.p50, self.p75, self.max, self.avg]
    }
}

/// `{min, 10%, 25%, 50%, 75%, 90%, max, std, mean}`, used for method
/// comparisons. `std` is the population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table2Stats {
    pub min: f64,
    pub p10: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
    pub max: f64,
    pub std: f64,
    pub mean: f64,
}

impl Table2Stats {
    pub const HEADER: [&'static str; 9] = ["min", "p10", "p25", "p50", "p75", "p90", "max", "std", "mean"];

    /// Non-finite inputs are ignored.
    pub fn from_values(values: &[f64]) -> Self {
        let s = sorted_finite(values);
        let m = mean(&s);
        let std = if s.is_empty() {
            f64::NAN
        } else {
            (s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / s.len() as f64).sqrt()
        };
        Self {
            min: percentile(&s, 0.0),
            p10: percentile(&s, 0.1),
            p25: percentile(&s, 0.25),
            p50: percentile(&s, 0.5),
            p75: percentile(&s, 0.75),
            p90: percentile(&s, 0.9),
            max: percentile(&s, 1.0),
            std,
            mean: m,
        }
    }

    pub fn as_array(&self) -> [f64; 9] {
        [
            self.min, self.p10, self.p25, self.p50, self.p75, self.p90, self.max, self.std, self.mean,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Oracle: the order statistic at fractional rank by direct definition.
    fn oracle(values: &[f64], q: f64) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = v.len();
        let rank = q * (n as f64 - 1.0);
        let below = v[rank.floor() as usize];
        let above = v[rank.ceil() as usize];
        below + (rank - rank.floor()) * (above - below)
    }

    #[test]
    fn hand_values() {
        let v = [4.0, 1.0, 3.0, 2.0];
        let t = Table1Stats::from_values(&v);
        assert_eq!(t.as_array(), [1.0, 1.75, 2.5, 3.25, 4.0, 2.5]);
        let t2 = Table2Stats::from_values(&[1.0, 3.0]);
        assert_eq!(t2.std, 1.0);
        assert!((t2.p10 - 1.2).abs() < 1e-15);
    }

    #[test]
    fn empty_and_single() {
        assert!(Table2Stats::from_values(&[]).p50.is_nan());
        let t = Table2Stats::from_values(&[5.0]);
        assert_eq!(t.as_array(), [5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 0.0, 5.0]);
    }

    proptest! {
        #[test]
        fn matches_sort_oracle(v in proptest::collection::vec(-1e3..1e3f64, 1..60), q in 0.0..1.0f64) {
            let s = sorted_finite(&v);
            prop_assert!((percentile(&s, q) - oracle(&v, q)).abs() <= 1e-12 * (1.0 + oracle(&v, q).abs()));
        }

        #[test]
        fn stats_are_ordered(v in proptest::collection::vec(-1e3..1e3f64, 1..60)) {
            let t = Table2Stats::from_values(&v);
            let a = t.as_array();
            prop_assert!(a[..7].windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(t.std >= 0.0 && t.min <= t.mean && t.mean <= t.max);
        }
    }
}
