//! Correlation and stationarity diagnostics.
//!
//! Sample ACF with cumulative Bartlett bands, PACF through the Durbin-Levinson
//! recursion, and the augmented Dickey-Fuller test (constant, no trend) that
//! drives the choice of the differencing order.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::series::{difference, DiffMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelogramKind {
    Acf,
    Pacf,
}

/// Per-lag correlation estimates with their significance bands.
///
/// Index 0 holds lag 0 (1.0 by convention, band 0).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlogram {
    pub kind: CorrelogramKind,
    pub max_lag: usize,
    pub values: Vec<f64>,
    pub ci_halfwidth: Vec<f64>,
    pub n_significant: usize,
}

impl Correlogram {
    fn new(kind: CorrelogramKind, values: Vec<f64>, ci_halfwidth: Vec<f64>) -> Self {
        let n_significant = (1..values.len())
            .filter(|&h| values[h].abs() > ci_halfwidth[h])
            .count();
        Self {
            kind,
            max_lag: values.len() - 1,
            values,
            ci_halfwidth,
            n_significant,
        }
    }

    /// Writes `lag,value,ci` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lag", "value", "ci"])?;
        for (h, (v, ci)) in self.values.iter().zip(&self.ci_halfwidth).enumerate() {
            w.write_record([h.to_string(), format!("{v}"), format!("{ci}")])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Two-sided standard-normal quantile for a confidence level in (0, 1).
pub fn z_for_level(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

fn centered(series: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let dev: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let ss: f64 = dev.iter().map(|d| d * d).sum();
    // Relative test so that large constant levels still count as constant.
    let scale = series.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-300);
    if ss <= (scale * 1e-12).powi(2) * n {
        return Err(Error::ConstantSeries);
    }
    Ok((dev, ss))
}

/// Sample autocorrelations `rho_0..=rho_max_lag` (no band).
pub(crate) fn autocorrelations(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let (dev, ss) = centered(series)?;
    Ok((0..=max_lag)
        .map(|h| dev[h..].iter().zip(&dev).map(|(a, b)| a * b).sum::<f64>() / ss)
        .collect())
}

pub fn acf(series: &[f64], max_lag: usize) -> Result<Correlogram> {
    acf_with_level(series, max_lag, 0.95)
}

/// ACF with band `z * sqrt((1 + 2 * sum_{h=1..l} rho_h^2) / N)` at lag `l`.
pub fn acf_with_level(series: &[f64], max_lag: usize, level: f64) -> Result<Correlogram> {
    let n = series.len();
    if max_lag == 0 || max_lag >= n {
        return Err(Error::LagTooLarge { lag: max_lag, len: n });
    }
    let rho = autocorrelations(series, max_lag)?;
    let z = z_for_level(level);
    let mut ci = vec![0.0; max_lag + 1];
    let mut cum = 0.0;
    for l in 1..=max_lag {
        cum += rho[l] * rho[l];
        ci[l] = z * ((1.0 + 2.0 * cum) / n as f64).sqrt();
    }
    Ok(Correlogram::new(CorrelogramKind::Acf, rho, ci))
}

pub fn pacf(series: &[f64], max_lag: usize) -> Result<Correlogram> {
    pacf_with_level(series, max_lag, 0.95)
}

/// PACF from the Yule-Walker (Durbin-Levinson) recursion, band `z / sqrt(N)`.
pub fn pacf_with_level(series: &[f64], max_lag: usize, level: f64) -> Result<Correlogram> {
    let n = series.len();
    if max_lag == 0 || 2 * max_lag >= n {
        return Err(Error::LagTooLarge { lag: max_lag, len: n });
    }
    let rho = autocorrelations(series, max_lag)?;
    let (partials, _) = durbin_levinson(&rho, max_lag);
    let mut values = Vec::with_capacity(max_lag + 1);
    values.push(1.0);
    values.extend(partials);
    let band = z_for_level(level) / (n as f64).sqrt();
    let mut ci = vec![band; max_lag + 1];
    ci[0] = 0.0;
    Ok(Correlogram::new(CorrelogramKind::Pacf, values, ci))
}

/// Durbin-Levinson recursion on autocorrelations `rho[0..=order]`.
///
/// Returns the partial autocorrelations for lags `1..=order` and the AR
/// coefficients of the order-`order` Yule-Walker fit.
pub(crate) fn durbin_levinson(rho: &[f64], order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut phi: Vec<f64> = Vec::with_capacity(order);
    let mut partials = Vec::with_capacity(order);
    let mut v = rho[0];
    for k in 1..=order {
        let num = rho[k] - phi.iter().enumerate().map(|(j, p)| p * rho[k - 1 - j]).sum::<f64>();
        let a = if v.abs() < 1e-300 { 0.0 } else { num / v };
        let prev = phi.clone();
        for j in 0..phi.len() {
            phi[j] = prev[j] - a * prev[k - 2 - j];
        }
        phi.push(a);
        partials.push(a);
        v *= 1.0 - a * a;
    }
    (partials, phi)
}

/// Yule-Walker AR coefficients of a given order.
pub(crate) fn yule_walker(series: &[f64], order: usize) -> Result<Vec<f64>> {
    if order == 0 {
        return Ok(Vec::new());
    }
    let rho = autocorrelations(series, order)?;
    Ok(durbin_levinson(&rho, order).1)
}

/// Critical-value table key.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalValues {
    pub one_pct: f64,
    pub five_pct: f64,
    pub ten_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub statistic: f64,
    pub lag_order: usize,
    pub n_obs: usize,
    pub critical_values: CriticalValues,
    pub stationary_at_5pct: bool,
}

// Dickey-Fuller tau_mu (constant, no trend) percentiles.
const DF_TABLE_N: [f64; 6] = [25.0, 50.0, 100.0, 250.0, 500.0, f64::INFINITY];
const DF_TABLE: [[f64; 3]; 6] = [
    [-3.75, -3.00, -2.63],
    [-3.58, -2.93, -2.60],
    [-3.51, -2.89, -2.58],
    [-3.46, -2.88, -2.57],
    [-3.44, -2.87, -2.57],
    [-3.43, -2.86, -2.57],
];

/// Table values interpolated linearly in `1/N` (clamped at N = 25).
pub fn adf_critical_values(n: usize) -> CriticalValues {
    let inv = |x: f64| if x.is_infinite() { 0.0 } else { 1.0 / x };
    let u = inv(n as f64).min(inv(DF_TABLE_N[0]));
    let mut out = DF_TABLE[5];
    for i in 0..5 {
        let (hi, lo) = (inv(DF_TABLE_N[i]), inv(DF_TABLE_N[i + 1]));
        if u <= hi && u >= lo {
            let w = (u - lo) / (hi - lo);
            for c in 0..3 {
                out[c] = DF_TABLE[i + 1][c] + w * (DF_TABLE[i][c] - DF_TABLE[i + 1][c]);
            }
            break;
        }
    }
    CriticalValues {
        one_pct: out[0],
        five_pct: out[1],
        ten_pct: out[2],
    }
}

/// Schwert's rule `floor(12 * (N / 100)^(1/4))`.
pub fn schwert_lag(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Augmented Dickey-Fuller test with a constant and no trend.
///
/// Fits `dx_t = a + g * x_{t-1} + sum_i c_i dx_{t-i}` by least squares and
/// returns the t-ratio of `g`. `lag_order = None` uses Schwert's rule, capped
/// so that at least 20 observations remain.
pub fn adf_test(series: &[f64], lag_order: Option<usize>) -> Result<AdfResult> {
    let n = series.len();
    if n < 20 {
        return Err(Error::TooShort { len: n, min: 20 });
    }
    centered(series)?;
    let k = lag_order.unwrap_or_else(|| schwert_lag(n).min(n - 20));
    if n < 20 + k {
        return Err(Error::TooShort { len: n, min: 20 + k });
    }
    let dx: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    // Rows t = k+1 .. n-1 in level indexing; dx[t-1] = x_t - x_{t-1}.
    let rows = n - 1 - k;
    let cols = 2 + k;
    let x = DMatrix::from_fn(rows, cols, |r, c| {
        let t = r + k + 1;
        match c {
            0 => 1.0,
            1 => series[t - 1],
            _ => dx[t - 1 - (c - 1)],
        }
    });
    let y = DVector::from_iterator(rows, (0..rows).map(|r| dx[r + k]));
    let fit = linalg::ols(&x, &y)
        .ok_or_else(|| Error::InvalidSeries("degenerate ADF regression".into()))?;
    let dof = (rows - cols).max(1) as f64;
    let s2 = fit.rss / dof;
    let se = (s2 * fit.xtx_inv_diag[1]).sqrt();
    let statistic = if se > 0.0 { fit.coef[1] / se } else { f64::NEG_INFINITY };
    let critical_values = adf_critical_values(n);
    Ok(AdfResult {
        statistic,
        lag_order: k,
        n_obs: rows,
        critical_values,
        stationary_at_5pct: statistic < critical_values.five_pct,
    })
}

/// Outcome of the differencing-order search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DSelection {
    pub d: usize,
    /// No order up to `d_max` passed the test; `d = d_max` was returned.
    pub exhausted: bool,
}

fn is_linear_trend(w: &[f64]) -> bool {
    let step = w[1] - w[0];
    let scale = w.iter().map(|v| v.abs()).fold(0.0, f64::max);
    w.windows(2).all(|p| ((p[1] - p[0]) - step).abs() <= 1e-12 * scale.max(1.0))
}

/// Smallest `d <= d_max` whose `d`-times differenced series passes the ADF
/// test at 5%.
pub fn select_d(series: &[f64], d_max: usize, mode: DiffMode) -> Result<DSelection> {
    for d in 0..=d_max {
        let w = difference(series, d, mode)?.values;
        // An exact linear trend makes the ADF regression singular; it is
        // non-stationary at this order and constant after one more difference.
        if d < d_max && w.len() > 2 && centered(&w).is_ok() && is_linear_trend(&w) {
            continue;
        }
        match adf_test(&w, None) {
            Ok(r) if r.stationary_at_5pct => return Ok(DSelection { d, exhausted: false }),
            Ok(_) => {}
            // A differenced series with no variation left is trivially stationary.
            Err(Error::ConstantSeries) if d > 0 => {
                return Ok(DSelection { d, exhausted: false })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(DSelection {
        d: d_max,
        exhausted: true,
    })
}
