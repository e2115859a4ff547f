//! Cold-load-pick-up estimates: recovery peak, foregone energy, duration.
//!
//! The recovery peak comes from an autoregression on daily peak power, the
//! energy not served during an outage of `r` intervals from the cumulative
//! ARIMA forecast, and the recovery duration is their ratio. Duration bands
//! only reflect peak uncertainty (Gaussian residuals of the peak model).

use std::io::Write;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::arima::{ArimaModel, DEFAULT_HORIZON_CAP};
use crate::error::{Error, Result};
use crate::linalg;
use crate::series::{format_timestamp, PeakSeries};
use crate::stattests::z_for_level;

pub const DEFAULT_PEAK_LAGS: usize = 7;
pub const BAND_LEVELS: [f64; 3] = [0.25, 0.50, 0.75];

/// AR model of daily peak power, `P(t) = sum_i varphi_i P(t - i)` (plus an
/// optional intercept).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakModel {
    pub n_lags: usize,
    pub varphi: Vec<f64>,
    pub intercept: Option<f64>,
    pub residual_sigma: f64,
    /// Most recent daily peaks, oldest first.
    pub peak_history: PeakSeries,
}

pub fn fit_peak_model(peaks: &PeakSeries, n_lags: usize) -> Result<PeakModel> {
    fit_peak_model_with(peaks, n_lags, false)
}

/// Least-squares fit; rank-deficient designs take the minimum-norm solution.
pub fn fit_peak_model_with(peaks: &PeakSeries, n_lags: usize, intercept: bool) -> Result<PeakModel> {
    if n_lags == 0 {
        return Err(Error::InvalidParams("peak model needs at least one lag".into()));
    }
    let len = peaks.len();
    let min = n_lags + 10;
    if len < min {
        return Err(Error::InsufficientHistory { len, min });
    }
    let p = &peaks.peaks;
    let rows = len - n_lags;
    let cols = n_lags + usize::from(intercept);
    let x = DMatrix::from_fn(rows, cols, |r, c| {
        let t = r + n_lags;
        if c < n_lags {
            p[t - 1 - c]
        } else {
            1.0
        }
    });
    let y = DVector::from_iterator(rows, p[n_lags..].iter().copied());
    let (coef, rank) = linalg::min_norm_lstsq(&x, &y);
    let fitted = &x * DVector::from_column_slice(&coef);
    let rss = (&y - fitted).norm_squared();
    let residual_sigma = (rss / (rows.saturating_sub(rank)).max(1) as f64).sqrt();
    let keep = len - n_lags;
    Ok(PeakModel {
        n_lags,
        varphi: coef[..n_lags].to_vec(),
        intercept: intercept.then(|| coef[n_lags]),
        residual_sigma,
        peak_history: PeakSeries::new(peaks.dates[keep..].to_vec(), peaks.peaks[keep..].to_vec())?,
    })
}

/// Symmetric central interval `(lo, hi)` at some probability level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Bands at 25%, 50% and 75% central probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    pub p25: Band,
    pub p50: Band,
    pub p75: Band,
}

impl Bands {
    pub fn as_array(&self) -> [Band; 3] {
        [self.p25, self.p50, self.p75]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakEstimate {
    pub date: NaiveDate,
    pub point_kw: f64,
    pub bands: Bands,
}

impl PeakModel {
    /// Replaces the trailing history (no refit), keeping the last `n_lags` days.
    pub fn with_history(&self, peaks: &PeakSeries) -> Result<Self> {
        if peaks.len() < self.n_lags {
            return Err(Error::InsufficientHistory {
                len: peaks.len(),
                min: self.n_lags,
            });
        }
        let keep = peaks.len() - self.n_lags;
        Ok(Self {
            peak_history: PeakSeries::new(peaks.dates[keep..].to_vec(), peaks.peaks[keep..].to_vec())?,
            ..self.clone()
        })
    }

    /// Peak estimate for the calendar day of `asof`, from days strictly before it.
    pub fn estimate(&self, asof: DateTime<Utc>, stale_days: i64) -> Result<PeakEstimate> {
        let day = asof.date_naive();
        let hist = self.peak_history.before(day);
        if hist.len() < self.n_lags {
            return Err(Error::InsufficientHistory {
                len: hist.len(),
                min: self.n_lags,
            });
        }
        let last = *hist.dates.last().expect("non-empty history");
        if (day - last).num_days() > stale_days {
            return Err(Error::StaleHistory {
                last,
                asof: day,
                limit_days: stale_days,
            });
        }
        let n = hist.len();
        let raw: f64 = self
            .varphi
            .iter()
            .enumerate()
            .map(|(i, c)| c * hist.peaks[n - 1 - i])
            .sum::<f64>()
            + self.intercept.unwrap_or(0.0);
        let point = raw.max(0.0);
        let band = |level: f64| {
            let half = z_for_level(level) * self.residual_sigma;
            Band {
                lo: (point - half).max(0.0),
                hi: point + half,
            }
        };
        Ok(PeakEstimate {
            date: day,
            point_kw: point,
            bands: Bands {
                p25: band(BAND_LEVELS[0]),
                p50: band(BAND_LEVELS[1]),
                p75: band(BAND_LEVELS[2]),
            },
        })
    }
}

pub const DEFAULT_STALE_DAYS: i64 = 3;
pub const DEFAULT_PEAK_FLOOR_KW: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClpuOptions {
    pub peak_floor_kw: f64,
    pub stale_days: i64,
    pub horizon_cap: usize,
}

impl Default for ClpuOptions {
    fn default() -> Self {
        Self {
            peak_floor_kw: DEFAULT_PEAK_FLOOR_KW,
            stale_days: DEFAULT_STALE_DAYS,
            horizon_cap: DEFAULT_HORIZON_CAP,
        }
    }
}

/// Estimate for an outage lasting `r` intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClpuEntry {
    pub r: usize,
    pub tau1: DateTime<Utc>,
    pub e_o_hat: f64,
    pub p_clpu_hat: f64,
    pub t_c_hat: f64,
    pub tau2: DateTime<Utc>,
    /// Duration intervals in hours.
    pub ci_bands: Option<Bands>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClpuEstimate {
    pub t0: DateTime<Utc>,
    pub delta_minutes: u32,
    pub peak: PeakEstimate,
    pub entries: Vec<ClpuEntry>,
}

pub(crate) fn hours(h: f64) -> Duration {
    Duration::nanoseconds((h * 3.6e12).round() as i64)
}

fn step_offset(delta_minutes: u32, r: usize) -> Duration {
    Duration::minutes(delta_minutes as i64 * r as i64)
}

/// Peak, foregone energy and duration for outages of `1..=r_max` intervals
/// starting at `t0`. `history` ends with the interval just before `t0`.
pub fn estimate_clpu(
    energy_model: &ArimaModel,
    peak_model: &PeakModel,
    history: &[f64],
    t0: DateTime<Utc>,
    delta_minutes: u32,
    r_max: usize,
    opts: &ClpuOptions,
) -> Result<ClpuEstimate> {
    let cumulative = energy_model.forecast_cumulative_capped(history, t0, r_max, opts.horizon_cap)?;
    let peak = peak_model.estimate(t0, opts.stale_days)?;
    let p = peak.point_kw;
    if p <= opts.peak_floor_kw {
        return Err(Error::ZeroPeak {
            peak_kw: p,
            floor_kw: opts.peak_floor_kw,
        });
    }
    let entries = (1..=r_max)
        .map(|r| {
            let e = cumulative.energy_kwh[r];
            let t_c = e / p;
            let tau1 = t0 + step_offset(delta_minutes, r);
            let duration_band = |b: Band| Band {
                lo: e / b.hi,
                hi: e / b.lo.max(opts.peak_floor_kw),
            };
            ClpuEntry {
                r,
                tau1,
                e_o_hat: e,
                p_clpu_hat: p,
                t_c_hat: t_c,
                tau2: tau1 + hours(t_c),
                ci_bands: Some(Bands {
                    p25: duration_band(peak.bands.p25),
                    p50: duration_band(peak.bands.p50),
                    p75: duration_band(peak.bands.p75),
                }),
            }
        })
        .collect();
    Ok(ClpuEstimate {
        t0,
        delta_minutes,
        peak,
        entries,
    })
}

impl ClpuEstimate {
    /// CLPU report with one row per outage length.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "t0", "r", "tau1", "E_o_hat_kwh", "P_clpu_kw", "t_C_hours", "tau2", "band25_lo",
            "band25_hi", "band50_lo", "band50_hi", "band75_lo", "band75_hi",
        ])?;
        for e in &self.entries {
            let mut row = vec![
                format_timestamp(self.t0),
                e.r.to_string(),
                format_timestamp(e.tau1),
                format!("{}", e.e_o_hat),
                format!("{}", e.p_clpu_hat),
                format!("{}", e.t_c_hat),
                format_timestamp(e.tau2),
            ];
            match &e.ci_bands {
                Some(b) => {
                    for band in b.as_array() {
                        row.push(format!("{}", band.lo));
                        row.push(format!("{}", band.hi));
                    }
                }
                None => row.extend(std::iter::repeat_n(String::new(), 6)),
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Energy the dwelling would have used over `[tau1, tau2]` without an outage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalConsumption {
    pub window: (DateTime<Utc>, DateTime<Utc>),
    pub e_n_hat: f64,
}

impl NormalConsumption {
    /// Net CLPU energy `E_C = E_o + E_n`.
    pub fn net_energy(&self, e_o_hat: f64) -> f64 {
        e_o_hat + self.e_n_hat
    }
}

/// Forecast energy over `[tau1, tau2]` from the pre-outage model, with
/// partially covered intervals pro-rated. `history` ends just before `t0`.
pub fn normal_consumption(
    energy_model: &ArimaModel,
    history: &[f64],
    t0: DateTime<Utc>,
    delta_minutes: u32,
    tau1: DateTime<Utc>,
    tau2: DateTime<Utc>,
) -> Result<NormalConsumption> {
    if tau2 < tau1 || tau1 < t0 {
        return Err(Error::InvalidParams(format!(
            "window [{tau1}, {tau2}] must start at or after {t0} and not be reversed"
        )));
    }
    let delta = step_offset(delta_minutes, 1);
    let delta_s = delta.num_seconds() as f64;
    let end_offset = (tau2 - t0).num_milliseconds() as f64 / 1e3;
    let steps = (end_offset / delta_s).ceil() as usize;
    let per_step = if tau2 > tau1 {
        energy_model.forecast(history, steps)?
    } else {
        Vec::new()
    };
    let a = (tau1 - t0).num_milliseconds() as f64 / 1e3;
    let b = end_offset;
    let e_n_hat = per_step
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let lo = k as f64 * delta_s;
            let hi = lo + delta_s;
            let overlap = (hi.min(b) - lo.max(a)).max(0.0);
            v * overlap / delta_s
        })
        .sum();
    Ok(NormalConsumption {
        window: (tau1, tau2),
        e_n_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arima::ArimaOrder;
    use approx::assert_abs_diff_eq;
    use chrono::TimeZone;

    fn days(n: usize) -> Vec<NaiveDate> {
        let d0 = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        (0..n).map(|i| d0 + Duration::days(i as i64)).collect()
    }

    fn peaks(values: Vec<f64>) -> PeakSeries {
        PeakSeries::new(days(values.len()), values).unwrap()
    }

    fn day_after(p: &PeakSeries) -> DateTime<Utc> {
        let d = *p.dates.last().unwrap() + Duration::days(1);
        Utc.from_utc_datetime(&d.and_hms_opt(9, 0, 0).unwrap())
    }

    fn mean_model(mu: f64) -> ArimaModel {
        ArimaModel::with_coefficients(ArimaOrder::new(0, 0, 0), vec![], vec![], mu, 1.0).unwrap()
    }

    #[test]
    fn constant_peaks() {
        let p = peaks(vec![5.0; 20]);
        let m = fit_peak_model(&p, 7).unwrap();
        let e = m.estimate(day_after(&p), 3).unwrap();
        assert_abs_diff_eq!(e.point_kw, 5.0, epsilon = 1e-9);
        assert!(m.residual_sigma < 1e-9);
        for b in e.bands.as_array() {
            assert_abs_diff_eq!(b.lo, 5.0, epsilon = 1e-8);
            assert_abs_diff_eq!(b.hi, 5.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn ramp_continues() {
        let p = peaks((1..=30).map(f64::from).collect());
        let m = fit_peak_model(&p, 2).unwrap();
        let e = m.estimate(day_after(&p), 3).unwrap();
        assert_abs_diff_eq!(e.point_kw, 31.0, epsilon = 1e-6);
    }

    #[test]
    fn band_width() {
        let p = peaks(vec![5.0; 20]);
        let mut m = fit_peak_model(&p, 7).unwrap();
        m.residual_sigma = 1.0;
        let e = m.estimate(day_after(&p), 3).unwrap();
        assert_abs_diff_eq!(e.bands.p50.hi - e.point_kw, 0.674, epsilon = 1e-3);
        assert!(e.bands.p25.hi < e.bands.p50.hi && e.bands.p50.hi < e.bands.p75.hi);
    }

    #[test]
    fn staleness_and_length() {
        let p = peaks(vec![5.0; 20]);
        let m = fit_peak_model(&p, 7).unwrap();
        let late = day_after(&p) + Duration::days(3);
        assert!(matches!(m.estimate(late, 3), Err(Error::StaleHistory { .. })));
        assert!(m.estimate(day_after(&p) + Duration::days(2), 3).is_ok());
        assert!(matches!(fit_peak_model(&peaks(vec![1.0; 16]), 7), Err(Error::InsufficientHistory { .. })));
    }

    #[test]
    fn duration_arithmetic() {
        let p = peaks(vec![4.0; 20]);
        let pm = fit_peak_model(&p, 7).unwrap();
        let t0 = day_after(&p);
        // 8 kWh over two intervals: mean 4 kWh per interval, r = 1 sums two steps.
        let est = estimate_clpu(&mean_model(4.0), &pm, &[], t0, 15, 4, &ClpuOptions::default()).unwrap();
        let e1 = &est.entries[0];
        assert_eq!(e1.r, 1);
        assert_abs_diff_eq!(e1.e_o_hat, 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e1.t_c_hat, 2.0, epsilon = 1e-9);
        assert_eq!(e1.tau1, t0 + Duration::minutes(15));
        assert_eq!(e1.tau2, e1.tau1 + Duration::hours(2));
        let zero = estimate_clpu(&mean_model(0.0), &pm, &[], t0, 15, 2, &ClpuOptions::default()).unwrap();
        assert_eq!(zero.entries[0].t_c_hat, 0.0);
        assert_eq!(zero.entries[0].tau2, zero.entries[0].tau1);
    }

    #[test]
    fn zero_peak() {
        let p = peaks(vec![0.05; 20]);
        let pm = fit_peak_model(&p, 7).unwrap();
        let r = estimate_clpu(&mean_model(1.0), &pm, &[], day_after(&p), 15, 2, &ClpuOptions::default());
        assert!(matches!(r, Err(Error::ZeroPeak { .. })));
    }

    #[test]
    fn normal_consumption_examples() {
        let t0 = Utc.with_ymd_and_hms(2024, 1, 8, 9, 0, 0).unwrap();
        let m = mean_model(0.5);
        let nc = normal_consumption(&m, &[], t0, 15, t0, t0).unwrap();
        assert_eq!(nc.e_n_hat, 0.0);
        let tau1 = t0 + Duration::minutes(30);
        let nc = normal_consumption(&m, &[], t0, 15, tau1, tau1 + Duration::hours(1)).unwrap();
        assert_abs_diff_eq!(nc.e_n_hat, 2.0, epsilon = 1e-12);
        let nc = normal_consumption(&m, &[], t0, 15, tau1, tau1 + Duration::minutes(20)).unwrap();
        assert_abs_diff_eq!(nc.e_n_hat, 0.5 * 20.0 / 15.0, epsilon = 1e-12);
        assert_abs_diff_eq!(nc.net_energy(3.0) - 3.0, nc.e_n_hat, epsilon = 1e-12);
    }

    #[test]
    fn csv_layout() {
        let p = peaks(vec![4.0; 20]);
        let pm = fit_peak_model(&p, 7).unwrap();
        let est = estimate_clpu(&mean_model(1.0), &pm, &[], day_after(&p), 15, 3, &ClpuOptions::default()).unwrap();
        let mut buf = Vec::new();
        est.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header.split(',').count(), 13);
        assert_eq!(text.lines().count(), 4);
    }
}
