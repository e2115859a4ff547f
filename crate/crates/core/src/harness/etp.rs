//! Forecast durations and peaks against the thermal-house simulator.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arima::{self, ArimaOrder};
use crate::clpu::{estimate_clpu, fit_peak_model, Band, ClpuEstimate, ClpuOptions, DEFAULT_PEAK_LAGS};
use crate::error::{Error, Result};
use crate::etpsim::{simulate, HouseScenario};
use crate::order_select::{self, SearchConfig, SearchMethod};
use crate::series::daily_peaks;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EtpValidationConfig {
    pub delta_minutes: u32,
    /// Trailing days of meter data the energy model is trained on.
    pub train_days: usize,
    pub peak_lags: usize,
    pub search_method: SearchMethod,
    pub search: SearchConfig,
    pub clpu: ClpuOptions,
    /// Simulate houses concurrently.
    pub parallel: bool,
}

impl Default for EtpValidationConfig {
    fn default() -> Self {
        Self {
            delta_minutes: 15,
            train_days: 7,
            peak_lags: DEFAULT_PEAK_LAGS,
            search_method: SearchMethod::Reduced,
            search: SearchConfig::default(),
            clpu: ClpuOptions::default(),
            parallel: false,
        }
    }
}

/// One (house, outage length) comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtpCell {
    pub house: String,
    pub outage_hours: f64,
    pub r: usize,
    pub e_o_hat: f64,
    pub t_c_hat: f64,
    pub band25: Band,
    pub band50: Band,
    pub band75: Band,
    pub simulated_hours: f64,
    pub simulated_peak_kw: f64,
    pub recovered: bool,
    /// `(t_c_hat - simulated) / simulated`.
    pub rel_error: f64,
    pub in_band50: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtpHouseResult {
    pub house: String,
    pub order: ArimaOrder,
    pub peak_forecast_kw: f64,
    /// Mean over outage lengths of the simulated post-restoration peak.
    pub simulated_peak_kw: f64,
    pub peak_rel_error: f64,
    pub cells: Vec<EtpCell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthSummary {
    pub outage_hours: f64,
    pub mean_abs_rel_error: f64,
    pub coverage50: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtpValidation {
    pub houses: Vec<EtpHouseResult>,
    pub coverage25: f64,
    pub coverage50: f64,
    pub coverage75: f64,
    pub per_length: Vec<LengthSummary>,
}

impl EtpValidation {
    pub fn cells(&self) -> impl Iterator<Item = &EtpCell> {
        self.houses.iter().flat_map(|h| h.cells.iter())
    }

    pub fn cell(&self, house: &str, outage_hours: f64) -> Option<&EtpCell> {
        self.cells()
            .find(|c| c.house == house && c.outage_hours == outage_hours)
    }
}

fn coverage<'a>(cells: impl Iterator<Item = &'a EtpCell>, band: impl Fn(&EtpCell) -> Band) -> f64 {
    let (mut hit, mut n) = (0usize, 0usize);
    for c in cells {
        n += 1;
        hit += band(c).contains(c.simulated_hours) as usize;
    }
    if n == 0 {
        f64::NAN
    } else {
        hit as f64 / n as f64
    }
}

struct Trained {
    order: ArimaOrder,
    estimate: ClpuEstimate,
}

fn train_at(house: &HouseScenario, meter: &crate::series::EnergySeries, t0: DateTime<Utc>, r_max: usize, cfg: &EtpValidationConfig) -> Result<Trained> {
    let history = meter.values_before(t0);
    let train_len = cfg.train_days * 24 * 60 / cfg.delta_minutes as usize;
    if history.len() < train_len {
        return Err(Error::InsufficientHistory {
            len: history.len(),
            min: train_len,
        });
    }
    let train = &history[history.len() - train_len..];
    let order = order_select::search(train, &cfg.search, cfg.search_method)?.chosen;
    let model = arima::fit(train, order, &cfg.search.fit_options())?;
    let peaks = daily_peaks(meter)?.before(t0.date_naive());
    let peak_model = fit_peak_model(&peaks, cfg.peak_lags)?;
    let estimate = estimate_clpu(&model, &peak_model, train, t0, cfg.delta_minutes, r_max, &cfg.clpu)
        .map_err(|e| match e {
            Error::InvalidHorizon { .. } => Error::InvalidConfig(format!(
                "{}: outages longer than the {}-interval horizon cap",
                house.name, cfg.clpu.horizon_cap
            )),
            e => e,
        })?;
    Ok(Trained { order, estimate })
}

fn validate_house(house: &HouseScenario, cfg: &EtpValidationConfig) -> Result<EtpHouseResult> {
    if house.outages.is_empty() {
        return Err(Error::Empty);
    }
    let horizon = house.horizon_hours();
    let clean = simulate(&house.params, &house.outdoor, house.start, horizon, None, cfg.delta_minutes)?;
    let steps = |h: f64| (h * 60.0 / cfg.delta_minutes as f64).round() as usize;
    let r_max = house.outages.iter().map(|o| steps(o.duration_hours)).max().unwrap_or(1).max(1);

    let mut trained: BTreeMap<DateTime<Utc>, Trained> = BTreeMap::new();
    let mut cells = Vec::with_capacity(house.outages.len());
    for o in &house.outages {
        if !trained.contains_key(&o.t0) {
            trained.insert(o.t0, train_at(house, &clean.meter, o.t0, r_max, cfg)?);
        }
        let est = &trained[&o.t0].estimate;
        let r = steps(o.duration_hours).max(1);
        let entry = &est.entries[r - 1];
        let bands = entry.ci_bands.expect("estimate_clpu always sets bands");
        let sim = simulate(&house.params, &house.outdoor, house.start, horizon, Some(o), cfg.delta_minutes)?;
        let gt = sim
            .ground_truth
            .ok_or_else(|| Error::CoverageGap(o.restoration()))?;
        cells.push(EtpCell {
            house: house.name.clone(),
            outage_hours: o.duration_hours,
            r,
            e_o_hat: entry.e_o_hat,
            t_c_hat: entry.t_c_hat,
            band25: bands.p25,
            band50: bands.p50,
            band75: bands.p75,
            simulated_hours: gt.duration_hours,
            simulated_peak_kw: gt.peak_kw,
            recovered: gt.recovered,
            rel_error: (entry.t_c_hat - gt.duration_hours) / gt.duration_hours,
            in_band50: bands.p50.contains(gt.duration_hours),
        });
    }
    let first = &trained.values().next().expect("at least one outage");
    let peak_forecast_kw = first.estimate.peak.point_kw;
    let simulated_peak_kw = cells.iter().map(|c| c.simulated_peak_kw).sum::<f64>() / cells.len() as f64;
    Ok(EtpHouseResult {
        house: house.name.clone(),
        order: first.order,
        peak_forecast_kw,
        simulated_peak_kw,
        peak_rel_error: (peak_forecast_kw - simulated_peak_kw) / simulated_peak_kw,
        cells,
    })
}

/// For each house: simulate the undisturbed record, train the energy model
/// on the trailing `train_days` before the outage start and the peak model on
/// every complete day before it, then compare each outage's forecast against
/// the simulated recovery.
pub fn etp_validation(houses: &[HouseScenario], cfg: &EtpValidationConfig) -> Result<EtpValidation> {
    if houses.is_empty() {
        return Err(Error::Empty);
    }
    let results: Vec<EtpHouseResult> = if cfg.parallel {
        houses.par_iter().map(|h| validate_house(h, cfg)).collect::<Result<_>>()?
    } else {
        houses.iter().map(|h| validate_house(h, cfg)).collect::<Result<_>>()?
    };
    let all = || results.iter().flat_map(|h| h.cells.iter());
    let mut lengths: Vec<f64> = all().map(|c| c.outage_hours).collect();
    lengths.sort_by(f64::total_cmp);
    lengths.dedup();
    let per_length = lengths
        .into_iter()
        .map(|l| {
            let sel: Vec<&EtpCell> = all().filter(|c| c.outage_hours == l).collect();
            LengthSummary {
                outage_hours: l,
                mean_abs_rel_error: sel.iter().map(|c| c.rel_error.abs()).sum::<f64>() / sel.len() as f64,
                coverage50: coverage(sel.iter().copied(), |c| c.band50),
            }
        })
        .collect();
    Ok(EtpValidation {
        coverage25: coverage(all(), |c| c.band25),
        coverage50: coverage(all(), |c| c.band50),
        coverage75: coverage(all(), |c| c.band75),
        per_length,
        houses: results,
    })
}
