//! Rolling-origin backtests, method comparison, search comparison and the
//! thermal-house validation, with CSV report exports.

mod etp;
mod export;
pub mod stats;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arima::{self, fit_arimax_with_start, ArimaModel, ArimaOrder, ArimaxModel};
use crate::baselines::{fit_hwes, RandomWalkModel};
use crate::error::{Error, Result};
use crate::order_select::{self, SearchConfig, SearchMethod, DEFAULT_REFRESH_DAYS};
use crate::series::EnergySeries;

pub use etp::{etp_validation, EtpCell, EtpHouseResult, EtpValidation, EtpValidationConfig, LengthSummary};
pub use export::{write_backtest, write_etp_validation, write_search_comparison};
pub use stats::{percentile, Table1Stats, Table2Stats};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ArimaReduced,
    ArimaFull,
    Hwes,
    RandomWalk,
    Arimax,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::ArimaReduced,
        Method::ArimaFull,
        Method::Hwes,
        Method::RandomWalk,
        Method::Arimax,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::ArimaReduced => "arima_reduced",
            Method::ArimaFull => "arima_full",
            Method::Hwes => "hwes",
            Method::RandomWalk => "random_walk",
            Method::Arimax => "arimax",
        }
    }

    fn search_method(&self) -> Option<SearchMethod> {
        match self {
            Method::ArimaReduced | Method::Arimax => Some(SearchMethod::Reduced),
            Method::ArimaFull => Some(SearchMethod::Full),
            Method::Hwes | Method::RandomWalk => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefreshPolicy {
    /// Re-select the order every `refresh_days` and whenever a fit diverges.
    #[default]
    WeeklyOrDivergence,
    /// Select once (or use `fixed_order`) and keep it.
    FixedOrder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    pub step_interval_minutes: u32,
    pub horizon_steps: usize,
    pub refresh_policy: RefreshPolicy,
    /// Order used by ARIMA methods under `fixed_order` instead of an initial search.
    pub fixed_order: Option<ArimaOrder>,
    pub train_window_hours: u32,
    pub methods: Vec<Method>,
    pub refresh_days: i64,
    /// HWES season in intervals; one day when unset.
    pub season_length: Option<usize>,
    /// Stop after this many forecast origins per series.
    pub max_origins: Option<usize>,
    /// Reuse previous coefficients as the optimiser start when the order is unchanged.
    pub warm_start: bool,
    /// Run series concurrently.
    pub parallel: bool,
    pub search: SearchConfig,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            step_interval_minutes: 60,
            horizon_steps: 48,
            refresh_policy: RefreshPolicy::WeeklyOrDivergence,
            fixed_order: None,
            train_window_hours: 7 * 24,
            methods: vec![Method::ArimaReduced, Method::Hwes, Method::RandomWalk],
            refresh_days: DEFAULT_REFRESH_DAYS,
            season_length: None,
            max_origins: None,
            warm_start: true,
            parallel: false,
            search: SearchConfig::default(),
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon_steps == 0 {
            return Err(Error::InvalidConfig("horizon_steps must be >= 1".into()));
        }
        if self.train_window_hours < 48 {
            return Err(Error::InvalidConfig("train_window_hours must be >= 48".into()));
        }
        if self.step_interval_minutes == 0 {
            return Err(Error::InvalidConfig("step_interval_minutes must be >= 1".into()));
        }
        if self.refresh_days < 1 {
            return Err(Error::InvalidConfig("refresh_days must be >= 1".into()));
        }
        self.search.validate()
    }

    fn geometry(&self, series: &EnergySeries) -> Result<(usize, usize)> {
        let delta = series.resolution_minutes();
        if self.step_interval_minutes % delta != 0 || (self.train_window_hours * 60) % delta != 0 {
            return Err(Error::InvalidConfig(format!(
                "step interval and training window must be multiples of the {delta}-minute resolution"
            )));
        }
        let train = (self.train_window_hours * 60 / delta) as usize;
        let step = (self.step_interval_minutes / delta) as usize;
        Ok((train, step))
    }
}

/// Forecast made at one origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OriginRecord {
    /// Start of the first forecast interval; only data before it is used.
    pub t: DateTime<Utc>,
    pub order: Option<ArimaOrder>,
    pub refreshed: bool,
    pub diverged: bool,
    /// Cumulative energy over the horizon.
    pub forecast_kwh: f64,
    pub actual_kwh: f64,
    /// Squared error of the cumulative energy.
    pub sq_error: f64,
    /// Mean squared per-interval error over the horizon.
    pub step_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesResult {
    pub series_id: String,
    pub method: Method,
    pub origins: Vec<OriginRecord>,
    /// Mean over origins of the cumulative-energy squared error.
    pub mse: f64,
    pub step_mse: f64,
    pub refreshes: usize,
    pub divergences: usize,
    pub wall_time: Duration,
}

impl SeriesResult {
    pub fn cumulative_error(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.origins
            .iter()
            .map(|o| {
                acc += o.sq_error;
                acc
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub n_series: usize,
    /// Across-series statistics of [`SeriesResult::mse`].
    pub stats: Table2Stats,
    pub step_mse_stats: Table2Stats,
    /// Cumulative error averaged over series, truncated to the shortest run.
    pub mean_cumulative_error: Vec<f64>,
    pub wall_time: Duration,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub per_method: BTreeMap<Method, MethodSummary>,
    pub per_series: Vec<SeriesResult>,
}

impl BacktestReport {
    fn from_results(per_series: Vec<SeriesResult>, methods: &[Method]) -> Self {
        let mut per_method = BTreeMap::new();
        for &m in methods {
            let rows: Vec<&SeriesResult> = per_series.iter().filter(|r| r.method == m).collect();
            if rows.is_empty() {
                continue;
            }
            let mse: Vec<f64> = rows.iter().map(|r| r.mse).collect();
            let step: Vec<f64> = rows.iter().map(|r| r.step_mse).collect();
            let curves: Vec<Vec<f64>> = rows.iter().map(|r| r.cumulative_error()).collect();
            let len = curves.iter().map(Vec::len).min().unwrap_or(0);
            let mean_cumulative_error = (0..len)
                .map(|k| curves.iter().map(|c| c[k]).sum::<f64>() / curves.len() as f64)
                .collect();
            per_method.insert(
                m,
                MethodSummary {
                    method: m,
                    n_series: rows.len(),
                    stats: Table2Stats::from_values(&mse),
                    step_mse_stats: Table2Stats::from_values(&step),
                    mean_cumulative_error,
                    wall_time: rows.iter().map(|r| r.wall_time).sum(),
                },
            );
        }
        Self { per_method, per_series }
    }

    pub fn result(&self, series_id: &str, method: Method) -> Option<&SeriesResult> {
        self.per_series
            .iter()
            .find(|r| r.series_id == series_id && r.method == method)
    }

    /// Per-series percentage increase of reduced over full-search MSE, when
    /// both methods ran.
    pub fn reduced_vs_full_increase(&self) -> Vec<(String, f64)> {
        self.per_series
            .iter()
            .filter(|r| r.method == Method::ArimaReduced)
            .filter_map(|red| {
                let full = self.result(&red.series_id, Method::ArimaFull)?;
                Some((red.series_id.clone(), pct_increase(red.mse, full.mse)))
            })
            .collect()
    }
}

fn pct_increase(value: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        100.0 * (value - reference) / reference
    } else if value == reference {
        0.0
    } else {
        f64::INFINITY
    }
}

fn is_constant(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] == w[1])
}

enum Fitted {
    Uni(ArimaModel),
    X(ArimaxModel),
}

impl Fitted {
    fn base(&self) -> &ArimaModel {
        match self {
            Fitted::Uni(m) => m,
            Fitted::X(m) => &m.base,
        }
    }

    fn coefficients(&self) -> Vec<f64> {
        let b = self.base();
        b.phi.iter().chain(&b.theta).copied().collect()
    }
}

/// Order-tracking ARIMA forecaster state carried across origins.
struct ArimaState<'a> {
    cfg: &'a BacktestConfig,
    search: SearchMethod,
    exogenous: bool,
    order: Option<ArimaOrder>,
    last_refresh: Option<DateTime<Utc>>,
    last_fit_converged: bool,
    last_good: Option<Fitted>,
}

struct StepOutcome {
    forecast: Vec<f64>,
    order: Option<ArimaOrder>,
    refreshed: bool,
    diverged: bool,
}

impl<'a> ArimaState<'a> {
    fn new(cfg: &'a BacktestConfig, method: Method) -> Self {
        Self {
            cfg,
            search: method.search_method().unwrap_or(SearchMethod::Reduced),
            exogenous: method == Method::Arimax,
            order: match cfg.refresh_policy {
                RefreshPolicy::FixedOrder => cfg.fixed_order,
                RefreshPolicy::WeeklyOrDivergence => None,
            },
            last_refresh: None,
            last_fit_converged: true,
            last_good: None,
        }
    }

    fn select(&mut self, train: &[f64], t: DateTime<Utc>) -> Result<()> {
        match order_select::search(train, &self.cfg.search, self.search) {
            Ok(r) => self.order = Some(r.chosen),
            // Keep the previous order when no cell converges.
            Err(Error::NoConvergedCell) if self.order.is_some() => {}
            Err(e) => return Err(e),
        }
        self.last_refresh = Some(t);
        Ok(())
    }

    fn fit(&self, train: &[f64], temps: Option<&[f64]>) -> Result<Fitted> {
        let order = self.order.expect("order selected before fitting");
        let opts = self.cfg.search.fit_options();
        let warm = match (&self.last_good, self.cfg.warm_start) {
            (Some(m), true) if m.base().order == order => Some(m.coefficients()),
            _ => None,
        };
        if self.exogenous {
            let temps = temps.ok_or_else(|| Error::MissingExogenous(Method::Arimax.to_string()))?;
            Ok(Fitted::X(fit_arimax_with_start(train, temps, order, &opts, warm.as_deref())?))
        } else {
            Ok(Fitted::Uni(arima::fit_with_start(train, order, &opts, warm.as_deref())?.model))
        }
    }

    fn step(&mut self, train: &[f64], temps: Option<&[f64]>, t: DateTime<Utc>) -> Result<StepOutcome> {
        let h = self.cfg.horizon_steps;
        if is_constant(train) {
            return Ok(StepOutcome {
                forecast: vec![train[train.len() - 1]; h],
                order: Some(ArimaOrder::new(0, 0, 0)),
                refreshed: false,
                diverged: false,
            });
        }
        let weekly = self.cfg.refresh_policy == RefreshPolicy::WeeklyOrDivergence;
        let due = match (self.order, self.last_refresh) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(_), Some(last)) => {
                weekly && order_select::should_refresh_after(last, t, self.last_fit_converged, self.cfg.refresh_days)
            }
        };
        let mut refreshed = false;
        if due {
            self.select(train, t)?;
            refreshed = true;
        }
        let mut fitted = self.fit(train, temps)?;
        let diverged = !fitted.base().converged;
        if diverged && weekly && !refreshed {
            self.select(train, t)?;
            refreshed = true;
            fitted = self.fit(train, temps)?;
        }
        self.last_fit_converged = fitted.base().converged;
        if fitted.base().converged || self.last_good.is_none() {
            self.last_good = Some(fitted);
        }
        let model = self.last_good.as_ref().expect("a model was stored");
        let forecast = match model {
            Fitted::Uni(m) => m.forecast(train, h)?,
            Fitted::X(m) => {
                let temps = temps.expect("exogenous fit had temperatures");
                m.forecast(train, temps, None, h)?
            }
        };
        Ok(StepOutcome {
            forecast,
            order: self.order,
            refreshed,
            diverged,
        })
    }
}

/// Rolling-origin backtest of one method on one series. `temperatures`, when
/// given, must align with the series.
pub fn backtest_method(
    series: &EnergySeries,
    temperatures: Option<&[f64]>,
    method: Method,
    cfg: &BacktestConfig,
) -> Result<SeriesResult> {
    cfg.validate()?;
    if let Some(t) = temperatures {
        if t.len() != series.len() {
            return Err(Error::LengthMismatch {
                left: series.len(),
                right: t.len(),
            });
        }
    }
    if method == Method::Arimax && temperatures.is_none() {
        return Err(Error::MissingExogenous(method.to_string()));
    }
    let (train_len, step) = cfg.geometry(series)?;
    let h = cfg.horizon_steps;
    let n = series.len();
    if n < train_len + h {
        return Err(Error::SeriesTooShort {
            len: n,
            min: train_len + h,
        });
    }
    let values = series.values();
    let season = cfg
        .season_length
        .unwrap_or((24 * 60 / series.resolution_minutes()) as usize);
    let start = Instant::now();
    let mut arima_state = method.search_method().map(|_| ArimaState::new(cfg, method));
    let mut origins = Vec::new();
    let mut i = train_len;
    while i + h <= n && cfg.max_origins.is_none_or(|m| origins.len() < m) {
        let train = &values[i - train_len..i];
        let temps = temperatures.map(|t| &t[i - train_len..i]);
        let t = series.timestamp(i);
        let out = match (&mut arima_state, method) {
            (Some(state), _) => state.step(train, temps, t)?,
            (None, Method::Hwes) => StepOutcome {
                forecast: if is_constant(train) {
                    vec![train[0]; h]
                } else {
                    fit_hwes(train, season)?.forecast(h)
                },
                order: None,
                refreshed: false,
                diverged: false,
            },
            (None, _) => StepOutcome {
                forecast: RandomWalkModel::fit(train)?.forecast(h),
                order: None,
                refreshed: false,
                diverged: false,
            },
        };
        let actual = &values[i..i + h];
        let forecast_kwh: f64 = out.forecast.iter().sum();
        let actual_kwh: f64 = actual.iter().sum();
        origins.push(OriginRecord {
            t,
            order: out.order,
            refreshed: out.refreshed,
            diverged: out.diverged,
            forecast_kwh,
            actual_kwh,
            sq_error: (forecast_kwh - actual_kwh).powi(2),
            step_mse: arima::mse(actual, &out.forecast)?,
        });
        i += step;
    }
    let k = origins.len().max(1) as f64;
    Ok(SeriesResult {
        series_id: series.meter_id().to_string(),
        method,
        mse: origins.iter().map(|o| o.sq_error).sum::<f64>() / k,
        step_mse: origins.iter().map(|o| o.step_mse).sum::<f64>() / k,
        refreshes: origins.iter().filter(|o| o.refreshed).count(),
        divergences: origins.iter().filter(|o| o.diverged).count(),
        origins,
        wall_time: start.elapsed(),
    })
}

/// Runs every configured method on one series.
pub fn rolling_backtest(
    series: &EnergySeries,
    temperatures: Option<&[f64]>,
    cfg: &BacktestConfig,
) -> Result<BacktestReport> {
    let results = cfg
        .methods
        .iter()
        .map(|&m| backtest_method(series, temperatures, m, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(BacktestReport::from_results(results, &cfg.methods))
}

/// A series with optional aligned temperatures.
#[derive(Clone, Debug)]
pub struct BacktestInput {
    pub series: EnergySeries,
    pub temperatures: Option<Vec<f64>>,
}

impl From<EnergySeries> for BacktestInput {
    fn from(series: EnergySeries) -> Self {
        Self {
            series,
            temperatures: None,
        }
    }
}

/// Backtests every method on every series; results keep input order.
pub fn compare_methods(suite: &[BacktestInput], cfg: &BacktestConfig) -> Result<BacktestReport> {
    if suite.is_empty() {
        return Err(Error::Empty);
    }
    let run = |input: &BacktestInput| -> Result<Vec<SeriesResult>> {
        cfg.methods
            .iter()
            .map(|&m| backtest_method(&input.series, input.temperatures.as_deref(), m, cfg))
            .collect()
    };
    let nested: Vec<Vec<SeriesResult>> = if cfg.parallel {
        suite.par_iter().map(run).collect::<Result<_>>()?
    } else {
        suite.iter().map(run).collect::<Result<_>>()?
    };
    Ok(BacktestReport::from_results(
        nested.into_iter().flatten().collect(),
        &cfg.methods,
    ))
}

/// Full versus reduced search on one training window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchComparisonRow {
    pub series_id: String,
    pub full_order: ArimaOrder,
    pub reduced_order: ArimaOrder,
    pub full_criterion: f64,
    pub reduced_criterion: f64,
    /// Percentage increase of the reduced criterion over the full one.
    pub increase_pct: f64,
    pub full_cells: usize,
    pub reduced_cells: usize,
    pub full_time: Duration,
    pub reduced_time: Duration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchComparison {
    pub rows: Vec<SearchComparisonRow>,
    pub increase: Table1Stats,
}

/// Runs both searches on the trailing `window` values of every series
/// (all values when `None`). Searches run sequentially so their wall times
/// are comparable.
pub fn search_comparison(
    suite: &[EnergySeries],
    cfg: &SearchConfig,
    window: Option<usize>,
) -> Result<SearchComparison> {
    if suite.is_empty() {
        return Err(Error::Empty);
    }
    let rows = suite
        .iter()
        .map(|s| {
            let v = s.values();
            let v = &v[v.len() - window.unwrap_or(v.len()).min(v.len())..];
            let full = order_select::full_grid_search(v, cfg)?;
            let red = order_select::reduced_grid_search(v, cfg)?;
            Ok(SearchComparisonRow {
                series_id: s.meter_id().to_string(),
                full_order: full.chosen,
                reduced_order: red.chosen,
                full_criterion: full.chosen_criterion,
                reduced_criterion: red.chosen_criterion,
                increase_pct: pct_increase(red.chosen_criterion, full.chosen_criterion),
                full_cells: full.cells_evaluated.len(),
                reduced_cells: red.cells_evaluated.len(),
                full_time: full.elapsed,
                reduced_time: red.elapsed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let inc: Vec<f64> = rows.iter().map(|r| r.increase_pct).collect();
    Ok(SearchComparison {
        increase: Table1Stats::from_values(&inc),
        rows,
    })
}
