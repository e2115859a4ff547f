//! ARIMA order identification.
//!
//! Both searches fix `d` with the ADF test and score every candidate `(p, q)`
//! by the error of recursive multi-step forecasts over a trailing holdout
//! (or by AIC). The reduced search first caps `p` and `q` by the number of
//! significant PACF/ACF lags, then raises each order on its own while the
//! holdout error keeps improving materially, and finally searches the joint
//! grid below the resulting `(p_max, q_max)`.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arima::{self, ArimaOrder, FitOptions};
use crate::error::{Error, Result};
use crate::series::{difference, DiffMode};
use crate::stattests::{self, DSelection};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    #[default]
    HoldoutMse,
    Aic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMethod {
    Full,
    Reduced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub p_limit: usize,
    pub q_limit: usize,
    pub d_max: usize,
    pub ci_level: f64,
    pub mse_improvement_threshold: f64,
    pub holdout_horizon_steps: usize,
    pub criterion: Criterion,
    pub diff_mode: DiffMode,
    pub max_iter: usize,
    /// Evaluate independent grid cells on the rayon pool.
    pub parallel: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            p_limit: 8,
            q_limit: 8,
            d_max: 2,
            ci_level: 0.95,
            mse_improvement_threshold: 0.01,
            holdout_horizon_steps: 48,
            criterion: Criterion::HoldoutMse,
            diff_mode: DiffMode::IteratedLag1,
            max_iter: 500,
            parallel: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidConfig(format!("ci_level {} not in (0, 1)", self.ci_level)));
        }
        if !(self.mse_improvement_threshold > 0.0) {
            return Err(Error::InvalidConfig("mse_improvement_threshold must be > 0".into()));
        }
        if self.holdout_horizon_steps == 0 {
            return Err(Error::InvalidConfig("holdout_horizon_steps must be >= 1".into()));
        }
        Ok(())
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            max_iter: self.max_iter,
            p_limit: self.p_limit,
            q_limit: self.q_limit,
            d_limit: self.d_max,
            diff_mode: self.diff_mode,
            ..Default::default()
        }
    }
}

/// One evaluated grid cell. `criterion` is `None` for diverged fits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub order: ArimaOrder,
    pub criterion: Option<f64>,
    pub converged: bool,
    pub fit_millis: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub chosen: ArimaOrder,
    pub chosen_criterion: f64,
    pub p_max: usize,
    pub q_max: usize,
    pub n_acf: Option<usize>,
    pub n_pacf: Option<usize>,
    pub d_selection: DSelection,
    pub cells_evaluated: Vec<CellResult>,
    pub elapsed: Duration,
    pub method: SearchMethod,
}

impl SearchResult {
    /// Same search outcome, ignoring wall-clock fields.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let strip = |r: &Self| {
            let cells: Vec<_> = r
                .cells_evaluated
                .iter()
                .map(|c| (c.order, c.criterion, c.converged))
                .collect();
            (r.chosen, r.chosen_criterion, r.p_max, r.q_max, r.n_acf, r.n_pacf, r.d_selection, cells, r.method)
        };
        strip(self) == strip(other)
    }

    pub fn criterion_of(&self, order: ArimaOrder) -> Option<f64> {
        self.cells_evaluated
            .iter()
            .find(|c| c.order == order)
            .and_then(|c| c.criterion)
    }

    /// `p,d,q,criterion,converged,fit_millis`; timings are left empty unless
    /// `timings` is set so that exports are reproducible byte for byte.
    pub fn write_cells_csv<W: Write>(&self, out: W, timings: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["p", "d", "q", "criterion", "converged", "fit_millis"])?;
        for c in &self.cells_evaluated {
            w.write_record([
                c.order.p.to_string(),
                c.order.d.to_string(),
                c.order.q.to_string(),
                c.criterion.map(|v| format!("{v}")).unwrap_or_default(),
                c.converged.to_string(),
                if timings { format!("{:.3}", c.fit_millis) } else { String::new() },
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Scores one `(p, d, q)` cell.
pub fn evaluate_cell(values: &[f64], order: ArimaOrder, cfg: &SearchConfig) -> Result<CellResult> {
    let start = Instant::now();
    let opts = cfg.fit_options();
    let criterion = match cfg.criterion {
        Criterion::HoldoutMse => {
            let h = cfg.holdout_horizon_steps;
            if values.len() <= h {
                return Err(Error::SeriesTooShort {
                    len: values.len(),
                    min: h + order.min_fit_length(),
                });
            }
            let (train, hold) = values.split_at(values.len() - h);
            let model = arima::fit(train, order, &opts)?;
            if model.converged {
                let f = model.forecast(train, h)?;
                Some(arima::mse(hold, &f)?)
            } else {
                None
            }
        }
        Criterion::Aic => {
            let model = arima::fit(values, order, &opts)?;
            match (model.converged, model.loglik) {
                (true, Some(ll)) => Some(-2.0 * ll + 2.0 * (order.p + order.q + 2) as f64),
                _ => None,
            }
        }
    };
    let criterion = criterion.filter(|c| c.is_finite());
    Ok(CellResult {
        order,
        converged: criterion.is_some(),
        criterion,
        fit_millis: start.elapsed().as_secs_f64() * 1e3,
    })
}

fn evaluate_many(values: &[f64], orders: &[ArimaOrder], cfg: &SearchConfig) -> Result<Vec<CellResult>> {
    if cfg.parallel {
        orders.par_iter().map(|o| evaluate_cell(values, *o, cfg)).collect()
    } else {
        orders.iter().map(|o| evaluate_cell(values, *o, cfg)).collect()
    }
}

// Minimal criterion, then smaller p + q, then smaller q.
fn argmin<'a>(cells: impl Iterator<Item = &'a CellResult>) -> Option<(ArimaOrder, f64)> {
    cells
        .filter_map(|c| c.criterion.map(|v| (c.order, v)))
        .min_by(|(a, va), (b, vb)| {
            va.total_cmp(vb)
                .then((a.p + a.q).cmp(&(b.p + b.q)))
                .then(a.q.cmp(&b.q))
        })
}

pub fn full_grid_search(values: &[f64], cfg: &SearchConfig) -> Result<SearchResult> {
    cfg.validate()?;
    let start = Instant::now();
    let d_selection = stattests::select_d(values, cfg.d_max, cfg.diff_mode)?;
    let d = d_selection.d;
    let orders: Vec<ArimaOrder> = (0..=cfg.p_limit)
        .flat_map(|p| (0..=cfg.q_limit).map(move |q| ArimaOrder::new(p, d, q)))
        .collect();
    let cells = evaluate_many(values, &orders, cfg)?;
    let (chosen, chosen_criterion) = argmin(cells.iter()).ok_or(Error::NoConvergedCell)?;
    Ok(SearchResult {
        chosen,
        chosen_criterion,
        p_max: cfg.p_limit,
        q_max: cfg.q_limit,
        n_acf: None,
        n_pacf: None,
        d_selection,
        cells_evaluated: cells,
        elapsed: start.elapsed(),
        method: SearchMethod::Full,
    })
}

/// Significant-lag counts of the differenced series, `(n_acf, n_pacf)`.
fn correlogram_caps(w: &[f64], cfg: &SearchConfig) -> Result<(usize, usize)> {
    let n_acf = if cfg.q_limit == 0 {
        0
    } else {
        match stattests::acf_with_level(w, cfg.q_limit, cfg.ci_level) {
            Ok(c) => c.n_significant,
            Err(Error::ConstantSeries) => 0,
            Err(e) => return Err(e),
        }
    };
    let n_pacf = if cfg.p_limit == 0 {
        0
    } else {
        match stattests::pacf_with_level(w, cfg.p_limit, cfg.ci_level) {
            Ok(c) => c.n_significant,
            Err(Error::ConstantSeries) => 0,
            Err(e) => return Err(e),
        }
    };
    Ok((n_acf, n_pacf))
}

/// Evaluated cells keyed by `(p, q)`, remembering evaluation order.
struct CellCache<'a> {
    values: &'a [f64],
    cfg: &'a SearchConfig,
    d: usize,
    cells: BTreeMap<(usize, usize), CellResult>,
    sequence: Vec<(usize, usize)>,
}

impl<'a> CellCache<'a> {
    fn new(values: &'a [f64], cfg: &'a SearchConfig, d: usize) -> Self {
        Self {
            values,
            cfg,
            d,
            cells: BTreeMap::new(),
            sequence: Vec::new(),
        }
    }

    fn insert(&mut self, c: CellResult) {
        let key = (c.order.p, c.order.q);
        self.sequence.push(key);
        self.cells.insert(key, c);
    }

    fn get(&mut self, p: usize, q: usize) -> Result<Option<f64>> {
        if let Some(c) = self.cells.get(&(p, q)) {
            return Ok(c.criterion);
        }
        let c = evaluate_cell(self.values, ArimaOrder::new(p, self.d, q), self.cfg)?;
        let v = c.criterion;
        self.insert(c);
        Ok(v)
    }

    /// Raises one order from 0 while the criterion improves by more than the
    /// configured relative threshold; returns the last improving order.
    fn marginal_scan(&mut self, base: Option<f64>, cap: usize, along_p: bool) -> Result<usize> {
        let thr = self.cfg.mse_improvement_threshold;
        let mut best = base.unwrap_or(f64::INFINITY);
        let mut last = 0;
        for k in 1..=cap {
            let (p, q) = if along_p { (k, 0) } else { (0, k) };
            match self.get(p, q)? {
                Some(v) if best.is_infinite() || v < best * (1.0 - thr) => {
                    best = v;
                    last = k;
                }
                _ => break,
            }
        }
        Ok(last)
    }

    fn into_sequence(mut self) -> Vec<CellResult> {
        self.sequence
            .iter()
            .map(|k| self.cells.remove(k).expect("every evaluated cell is cached"))
            .collect()
    }
}

pub fn reduced_grid_search(values: &[f64], cfg: &SearchConfig) -> Result<SearchResult> {
    cfg.validate()?;
    let start = Instant::now();
    let d_selection = stattests::select_d(values, cfg.d_max, cfg.diff_mode)?;
    let d = d_selection.d;
    let w = difference(values, d, cfg.diff_mode)?.values;
    let (n_acf, n_pacf) = correlogram_caps(&w, cfg)?;
    let p_cap = n_pacf.min(cfg.p_limit);
    let q_cap = n_acf.min(cfg.q_limit);

    let mut cache = CellCache::new(values, cfg, d);
    let base = cache.get(0, 0)?;
    let p_max = cache.marginal_scan(base, p_cap, true)?;
    let q_max = cache.marginal_scan(base, q_cap, false)?;

    let remaining: Vec<ArimaOrder> = (0..=p_max)
        .flat_map(|p| (0..=q_max).map(move |q| (p, q)))
        .filter(|k| !cache.cells.contains_key(k))
        .map(|(p, q)| ArimaOrder::new(p, d, q))
        .collect();
    for c in evaluate_many(values, &remaining, cfg)? {
        cache.insert(c);
    }

    // Cells probed just past a marginal cut-off were evaluated too and compete.
    let (chosen, chosen_criterion) = argmin(cache.cells.values()).ok_or(Error::NoConvergedCell)?;
    let cells_evaluated = cache.into_sequence();
    Ok(SearchResult {
        chosen,
        chosen_criterion,
        p_max,
        q_max,
        n_acf: Some(n_acf),
        n_pacf: Some(n_pacf),
        d_selection,
        cells_evaluated,
        elapsed: start.elapsed(),
        method: SearchMethod::Reduced,
    })
}

pub fn search(values: &[f64], cfg: &SearchConfig, method: SearchMethod) -> Result<SearchResult> {
    match method {
        SearchMethod::Full => full_grid_search(values, cfg),
        SearchMethod::Reduced => reduced_grid_search(values, cfg),
    }
}

pub const DEFAULT_REFRESH_DAYS: i64 = 7;

/// Weekly refresh, or immediately after a diverged fit.
pub fn should_refresh(last_refresh: DateTime<Utc>, now: DateTime<Utc>, last_fit_converged: bool) -> bool {
    should_refresh_after(last_refresh, now, last_fit_converged, DEFAULT_REFRESH_DAYS)
}

pub fn should_refresh_after(
    last_refresh: DateTime<Utc>,
    now: DateTime<Utc>,
    last_fit_converged: bool,
    refresh_days: i64,
) -> bool {
    !last_fit_converged || now - last_refresh >= chrono::Duration::days(refresh_days)
}
