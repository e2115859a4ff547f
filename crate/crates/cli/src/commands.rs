//! Subcommand implementations. Every command writes into the configured
//! output directory and leaves wall-clock fields empty unless `--timings`.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context as _, Result};
use chrono::{DateTime, Utc};
use clpu_core::arima::{self, ArimaModel, ArimaOrder};
use clpu_core::clpu::{estimate_clpu, fit_peak_model, PeakModel};
use clpu_core::etpsim::{self, HouseScenario};
use clpu_core::harness::{self, BacktestInput, Method, RefreshPolicy};
use clpu_core::order_select::{self, SearchMethod, SearchResult};
use clpu_core::series::{self, daily_peaks, format_timestamp, parse_timestamp, EnergySeries};
use clpu_core::{stattests, synth, Error};

use crate::config::Config;
use crate::UsageError;

pub struct Context {
    pub cfg: Config,
    pub timings: bool,
}

impl Context {
    fn out_dir(&self) -> Result<&Path> {
        let dir = self.cfg.output_dir.as_path();
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out_dir()?.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(BufWriter::new(f))
    }

    fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn read_series(&self, path: &Path) -> Result<EnergySeries> {
        Ok(series::ingest_csv(path, &self.cfg.csv)?)
    }

    /// The trailing training window before `t0` (all earlier data when shorter).
    fn training<'a>(&self, s: &'a EnergySeries, t0: DateTime<Utc>) -> &'a [f64] {
        let before = s.values_before(t0);
        let train_len = self.cfg.train_days * 24 * 60 / s.resolution_minutes() as usize;
        &before[before.len().saturating_sub(train_len)..]
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// `t0` defaults to the end of the series and must sit on its grid.
fn resolve_t0(s: &EnergySeries, raw: Option<&str>) -> Result<DateTime<Utc>> {
    let Some(raw) = raw else {
        return Ok(s.end_time());
    };
    let t0 = parse_timestamp(raw).ok_or_else(|| usage(format!("--t0: cannot parse `{raw}`")))?;
    let k = s.count_before(t0);
    if t0 > s.end_time() || t0 <= s.start_time() || s.timestamp(k) != t0 {
        return Err(usage(format!(
            "--t0 {} must lie on the {}-minute grid within ({}, {}]",
            format_timestamp(t0),
            s.resolution_minutes(),
            format_timestamp(s.start_time()),
            format_timestamp(s.end_time())
        )));
    }
    Ok(t0)
}

fn parse_order(raw: &str) -> Result<ArimaOrder> {
    let parts: Vec<usize> = raw
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage(format!("--order: expected `p,d,q`, got `{raw}`")))?;
    match parts[..] {
        [p, d, q] => Ok(ArimaOrder::new(p, d, q)),
        _ => Err(usage(format!("--order: expected `p,d,q`, got `{raw}`"))),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text)
        .map_err(Error::from)
        .with_context(|| format!("reading {}", path.display()))
}

pub fn analyze(ctx: &Context, input: &Path, max_lag: usize) -> Result<()> {
    let s = ctx.read_series(input)?;
    let v = s.values();
    let lag = max_lag.min(v.len().saturating_sub(1)).max(1);
    let level = ctx.cfg.search.ci_level;
    let acf = stattests::acf_with_level(v, lag, level)?;
    let pacf = stattests::pacf_with_level(v, lag, level)?;
    let adf = stattests::adf_test(v, None)?;
    let d = stattests::select_d(v, ctx.cfg.search.d_max, ctx.cfg.search.diff_mode)?;

    acf.write_csv(ctx.create("acf.csv")?)?;
    pacf.write_csv(ctx.create("pacf.csv")?)?;
    let mut w = csv::Writer::from_writer(ctx.create("adf.csv")?);
    w.write_record([
        "statistic", "lag_order", "n_obs", "crit_1pct", "crit_5pct", "crit_10pct", "stationary_at_5pct",
        "selected_d", "d_exhausted",
    ])?;
    w.write_record([
        format!("{}", adf.statistic),
        adf.lag_order.to_string(),
        adf.n_obs.to_string(),
        format!("{}", adf.critical_values.one_pct),
        format!("{}", adf.critical_values.five_pct),
        format!("{}", adf.critical_values.ten_pct),
        adf.stationary_at_5pct.to_string(),
        d.d.to_string(),
        d.exhausted.to_string(),
    ])?;
    w.flush()?;
    println!(
        "ADF {:.4} ({}stationary at 5%), d = {}, significant ACF lags {}, PACF lags {}",
        adf.statistic,
        if adf.stationary_at_5pct { "" } else { "not " },
        d.d,
        acf.n_significant,
        pacf.n_significant
    );
    Ok(())
}

fn strip_timings(r: &mut SearchResult) {
    r.elapsed = Duration::ZERO;
    r.cells_evaluated.iter_mut().for_each(|c| c.fit_millis = 0.0);
}

pub fn select_order(ctx: &Context, input: &Path, method: Option<SearchMethod>, t0: Option<&str>) -> Result<()> {
    let s = ctx.read_series(input)?;
    let t0 = resolve_t0(&s, t0)?;
    let method = method.unwrap_or(ctx.cfg.search_method);
    let mut result = order_select::search(ctx.training(&s, t0), &ctx.cfg.search_config(), method)?;
    result.write_cells_csv(ctx.create("cells.csv")?, ctx.timings)?;
    let mut w = csv::Writer::from_writer(ctx.create("order.csv")?);
    w.write_record(["method", "p", "d", "q", "criterion", "p_max", "q_max", "cells"])?;
    w.write_record([
        format!("{method:?}").to_lowercase(),
        result.chosen.p.to_string(),
        result.chosen.d.to_string(),
        result.chosen.q.to_string(),
        format!("{}", result.chosen_criterion),
        result.p_max.to_string(),
        result.q_max.to_string(),
        result.cells_evaluated.len().to_string(),
    ])?;
    w.flush()?;
    if !ctx.timings {
        strip_timings(&mut result);
    }
    ctx.write_json("order.json", &result)?;
    println!("chosen order {} over {} cells", result.chosen, result.cells_evaluated.len());
    Ok(())
}

pub fn fit(ctx: &Context, input: &Path, order: Option<&str>, order_file: Option<&Path>, t0: Option<&str>) -> Result<()> {
    let s = ctx.read_series(input)?;
    let t0 = resolve_t0(&s, t0)?;
    let train = ctx.training(&s, t0);
    let search = ctx.cfg.search_config();
    let order = match (order, order_file) {
        (Some(raw), _) => parse_order(raw)?,
        (None, Some(path)) => read_json::<SearchResult>(path)?.chosen,
        (None, None) => order_select::search(train, &search, ctx.cfg.search_method)?.chosen,
    };
    let mut model = arima::fit(train, order, &search.fit_options())?;
    model.training_window = Some(arima::TrainingWindow {
        start: s.timestamp(s.count_before(t0) - train.len()),
        end: t0,
    });
    fs::write(ctx.out_dir()?.join("model.json"), model.to_json()? + "\n")?;
    println!("fitted {} (converged: {})", model.order, model.converged);

    let peaks = daily_peaks(&s)?.before(t0.date_naive());
    match fit_peak_model(&peaks, ctx.cfg.peak_lags) {
        Ok(pm) => ctx.write_json("peak_model.json", &pm)?,
        Err(Error::InsufficientHistory { len, min }) => {
            eprintln!("warning: {len} complete days before t0, peak model needs {min}; peak_model.json not written");
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<ArimaModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    ArimaModel::from_json(&text).with_context(|| format!("reading {}", path.display()))
}

pub fn forecast(ctx: &Context, input: &Path, model: &Path, t0: Option<&str>, r_max: Option<usize>) -> Result<()> {
    let s = ctx.read_series(input)?;
    let t0 = resolve_t0(&s, t0)?;
    let model = load_model(model)?;
    let r_max = r_max.unwrap_or(ctx.cfg.horizon_cap);
    let fc = model.forecast_cumulative_capped(ctx.training(&s, t0), t0, r_max, ctx.cfg.horizon_cap)?;
    let mut w = csv::Writer::from_writer(ctx.create("forecast.csv")?);
    w.write_record(["step", "timestamp", "energy_kwh", "cumulative_kwh"])?;
    for (j, (e, c)) in fc.per_step.iter().zip(&fc.energy_kwh).enumerate() {
        w.write_record([
            j.to_string(),
            format_timestamp(t0 + s.delta() * j as i32),
            format!("{e}"),
            format!("{c}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn clpu(
    ctx: &Context,
    input: &Path,
    model: &Path,
    peak_model: &Path,
    t0: Option<&str>,
    r_max: Option<usize>,
) -> Result<()> {
    let s = ctx.read_series(input)?;
    let t0 = resolve_t0(&s, t0)?;
    let model = load_model(model)?;
    let mut pm: PeakModel = read_json(peak_model)?;
    // Roll the peak history forward with whatever complete days the input adds.
    let recent = daily_peaks(&s).ok().map(|p| p.before(t0.date_naive()));
    if let Some(recent) = recent.filter(|p| p.len() >= pm.n_lags) {
        pm = pm.with_history(&recent)?;
    }
    let r_max = r_max.unwrap_or(ctx.cfg.horizon_cap);
    let est = estimate_clpu(
        &model,
        &pm,
        ctx.training(&s, t0),
        t0,
        s.resolution_minutes(),
        r_max,
        &ctx.cfg.clpu_options(),
    )?;
    est.write_csv(ctx.create("clpu.csv")?)?;
    println!(
        "peak {:.3} kW; {}-interval outage: E_o {:.3} kWh, duration {:.3} h",
        est.peak.point_kw,
        r_max,
        est.entries[r_max - 1].e_o_hat,
        est.entries[r_max - 1].t_c_hat
    );
    Ok(())
}

/// `timestamp,temperature_c` aligned to every interval of `s`.
fn read_temperatures(path: &Path, s: &EnergySeries) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(Error::from)?;
    let mut by_time = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(Error::from)?;
        let bad = |reason: String| Error::MalformedRow { line: i + 2, reason };
        let t = rec
            .get(0)
            .and_then(parse_timestamp)
            .ok_or_else(|| bad("unparseable timestamp".into()))?;
        let v: f64 = rec
            .get(1)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("unparseable temperature".into()))?;
        by_time.insert(t, v);
    }
    (0..s.len())
        .map(|i| {
            let t = s.timestamp(i);
            by_time.get(&t).copied().ok_or_else(|| {
                Error::InvalidSeries(format!("{}: no temperature at {}", path.display(), format_timestamp(t))).into()
            })
        })
        .collect()
}

pub fn backtest(
    ctx: &Context,
    inputs: &[PathBuf],
    methods: Option<Vec<Method>>,
    policy: Option<RefreshPolicy>,
    temperatures: Option<&Path>,
    max_origins: Option<usize>,
) -> Result<()> {
    let mut cfg = ctx.cfg.backtest_config();
    if let Some(m) = methods {
        cfg.methods = m;
    }
    if let Some(p) = policy {
        cfg.refresh_policy = p;
    }
    cfg.max_origins = max_origins.or(cfg.max_origins);
    let suite = inputs
        .iter()
        .map(|p| {
            let series = ctx.read_series(p)?;
            let temperatures = temperatures.map(|t| read_temperatures(t, &series)).transpose()?;
            Ok(BacktestInput { series, temperatures })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = harness::compare_methods(&suite, &cfg)?;
    harness::write_backtest(&report, ctx.out_dir()?, ctx.timings)?;
    for s in report.per_method.values() {
        println!("{:<14} median MSE {:.6}  mean {:.6}", s.method.as_str(), s.stats.p50, s.stats.mean);
    }
    Ok(())
}

pub fn compare(
    ctx: &Context,
    inputs: &[PathBuf],
    methods: Option<Vec<Method>>,
    max_origins: Option<usize>,
    with_search: bool,
) -> Result<()> {
    let suite: Vec<EnergySeries> = if inputs.is_empty() {
        synth::household_suite(ctx.cfg.synth.n_series, ctx.cfg.synth.days, ctx.cfg.seed)
    } else {
        inputs.iter().map(|p| ctx.read_series(p)).collect::<Result<_>>()?
    };
    let mut cfg = ctx.cfg.backtest_config();
    if let Some(m) = methods {
        cfg.methods = m;
    }
    cfg.max_origins = max_origins.or(cfg.max_origins);
    let inputs: Vec<BacktestInput> = suite.iter().cloned().map(Into::into).collect();
    let report = harness::compare_methods(&inputs, &cfg)?;
    let out = ctx.out_dir()?;
    harness::write_backtest(&report, out, ctx.timings)?;
    for s in report.per_method.values() {
        println!("{:<14} median MSE {:.6}  std {:.6}", s.method.as_str(), s.stats.p50, s.stats.std);
    }
    if with_search {
        let res = suite[0].resolution_minutes();
        let window = (cfg.train_window_hours * 60 / res) as usize;
        let cmp = harness::search_comparison(&suite, &ctx.cfg.search, Some(window))?;
        harness::write_search_comparison(&cmp, out, ctx.timings)?;
        println!("reduced vs full holdout MSE increase: median {:.3}%", cmp.increase.p50);
    }
    Ok(())
}

fn houses(cfg: &Config) -> Result<Vec<HouseScenario>> {
    let mut all = vec![etpsim::default_house(cfg.seed, &cfg.etp)?];
    all.extend(etpsim::winter_scenario_suite(cfg.seed, &cfg.etp)?);
    Ok(all)
}

pub fn simulate(ctx: &Context, validate: bool) -> Result<()> {
    let cfg = &ctx.cfg;
    let houses = houses(cfg)?;
    let out = ctx.out_dir()?;
    ctx.write_json("suite.json", &houses)?;
    let mut gt = csv::Writer::from_writer(ctx.create("ground_truth.csv")?);
    gt.write_record([
        "house", "outage_hours", "t0", "restoration", "duration_hours", "peak_kw", "energy_kwh", "recovered",
    ])?;
    for h in &houses {
        let horizon = h.horizon_hours();
        let clean = etpsim::simulate(&h.params, &h.outdoor, h.start, horizon, None, cfg.delta_minutes)?;
        let meter = File::create(out.join(format!("{}_meter.csv", h.name)))?;
        series::write_csv(&clean.meter, &cfg.csv, BufWriter::new(meter))?;

        let temps = h.outdoor.sample(h.start, cfg.delta_minutes, clean.meter.len())?;
        let mut w = csv::Writer::from_writer(ctx.create(&format!("{}_outdoor.csv", h.name))?);
        w.write_record(["timestamp", "temperature_c"])?;
        for (i, t) in temps.iter().enumerate() {
            w.write_record([format_timestamp(clean.meter.timestamp(i)), format!("{t}")])?;
        }
        w.flush()?;

        for o in &h.outages {
            let sim = etpsim::simulate(&h.params, &h.outdoor, h.start, horizon, Some(o), cfg.delta_minutes)?;
            let g = sim.ground_truth.ok_or(Error::CoverageGap(o.restoration()))?;
            gt.write_record([
                h.name.clone(),
                format!("{}", o.duration_hours),
                format_timestamp(o.t0),
                format_timestamp(g.restoration),
                format!("{}", g.duration_hours),
                format!("{}", g.peak_kw),
                format!("{}", g.energy_kwh),
                g.recovered.to_string(),
            ])?;
        }
    }
    gt.flush()?;
    println!("simulated {} houses", houses.len());

    if validate {
        let v = harness::etp_validation(&houses, &cfg.validation_config())?;
        harness::write_etp_validation(&v, out)?;
        println!(
            "duration band coverage: 25% {:.2}, 50% {:.2}, 75% {:.2}",
            v.coverage25, v.coverage50, v.coverage75
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_parsing() {
        assert_eq!(parse_order("2, 0,1").unwrap(), ArimaOrder::new(2, 0, 1));
        assert!(parse_order("2,0").is_err());
        assert!(parse_order("a,b,c").is_err());
    }

    #[test]
    fn t0_must_be_on_grid() {
        let s = EnergySeries::new(synth::default_start(), 15, vec![1.0; 96], "m").unwrap();
        assert_eq!(resolve_t0(&s, None).unwrap(), s.end_time());
        assert_eq!(
            resolve_t0(&s, Some("2024-01-01T06:00:00Z")).unwrap(),
            s.timestamp(24)
        );
        assert!(resolve_t0(&s, Some("2024-01-01T06:05:00Z")).is_err());
        assert!(resolve_t0(&s, Some("2024-01-03T00:00:00Z")).is_err());
        assert!(resolve_t0(&s, Some("yesterday")).is_err());
    }
}
