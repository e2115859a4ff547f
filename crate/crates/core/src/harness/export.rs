//! CSV report writers. Wall-clock columns are only filled when `timings` is
//! set, so that repeated runs produce identical files.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use super::{BacktestReport, EtpValidation, Method, SearchComparison, Table1Stats, Table2Stats};
use crate::error::{Error, Result};
use crate::series::format_timestamp;

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn finish(mut w: csv::Writer<BufWriter<File>>) -> Result<()> {
    w.flush().map_err(|e| Error::io("<csv writer>", e))
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn millis(d: std::time::Duration, timings: bool) -> String {
    if timings {
        format!("{:.3}", d.as_secs_f64() * 1e3)
    } else {
        String::new()
    }
}

fn write_table1(dir: &Path, name: &str, label: &str, rows: &[(String, Table1Stats)]) -> Result<()> {
    let mut w = writer(dir, name)?;
    let mut header = vec![label];
    header.extend(Table1Stats::HEADER);
    w.write_record(&header)?;
    for (key, s) in rows {
        let mut rec = vec![key.clone()];
        rec.extend(s.as_array().map(num));
        w.write_record(&rec)?;
    }
    finish(w)
}

/// Writes `mse_stats.csv` (method rows in the nine-statistic layout),
/// `per_series.csv` (sorted by decreasing reduced-search MSE when present),
/// `origins.csv`, `cumulative_error.csv` and, when both ARIMA searches ran,
/// `reduced_vs_full.csv` in the six-statistic layout.
pub fn write_backtest(report: &BacktestReport, dir: &Path, timings: bool) -> Result<()> {
    ensure_dir(dir)?;

    let mut w = writer(dir, "mse_stats.csv")?;
    let mut header = vec!["method", "metric"];
    header.extend(Table2Stats::HEADER);
    header.push("n_series");
    header.push("wall_ms");
    w.write_record(&header)?;
    for s in report.per_method.values() {
        for (metric, stats) in [("cumulative_sq_error", &s.stats), ("step_mse", &s.step_mse_stats)] {
            let mut rec = vec![s.method.to_string(), metric.to_string()];
            rec.extend(stats.as_array().map(num));
            rec.push(s.n_series.to_string());
            rec.push(millis(s.wall_time, timings));
            w.write_record(&rec)?;
        }
    }
    finish(w)?;

    let reduced_mse = |id: &str| {
        report
            .result(id, Method::ArimaReduced)
            .map(|r| r.mse)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let mut order: Vec<usize> = (0..report.per_series.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&report.per_series[a], &report.per_series[b]);
        reduced_mse(&rb.series_id).total_cmp(&reduced_mse(&ra.series_id)).then(a.cmp(&b))
    });
    let mut w = writer(dir, "per_series.csv")?;
    w.write_record(["series_id", "method", "mse", "step_mse", "origins", "refreshes", "divergences", "wall_ms"])?;
    for &i in &order {
        let r = &report.per_series[i];
        w.write_record([
            r.series_id.clone(),
            r.method.to_string(),
            num(r.mse),
            num(r.step_mse),
            r.origins.len().to_string(),
            r.refreshes.to_string(),
            r.divergences.to_string(),
            millis(r.wall_time, timings),
        ])?;
    }
    finish(w)?;

    let mut w = writer(dir, "origins.csv")?;
    w.write_record([
        "series_id", "method", "t", "order", "refreshed", "diverged", "forecast_kwh", "actual_kwh", "sq_error",
        "step_mse", "cumulative_error",
    ])?;
    for r in &report.per_series {
        for (o, cum) in r.origins.iter().zip(r.cumulative_error()) {
            w.write_record([
                r.series_id.clone(),
                r.method.to_string(),
                format_timestamp(o.t),
                o.order.map(|o| o.to_string()).unwrap_or_default(),
                o.refreshed.to_string(),
                o.diverged.to_string(),
                num(o.forecast_kwh),
                num(o.actual_kwh),
                num(o.sq_error),
                num(o.step_mse),
                num(cum),
            ])?;
        }
    }
    finish(w)?;

    let mut w = writer(dir, "cumulative_error.csv")?;
    w.write_record(["method", "origin", "mean_cumulative_error"])?;
    for s in report.per_method.values() {
        for (k, v) in s.mean_cumulative_error.iter().enumerate() {
            w.write_record([s.method.to_string(), k.to_string(), num(*v)])?;
        }
    }
    finish(w)?;

    let inc = report.reduced_vs_full_increase();
    if !inc.is_empty() {
        let values: Vec<f64> = inc.iter().map(|(_, v)| *v).collect();
        write_table1(
            dir,
            "reduced_vs_full.csv",
            "metric",
            &[("mse_increase_pct".to_string(), Table1Stats::from_values(&values))],
        )?;
    }
    Ok(())
}

/// Writes `search_comparison.csv` (one row per series) and
/// `search_increase.csv` in the six-statistic layout.
pub fn write_search_comparison(cmp: &SearchComparison, dir: &Path, timings: bool) -> Result<()> {
    ensure_dir(dir)?;
    let mut w = writer(dir, "search_comparison.csv")?;
    w.write_record([
        "series_id", "full_order", "reduced_order", "full_criterion", "reduced_criterion", "increase_pct",
        "full_cells", "reduced_cells", "full_ms", "reduced_ms",
    ])?;
    for r in &cmp.rows {
        w.write_record([
            r.series_id.clone(),
            r.full_order.to_string(),
            r.reduced_order.to_string(),
            num(r.full_criterion),
            num(r.reduced_criterion),
            num(r.increase_pct),
            r.full_cells.to_string(),
            r.reduced_cells.to_string(),
            millis(r.full_time, timings),
            millis(r.reduced_time, timings),
        ])?;
    }
    finish(w)?;
    write_table1(
        dir,
        "search_increase.csv",
        "metric",
        &[("holdout_mse_increase_pct".to_string(), cmp.increase)],
    )
}

/// Writes `etp_cells.csv`, `etp_houses.csv` and `etp_lengths.csv`.
pub fn write_etp_validation(v: &EtpValidation, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    let mut w = writer(dir, "etp_cells.csv")?;
    w.write_record([
        "house", "outage_hours", "r", "e_o_hat_kwh", "t_c_hat_hours", "band25_lo", "band25_hi", "band50_lo",
        "band50_hi", "band75_lo", "band75_hi", "simulated_hours", "simulated_peak_kw", "recovered", "rel_error",
        "in_band50",
    ])?;
    for c in v.cells() {
        w.write_record([
            c.house.clone(),
            num(c.outage_hours),
            c.r.to_string(),
            num(c.e_o_hat),
            num(c.t_c_hat),
            num(c.band25.lo),
            num(c.band25.hi),
            num(c.band50.lo),
            num(c.band50.hi),
            num(c.band75.lo),
            num(c.band75.hi),
            num(c.simulated_hours),
            num(c.simulated_peak_kw),
            c.recovered.to_string(),
            num(c.rel_error),
            c.in_band50.to_string(),
        ])?;
    }
    finish(w)?;

    let mut w = writer(dir, "etp_houses.csv")?;
    w.write_record(["house", "order", "peak_forecast_kw", "simulated_peak_kw", "peak_rel_error"])?;
    for h in &v.houses {
        w.write_record([
            h.house.clone(),
            h.order.to_string(),
            num(h.peak_forecast_kw),
            num(h.simulated_peak_kw),
            num(h.peak_rel_error),
        ])?;
    }
    finish(w)?;

    let mut w = writer(dir, "etp_lengths.csv")?;
    w.write_record(["outage_hours", "mean_abs_rel_error", "coverage50"])?;
    for l in &v.per_length {
        w.write_record([num(l.outage_hours), num(l.mean_abs_rel_error), num(l.coverage50)])?;
    }
    finish(w)
}
