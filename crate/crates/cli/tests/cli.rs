mod common;

use std::fs;
use std::path::Path;

use clpu_core::arima::ArimaModel;
use clpu_core::clpu::PeakModel;
use clpu_core::etpsim::{self, WinterSuiteConfig};
use clpu_core::order_select::SearchResult;
use clpu_core::series::{ingest_csv, CsvSchema};
use clpu_core::synth;
use common::*;

// ARIMA(2,1,0) with phi = (0.5, -0.3), lifted well clear of zero.
fn ar2_file(dir: &Path) -> std::path::PathBuf {
    let x = synth::arima(&[0.5, -0.3], 1, &[], 7 * 96, 0);
    write_series(dir, "ar2.csv", &synth::as_energy(&x, 200.0, "ar2"))
}

fn mean_only_file(dir: &Path) -> std::path::PathBuf {
    let x = synth::white_noise(20 * 96, 5);
    let x: Vec<f64> = x.iter().map(|v| 0.1 * v).collect();
    write_series(dir, "flat.csv", &synth::as_energy(&x, 1.0, "flat"))
}

#[test]
fn analyze_writes_three_reports() {
    let dir = tempfile::tempdir().unwrap();
    let input = ar2_file(dir.path());
    let o = run(&["analyze", input.to_str().unwrap(), "--out", "an"], dir.path());
    ok(&o);
    for f in ["acf.csv", "pacf.csv", "adf.csv"] {
        assert!(dir.path().join("an").join(f).exists(), "{f}");
    }
    let (header, rows) = read_csv_rows(&dir.path().join("an/acf.csv"));
    assert_eq!(header, ["lag", "value", "ci"]);
    assert_eq!(rows.len(), 41);
}

#[test]
fn analyze_data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let s = clpu_core::EnergySeries::new(synth::default_start(), 15, vec![0.4; 7 * 96], "c").unwrap();
    let input = write_series(dir.path(), "const.csv", &s);
    let o = run(&["analyze", input.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("zero variance"), "{}", stderr(&o));

    let o = run(&["analyze", "missing.csv"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("No such file"), "{}", stderr(&o));
}

#[test]
fn select_order_on_ar2() {
    let dir = tempfile::tempdir().unwrap();
    let input = ar2_file(dir.path());
    let input = input.to_str().unwrap();
    // A single 48-step holdout is too noisy to pin the order of one short
    // file, so this check scores cells by AIC.
    let aic = [("CLPU_SEARCH__CRITERION", "aic")];
    ok(&run_env(&["select-order", input, "--out", "red"], dir.path(), &aic));
    let red: SearchResult = serde_json::from_str(&fs::read_to_string(dir.path().join("red/order.json")).unwrap()).unwrap();
    assert!(red.chosen.p >= 2 && red.chosen.d == 1, "{}", red.chosen);
    assert!(dir.path().join("red/cells.csv").exists());

    ok(&run_env(&["select-order", input, "--method", "full", "--out", "full"], dir.path(), &aic));
    let full: SearchResult = serde_json::from_str(&fs::read_to_string(dir.path().join("full/order.json")).unwrap()).unwrap();
    for c in &red.cells_evaluated {
        assert!(full.cells_evaluated.iter().any(|f| f.order == c.order), "{} missing", c.order);
    }
    assert!(full.cells_evaluated.len() > red.cells_evaluated.len());
}

#[test]
fn select_order_empty_file_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.csv"), "timestamp,energy_kwh\n").unwrap();
    assert_eq!(code(&run(&["select-order", "empty.csv"], dir.path())), 2);
}

#[test]
fn mean_only_duration_is_energy_over_peak() {
    let dir = tempfile::tempdir().unwrap();
    let input = mean_only_file(dir.path());
    let input = input.to_str().unwrap();
    ok(&run(&["fit", input, "--order", "0,0,0", "--out", "m"], dir.path()));
    ok(&run(
        &["clpu", input, "--model", "m/model.json", "--peak-model", "m/peak_model.json", "--r-max", "8", "--out", "c"],
        dir.path(),
    ));
    let model = ArimaModel::from_json(&fs::read_to_string(dir.path().join("m/model.json")).unwrap()).unwrap();
    let (header, rows) = read_csv_rows(&dir.path().join("c/clpu.csv"));
    assert_eq!(header[..7], ["t0", "r", "tau1", "E_o_hat_kwh", "P_clpu_kw", "t_C_hours", "tau2"]);
    assert_eq!(rows.len(), 8);
    for row in rows {
        let r: f64 = row[1].parse().unwrap();
        let e: f64 = row[3].parse().unwrap();
        let p: f64 = row[4].parse().unwrap();
        let t: f64 = row[5].parse().unwrap();
        assert!((t - e / p).abs() <= 1e-12 * t.abs());
        assert!((e - (r + 1.0) * model.intercept).abs() < 1e-9, "{e} vs {}", model.intercept);
    }
}

#[test]
fn persisted_model_forecasts_match_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let input = ar2_file(dir.path());
    let input_s = input.to_str().unwrap();
    ok(&run(&["fit", input_s, "--order", "2,1,0", "--out", "m"], dir.path()));
    ok(&run(&["forecast", input_s, "--model", "m/model.json", "--r-max", "12", "--out", "f"], dir.path()));
    let model = ArimaModel::from_json(&fs::read_to_string(dir.path().join("m/model.json")).unwrap()).unwrap();
    let s = ingest_csv(&input, &CsvSchema::default()).unwrap();
    let expect = model.forecast(s.values(), 13).unwrap();
    let (_, rows) = read_csv_rows(&dir.path().join("f/forecast.csv"));
    assert_eq!(rows.len(), 13);
    for (row, e) in rows.iter().zip(expect) {
        let v: f64 = row[2].parse().unwrap();
        assert!((v - e).abs() <= 1e-12, "{v} vs {e}");
    }
}

#[test]
fn estimation_failures_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let input = mean_only_file(dir.path());
    let input_s = input.to_str().unwrap();
    ok(&run(&["fit", input_s, "--order", "0,0,0", "--out", "m"], dir.path()));

    // Zeroed peak coefficients put the peak at the floor.
    let mut pm: PeakModel = serde_json::from_str(&fs::read_to_string(dir.path().join("m/peak_model.json")).unwrap()).unwrap();
    pm.varphi.iter_mut().for_each(|c| *c = 0.0);
    fs::write(dir.path().join("zero.json"), serde_json::to_string(&pm).unwrap()).unwrap();
    let o = run(&["clpu", input_s, "--model", "m/model.json", "--peak-model", "zero.json", "--out", "c"], dir.path());
    assert_eq!(code(&o), 4, "{}", stderr(&o));

    // A two-day file far after the peak history leaves the history stale.
    let late = synth::as_energy(&vec![0.05; 2 * 96], 1.0, "late");
    let late = clpu_core::EnergySeries::new(
        synth::default_start() + chrono::Duration::days(60),
        15,
        late.values().to_vec(),
        "late",
    )
    .unwrap();
    let late_path = write_series(dir.path(), "late.csv", &late);
    let o = run(
        &["clpu", late_path.to_str().unwrap(), "--model", "m/model.json", "--peak-model", "m/peak_model.json", "--out", "c"],
        dir.path(),
    );
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("days before"), "{}", stderr(&o));
}

#[test]
fn etp_fixture_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), FAST_CONFIG).unwrap();
    ok(&run(&["--config", "c.toml", "simulate", "--out", "sim"], dir.path()));
    let t0 = "2024-01-20T09:00:00Z";
    ok(&run(&["--config", "c.toml", "fit", "sim/default_meter.csv", "--t0", t0, "--out", "m"], dir.path()));
    ok(&run(
        &[
            "--config", "c.toml", "clpu", "sim/default_meter.csv", "--model", "m/model.json", "--peak-model",
            "m/peak_model.json", "--t0", t0, "--r-max", "8", "--out", "c",
        ],
        dir.path(),
    ));
    let (_, rows) = read_csv_rows(&dir.path().join("c/clpu.csv"));
    let durations: Vec<f64> = rows.iter().map(|r| r[5].parse().unwrap()).collect();
    assert!(durations.windows(2).all(|w| w[1] > w[0]));
    // Ground truth for the same outage, from the exported suite.
    let (_, gt) = read_csv_rows(&dir.path().join("sim/ground_truth.csv"));
    let sim_2h: f64 = gt.iter().find(|r| r[0] == "default" && r[1] == "2").unwrap()[4].parse().unwrap();
    assert!(sim_2h > 0.0 && durations[7] > 0.0);
    // Within a factor of two of the simulator for a 2-h outage.
    assert!(durations[7] / sim_2h > 0.5 && durations[7] / sim_2h < 2.0, "{} vs {sim_2h}", durations[7]);
}

#[test]
fn simulate_emits_ingestible_meter() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), FAST_CONFIG).unwrap();
    ok(&run(&["--config", "c.toml", "--seed", "4", "simulate", "--out", "sim"], dir.path()));
    let cfg = WinterSuiteConfig {
        n_houses: 1,
        days: 20,
        outage_hours: vec![1.0, 2.0],
        ..Default::default()
    };
    let house = etpsim::default_house(4, &cfg).unwrap();
    let sim = etpsim::simulate(&house.params, &house.outdoor, house.start, house.horizon_hours(), None, 15).unwrap();
    let read = ingest_csv(dir.path().join("sim/default_meter.csv"), &CsvSchema::default()).unwrap();
    assert_eq!(read.values(), sim.meter.values());
    assert_eq!(read.start_time(), sim.meter.start_time());
}

#[test]
fn compare_emits_table_layouts() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), FAST_CONFIG).unwrap();
    ok(&run(
        &["--config", "c.toml", "compare", "--methods", "arima_reduced,arima_full,hwes,random_walk", "--out", "cmp"],
        dir.path(),
    ));
    let (h2, rows) = read_csv_rows(&dir.path().join("cmp/mse_stats.csv"));
    assert_eq!(h2[2..11], ["min", "p10", "p25", "p50", "p75", "p90", "max", "std", "mean"]);
    assert_eq!(rows.len(), 8);
    for f in ["reduced_vs_full.csv", "search_increase.csv"] {
        let (h1, rows) = read_csv_rows(&dir.path().join("cmp").join(f));
        assert_eq!(h1[1..], ["min", "p25", "p50", "p75", "max", "avg"]);
        assert_eq!(rows.len(), 1);
    }
}

#[test]
fn backtest_arimax_needs_temperatures() {
    let dir = tempfile::tempdir().unwrap();
    let input = ar2_file(dir.path());
    let o = run(
        &["backtest", input.to_str().unwrap(), "--methods", "arimax", "--max-origins", "2"],
        dir.path(),
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let input = ar2_file(dir.path());
    let input = input.to_str().unwrap();
    fs::write(dir.path().join("bad.toml"), "[search]\nplimit = 2\n").unwrap();
    let o = run(&["--config", "bad.toml", "analyze", input], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("plimit"), "{}", stderr(&o));

    let o = run_env(&["analyze", input], dir.path(), &[("CLPU_SEARCH__CI_LEVEL", "2.0")]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let o = run(&["analyze"], dir.path());
    assert_eq!(code(&o), 1);
    let o = run(&["fit", input, "--order", "1,0"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn env_override_reaches_search() {
    let dir = tempfile::tempdir().unwrap();
    let input = ar2_file(dir.path());
    let input = input.to_str().unwrap();
    ok(&run_env(
        &["select-order", input, "--method", "full", "--out", "o"],
        dir.path(),
        &[("CLPU_SEARCH__P_LIMIT", "1"), ("CLPU_SEARCH__Q_LIMIT", "1")],
    ));
    let r: SearchResult = serde_json::from_str(&fs::read_to_string(dir.path().join("o/order.json")).unwrap()).unwrap();
    assert!(r.cells_evaluated.iter().all(|c| c.order.p <= 1 && c.order.q <= 1));
}
