use clpu_core::arima::{self, FitOptions};
use clpu_core::clpu::{estimate_clpu, fit_peak_model, ClpuOptions};
use clpu_core::series::daily_peaks;
use clpu_core::stattests::acf;
use clpu_core::{synth, ArimaOrder, EnergySeries};

#[test]
fn well_specified_residuals_are_white() {
    let n = 1000;
    let opts = FitOptions {
        residual_window: n,
        ..Default::default()
    };
    // Pooled over (run, lag): requiring all ten lags inside a 95% band in one
    // run only happens about 60% of the time even for iid residuals.
    let inside: usize = (0..50)
        .map(|seed| {
            let x = synth::arma(&[0.6], &[0.3], 1.0, n, seed);
            let m = arima::fit(&x, ArimaOrder::new(1, 0, 1), &opts).unwrap();
            let c = acf(&m.residuals, 10).unwrap();
            let half = 1.96 / (m.residuals.len() as f64).sqrt();
            (1..=10).filter(|&h| c.values[h].abs() <= half).count()
        })
        .sum();
    assert!(inside >= 400, "{inside}/500");
}

#[test]
fn mean_only_forecast_is_unbiased() {
    let n = 20_000;
    let x: Vec<f64> = synth::white_noise(n, 9).iter().map(|v| 3.0 + v).collect();
    let m = arima::fit(&x[..n / 2], ArimaOrder::new(0, 0, 0), &FitOptions::default()).unwrap();
    let f = m.forecast(&x[..n / 2], 1).unwrap()[0];
    let held = &x[n / 2..];
    let bias = held.iter().map(|v| f - v).sum::<f64>() / held.len() as f64;
    assert!(bias.abs() <= 3.0 / (held.len() as f64).sqrt() + 3.0 / ((n / 2) as f64).sqrt(), "{bias}");
}

fn household(days: usize, seed: u64) -> EnergySeries {
    synth::household_series(&synth::HouseholdProfile::default(), days, seed)
}

#[test]
fn energy_scales_with_history() {
    let s = household(8, 5);
    let order = ArimaOrder::new(2, 0, 1);
    let t0 = s.end_time();
    let base = arima::fit(s.values(), order, &FitOptions::default()).unwrap();
    let e = base.forecast_cumulative(s.values(), t0, 48).unwrap();
    for k in [0.5, 3.0] {
        let scaled = s.scaled(k).unwrap();
        let m = arima::fit(scaled.values(), order, &FitOptions::default()).unwrap();
        let ek = m.forecast_cumulative(scaled.values(), t0, 48).unwrap();
        for (a, b) in e.energy_kwh.iter().zip(&ek.energy_kwh) {
            assert!((k * a - b).abs() <= 1e-6 * (1.0 + b.abs()), "k={k}: {} vs {b}", k * a);
        }
    }
}

#[test]
fn durations_grow_and_bands_nest() {
    let s = household(24, 6);
    let t0 = s.end_time();
    let model = arima::fit(&s.values()[s.len() - 672..], ArimaOrder::new(1, 0, 1), &FitOptions::default()).unwrap();
    let peaks = fit_peak_model(&daily_peaks(&s).unwrap(), 7).unwrap();
    let est = estimate_clpu(&model, &peaks, s.values(), t0, 15, 48, &ClpuOptions::default()).unwrap();
    let mut last = 0.0;
    for e in &est.entries {
        assert!(e.t_c_hat >= last);
        last = e.t_c_hat;
        assert!((e.t_c_hat * e.p_clpu_hat - e.e_o_hat).abs() <= 1e-12 * e.e_o_hat);
        let b = e.ci_bands.unwrap();
        assert!(b.p75.lo <= b.p50.lo && b.p50.lo <= b.p25.lo);
        assert!(b.p25.hi <= b.p50.hi && b.p50.hi <= b.p75.hi);
        assert!(b.p25.contains(e.t_c_hat));
    }
}
