use clpu_core::stattests::pacf;
use clpu_core::synth;
use proptest::prelude::*;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Last coefficient of the least-squares AR(h) regression of the demeaned
/// series, zero-padded on both sides so every target row has a full set of
/// lags.
fn regression_pacf(x: &[f64], h: usize) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let mut z = vec![0.0; h];
    z.extend(x.iter().map(|v| v - mean));
    z.extend(std::iter::repeat_n(0.0, h));
    let rows: Vec<(f64, Vec<f64>)> = (h..z.len())
        .map(|t| (z[t], (1..=h).map(|l| z[t - l]).collect()))
        .collect();
    let mut xtx = vec![vec![0.0; h]; h];
    let mut xty = vec![0.0; h];
    for (y, lags) in &rows {
        for i in 0..h {
            xty[i] += lags[i] * y;
            for j in 0..h {
                xtx[i][j] += lags[i] * lags[j];
            }
        }
    }
    solve(xtx, xty)[h - 1]
}

/// Last coefficient of ordinary least squares on the unpadded sample, with
/// an intercept.
fn ols_pacf(x: &[f64], h: usize) -> f64 {
    let k = h + 1;
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for t in h..x.len() {
        let mut row = vec![1.0];
        row.extend((1..=h).map(|l| x[t - l]));
        for i in 0..k {
            xty[i] += row[i] * x[t];
            for j in 0..k {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    solve(xtx, xty)[h]
}

#[test]
fn durbin_levinson_matches_regression_n500() {
    for seed in 0..10 {
        let x = synth::arma(&[0.6, -0.2], &[0.4], 1.0, 500, seed);
        let p = pacf(&x, 10).unwrap();
        for h in 1..=10 {
            let r = regression_pacf(&x, h);
            assert!((p.values[h] - r).abs() <= 1e-6, "seed {seed} lag {h}: {} vs {r}", p.values[h]);
            // Unpadded OLS agrees only to sampling order 1/N.
            assert!((p.values[h] - ols_pacf(&x, h)).abs() <= 0.05);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn durbin_levinson_matches_regression(x in proptest::collection::vec(-100.0..100.0f64, 24..200)) {
        let p = pacf(&x, 10).unwrap();
        for h in 1..=10 {
            let r = regression_pacf(&x, h);
            prop_assert!((p.values[h] - r).abs() <= 1e-6 * (1.0 + r.abs()), "lag {}: {} vs {}", h, p.values[h], r);
        }
    }
}
