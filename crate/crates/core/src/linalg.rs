//! Least-squares helpers over nalgebra.

use nalgebra::{DMatrix, DVector};

pub(crate) struct Ols {
    pub coef: Vec<f64>,
    pub rss: f64,
    /// Diagonal of (X'X)^-1.
    pub xtx_inv_diag: Vec<f64>,
}

/// Full-rank OLS through a QR factorisation. `None` when `x` is rank deficient.
pub(crate) fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<Ols> {
    let (n, k) = x.shape();
    if n < k || k == 0 {
        return None;
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let rmax = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..k).any(|i| r[(i, i)].abs() <= 1e-10 * rmax.max(1e-300)) {
        return None;
    }
    let qty = qr.q().transpose() * y;
    let beta = r.solve_upper_triangular(&qty)?;
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(k, k))?;
    let xtx_inv_diag = (0..k)
        .map(|i| (0..k).map(|j| r_inv[(i, j)] * r_inv[(i, j)]).sum())
        .collect();
    let resid = y - x * &beta;
    Some(Ols {
        coef: beta.iter().copied().collect(),
        rss: resid.norm_squared(),
        xtx_inv_diag,
    })
}

/// Minimum-norm least squares via SVD; returns (coefficients, numerical rank).
pub(crate) fn min_norm_lstsq(x: &DMatrix<f64>, y: &DVector<f64>) -> (Vec<f64>, usize) {
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = smax * 1e-10 * (x.nrows().max(x.ncols()) as f64);
    let rank = svd.singular_values.iter().filter(|s| **s > eps).count();
    match svd.solve(y, eps) {
        Ok(b) => (b.iter().copied().collect(), rank),
        Err(_) => (vec![0.0; x.ncols()], 0),
    }
}

/// Ratio of extreme singular values (infinite when rank deficient).
pub(crate) fn condition_number(x: &DMatrix<f64>) -> f64 {
    let sv = x.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if smin <= 0.0 || !smin.is_finite() {
        f64::INFINITY
    } else {
        smax / smin
    }
}
