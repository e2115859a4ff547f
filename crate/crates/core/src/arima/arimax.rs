//! ARIMA with lagged exogenous (temperature) inputs.
//!
//! The differenced, centred input `u` enters as `sum_{i=1..p} beta_i u_{t-i}`
//! on the right-hand side of the ARMA recursion. Because the filter is linear
//! in its inputs, the innovations are affine in `beta`; `beta` is therefore
//! concentrated out by weighted least squares at every likelihood evaluation
//! and only `(phi, theta)` are searched.

use chrono::{DateTime, Utc};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    cls_start, fit_with_start, kalman, neg_mean_loglik, prepare, split_params, start_point,
    ArimaModel, ArimaOrder, CumulativeForecast, FitOptions, StateSpace, DEFAULT_HORIZON_CAP,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::optim::nelder_mead;
use crate::series::{difference, integrate_forward};

/// Standardised design condition numbers above this are treated as collinear.
const COLLINEAR_CONDITION: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArimaxModel {
    #[serde(flatten)]
    pub base: ArimaModel,
    pub beta: Vec<f64>,
    pub exog_lags: usize,
    /// Mean of the differenced exogenous series, removed before fitting.
    pub exog_mean: f64,
    /// Lagged inputs were (nearly) collinear with lagged energy; such fits are
    /// reported as not converged.
    pub collinear: bool,
}

fn lagged_drive(u: &[f64], beta: &[f64], len: usize) -> Vec<f64> {
    (0..len)
        .map(|s| {
            beta.iter()
                .enumerate()
                .filter(|(i, _)| s > *i)
                .map(|(i, b)| b * u[s - 1 - i])
                .sum()
        })
        .collect()
}

fn is_flat(u: &[f64]) -> bool {
    let scale = u.iter().map(|v| v.abs()).fold(0.0, f64::max);
    scale <= 1e-12
}

fn design_condition(y: &[f64], u: &[f64], p: usize) -> f64 {
    let n = y.len();
    if n <= 2 * p + 1 {
        return f64::INFINITY;
    }
    let rows = n - p;
    let mut x = DMatrix::from_fn(rows, 2 * p, |r, c| {
        let t = r + p;
        if c < p {
            y[t - 1 - c]
        } else {
            u[t - 1 - (c - p)]
        }
    });
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    linalg::condition_number(&x)
}

struct Eval {
    v: Vec<f64>,
    beta: Vec<f64>,
    ssq: f64,
    log_f: f64,
}

fn evaluate(y: &[f64], u: &[f64], phi: &[f64], theta: &[f64]) -> Option<Eval> {
    let p = phi.len();
    let n = y.len();
    let ss = StateSpace::new(phi, theta);
    let gains = ss.gains(n)?;
    let base = kalman::run(&ss, &gains, y, None);
    let zeros = vec![0.0; n];
    let mut unit = vec![0.0; p];
    let responses: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            unit.iter_mut().for_each(|b| *b = 0.0);
            unit[i] = 1.0;
            let x = lagged_drive(u, &unit, n);
            kalman::run(&ss, &gains, &zeros, Some(&x)).v
        })
        .collect();
    // v(beta) = v0 + sum_i beta_i r_i ; minimise sum v^2 / F.
    let w: Vec<f64> = (0..n).map(|t| 1.0 / gains.f_at(t).sqrt()).collect();
    let xm = DMatrix::from_fn(n, p, |t, i| responses[i][t] * w[t]);
    let target = DVector::from_iterator(n, (0..n).map(|t| -base.v[t] * w[t]));
    let beta = match linalg::ols(&xm, &target) {
        Some(fit) => fit.coef,
        None => linalg::min_norm_lstsq(&xm, &target).0,
    };
    let v: Vec<f64> = (0..n)
        .map(|t| base.v[t] + beta.iter().zip(&responses).map(|(b, r)| b * r[t]).sum::<f64>())
        .collect();
    let ssq = super::weighted_ssq(&v, &gains);
    Some(Eval {
        log_f: gains.log_f_sum(n),
        v,
        beta,
        ssq,
    })
}

pub fn fit_arimax(
    values: &[f64],
    temps: &[f64],
    order: ArimaOrder,
    opts: &FitOptions,
) -> Result<ArimaxModel> {
    fit_arimax_with_start(values, temps, order, opts, None)
}

/// ARIMAX fit; `warm` seeds `phi ++ theta` as in [`fit_with_start`].
pub fn fit_arimax_with_start(
    values: &[f64],
    temps: &[f64],
    order: ArimaOrder,
    opts: &FitOptions,
    warm: Option<&[f64]>,
) -> Result<ArimaxModel> {
    if values.len() != temps.len() {
        return Err(Error::LengthMismatch {
            left: values.len(),
            right: temps.len(),
        });
    }
    opts.check(order, values.len())?;
    let ArimaOrder { p, d, q } = order;
    let prep_u = prepare(temps, d, opts.diff_mode)?;
    let u = prep_u.y;

    if p == 0 || is_flat(&u) {
        // No usable regressor: the univariate fit is the exact answer.
        let base = fit_with_start(values, order, opts, warm)?.model;
        return Ok(ArimaxModel {
            base,
            beta: vec![0.0; p],
            exog_lags: p,
            exog_mean: prep_u.mean,
            collinear: false,
        });
    }

    let prep = prepare(values, d, opts.diff_mode)?;
    let y = &prep.y;
    let n = y.len();
    let collinear = design_condition(y, &u, p) > COLLINEAR_CONDITION;

    let (phi0, theta0, _) = cls_start(y, p, q, Some(&u));
    let u0 = start_point(warm, p, q, (&phi0, &theta0));
    let objective = |x: &[f64]| {
        let (phi, theta) = split_params(x, p);
        match evaluate(y, &u, &phi, &theta) {
            Some(ev) => neg_mean_loglik(ev.ssq, ev.log_f, n),
            None => f64::INFINITY,
        }
    };
    let m = nelder_mead(objective, &u0, &opts.nelder_mead());
    let (phi, theta) = split_params(&m.x, p);
    let ev = evaluate(y, &u, &phi, &theta);
    let (beta, sigma2, loglik, residuals, ok) = match ev {
        Some(ev) => {
            let obj = neg_mean_loglik(ev.ssq, ev.log_f, n);
            let ok = obj.is_finite() && ev.beta.iter().all(|b| b.is_finite());
            let keep = opts.residual_window.max(q);
            (
                ev.beta,
                ev.ssq / n as f64,
                ok.then(|| -obj * n as f64),
                ev.v[ev.v.len().saturating_sub(keep)..].to_vec(),
                ok,
            )
        }
        None => (vec![0.0; p], 0.0, None, vec![0.0; q], false),
    };
    Ok(ArimaxModel {
        base: ArimaModel {
            order,
            phi,
            theta,
            intercept: prep.mean,
            sigma2: if ok { sigma2 } else { 0.0 },
            residuals,
            training_window: None,
            converged: m.converged && ok && !collinear,
            loglik,
            diff_mode: opts.diff_mode,
            n_obs: n,
            iterations: m.iterations,
        },
        beta,
        exog_lags: p,
        exog_mean: prep_u.mean,
        collinear,
    })
}

impl ArimaxModel {
    /// Forecasts given aligned temperature history and optional future
    /// temperatures (the last observed temperature is held when absent or
    /// too short).
    pub fn forecast(
        &self,
        history: &[f64],
        temps_history: &[f64],
        future_temps: Option<&[f64]>,
        steps: usize,
    ) -> Result<Vec<f64>> {
        if history.len() != temps_history.len() {
            return Err(Error::LengthMismatch {
                left: history.len(),
                right: temps_history.len(),
            });
        }
        let min = self.base.min_history().max(self.base.order.d + 1);
        if history.len() < min {
            return Err(Error::InsufficientHistory {
                len: history.len(),
                min,
            });
        }
        let d = self.base.order.d;
        let last = *temps_history.last().expect("history is non-empty");
        let mut all_temps = temps_history.to_vec();
        let future = future_temps.unwrap_or(&[]);
        all_temps.extend((0..steps).map(|h| future.get(h).copied().unwrap_or(last)));
        let u: Vec<f64> = difference(&all_temps, d, self.base.diff_mode)?
            .values
            .into_iter()
            .map(|v| v - self.exog_mean)
            .collect();
        let drive = lagged_drive(&u, &self.beta, u.len());
        let w = self.base.forecast_differenced(history, Some(&drive), steps)?;
        Ok(integrate_forward(history, &w, d, self.base.diff_mode)
            .into_iter()
            .map(|v| v.max(0.0))
            .collect())
    }

    pub fn forecast_cumulative(
        &self,
        history: &[f64],
        temps_history: &[f64],
        future_temps: Option<&[f64]>,
        t0: DateTime<Utc>,
        r_max: usize,
    ) -> Result<CumulativeForecast> {
        if r_max < 1 || r_max > DEFAULT_HORIZON_CAP {
            return Err(Error::InvalidHorizon {
                r_max,
                cap: DEFAULT_HORIZON_CAP,
            });
        }
        let per_step = self.forecast(history, temps_history, future_temps, r_max + 1)?;
        Ok(CumulativeForecast::from_steps(t0, per_step))
    }
}
