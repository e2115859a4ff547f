//! ARIMA(p, d, q) estimation and forecasting.
//!
//! The differenced series is centred on its mean and the remaining ARMA part
//! is fitted by exact Gaussian maximum likelihood: the innovations filter in
//! [`kalman`] evaluates the likelihood with the innovation variance
//! concentrated out, and a Nelder-Mead search runs over partial
//! autocorrelations so every candidate is stationary and invertible. The
//! search starts from conditional least squares (Hannan-Rissanen when an MA
//! part is present). A fit that hits the iteration cap or ends on a
//! non-finite likelihood is returned with `converged = false` instead of an
//! error; order selection treats that as divergence.

mod arimax;
mod kalman;
mod transform;

use std::fmt;

use chrono::{DateTime, Utc};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::series::{difference, integrate_forward, DiffMode, EnergySeries};
use crate::stattests;

pub use arimax::{fit_arimax, fit_arimax_with_start, ArimaxModel};
pub(crate) use kalman::StateSpace;

/// Largest outage horizon forecast by default (12 h at 15-minute resolution).
pub const DEFAULT_HORIZON_CAP: usize = 48;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub const fn new(p: usize, d: usize, q: usize) -> Self {
        Self { p, d, q }
    }

    /// Shortest series `fit` accepts for this order.
    pub fn min_fit_length(&self) -> usize {
        50.max(10 * (self.p + self.q + 1)) + self.d
    }
}

impl fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.p, self.d, self.q)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub max_iter: usize,
    pub xtol: f64,
    pub ftol: f64,
    pub p_limit: usize,
    pub q_limit: usize,
    pub d_limit: usize,
    pub diff_mode: DiffMode,
    /// Number of trailing one-step residuals kept on the model.
    pub residual_window: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            xtol: 1e-6,
            ftol: 1e-8,
            p_limit: 8,
            q_limit: 8,
            d_limit: 2,
            diff_mode: DiffMode::IteratedLag1,
            residual_window: 192,
        }
    }
}

impl FitOptions {
    fn nelder_mead(&self) -> NelderMeadOptions {
        NelderMeadOptions {
            max_iter: self.max_iter,
            xtol: self.xtol,
            ftol: self.ftol,
            ..Default::default()
        }
    }

    fn check(&self, order: ArimaOrder, len: usize) -> Result<()> {
        if order.p > self.p_limit || order.q > self.q_limit || order.d > self.d_limit {
            return Err(Error::OrderOutOfBounds {
                p: order.p,
                d: order.d,
                q: order.q,
                p_limit: self.p_limit,
                d_limit: self.d_limit,
                q_limit: self.q_limit,
            });
        }
        let min = order.min_fit_length();
        if len < min {
            return Err(Error::SeriesTooShort { len, min });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

/// A fitted (or hand-specified) ARIMA model.
///
/// `residuals` are the trailing one-step prediction errors on the training
/// data, `b(t) = x_t - x_hat_t`; they coincide on the level and differenced
/// scales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub intercept: f64,
    pub sigma2: f64,
    pub residuals: Vec<f64>,
    pub training_window: Option<TrainingWindow>,
    pub converged: bool,
    pub loglik: Option<f64>,
    pub diff_mode: DiffMode,
    pub n_obs: usize,
    pub iterations: usize,
}

/// Per-step and cumulative forecasts from an outage start `t0`.
///
/// `energy_kwh[r] = per_step[0] + ... + per_step[r]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CumulativeForecast {
    pub t0: DateTime<Utc>,
    pub horizon_steps: Vec<usize>,
    pub energy_kwh: Vec<f64>,
    pub per_step: Vec<f64>,
}

impl CumulativeForecast {
    pub(crate) fn from_steps(t0: DateTime<Utc>, per_step: Vec<f64>) -> Self {
        let mut acc = 0.0;
        let energy_kwh = per_step
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        Self {
            t0,
            horizon_steps: (0..per_step.len()).collect(),
            energy_kwh,
            per_step,
        }
    }

    pub fn r_max(&self) -> usize {
        self.per_step.len() - 1
    }
}

/// Result of a fit together with the optimiser's best-objective trace
/// (negative mean log-likelihood per iteration).
#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub model: ArimaModel,
    pub trace: Vec<f64>,
}

/// Centred differenced training data.
pub(crate) struct Prepared {
    pub y: Vec<f64>,
    pub mean: f64,
}

pub(crate) fn prepare(values: &[f64], d: usize, mode: DiffMode) -> Result<Prepared> {
    let w = difference(values, d, mode)?.values;
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    Ok(Prepared {
        y: w.iter().map(|v| v - mean).collect(),
        mean,
    })
}

pub(crate) fn split_params(u: &[f64], p: usize) -> (Vec<f64>, Vec<f64>) {
    (transform::constrain_ar(&u[..p]), transform::constrain_ma(&u[p..]))
}

pub(crate) fn unconstrain(phi: &[f64], theta: &[f64]) -> Option<Vec<f64>> {
    let mut u = transform::unconstrain_ar(phi)?;
    u.extend(transform::unconstrain_ma(theta)?);
    Some(u)
}

/// Weighted innovation sum of squares and `sum ln F` turned into the
/// negative mean concentrated log-likelihood.
pub(crate) fn neg_mean_loglik(ssq: f64, log_f: f64, n: usize) -> f64 {
    let nf = n as f64;
    let sigma2 = ssq / nf;
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return f64::INFINITY;
    }
    0.5 * (LN_2PI + 1.0 + sigma2.ln()) + 0.5 * log_f / nf
}

pub(crate) fn weighted_ssq(v: &[f64], gains: &kalman::Gains) -> f64 {
    v.iter().enumerate().map(|(t, e)| e * e / gains.f_at(t)).sum()
}

struct Evaluation {
    v: Vec<f64>,
    ssq: f64,
    log_f: f64,
}

fn evaluate(y: &[f64], phi: &[f64], theta: &[f64]) -> Option<Evaluation> {
    let ss = StateSpace::new(phi, theta);
    let gains = ss.gains(y.len())?;
    let run = kalman::run(&ss, &gains, y, None);
    let ssq = weighted_ssq(&run.v, &gains);
    Some(Evaluation {
        log_f: gains.log_f_sum(y.len()),
        v: run.v,
        ssq,
    })
}

/// Conditional least-squares starting values for `(phi, theta)` on a
/// centred, differenced series. With `exog` lags, their columns join the
/// regression and the fitted `beta` is returned as well.
pub(crate) fn cls_start(
    y: &[f64],
    p: usize,
    q: usize,
    exog: Option<&[f64]>,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = y.len();
    let n_exog = if exog.is_some() { p } else { 0 };
    let fallback = (vec![0.0; p], vec![0.0; q], vec![0.0; n_exog]);
    if p + q == 0 {
        return fallback;
    }
    let e: Vec<f64> = if q > 0 {
        // Hannan-Rissanen: innovations proxied by a long autoregression.
        let m = (p + q + 5).max(10).min(n / 4);
        match stattests::yule_walker(y, m) {
            Ok(a) => (0..n)
                .map(|t| {
                    if t < m {
                        0.0
                    } else {
                        y[t] - a.iter().enumerate().map(|(i, c)| c * y[t - 1 - i]).sum::<f64>()
                    }
                })
                .collect(),
            Err(_) => return fallback,
        }
    } else {
        Vec::new()
    };
    let start = if q > 0 { (p + q + 5).max(10).min(n / 4) + q } else { p };
    if n <= start + p + q + n_exog + 1 {
        return fallback;
    }
    let rows = n - start;
    let cols = p + q + n_exog;
    let x = DMatrix::from_fn(rows, cols, |r, c| {
        let t = r + start;
        if c < p {
            y[t - 1 - c]
        } else if c < p + q {
            e[t - 1 - (c - p)]
        } else {
            exog.map_or(0.0, |u| u[t - 1 - (c - p - q)])
        }
    });
    let target = DVector::from_iterator(rows, (start..n).map(|t| y[t]));
    let coef = match linalg::ols(&x, &target) {
        Some(fit) => fit.coef,
        None => linalg::min_norm_lstsq(&x, &target).0,
    };
    let phi = transform::shrink_to_stationary(&coef[..p]);
    let neg_theta: Vec<f64> = coef[p..p + q].iter().map(|t| -t).collect();
    let theta = transform::shrink_to_stationary(&neg_theta)
        .into_iter()
        .map(|t| -t)
        .collect();
    (phi, theta, coef[p + q..].to_vec())
}

/// Conditional least-squares estimates used as the optimiser's start.
pub fn cls_estimates(values: &[f64], order: ArimaOrder, mode: DiffMode) -> Result<(Vec<f64>, Vec<f64>)> {
    let prep = prepare(values, order.d, mode)?;
    let (phi, theta, _) = cls_start(&prep.y, order.p, order.q, None);
    Ok((phi, theta))
}

/// Starting point in optimiser coordinates: the warm start when it is
/// admissible, otherwise the CLS estimate.
pub(crate) fn start_point(
    warm: Option<&[f64]>,
    p: usize,
    q: usize,
    cls: (&[f64], &[f64]),
) -> Vec<f64> {
    if let Some(w) = warm {
        if w.len() == p + q {
            if let Some(u) = unconstrain(&w[..p], &w[p..]) {
                if u.iter().all(|v| v.is_finite()) {
                    return u;
                }
            }
        }
    }
    unconstrain(cls.0, cls.1).unwrap_or_else(|| vec![0.0; p + q])
}

fn tail(v: &[f64], n: usize) -> Vec<f64> {
    v[v.len().saturating_sub(n)..].to_vec()
}

/// Fits `order` to raw values.
pub fn fit(values: &[f64], order: ArimaOrder, opts: &FitOptions) -> Result<ArimaModel> {
    Ok(fit_with_start(values, order, opts, None)?.model)
}

/// Fits `order` to an energy series and records its training window.
pub fn fit_series(series: &EnergySeries, order: ArimaOrder, opts: &FitOptions) -> Result<ArimaModel> {
    let mut model = fit(series.values(), order, opts)?;
    model.training_window = Some(TrainingWindow {
        start: series.start_time(),
        end: series.end_time(),
    });
    Ok(model)
}

/// Fits `order`, optionally starting the search from `warm = phi ++ theta`.
pub fn fit_with_start(
    values: &[f64],
    order: ArimaOrder,
    opts: &FitOptions,
    warm: Option<&[f64]>,
) -> Result<FitOutcome> {
    opts.check(order, values.len())?;
    let ArimaOrder { p, d, q } = order;
    let prep = prepare(values, d, opts.diff_mode)?;
    let y = &prep.y;
    let n = y.len();

    let (phi, theta, converged, iterations, trace) = if p + q == 0 {
        (Vec::new(), Vec::new(), true, 0, Vec::new())
    } else {
        let (phi0, theta0, _) = cls_start(y, p, q, None);
        let u0 = start_point(warm, p, q, (&phi0, &theta0));
        let objective = |u: &[f64]| {
            let (phi, theta) = split_params(u, p);
            match evaluate(y, &phi, &theta) {
                Some(ev) => neg_mean_loglik(ev.ssq, ev.log_f, n),
                None => f64::INFINITY,
            }
        };
        let m = nelder_mead(objective, &u0, &opts.nelder_mead());
        let (phi, theta) = split_params(&m.x, p);
        (phi, theta, m.converged, m.iterations, m.trace)
    };

    let model = match evaluate(y, &phi, &theta) {
        Some(ev) => {
            let obj = neg_mean_loglik(ev.ssq, ev.log_f, n);
            let sigma2 = ev.ssq / n as f64;
            let ok = obj.is_finite() && sigma2 > 0.0;
            ArimaModel {
                order,
                phi,
                theta,
                intercept: prep.mean,
                sigma2: if ok { sigma2 } else { 0.0 },
                residuals: tail(&ev.v, opts.residual_window.max(q)),
                training_window: None,
                converged: converged && ok,
                loglik: ok.then(|| -obj * n as f64),
                diff_mode: opts.diff_mode,
                n_obs: n,
                iterations,
            }
        }
        None => ArimaModel {
            order,
            phi,
            theta,
            intercept: prep.mean,
            sigma2: 0.0,
            residuals: vec![0.0; q],
            training_window: None,
            converged: false,
            loglik: None,
            diff_mode: opts.diff_mode,
            n_obs: n,
            iterations,
        },
    };
    Ok(FitOutcome { model, trace })
}

impl ArimaModel {
    /// A model with given coefficients, not fitted to data.
    pub fn with_coefficients(
        order: ArimaOrder,
        phi: Vec<f64>,
        theta: Vec<f64>,
        intercept: f64,
        sigma2: f64,
    ) -> Result<Self> {
        if phi.len() != order.p || theta.len() != order.q {
            return Err(Error::InvalidParams(format!(
                "order {order} needs {} AR and {} MA coefficients, got {} and {}",
                order.p,
                order.q,
                phi.len(),
                theta.len()
            )));
        }
        if !transform::is_stationary(&phi) || !transform::is_invertible(&theta) {
            return Err(Error::InvalidParams(
                "AR part must be stationary and MA part invertible".into(),
            ));
        }
        Ok(Self {
            order,
            phi,
            theta,
            intercept,
            sigma2,
            residuals: vec![0.0; order.q],
            training_window: None,
            converged: true,
            loglik: None,
            diff_mode: DiffMode::IteratedLag1,
            n_obs: 0,
            iterations: 0,
        })
    }

    /// Fewest history values `forecast` accepts.
    pub fn min_history(&self) -> usize {
        self.order.d + self.order.p + self.order.q
    }

    fn check_history(&self, len: usize) -> Result<()> {
        let min = self.min_history();
        if len < min {
            return Err(Error::InsufficientHistory { len, min });
        }
        Ok(())
    }

    /// Forecasts of the differenced series. `drive` (length `n_w + steps`)
    /// adds an exogenous term to the first state component at each step.
    pub(crate) fn forecast_differenced(
        &self,
        history: &[f64],
        drive: Option<&[f64]>,
        steps: usize,
    ) -> Result<Vec<f64>> {
        let d = self.order.d;
        let y: Vec<f64> = if history.len() > d {
            difference(history, d, self.diff_mode)?
                .values
                .into_iter()
                .map(|w| w - self.intercept)
                .collect()
        } else {
            Vec::new()
        };
        let ss = StateSpace::new(&self.phi, &self.theta);
        let gains = ss
            .gains(y.len().max(1))
            .ok_or_else(|| Error::InvalidParams("AR polynomial is not stationary".into()))?;
        let run = kalman::run(&ss, &gains, &y, drive);
        let mut a = run.next_state;
        let mut next = vec![0.0; a.len()];
        let mut out = Vec::with_capacity(steps);
        for h in 0..steps {
            if let Some(x) = drive {
                a[0] += x[y.len() + h];
            }
            out.push(a[0] + self.intercept);
            ss.t_vec(&a, &mut next);
            std::mem::swap(&mut a, &mut next);
        }
        Ok(out)
    }

    /// `steps` per-interval forecasts following `history`, clamped at 0.
    pub fn forecast(&self, history: &[f64], steps: usize) -> Result<Vec<f64>> {
        self.check_history(history.len())?;
        let w = self.forecast_differenced(history, None, steps)?;
        Ok(integrate_forward(history, &w, self.order.d, self.diff_mode)
            .into_iter()
            .map(|v| v.max(0.0))
            .collect())
    }

    /// Cumulative energy for `r = 0..=r_max` intervals from `t0`, where
    /// `history` ends with the interval just before `t0`.
    pub fn forecast_cumulative(
        &self,
        history: &[f64],
        t0: DateTime<Utc>,
        r_max: usize,
    ) -> Result<CumulativeForecast> {
        self.forecast_cumulative_capped(history, t0, r_max, DEFAULT_HORIZON_CAP)
    }

    pub fn forecast_cumulative_capped(
        &self,
        history: &[f64],
        t0: DateTime<Utc>,
        r_max: usize,
        cap: usize,
    ) -> Result<CumulativeForecast> {
        if r_max < 1 || r_max > cap {
            return Err(Error::InvalidHorizon { r_max, cap });
        }
        let per_step = self.forecast(history, r_max + 1)?;
        Ok(CumulativeForecast::from_steps(t0, per_step))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Mean squared difference.
pub fn mse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::Empty);
    }
    Ok(actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (p - a) * (p - a))
        .sum::<f64>()
        / actual.len() as f64)
}
