//! Innovations filter for zero-mean ARMA(p, q) in Harvey's state-space form.
//!
//! State dimension `r = max(p, q + 1)`; `y_t = a_t[0]`,
//! `a_{t+1} = T a_t + R e_{t+1}` with `T` the companion matrix carrying `phi`
//! in its first column and `R = (1, theta_1, ..., theta_{r-1})`. The
//! innovation variance is normalised to 1 and concentrated out afterwards.

/// Gains settle when the covariance update moves by less than this.
const STEADY_TOL: f64 = 1e-11;

#[derive(Clone, Debug)]
pub(crate) struct StateSpace {
    r: usize,
    phi: Vec<f64>,
    rvec: Vec<f64>,
}

impl StateSpace {
    pub fn new(phi: &[f64], theta: &[f64]) -> Self {
        let r = phi.len().max(theta.len() + 1);
        let mut p = vec![0.0; r];
        p[..phi.len()].copy_from_slice(phi);
        let mut rv = vec![0.0; r];
        rv[0] = 1.0;
        rv[1..=theta.len()].copy_from_slice(theta);
        Self { r, phi: p, rvec: rv }
    }

    pub fn dim(&self) -> usize {
        self.r
    }

    /// `out = T a`.
    pub fn t_vec(&self, a: &[f64], out: &mut [f64]) {
        let r = self.r;
        for i in 0..r {
            out[i] = self.phi[i] * a[0] + if i + 1 < r { a[i + 1] } else { 0.0 };
        }
    }

    /// `T M T'` for a symmetric row-major `M`.
    fn tmt(&self, m: &[f64], out: &mut [f64]) {
        let r = self.r;
        // tm = T M
        let mut tm = vec![0.0; r * r];
        for i in 0..r {
            for j in 0..r {
                tm[i * r + j] = self.phi[i] * m[j] + if i + 1 < r { m[(i + 1) * r + j] } else { 0.0 };
            }
        }
        // out = tm T' ; (tm T')[i][j] = sum_k tm[i][k] T[j][k] = tm[i][0] phi[j] + tm[i][j+1]
        for i in 0..r {
            for j in 0..r {
                out[i * r + j] =
                    tm[i * r] * self.phi[j] + if j + 1 < r { tm[i * r + j + 1] } else { 0.0 };
            }
        }
    }

    fn dense_t(&self) -> Vec<f64> {
        let r = self.r;
        let mut t = vec![0.0; r * r];
        for i in 0..r {
            t[i * r] = self.phi[i];
            if i + 1 < r {
                t[i * r + i + 1] = 1.0;
            }
        }
        t
    }

    /// Stationary state covariance `P = T P T' + R R'` by the doubling algorithm.
    /// `None` if the iteration does not settle (non-stationary `phi`).
    pub fn stationary_cov(&self) -> Option<Vec<f64>> {
        let r = self.r;
        let mut p: Vec<f64> = (0..r * r)
            .map(|k| self.rvec[k / r] * self.rvec[k % r])
            .collect();
        let mut a = self.dense_t();
        let mut tmp = vec![0.0; r * r];
        for _ in 0..100 {
            // tmp = A P A'
            let ap = matmul(&a, &p, r);
            let apa = matmul_bt(&ap, &a, r);
            let mut change = 0.0f64;
            let mut scale = 0.0f64;
            for k in 0..r * r {
                tmp[k] = p[k] + apa[k];
                change = change.max(apa[k].abs());
                scale = scale.max(tmp[k].abs());
            }
            std::mem::swap(&mut p, &mut tmp);
            if !scale.is_finite() {
                return None;
            }
            if change <= 1e-15 * scale.max(1.0) {
                return Some(p);
            }
            a = matmul(&a, &a, r);
        }
        None
    }

    /// Kalman gains and innovation variances for `n` observations.
    pub fn gains(&self, n: usize) -> Option<Gains> {
        let r = self.r;
        let mut p = self.stationary_cov()?;
        let rr: Vec<f64> = (0..r * r)
            .map(|k| self.rvec[k / r] * self.rvec[k % r])
            .collect();
        let mut k_seq = Vec::new();
        let mut f_seq = Vec::new();
        let mut next = vec![0.0; r * r];
        let mut tp0 = vec![0.0; r];
        for _ in 0..n {
            let f = p[0];
            if !(f.is_finite() && f > 0.0) {
                return None;
            }
            let col: Vec<f64> = (0..r).map(|i| p[i * r]).collect();
            self.t_vec(&col, &mut tp0);
            let k: Vec<f64> = tp0.iter().map(|v| v / f).collect();
            self.tmt(&p, &mut next);
            let mut change = 0.0f64;
            for i in 0..r {
                for j in 0..r {
                    let idx = i * r + j;
                    next[idx] += rr[idx] - k[i] * k[j] * f;
                    change = change.max((next[idx] - p[idx]).abs());
                }
            }
            k_seq.push(k);
            f_seq.push(f);
            std::mem::swap(&mut p, &mut next);
            if change <= STEADY_TOL {
                break;
            }
        }
        Some(Gains {
            k: k_seq,
            f: f_seq,
        })
    }
}

fn matmul(a: &[f64], b: &[f64], r: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * r];
    for i in 0..r {
        for k in 0..r {
            let aik = a[i * r + k];
            if aik != 0.0 {
                for j in 0..r {
                    out[i * r + j] += aik * b[k * r + j];
                }
            }
        }
    }
    out
}

// a * b'
fn matmul_bt(a: &[f64], b: &[f64], r: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * r];
    for i in 0..r {
        for j in 0..r {
            out[i * r + j] = (0..r).map(|k| a[i * r + k] * b[j * r + k]).sum();
        }
    }
    out
}

/// Time-varying gains up to the point where the filter reaches steady state;
/// the last entry applies to every later step.
#[derive(Clone, Debug)]
pub(crate) struct Gains {
    pub k: Vec<Vec<f64>>,
    pub f: Vec<f64>,
}

impl Gains {
    fn at(&self, t: usize) -> (&[f64], f64) {
        let i = t.min(self.k.len() - 1);
        (&self.k[i], self.f[i])
    }

    pub fn f_at(&self, t: usize) -> f64 {
        self.at(t).1
    }

    /// Sum of `ln F_t` over `n` steps.
    pub fn log_f_sum(&self, n: usize) -> f64 {
        let m = self.f.len().min(n);
        let head: f64 = self.f[..m].iter().map(|f| f.ln()).sum();
        head + (n - m) as f64 * self.f[self.f.len() - 1].ln()
    }
}

/// Filtered innovations for one input sequence.
pub(crate) struct Run {
    pub v: Vec<f64>,
    /// Predicted state for the step after the last observation (before any
    /// exogenous input at that step).
    pub next_state: Vec<f64>,
}

/// Runs the filter over `y`. `x[t]` is added to the first state component of
/// the prediction for step `t` (exogenous drive); pass `None` for plain ARMA.
pub(crate) fn run(ss: &StateSpace, gains: &Gains, y: &[f64], x: Option<&[f64]>) -> Run {
    let r = ss.dim();
    let mut a = vec![0.0; r];
    let mut next = vec![0.0; r];
    if let Some(x) = x {
        a[0] += x.first().copied().unwrap_or(0.0);
    }
    let mut v = Vec::with_capacity(y.len());
    for (t, &yt) in y.iter().enumerate() {
        let innov = yt - a[0];
        v.push(innov);
        let (k, _) = gains.at(t);
        ss.t_vec(&a, &mut next);
        for i in 0..r {
            next[i] += k[i] * innov;
        }
        if let Some(x) = x {
            if t + 1 < y.len() {
                next[0] += x[t + 1];
            }
        }
        std::mem::swap(&mut a, &mut next);
    }
    Run { v, next_state: a }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn ar1_stationary_variance() {
        let ss = StateSpace::new(&[0.5], &[]);
        let p = ss.stationary_cov().unwrap();
        assert!((p[0] - 1.0 / 0.75).abs() < 1e-13);
    }

    #[test]
    fn arma11_stationary_cov_solves_lyapunov() {
        let ss = StateSpace::new(&[0.7], &[0.4]);
        let p = ss.stationary_cov().unwrap();
        // gamma_0 for ARMA(1,1) = (1 + 2 phi theta + theta^2) / (1 - phi^2)
        let g0 = (1.0 + 2.0 * 0.7 * 0.4 + 0.16) / (1.0 - 0.49);
        assert!((p[0] - g0).abs() < 1e-12);
        let t = DMatrix::from_row_slice(2, 2, &[0.7, 1.0, 0.0, 0.0]);
        let rr = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.16]);
        let pm = DMatrix::from_row_slice(2, 2, &p);
        let resid = &t * &pm * t.transpose() + rr - &pm;
        assert!(resid.abs().max() < 1e-12);
    }

    #[test]
    fn non_stationary_rejected() {
        assert!(StateSpace::new(&[1.0], &[]).stationary_cov().is_none());
    }

    // Innovations equal the exact prediction errors from the joint Gaussian
    // (Cholesky of the autocovariance matrix).
    #[test]
    fn innovations_match_cholesky() {
        let phi: f64 = 0.6;
        let theta = 0.3;
        let n = 8;
        let g0 = (1.0 + 2.0 * phi * theta + theta * theta) / (1.0 - phi * phi);
        let g1 = (1.0 + phi * theta) * (phi + theta) / (1.0 - phi * phi);
        let gamma = |h: usize| if h == 0 { g0 } else { g1 * phi.powi(h as i32 - 1) };
        let cov = DMatrix::from_fn(n, n, |i, j| gamma(i.abs_diff(j)));
        let chol = cov.clone().cholesky().unwrap();
        let l = chol.l();
        let y: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let ss = StateSpace::new(&[phi], &[theta]);
        let gains = ss.gains(n).unwrap();
        let run = run(&ss, &gains, &y, None);
        // y = L e, innovation_t = L_tt * e_t, F_t = L_tt^2
        let e = l.solve_lower_triangular(&nalgebra::DVector::from_vec(y.clone())).unwrap();
        for t in 0..n {
            let ltt = l[(t, t)];
            assert!((run.v[t] - ltt * e[t]).abs() < 1e-10);
            assert!((gains.f_at(t) - ltt * ltt).abs() < 1e-10);
        }
    }
}
