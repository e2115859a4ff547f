//! Nelder-Mead simplex minimisation.

/// Stopping rules and simplex shape.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Largest coordinate distance between vertices and the best vertex.
    pub xtol: f64,
    /// Largest objective gap between vertices and the best vertex.
    pub ftol: f64,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
    /// Dimension-dependent coefficients (Gao and Han) instead of the classic 1, 2, 0.5, 0.5.
    pub adaptive: bool,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            xtol: 1e-6,
            ftol: 1e-8,
            initial_step: 0.1,
            adaptive: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective value after each iteration (index 0 is the initial simplex).
    pub trace: Vec<f64>,
}

/// Minimises `f` from `x0`. Non-finite objective values are treated as `+inf`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    if n == 0 {
        let fx = eval(x0);
        return Minimum {
            x: Vec::new(),
            fx,
            iterations: 0,
            evaluations: 1,
            converged: fx.is_finite(),
            trace: vec![fx],
        };
    }

    let nf = n as f64;
    let (rho, chi, psi, sigma) = if opts.adaptive && n >= 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step;
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

    let mut order: Vec<usize> = (0..=n).collect();
    let sort = |order: &mut Vec<usize>, fvals: &[f64]| {
        order.sort_by(|&a, &b| fvals[a].total_cmp(&fvals[b]).then(a.cmp(&b)));
    };
    sort(&mut order, &fvals);

    let mut trace = vec![fvals[order[0]]];
    let mut iterations = 0;
    let mut converged = false;
    let mut centroid = vec![0.0; n];
    let point = |c: &[f64], w: &[f64], t: f64| -> Vec<f64> {
        c.iter().zip(w).map(|(ci, wi)| ci + t * (wi - ci)).collect()
    };

    while iterations < opts.max_iter {
        let best = order[0];
        let fbest = fvals[best];
        if fbest.is_finite() {
            let xspread = order[1..]
                .iter()
                .flat_map(|&i| simplex[i].iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            let fspread = order[1..]
                .iter()
                .map(|&i| (fvals[i] - fbest).abs())
                .fold(0.0, f64::max);
            if xspread <= opts.xtol && fspread <= opts.ftol {
                converged = true;
                break;
            }
        }
        iterations += 1;

        let worst = order[n];
        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &i in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&simplex[i]) {
                *c += v / nf;
            }
        }

        let xr = point(&centroid, &simplex[worst], -rho);
        let fr = eval(&xr);
        let f_second_worst = fvals[order[n - 1]];
        let mut shrink = false;
        if fr < fbest {
            let xe = point(&centroid, &simplex[worst], -rho * chi);
            let fe = eval(&xe);
            if fe < fr {
                simplex[worst] = xe;
                fvals[worst] = fe;
            } else {
                simplex[worst] = xr;
                fvals[worst] = fr;
            }
        } else if fr < f_second_worst {
            simplex[worst] = xr;
            fvals[worst] = fr;
        } else if fr < fvals[worst] {
            let xc = point(&centroid, &simplex[worst], -rho * psi);
            let fc = eval(&xc);
            if fc <= fr {
                simplex[worst] = xc;
                fvals[worst] = fc;
            } else {
                shrink = true;
            }
        } else {
            let xcc = point(&centroid, &simplex[worst], psi);
            let fcc = eval(&xcc);
            if fcc < fvals[worst] {
                simplex[worst] = xcc;
                fvals[worst] = fcc;
            } else {
                shrink = true;
            }
        }
        if shrink {
            let xb = simplex[best].clone();
            for &i in &order[1..] {
                simplex[i] = point(&xb, &simplex[i], sigma);
                fvals[i] = eval(&simplex[i]);
            }
        }
        sort(&mut order, &fvals);
        trace.push(fvals[order[0]]);
    }

    let best = order[0];
    Minimum {
        x: simplex[best].clone(),
        fx: fvals[best],
        iterations,
        evaluations,
        converged: converged && fvals[best].is_finite(),
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quadratic_bowl() {
        let m = nelder_mead(
            |x| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2),
            &[0.0, 0.0],
            &NelderMeadOptions::default(),
        );
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] + 2.0).abs() < 1e-5);
    }

    #[test]
    fn rosenbrock() {
        let opts = NelderMeadOptions {
            max_iter: 5000,
            ..Default::default()
        };
        let m = nelder_mead(
            |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
            &[-1.2, 1.0],
            &opts,
        );
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let opts = NelderMeadOptions {
            max_iter: 3,
            ..Default::default()
        };
        let m = nelder_mead(|x| x.iter().map(|v| v * v).sum(), &[5.0, 5.0, 5.0], &opts);
        assert!(!m.converged);
        assert_eq!(m.iterations, 3);
    }

    #[test]
    fn non_finite_region_avoided() {
        let m = nelder_mead(
            |x| if x[0] < 0.5 { f64::NAN } else { (x[0] - 2.0).powi(2) },
            &[1.0],
            &NelderMeadOptions::default(),
        );
        assert!(m.converged);
        assert!((m.x[0] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn zero_dimensional() {
        let m = nelder_mead(|_| 4.0, &[], &NelderMeadOptions::default());
        assert!(m.converged);
        assert_eq!(m.fx, 4.0);
    }

    proptest! {
        #[test]
        fn trace_is_monotone(a in -5.0..5.0f64, b in -5.0..5.0f64, c in 0.1..20.0f64) {
            let m = nelder_mead(
                |x| (x[0] - a).powi(2) + c * (x[1] - b).powi(2) + (x[0] * x[1]).sin(),
                &[0.0, 0.0],
                &NelderMeadOptions::default(),
            );
            prop_assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
            prop_assert_eq!(*m.trace.last().unwrap(), m.fx);
        }
    }
}
