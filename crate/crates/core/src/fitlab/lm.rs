use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when every column of J is this close to orthogonal to r (cosine).
    pub gtol: f64,
    /// Relative step size tolerance.
    pub xtol: f64,
    /// Relative cost reduction tolerance.
    pub ftol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gtol: 1e-10,
            xtol: 1e-14,
            ftol: 1e-15,
        }
    }
}

/// Residual vector and Jacobian at a parameter point; `None` outside the model's domain.
pub trait Problem {
    fn evaluate(&self, p: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)>;
}

impl<F> Problem for F
where
    F: Fn(&[f64]) -> Option<(DVector<f64>, DMatrix<f64>)>,
{
    fn evaluate(&self, p: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        self(p)
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    /// ‖r‖₂ at the solution.
    pub residual_norm: f64,
    pub iterations: usize,
    /// ½‖r‖² after the start and after every accepted step.
    pub cost_history: Vec<f64>,
    /// s²·(JᵀJ)⁻¹ with s² = ‖r‖²/(n − p); `None` when JᵀJ is singular or n ≤ p.
    pub covariance: Option<DMatrix<f64>>,
}

impl LmReport {
    pub fn std_errors(&self) -> Vec<f64> {
        match &self.covariance {
            Some(c) => (0..c.nrows()).map(|i| c[(i, i)].max(0.0).sqrt()).collect(),
            None => vec![f64::NAN; self.params.len()],
        }
    }
}

fn cost(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

/// Levenberg–Marquardt with Marquardt diagonal scaling. Only cost-decreasing steps are accepted.
pub fn levenberg_marquardt<P: Problem + ?Sized>(problem: &P, init: &[f64], opts: &LmOptions) -> Result<LmReport> {
    let mut p = DVector::from_column_slice(init);
    let (mut r, mut j) = problem
        .evaluate(init)
        .ok_or_else(|| Error::FitRejected("initial parameters outside the model domain".into()))?;
    let n = r.len();
    let np = p.len();
    let mut c = cost(&r);
    let mut history = vec![c];
    let mut jtj = j.transpose() * &j;
    let mut lambda = 1e-3 * jtj.diagonal().max().max(f64::MIN_POSITIVE);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        if gradient_small(&j, &r, opts.gtol) || c == 0.0 {
            converged = true;
            break;
        }
        iterations += 1;
        let g = j.transpose() * &r;
        let diag_floor = 1e-12 * jtj.diagonal().max();
        let mut a = jtj.clone();
        for i in 0..np {
            a[(i, i)] += lambda * jtj[(i, i)].max(diag_floor);
        }
        let Some(step) = a.cholesky().map(|ch| -ch.solve(&g)) else {
            lambda *= 10.0;
            continue;
        };
        let trial = &p + &step;
        let accepted = match problem.evaluate(trial.as_slice()) {
            Some((rt, jt)) if cost(&rt) < c => Some((rt, jt)),
            _ => None,
        };
        match accepted {
            Some((rt, jt)) => {
                let ct = cost(&rt);
                let reduction = (c - ct) / c;
                let small_step = step.norm() <= opts.xtol * (p.norm() + opts.xtol);
                p = trial;
                r = rt;
                j = jt;
                jtj = j.transpose() * &j;
                c = ct;
                history.push(c);
                lambda = (lambda / 3.0).max(1e-300);
                if reduction <= opts.ftol || small_step {
                    converged = true;
                    break;
                }
            }
            None => {
                if step.norm() <= opts.xtol * (p.norm() + opts.xtol) {
                    // the damped step has shrunk to rounding level without any decrease
                    converged = true;
                    break;
                }
                lambda *= 4.0;
            }
        }
    }
    if !converged && gradient_small(&j, &r, opts.gtol) {
        converged = true;
    }
    let residual_norm = r.norm();
    if !converged {
        return Err(Error::NotConverged {
            iterations,
            residual_norm,
            best: p.as_slice().to_vec(),
        });
    }
    let covariance = if n > np {
        jtj.clone().try_inverse().map(|inv| inv * (r.norm_squared() / (n - np) as f64))
    } else {
        None
    };
    Ok(LmReport {
        params: p.as_slice().to_vec(),
        residual_norm,
        iterations,
        cost_history: history,
        covariance,
    })
}

/// max_i |J_iᵀr|/(‖J_i‖·‖r‖) ≤ gtol.
fn gradient_small(j: &DMatrix<f64>, r: &DVector<f64>, gtol: f64) -> bool {
    let rn = r.norm();
    if rn == 0.0 {
        return true;
    }
    j.column_iter().all(|col| {
        let cn = col.norm();
        cn == 0.0 || (col.dot(r)).abs() / (cn * rn) <= gtol
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_decay(xs: Vec<f64>, ys: Vec<f64>) -> impl Fn(&[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        move |p: &[f64]| {
            let n = xs.len();
            let mut r = DVector::zeros(n);
            let mut j = DMatrix::zeros(n, 2);
            for i in 0..n {
                let e = (-p[1] * xs[i]).exp();
                r[i] = p[0] * e - ys[i];
                j[(i, 0)] = e;
                j[(i, 1)] = -p[0] * xs[i] * e;
            }
            Some((r, j))
        }
    }

    #[test]
    fn recovers_exponential() {
        let xs: Vec<f64> = (0..30).map(|k| k as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * (-1.3 * x).exp()).collect();
        let rep = levenberg_marquardt(&exp_decay(xs, ys), &[1.0, 0.2], &LmOptions::default()).unwrap();
        assert!((rep.params[0] - 2.5).abs() < 1e-10);
        assert!((rep.params[1] - 1.3).abs() < 1e-10);
        assert!(rep.cost_history.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn linear_fit_errors_match_closed_form() {
        // y = a + b x with known residuals: standard errors from the normal equations
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = [0.1, 0.9, 2.2, 2.8, 4.1];
        let f = |p: &[f64]| {
            let r = DVector::from_iterator(5, xs.iter().zip(ys).map(|(x, y)| p[0] + p[1] * x - y));
            let j = DMatrix::from_fn(5, 2, |i, k| if k == 0 { 1.0 } else { xs[i] });
            Some((r, j))
        };
        let rep = levenberg_marquardt(&f, &[0.0, 0.0], &LmOptions::default()).unwrap();
        let (sx, sxx): (f64, f64) = (10.0, 30.0);
        let det = 5.0 * sxx - sx * sx;
        let b = (5.0 * xs.iter().zip(ys).map(|(x, y)| x * y).sum::<f64>() - sx * ys.iter().sum::<f64>()) / det;
        let a = (ys.iter().sum::<f64>() - b * sx) / 5.0;
        assert!((rep.params[0] - a).abs() < 1e-10 && (rep.params[1] - b).abs() < 1e-10);
        let s2 = rep.residual_norm.powi(2) / 3.0;
        let se = rep.std_errors();
        assert!((se[0] - (s2 * sxx / det).sqrt()).abs() < 1e-10);
        assert!((se[1] - (s2 * 5.0 / det).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn reports_non_convergence() {
        let xs: Vec<f64> = (0..30).map(|k| k as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * (-1.3 * x).exp()).collect();
        let opts = LmOptions {
            max_iterations: 1,
            ..LmOptions::default()
        };
        match levenberg_marquardt(&exp_decay(xs, ys), &[1.0, 0.2], &opts) {
            Err(Error::NotConverged { iterations, best, .. }) => {
                assert_eq!(iterations, 1);
                assert_eq!(best.len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn domain_violation_at_start_rejected() {
        let f = |_: &[f64]| None;
        assert!(levenberg_marquardt(&f, &[1.0], &LmOptions::default()).is_err());
    }
}
