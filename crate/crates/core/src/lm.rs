//! Box-constrained Levenberg-Marquardt for small, dense problems.
//!
//! Residuals are supplied already weighted (`(y - f) / sigma`). Jacobians
//! are central differences at a relative step, falling back to one-sided
//! differences against a bound.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Relative chi-square decrease below which an accepted step counts as converged.
    pub ftol: f64,
    /// Relative parameter change below which an accepted step counts as converged.
    pub xtol: f64,
    /// Relative finite-difference step.
    pub jacobian_step: f64,
    pub initial_damping: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self { max_iterations: 500, ftol: 1e-14, xtol: 1e-12, jacobian_step: 1e-4, initial_damping: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub params: Vec<f64>,
    pub chi2: f64,
    /// `(J^T J)^-1` at the solution; `None` if singular.
    pub covariance: Option<DMatrix<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

fn chi2(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn jacobian<F>(f: &F, x: &[f64], r0: &[f64], bounds: &[(f64, f64)], rel_step: f64) -> DMatrix<f64>
where
    F: Fn(&[f64], &mut [f64]),
{
    let m = r0.len();
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    let mut rp = vec![0.0; m];
    let mut rm = vec![0.0; m];
    for j in 0..n {
        let h = rel_step * x[j].abs().max(1e-3);
        let (lo, hi) = bounds[j];
        let up = x[j] + h <= hi;
        let down = x[j] - h >= lo;
        match (up, down) {
            (true, true) => {
                xp[j] = x[j] + h;
                f(&xp, &mut rp);
                xp[j] = x[j] - h;
                f(&xp, &mut rm);
                for i in 0..m {
                    jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
                }
            }
            (true, false) => {
                xp[j] = x[j] + h;
                f(&xp, &mut rp);
                for i in 0..m {
                    jac[(i, j)] = (rp[i] - r0[i]) / h;
                }
            }
            _ => {
                xp[j] = x[j] - h;
                f(&xp, &mut rm);
                for i in 0..m {
                    jac[(i, j)] = (r0[i] - rm[i]) / h;
                }
            }
        }
        xp[j] = x[j];
    }
    jac
}

/// Minimizes `sum(r_i^2)` where `residuals(x, r)` fills `r` (length `m`).
pub fn minimize<F>(residuals: F, x0: &[f64], bounds: &[(f64, f64)], m: usize, cfg: &LmConfig) -> LmResult
where
    F: Fn(&[f64], &mut [f64]),
{
    assert_eq!(x0.len(), bounds.len());
    let n = x0.len();
    let clamp = |x: &mut [f64]| {
        for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
            *v = v.clamp(lo, hi);
        }
    };
    let mut x = x0.to_vec();
    clamp(&mut x);
    let mut r = vec![0.0; m];
    residuals(&x, &mut r);
    let mut cost = chi2(&r);
    let mut lambda = cfg.initial_damping;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; m];

    let mut jac = jacobian(&residuals, &x, &r, bounds, cfg.jacobian_step);
    'outer: while iterations < cfg.max_iterations {
        iterations += 1;
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let grad = &jt * DVector::from_column_slice(&r);
        if grad.amax() == 0.0 {
            converged = true;
            break;
        }
        loop {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e16 {
                        break 'outer;
                    }
                    continue;
                }
            };
            for i in 0..n {
                trial[i] = x[i] + step[i];
            }
            clamp(&mut trial);
            residuals(&trial, &mut r_trial);
            let new_cost = chi2(&r_trial);
            if new_cost.is_finite() && new_cost <= cost {
                let dx = trial.iter().zip(&x).map(|(a, b)| (a - b).abs() / b.abs().max(1e-8)).fold(0.0, f64::max);
                let df = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                x.copy_from_slice(&trial);
                r.copy_from_slice(&r_trial);
                cost = new_cost;
                lambda = (lambda / 10.0).max(1e-15);
                if df < cfg.ftol || dx < cfg.xtol || cost == 0.0 {
                    converged = true;
                    break 'outer;
                }
                jac = jacobian(&residuals, &x, &r, bounds, cfg.jacobian_step);
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                // No downhill step exists at any damping: a (constrained) minimum.
                converged = true;
                break 'outer;
            }
        }
    }
    let jac = jacobian(&residuals, &x, &r, bounds, cfg.jacobian_step);
    let covariance = (jac.transpose() * &jac).try_inverse();
    LmResult { params: x, chi2: cost, covariance, iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exponential_exactly() {
        let t: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let y: Vec<f64> = t.iter().map(|&t| 3.0 * (-t / 2.5).exp() + 0.5).collect();
        let res = minimize(
            |p, r| {
                for i in 0..t.len() {
                    r[i] = y[i] - (p[0] * (-t[i] / p[1]).exp() + p[2]);
                }
            },
            &[1.0, 1.0, 0.0],
            &[(0.0, 10.0), (0.01, 100.0), (-5.0, 5.0)],
            t.len(),
            &LmConfig::default(),
        );
        assert!(res.converged);
        assert!((res.params[0] - 3.0).abs() < 1e-7);
        assert!((res.params[1] - 2.5).abs() < 1e-7);
        assert!((res.params[2] - 0.5).abs() < 1e-7);
        assert!(res.covariance.is_some());
    }

    #[test]
    fn respects_bounds() {
        // unconstrained minimum at x = -2
        let res = minimize(|p, r| r[0] = p[0] + 2.0, &[1.0], &[(0.0, 5.0)], 1, &LmConfig::default());
        assert_eq!(res.params[0], 0.0);
        assert!(res.converged);
    }

    #[test]
    fn rosenbrock() {
        let res = minimize(
            |p, r| {
                r[0] = 10.0 * (p[1] - p[0] * p[0]);
                r[1] = 1.0 - p[0];
            },
            &[-1.2, 1.0],
            &[(-10.0, 10.0), (-10.0, 10.0)],
            2,
            &LmConfig::default(),
        );
        assert!((res.params[0] - 1.0).abs() < 1e-6 && (res.params[1] - 1.0).abs() < 1e-6);
    }
}
