//! Poisson maximum-likelihood tail fit `mu(t) = A exp(-t/tau) + B`.

use nalgebra::{Matrix3, Vector3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    /// Channels starting before this time (ns) are ignored.
    pub cutoff_ns: f64,
    /// Fewer photons than this after the cutoff leaves the voxel unfitted.
    pub min_counts: u64,
    pub max_iterations: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { cutoff_ns: 5.0, min_counts: 100, max_iterations: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifetimeFit {
    /// ns; NaN unless converged.
    pub tau: f64,
    /// Counts per channel at t = 0.
    pub amplitude: f64,
    /// Counts per channel.
    pub offset: f64,
    /// ns; NaN unless converged.
    pub stderr_tau: f64,
    /// Photons in the fitted channels.
    pub n_photons: u64,
    pub converged: bool,
}

impl LifetimeFit {
    pub fn lifetime(&self) -> Option<(f64, f64)> {
        self.converged.then_some((self.tau, self.stderr_tau))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitOutcome {
    Fitted,
    InsufficientCounts,
}

struct Tail<'a> {
    t0: f64,
    dt: f64,
    n: &'a [f64],
}

impl Tail<'_> {
    /// Negative log-likelihood (without the data-only term), gradient and
    /// Fisher information at `(A, tau, B)`.
    fn evaluate(&self, p: [f64; 3], want_derivs: bool) -> (f64, Vector3<f64>, Matrix3<f64>) {
        let [a, tau, b] = p;
        let q = (-self.dt / tau).exp();
        let mut e = (-self.t0 / tau).exp();
        let mut nll = 0.0;
        let mut grad = Vector3::zeros();
        let mut fisher = Matrix3::zeros();
        for (j, &n) in self.n.iter().enumerate() {
            let mu = a * e + b;
            if mu <= 0.0 {
                return (f64::INFINITY, grad, fisher);
            }
            nll += mu - if n > 0.0 { n * mu.ln() } else { 0.0 };
            if want_derivs {
                let t = self.t0 + j as f64 * self.dt;
                let d = Vector3::new(e, a * e * t / (tau * tau), 1.0);
                grad += d * (1.0 - n / mu);
                fisher += d * d.transpose() / mu;
            }
            e *= q;
        }
        (nll, grad, fisher)
    }
}

/// Damped Fisher-scoring step.
fn solve(fisher: &Matrix3<f64>, grad: &Vector3<f64>, lambda: f64) -> Option<Vector3<f64>> {
    let mut h = *fisher;
    for i in 0..3 {
        h[(i, i)] *= 1.0 + lambda;
    }
    h.try_inverse().map(|inv| -(inv * grad))
}

/// Fits channels whose center lies at or after the cutoff. Histogram
/// channel `j` spans `[j, j+1) * channel_width` ns.
pub fn fit_lifetime<T: Copy + Into<f64>>(counts: &[T], channel_width: f64, cfg: &FitConfig) -> (FitOutcome, LifetimeFit) {
    let first = ((cfg.cutoff_ns / channel_width - 0.5).ceil().max(0.0)) as usize;
    let n: Vec<f64> = counts.iter().skip(first).map(|&c| c.into()).collect();
    let total: f64 = n.iter().sum();
    let mut fit = LifetimeFit {
        tau: f64::NAN,
        amplitude: f64::NAN,
        offset: f64::NAN,
        stderr_tau: f64::NAN,
        n_photons: total.round() as u64,
        converged: false,
    };
    if total < cfg.min_counts as f64 || n.len() < 4 {
        return (FitOutcome::InsufficientCounts, fit);
    }
    let m = n.len();
    let tail = Tail { t0: (first as f64 + 0.5) * channel_width, dt: channel_width, n: &n };
    let window = m as f64 * channel_width;

    // offset from the last tenth, lifetime from the mean delay of the excess
    let k = (m / 10).max(1);
    let b0 = n[m - k..].iter().sum::<f64>() / k as f64;
    let (mut s, mut st) = (0.0, 0.0);
    for (j, &c) in n.iter().enumerate() {
        let x = (c - b0).max(0.0);
        s += x;
        st += x * j as f64 * channel_width;
    }
    let tau0 = if s > 0.0 { (st / s).clamp(2.0 * channel_width, window) } else { window };
    let esum: f64 = (0..m).map(|j| (-(j as f64) * channel_width / tau0).exp()).sum();
    let a0 = ((total - b0 * m as f64) / esum).max(total / esum * 0.1) * (tail.t0 / tau0).exp();
    let mut p = [a0, tau0, b0.max(0.0)];

    let (mut nll, mut grad, mut fisher) = tail.evaluate(p, true);
    let mut lambda = 1e-3;
    let mut done = false;
    for _ in 0..cfg.max_iterations {
        let Some(newton) = solve(&fisher, &grad, 0.0) else { break };
        if -grad.dot(&newton) < 1e-10 {
            done = true;
            break;
        }
        let Some(step) = solve(&fisher, &grad, lambda) else { break };
        let trial = [(p[0] + step[0]).max(1e-300), (p[1] + step[1]).max(1e-3 * channel_width), p[2] + step[2]];
        let (t_nll, ..) = tail.evaluate(trial, false);
        if t_nll.is_finite() && t_nll <= nll {
            p = trial;
            (nll, grad, fisher) = tail.evaluate(p, true);
            lambda = (lambda * 0.1).max(1e-12);
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }

    let cov = fisher.try_inverse();
    fit.amplitude = p[0];
    fit.offset = p[2];
    let Some(cov) = cov else {
        return (FitOutcome::Fitted, fit);
    };
    let sd_tau = cov[(1, 1)].sqrt();
    // signal photons must stand clear of their own uncertainty
    let signal = p[0] * p[1] / channel_width * ((-tail.t0 / p[1]).exp() - (-(tail.t0 + window) / p[1]).exp());
    let var_a = cov[(0, 0)];
    let significant = p[0] > 3.0 * var_a.max(0.0).sqrt() && signal > 0.0;
    let sane = p[1] < 10.0 * window && sd_tau.is_finite() && sd_tau > 0.0 && sd_tau < p[1];
    if done && significant && sane {
        fit.tau = p[1];
        fit.stderr_tau = sd_tau;
        fit.converged = true;
    }
    (FitOutcome::Fitted, fit)
}
