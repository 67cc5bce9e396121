use super::ReconstructError;
use crate::lm::{self, LmConfig};
use crate::tagstream::{self, TagRecord, TagStream};

/// Cross-correlation of channel 1 against channel 0.
#[derive(Debug, Clone, PartialEq)]
pub struct G2Histogram {
    /// Bin centers `t1 - t0`, ns.
    pub lags: Vec<f64>,
    pub counts: Vec<u64>,
    /// Counts over the uncorrelated expectation `n0 n1 bin / T`.
    pub g2: Vec<f64>,
    /// Uncorrelated expectation per bin.
    pub expected: f64,
    pub bin_width: f64,
    pub n0: u64,
    pub n1: u64,
    /// ns
    pub duration: f64,
}

impl G2Histogram {
    pub fn pairs(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Mean g2 over bins with `|lag| >= min_lag`.
    pub fn long_lag_mean(&self, min_lag: f64) -> Option<f64> {
        let v: Vec<f64> = self.lags.iter().zip(&self.g2).filter(|(l, _)| l.abs() >= min_lag).map(|(_, g)| *g).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Histogram of `t1 - t0` within `±window` (ns) in bins of `bin` ns. The
/// bin count is odd, with the center bin straddling zero.
pub fn g2_correlate(stream: &TagStream, window: f64, bin: f64) -> Result<G2Histogram, ReconstructError> {
    if !(bin > 0.0 && window >= bin / 2.0) {
        return Err(ReconstructError::Argument(format!("need bin > 0 and window >= bin/2, got window {window}, bin {bin}")));
    }
    let half = ((window / bin) - 0.5).round().max(0.0) as usize;
    let nb = 2 * half + 1;
    let lags: Vec<f64> = (0..nb).map(|i| (i as f64 - half as f64) * bin).collect();
    let h = &stream.header;
    let (mut t0, mut t1) = (Vec::new(), Vec::new());
    for r in &stream.records {
        if let TagRecord::Photon { channel, macro_time, micro_time } = *r {
            let t = tagstream::photon_ns(h, macro_time, micro_time);
            match channel {
                0 => t0.push(t),
                1 => t1.push(t),
                _ => {}
            }
        }
    }
    let (n0, n1) = (t0.len() as u64, t1.len() as u64);
    let empty = G2Histogram { lags: lags.clone(), counts: vec![0; nb], g2: vec![0.0; nb], expected: 0.0, bin_width: bin, n0, n1, duration: 0.0 };
    if n0 + n1 == 0 {
        return Ok(empty);
    }
    if n0 == 0 || n1 == 0 {
        return Err(ReconstructError::Channel(format!("need photons on channels 0 and 1, got {n0} and {n1}")));
    }
    // decoding order is time order up to micro-time jitter within a macro tick
    t0.sort_by(f64::total_cmp);
    t1.sort_by(f64::total_cmp);
    let edge = (half as f64 + 0.5) * bin;
    let mut counts = vec![0u64; nb];
    let mut start = 0;
    for &a in &t0 {
        while start < t1.len() && t1[start] < a - edge {
            start += 1;
        }
        for &b in &t1[start..] {
            let d = b - a;
            if d >= edge {
                break;
            }
            let i = ((d + edge) / bin).floor() as usize;
            counts[i.min(nb - 1)] += 1;
        }
    }
    let first = t0[0].min(t1[0]);
    let last = t0[t0.len() - 1].max(t1[t1.len() - 1]);
    let duration = last - first;
    let expected = if duration > 0.0 { n0 as f64 * n1 as f64 * bin / duration } else { 0.0 };
    let g2 = counts.iter().map(|&c| if expected > 0.0 { c as f64 / expected } else { 0.0 }).collect();
    Ok(G2Histogram { lags, counts, g2, expected, bin_width: bin, n0, n1, duration })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct G2Params {
    pub bunching_amplitude: f64,
    /// ns
    pub tau1: f64,
    /// ns
    pub tau2: f64,
    pub g2_zero: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct G2Result {
    pub lags: Vec<f64>,
    pub g2: Vec<f64>,
    pub params: G2Params,
    pub chi2: f64,
    pub converged: bool,
    /// `None` when the fit did not converge.
    pub is_single_emitter: Option<bool>,
}

/// `1 - (1 - g0) [(1+a) e^{-|t|/tau1} - a e^{-|t|/tau2}]`.
pub fn g2_model(p: &G2Params, lag: f64) -> f64 {
    let t = lag.abs();
    let a = p.bunching_amplitude;
    1.0 - (1.0 - p.g2_zero) * ((1.0 + a) * (-t / p.tau1).exp() - a * (-t / p.tau2).exp())
}

/// Least-squares fit of the three-level form. `sigma` per bin; unit
/// weights when `None`.
pub fn g2_fit_curve(lags: &[f64], g2: &[f64], sigma: Option<&[f64]>) -> Result<G2Result, ReconstructError> {
    if lags.len() != g2.len() || sigma.is_some_and(|s| s.len() != g2.len()) {
        return Err(ReconstructError::Argument("lag, g2 and sigma lengths differ".into()));
    }
    if lags.len() < 5 {
        return Err(ReconstructError::Argument("need at least 5 bins".into()));
    }
    let span = lags.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let step = lags.windows(2).map(|w| (w[1] - w[0]).abs()).filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
    let step = if step.is_finite() { step } else { span };
    let weight: Vec<f64> = match sigma {
        Some(s) => s.iter().map(|&v| if v > 0.0 { 1.0 / v } else { 0.0 }).collect(),
        None => vec![1.0; g2.len()],
    };
    let residual = |p: &[f64], r: &mut [f64]| {
        let params = G2Params { g2_zero: p[0], bunching_amplitude: p[1], tau1: p[2], tau2: p[3] };
        for i in 0..lags.len() {
            r[i] = (g2[i] - g2_model(&params, lags[i])) * weight[i];
        }
    };
    // starting guesses from the curve shape
    let g0 = lags.iter().zip(g2).min_by(|a, b| a.0.abs().total_cmp(&b.0.abs())).map(|(_, g)| *g).unwrap_or(0.0).clamp(0.0, 1.0);
    let peak = g2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let half_depth = 0.5 * (1.0 + g0).min(peak);
    let tau1_0 = lags
        .iter()
        .zip(g2)
        .filter(|(l, g)| **l > 0.0 && **g >= half_depth)
        .map(|(l, _)| *l / std::f64::consts::LN_2)
        .fold(f64::INFINITY, f64::min);
    let tau1_0 = if tau1_0.is_finite() { tau1_0.max(step) } else { span / 10.0 };
    let bounds = [(-0.5, 1.5), (0.0, 100.0), (step * 1e-2, 10.0 * span), (step * 1e-2, 100.0 * span)];
    let cfg = LmConfig { max_iterations: 2000, ..Default::default() };
    let a0 = (peak - 1.0).max(0.0);
    let mut best: Option<lm::LmResult> = None;
    for &tau2_factor in &[3.0, 10.0, 30.0] {
        for &a_start in &[a0, 0.5 * a0 + 0.1] {
            let x0 = [g0, a_start, tau1_0, (tau1_0 * tau2_factor).min(10.0 * span)];
            let r = lm::minimize(residual, &x0, &bounds, lags.len(), &cfg);
            if best.as_ref().is_none_or(|b| r.chi2 < b.chi2 || (!b.converged && r.converged)) {
                best = Some(r);
            }
        }
    }
    let r = best.expect("at least one start");
    let params = G2Params { g2_zero: r.params[0], bunching_amplitude: r.params[1], tau1: r.params[2], tau2: r.params[3] };
    let converged = r.converged && params.g2_zero.is_finite();
    Ok(G2Result {
        lags: lags.to_vec(),
        g2: g2.to_vec(),
        params,
        chi2: r.chi2,
        converged,
        is_single_emitter: converged.then_some(params.g2_zero < 0.5),
    })
}

/// Fit with Poisson weights from the pair counts.
pub fn g2_fit(h: &G2Histogram) -> Result<G2Result, ReconstructError> {
    if h.expected <= 0.0 {
        return Err(ReconstructError::Argument("empty correlation histogram".into()));
    }
    let sigma: Vec<f64> = h.counts.iter().map(|&c| (c.max(1) as f64).sqrt() / h.expected).collect();
    g2_fit_curve(&h.lags, &h.g2, Some(&sigma))
}
