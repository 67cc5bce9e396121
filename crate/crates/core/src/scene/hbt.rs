//! Two-detector (Hanbury Brown-Twiss) streams from a three-level emitter.
//!
//! Ground (1), excited (2) and shelving (3) states with rates
//! `1->2: x`, `2->1: y` (photon), `2->3: u`, `3->1: w`. Starting from the
//! ground state the excited population relaxes with the two nonzero
//! eigenvalues of the rate matrix, which gives
//! `g2(t) = 1 - (1+a) exp(-|t|/tau1) + a exp(-|t|/tau2)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1};

use super::SceneError;
use crate::tagstream::{StreamHeader, TagRecord, TagStream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeLevelModel {
    pub bunching_amplitude: f64,
    /// ns
    pub antibunching_time: f64,
    /// ns
    pub bunching_time: f64,
}

/// Transition rates in ns⁻¹.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeLevelRates {
    pub excitation: f64,
    pub emission: f64,
    pub shelving: f64,
    pub deshelving: f64,
}

impl ThreeLevelModel {
    pub fn new(a: f64, tau1: f64, tau2: f64) -> Result<Self, SceneError> {
        let m = Self { bunching_amplitude: a, antibunching_time: tau1, bunching_time: tau2 };
        m.validate()?;
        Ok(m)
    }

    pub fn g2(&self, tau: f64) -> f64 {
        let t = tau.abs();
        let a = self.bunching_amplitude;
        1.0 - (1.0 + a) * (-t / self.antibunching_time).exp() + a * (-t / self.bunching_time).exp()
    }

    /// Always zero for an ideal three-level emitter.
    pub fn g2_zero(&self) -> f64 {
        self.g2(0.0)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let (a, t1, t2) = (self.bunching_amplitude, self.antibunching_time, self.bunching_time);
        if !(a >= 0.0 && t1 > 0.0 && t2 > 0.0 && a.is_finite() && t1.is_finite() && t2.is_finite()) {
            return Err(SceneError::Model(format!("need a >= 0 and positive times, got a={a}, tau1={t1}, tau2={t2}")));
        }
        // slope at zero, then a dense scan out to where both terms have decayed
        let slope = (1.0 + a) / t1 - a / t2;
        let horizon = 40.0 * t1.max(t2);
        let negative = slope < 0.0 || (1..=20_000).any(|i| self.g2(horizon * (i as f64 / 20_000.0).powi(2)) < -1e-12);
        if negative {
            return Err(SceneError::Model(format!("g2 goes negative for a={a}, tau1={t1}, tau2={t2}")));
        }
        Ok(())
    }

    /// Rates reproducing this correlation at the given emission rate
    /// (photons per ns, before detection losses). Of the two solutions the
    /// one with the weaker excitation is returned.
    pub fn rates(&self, emission_rate: f64) -> Result<ThreeLevelRates, SceneError> {
        self.validate()?;
        let a = self.bunching_amplitude;
        let (l1, l2) = (1.0 / self.antibunching_time, 1.0 / self.bunching_time);
        let d = (1.0 + a) * l1 - a * l2;
        let s_prime = ((1.0 + a) * l1 * l1 - a * l2 * l2) / d;
        let w = l1 + l2 - s_prime;
        let c = l1 * l2 - w * s_prime;
        let disc = s_prime * s_prime - 4.0 * (c + d * emission_rate);
        let err = || SceneError::Model(format!("emission rate {emission_rate} /ns not reachable by a three-level system with {self:?}"));
        if !(disc >= 0.0) || !(emission_rate > 0.0) {
            return Err(err());
        }
        let x = 0.5 * (s_prime - disc.sqrt());
        let u = if a == 0.0 { 0.0 } else { c / x };
        let y = s_prime - x - u;
        let r = ThreeLevelRates { excitation: x, emission: y, shelving: u, deshelving: if a == 0.0 { 0.0 } else { w } };
        let ok = x > 0.0 && y > 0.0 && u >= 0.0 && (a == 0.0 || (u > 0.0 && w > 0.0));
        if ok {
            Ok(r)
        } else {
            Err(err())
        }
    }
}

impl ThreeLevelRates {
    /// Steady-state photon emission rate, ns⁻¹.
    pub fn emission_rate(&self) -> f64 {
        let shelf = if self.shelving > 0.0 { self.shelving / self.deshelving } else { 0.0 };
        let p2 = 1.0 / ((self.emission + self.shelving) / self.excitation + 1.0 + shelf);
        self.emission * p2
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HbtConfig {
    /// Detected signal counts per second, both channels together.
    pub mean_rate: f64,
    /// s
    pub duration: f64,
    pub detection_efficiency: f64,
    /// Uncorrelated counts per second, both channels together.
    pub background_rate: f64,
    /// Replace the emitter by a Poisson source of the same mean rate.
    pub poisson: bool,
    pub seed: u64,
}

impl Default for HbtConfig {
    fn default() -> Self {
        Self { mean_rate: 1e5, duration: 1.0, detection_efficiency: 0.05, background_rate: 0.0, poisson: false, seed: 0 }
    }
}

/// Uncorrelated background rate that lifts the measured `g2(0)` of a
/// perfect antibunched source with `signal_rate` to `target`:
/// `g2(0) = 1 - rho^2` with `rho = S / (S + B)`.
pub fn background_for_g2_zero(signal_rate: f64, target: f64) -> Result<f64, SceneError> {
    if !(0.0..1.0).contains(&target) {
        return Err(SceneError::Model(format!("target g2(0) {target} outside [0, 1)")));
    }
    let rho = (1.0 - target).sqrt();
    Ok(signal_rate * (1.0 / rho - 1.0))
}

/// Header used for HBT streams: 1 ps micro-time on a 12.5 ns clock.
pub fn hbt_header() -> StreamHeader {
    StreamHeader {
        sync_rate: 80e6,
        micro_resolution: 1.0,
        macro_resolution: 12.5,
        cantilever_freq: 1.0,
        cantilever_amplitude: 0.0,
        marker_divisor: 1,
        nx: 1,
        ny: 1,
        pixel_pitch: 0.0,
    }
}

pub fn simulate_hbt(model: &ThreeLevelModel, cfg: &HbtConfig) -> Result<TagStream, SceneError> {
    if !(cfg.duration > 0.0) {
        return Err(SceneError::Plan(format!("duration {} s must be > 0", cfg.duration)));
    }
    if !(cfg.detection_efficiency > 0.0 && cfg.detection_efficiency <= 1.0) {
        return Err(SceneError::Plan("detection_efficiency must be in (0, 1]".into()));
    }
    if !(cfg.mean_rate >= 0.0 && cfg.background_rate >= 0.0) {
        return Err(SceneError::Plan("rates must be >= 0".into()));
    }
    let end = cfg.duration * 1e9;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut times: Vec<(f64, u8)> = Vec::new();

    if cfg.mean_rate > 0.0 {
        if cfg.poisson {
            poisson_times(&mut rng, cfg.mean_rate * 1e-9, end, &mut times);
        } else {
            let r = model.rates(cfg.mean_rate * 1e-9 / cfg.detection_efficiency)?;
            let exp = |rate: f64| Exp::new(rate).expect("positive rate");
            let (ex, leave, de) = (exp(r.excitation), exp(r.emission + r.shelving), (r.deshelving > 0.0).then(|| exp(r.deshelving)));
            let p_emit = r.emission / (r.emission + r.shelving);
            let mut t = 0.0;
            loop {
                t += ex.sample(&mut rng);
                t += leave.sample(&mut rng);
                if t >= end {
                    break;
                }
                if rng.random::<f64>() < p_emit {
                    if rng.random::<f64>() < cfg.detection_efficiency {
                        times.push((t, rng.random_range(0..2)));
                    }
                } else if let Some(de) = &de {
                    t += de.sample(&mut rng);
                }
            }
        }
    }
    if cfg.background_rate > 0.0 {
        poisson_times(&mut rng, cfg.background_rate * 1e-9, end, &mut times);
    }
    times.sort_by(|a, b| a.0.total_cmp(&b.0));

    let header = hbt_header();
    let records = times
        .into_iter()
        .map(|(t, channel)| {
            let macro_time = (t / header.macro_resolution).floor();
            let micro = ((t - macro_time * header.macro_resolution) * 1000.0 / header.micro_resolution) as u64;
            TagRecord::Photon { channel, macro_time: macro_time as u64, micro_time: micro.min(12_499) as u16 }
        })
        .collect();
    Ok(TagStream { header, records })
}

fn poisson_times(rng: &mut ChaCha8Rng, rate_per_ns: f64, end: f64, out: &mut Vec<(f64, u8)>) {
    let mut t = 0.0;
    loop {
        let dt: f64 = Exp1.sample(rng);
        t += dt / rate_per_ns;
        if t >= end {
            break;
        }
        out.push((t, rng.random_range(0..2)));
    }
}
