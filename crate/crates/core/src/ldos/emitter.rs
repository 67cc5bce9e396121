use std::f64::consts::FRAC_PI_2;

use super::{LdosError, OrientationWeighting, SpectrumModel};

/// Emitter parameters. Rates are in µs⁻¹, so `1000 / k` is a lifetime in ns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitterModel {
    /// Tilt of the second transition dipole out of the surface plane, radians.
    pub orientation: f64,
    /// Radiative rate in free space, µs⁻¹.
    pub radiative_rate_free: f64,
    /// µs⁻¹
    pub nonradiative_rate: f64,
    pub spectrum: SpectrumModel,
    pub weighting: OrientationWeighting,
    /// `true`: two orthogonal dipoles (NV-like); `false`: a single dipole at `orientation`.
    pub dipole_pair: bool,
}

impl EmitterModel {
    pub fn new(orientation: f64, radiative_rate_free: f64, nonradiative_rate: f64) -> Result<Self, LdosError> {
        let e = Self {
            orientation,
            radiative_rate_free,
            nonradiative_rate,
            spectrum: SpectrumModel::default(),
            weighting: OrientationWeighting::default(),
            dipole_pair: true,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn with_spectrum(mut self, spectrum: SpectrumModel) -> Self {
        self.spectrum = spectrum;
        self
    }

    pub fn with_weighting(mut self, weighting: OrientationWeighting) -> Self {
        self.weighting = weighting;
        self
    }

    pub fn with_dipole_pair(mut self, pair: bool) -> Self {
        self.dipole_pair = pair;
        self
    }

    pub fn validate(&self) -> Result<(), LdosError> {
        if !(self.radiative_rate_free > 0.0 && self.radiative_rate_free.is_finite()) {
            return Err(LdosError::Domain(format!("k_r0 = {} must be > 0", self.radiative_rate_free)));
        }
        if !(self.nonradiative_rate >= 0.0 && self.nonradiative_rate.is_finite()) {
            return Err(LdosError::Domain(format!("k_nr = {} must be >= 0", self.nonradiative_rate)));
        }
        if !(0.0..=FRAC_PI_2).contains(&self.orientation) {
            return Err(LdosError::Domain(format!("orientation {} rad outside [0, pi/2]", self.orientation)));
        }
        self.spectrum.validate()
    }
}

/// Total decay rate `k = k_nr + k_r0 * rho` in µs⁻¹.
pub fn decay_rate(e: &EmitterModel, rho: f64) -> f64 {
    e.nonradiative_rate + e.radiative_rate_free * rho
}

/// Lifetime in ns for a rate in µs⁻¹.
pub fn lifetime_ns(rate_per_us: f64) -> f64 {
    1000.0 / rate_per_us
}

pub fn quantum_efficiency(e: &EmitterModel) -> Result<f64, LdosError> {
    quantum_efficiency_from_rates(e.radiative_rate_free, e.nonradiative_rate)
}

/// `k_r0 / (k_r0 + k_nr)`.
pub fn quantum_efficiency_from_rates(k_r0: f64, k_nr: f64) -> Result<f64, LdosError> {
    if !(k_r0 > 0.0) {
        return Err(LdosError::Domain(format!("k_r0 = {k_r0} must be > 0")));
    }
    if !(k_nr >= 0.0) {
        return Err(LdosError::Domain(format!("k_nr = {k_nr} must be >= 0")));
    }
    Ok(k_r0 / (k_r0 + k_nr))
}
