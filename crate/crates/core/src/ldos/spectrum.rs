use super::LdosError;

/// Gaussian emission spectrum sampled on a symmetric, evenly spaced grid
/// spanning three standard deviations on each side of the center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumModel {
    /// nm
    pub center: f64,
    /// nm
    pub std_dev: f64,
    pub n_samples: usize,
}

impl Default for SpectrumModel {
    fn default() -> Self {
        Self { center: 700.0, std_dev: 50.0, n_samples: 31 }
    }
}

impl SpectrumModel {
    pub fn new(center: f64, std_dev: f64, n_samples: usize) -> Result<Self, LdosError> {
        let s = Self { center, std_dev, n_samples };
        s.validate()?;
        Ok(s)
    }

    /// A single line at `center`.
    pub fn monochromatic(center: f64) -> Self {
        Self { center, std_dev: 1.0, n_samples: 1 }
    }

    pub fn validate(&self) -> Result<(), LdosError> {
        if !(self.center > 0.0 && self.center.is_finite()) {
            return Err(LdosError::Domain(format!("spectrum center {} nm must be positive", self.center)));
        }
        if !(self.std_dev > 0.0 && self.std_dev.is_finite()) {
            return Err(LdosError::Domain(format!("spectrum std_dev {} nm must be positive", self.std_dev)));
        }
        if self.n_samples == 0 {
            return Err(LdosError::Domain("spectrum needs at least one sample".into()));
        }
        if self.center - 3.0 * self.std_dev <= 0.0 && self.n_samples > 1 {
            return Err(LdosError::Domain("spectrum grid reaches non-positive wavelengths".into()));
        }
        Ok(())
    }

    /// `(wavelength_nm, weight)` pairs; weights sum to one.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        if self.n_samples == 1 {
            return vec![(self.center, 1.0)];
        }
        let n = self.n_samples;
        let half = (n - 1) as f64 / 2.0;
        let raw: Vec<(f64, f64)> = (0..n)
            .map(|j| {
                let x = 3.0 * (j as f64 - half) / half;
                (self.center + x * self.std_dev, (-0.5 * x * x).exp())
            })
            .collect();
        let total: f64 = raw.iter().map(|&(_, w)| w).sum();
        raw.into_iter().map(|(l, w)| (l, w / total)).collect()
    }
}

/// Spectrum-weighted mean of `rho_fn(λ)` over the sampled nodes.
pub fn spectral_average<E, F>(mut rho_fn: F, spectrum: &SpectrumModel) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let mut acc = 0.0;
    for (lambda, w) in spectrum.nodes() {
        acc += w * rho_fn(lambda)?;
    }
    Ok(acc)
}
