//! Emitter parameters `(k_nr, k_r0, phi)` from a decay-rate approach curve.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use nalgebra::Matrix3;
use rayon::prelude::*;
use thiserror::Error;

use crate::ldos::{self, LayeredGeometry, LdosComponents, LdosError, Medium, OrientationWeighting, QuadratureConfig, SpectrumModel};
use crate::lm::{self, LmConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("not identifiable: {0}")]
    Identifiability(String),
    #[error("invalid approach curve: {0}")]
    Curve(String),
    #[error("fit failed from every start")]
    NoConvergence,
    #[error(transparent)]
    Ldos(#[from] LdosError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproachSample {
    /// nm
    pub height: f64,
    /// µs⁻¹
    pub rate: f64,
    /// µs⁻¹
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ApproachCurve {
    pub samples: Vec<ApproachSample>,
}

impl ApproachCurve {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        for w in self.samples.windows(2) {
            if !(w[1].height > w[0].height) {
                return Err(CalibrationError::Curve(format!("heights not strictly increasing at {} nm", w[1].height)));
            }
        }
        for s in &self.samples {
            if !(s.rate > 0.0 && s.rate.is_finite()) {
                return Err(CalibrationError::Curve(format!("rate {} at {} nm must be > 0", s.rate, s.height)));
            }
            if !(s.height >= 0.0) {
                return Err(CalibrationError::Curve(format!("negative height {}", s.height)));
            }
            if s.stderr.is_some_and(|e| !(e > 0.0)) {
                return Err(CalibrationError::Curve(format!("stderr at {} nm must be > 0", s.height)));
            }
        }
        Ok(())
    }

    /// Reads `height_nm,rate_per_us[,stderr]` with an optional header line.
    pub fn from_csv(text: &str) -> Result<Self, CalibrationError> {
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if i == 0 && cols[0].parse::<f64>().is_err() {
                continue;
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| CalibrationError::Curve(format!("line {}: {e}", i + 1)));
            if !(2..=3).contains(&cols.len()) {
                return Err(CalibrationError::Curve(format!("line {}: expected 2 or 3 columns", i + 1)));
            }
            let stderr = match cols.get(2) {
                Some(s) if !s.is_empty() => Some(num(s)?),
                _ => None,
            };
            samples.push(ApproachSample { height: num(cols[0])?, rate: num(cols[1])?, stderr });
        }
        let c = Self { samples };
        c.validate()?;
        Ok(c)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("height_nm,rate_per_us,stderr\n");
        for p in &self.samples {
            match p.stderr {
                Some(e) => writeln!(s, "{},{},{}", p.height, p.rate, e).unwrap(),
                None => writeln!(s, "{},{},", p.height, p.rate).unwrap(),
            }
        }
        s
    }
}

/// Media and optics of the forward model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationContext {
    pub substrate: Medium,
    pub emitter_medium: Medium,
    pub spectrum: SpectrumModel,
    /// Average over `spectrum`; otherwise evaluate at its center only.
    pub spectral: bool,
    pub weighting: OrientationWeighting,
    /// `false` selects the single-dipole model.
    pub dipole_pair: bool,
}

impl CalibrationContext {
    pub fn glass() -> Self {
        Self {
            substrate: Medium::lossless(2.25),
            emitter_medium: Medium::VACUUM,
            spectrum: SpectrumModel::default(),
            spectral: true,
            weighting: OrientationWeighting::default(),
            dipole_pair: true,
        }
    }

    fn rho(&self, c: &LdosComponents, phi: f64) -> f64 {
        if self.dipole_pair {
            c.nv(phi, self.weighting)
        } else {
            c.single(phi, self.weighting)
        }
    }

    /// LDOS components at each height.
    pub fn components(&self, heights: &[f64], q: &QuadratureConfig) -> Result<Vec<LdosComponents>, CalibrationError> {
        heights
            .par_iter()
            .map(|&z| {
                let g = LayeredGeometry::new(z, self.emitter_medium, self.substrate, self.spectrum.center)?;
                let c = if self.spectral {
                    ldos::spectral_components(&g, &self.spectrum, |_| self.substrate, q)?
                } else {
                    ldos::ldos_components(&g, q)?
                };
                Ok(c)
            })
            .collect()
    }

    /// `k(z) = k_nr + k_r0 rho(z, phi)` at each height.
    pub fn forward(&self, heights: &[f64], k_nr: f64, k_r0: f64, phi: f64, q: &QuadratureConfig) -> Result<Vec<f64>, CalibrationError> {
        Ok(self.components(heights, q)?.iter().map(|c| k_nr + k_r0 * self.rho(c, phi)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialGuess {
    pub k_nr: f64,
    pub k_r0: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    /// µs⁻¹
    pub k_nr: f64,
    /// µs⁻¹
    pub k_r0: f64,
    /// radians
    pub phi: f64,
    pub qe: f64,
    /// Weighted chi-square.
    pub residual: f64,
    /// Of `(k_nr, k_r0, phi)`; scaled by the reduced chi-square when the
    /// samples carry no uncertainties.
    pub covariance: Matrix3<f64>,
    pub dipole_pair: bool,
    pub n_samples: usize,
}

impl CalibrationResult {
    pub fn stderr(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| self.covariance[(i, i)].max(0.0).sqrt())
    }

    pub fn report(&self) -> String {
        let [e_nr, e_r0, e_phi] = self.stderr();
        let mut s = String::new();
        writeln!(s, "k_nr = {:.6}", self.k_nr).unwrap();
        writeln!(s, "k_nr_stderr = {e_nr:.6}").unwrap();
        writeln!(s, "k_r0 = {:.6}", self.k_r0).unwrap();
        writeln!(s, "k_r0_stderr = {e_r0:.6}").unwrap();
        writeln!(s, "phi_rad = {:.6}", self.phi).unwrap();
        writeln!(s, "phi_deg = {:.4}", self.phi.to_degrees()).unwrap();
        writeln!(s, "phi_stderr_rad = {e_phi:.6}").unwrap();
        writeln!(s, "qe = {:.6}", self.qe).unwrap();
        writeln!(s, "chi2 = {:.6}", self.residual).unwrap();
        writeln!(s, "samples = {}", self.n_samples).unwrap();
        writeln!(s, "model = {}", if self.dipole_pair { "dipole_pair" } else { "single_dipole" }).unwrap();
        s
    }
}

/// Weighted least squares of `k_nr + k_r0 rho(z, phi)` against the curve,
/// started from `phi` in `{0, pi/8, ..., pi/2}` (plus `init`, if given).
/// The LDOS components are computed once per height.
pub fn fit_approach_curve(
    curve: &ApproachCurve,
    ctx: &CalibrationContext,
    q: &QuadratureConfig,
    init: Option<InitialGuess>,
) -> Result<CalibrationResult, CalibrationError> {
    curve.validate()?;
    let n = curve.samples.len();
    if n < 4 {
        return Err(CalibrationError::Identifiability(format!("{n} samples for 3 parameters; need at least 4")));
    }
    let heights: Vec<f64> = curve.samples.iter().map(|s| s.height).collect();
    let span = heights[n - 1] - heights[0];
    let lambda = ctx.spectrum.center;
    if span < 0.5 * lambda {
        return Err(CalibrationError::Identifiability(format!("height span {span} nm is below half a wavelength ({} nm)", 0.5 * lambda)));
    }
    let comps = ctx.components(&heights, q)?;
    let weighted = curve.samples.iter().all(|s| s.stderr.is_some());
    let w: Vec<f64> = curve.samples.iter().map(|s| if weighted { 1.0 / s.stderr.unwrap() } else { 1.0 }).collect();
    let rates: Vec<f64> = curve.samples.iter().map(|s| s.rate).collect();
    let residual = |p: &[f64], r: &mut [f64]| {
        for i in 0..n {
            r[i] = (rates[i] - (p[0] + p[1] * ctx.rho(&comps[i], p[2]))) * w[i];
        }
    };
    let k_max = rates.iter().copied().fold(0.0, f64::max);
    let bounds = [(0.0, 100.0 * k_max), (1e-9 * k_max, 100.0 * k_max), (0.0, FRAC_PI_2)];

    // linear least squares for the rates at a fixed angle
    let linear_start = |phi: f64| -> [f64; 3] {
        let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let x = ctx.rho(&comps[i], phi);
            let ww = w[i] * w[i];
            s += ww;
            sx += ww * x;
            sy += ww * rates[i];
            sxx += ww * x * x;
            sxy += ww * x * rates[i];
        }
        let det = s * sxx - sx * sx;
        let (mut k_r0, mut k_nr) = if det.abs() > 0.0 { ((s * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det) } else { (sy / s, 0.0) };
        if k_r0 <= 0.0 {
            k_r0 = sy / s;
            k_nr = 0.0;
        }
        [k_nr.max(0.0), k_r0, phi]
    };
    let mut starts: Vec<[f64; 3]> = (0..=4).map(|i| linear_start(i as f64 * FRAC_PI_2 / 4.0)).collect();
    if let Some(g) = init {
        starts.push([g.k_nr, g.k_r0, g.phi]);
    }
    let cfg = LmConfig::default();
    let fits: Vec<(usize, lm::LmResult)> =
        starts.par_iter().enumerate().map(|(i, x0)| (i, lm::minimize(residual, x0, &bounds, n, &cfg))).collect();
    let best = fits
        .into_iter()
        .filter(|(_, r)| r.converged && r.chi2.is_finite())
        .min_by(|(ia, a), (ib, b)| {
            a.chi2.total_cmp(&b.chi2).then(a.params[2].total_cmp(&b.params[2])).then(ia.cmp(ib))
        })
        .map(|(_, r)| r)
        .ok_or(CalibrationError::NoConvergence)?;

    let p = &best.params;
    let mut covariance = best.covariance.map_or(Matrix3::from_element(f64::NAN), |c| Matrix3::from_fn(|i, j| c[(i, j)]));
    if !weighted && n > 3 {
        covariance *= best.chi2 / (n - 3) as f64;
    }
    Ok(CalibrationResult {
        k_nr: p[0],
        k_r0: p[1],
        phi: p[2],
        qe: ldos::quantum_efficiency_from_rates(p[1], p[0])?,
        residual: best.chi2,
        covariance,
        dipole_pair: ctx.dipole_pair,
        n_samples: n,
    })
}
