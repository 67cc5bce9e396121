//! Normalized local density of optical states for a dipole above a planar
//! interface.
//!
//! The emitter sits in medium 1 at height `z0` above a half-space of
//! medium 2. With `s = k_parallel / k_1`, `s_z = sqrt(1 - s^2)` and
//! `a = 2 k_1 z0`, the decay-rate enhancements are
//!
//! ```text
//! rho_par  = 1 + 3/4 ∫ Re{ s/s_z [r_te - s_z^2 r_tm] e^{i a s_z} } ds
//! rho_perp = 1 + 3/2 ∫ Re{ s^3/s_z r_tm e^{i a s_z} } ds
//! ```
//!
//! The leading `1` is the free-space rate, so both tend to one far from
//! the interface. The `1/s_z` singularity at `s = 1` is removed by
//! integrating `s = sin u` on the propagating part and `s = cosh v` on the
//! evanescent part; the evanescent tail is cut where its envelope has
//! fallen below `1e-17`.

mod emitter;
mod fresnel;
mod spectrum;

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use thiserror::Error;

use crate::quadrature::{self, Integral};

pub use emitter::{decay_rate, lifetime_ns, quantum_efficiency, quantum_efficiency_from_rates, EmitterModel};
pub use fresnel::fresnel;
pub use spectrum::{spectral_average, SpectrumModel};

pub(crate) use fresnel::Interface;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LdosError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("emitter height {height} nm is below the {floor} nm floor")]
    BelowHeightFloor { height: f64, floor: f64 },
    #[error("quadrature did not converge: estimate {estimate}, error bound {error_bound}")]
    NoConvergence { estimate: f64, error_bound: f64 },
}

/// Non-magnetic medium (`μ = 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Medium {
    pub permittivity: Complex64,
}

impl Medium {
    pub const VACUUM: Medium = Medium { permittivity: Complex64 { re: 1.0, im: 0.0 } };

    pub fn new(permittivity: Complex64) -> Result<Self, LdosError> {
        if !(permittivity.re.is_finite() && permittivity.im.is_finite()) {
            return Err(LdosError::Domain(format!("permittivity {permittivity} is not finite")));
        }
        if permittivity.im < 0.0 {
            return Err(LdosError::Domain(format!("permittivity {permittivity} describes a gain medium")));
        }
        Ok(Self { permittivity })
    }

    pub fn lossless(eps: f64) -> Self {
        Self { permittivity: Complex64::new(eps, 0.0) }
    }

    pub fn relative_permeability(&self) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayeredGeometry {
    /// nm
    pub emitter_height: f64,
    pub emitter_medium: Medium,
    pub substrate: Medium,
    /// Vacuum wavelength, nm.
    pub wavelength: f64,
}

impl LayeredGeometry {
    pub fn new(emitter_height: f64, emitter_medium: Medium, substrate: Medium, wavelength: f64) -> Result<Self, LdosError> {
        let g = Self { emitter_height, emitter_medium, substrate, wavelength };
        g.validate()?;
        Ok(g)
    }

    /// Emitter in vacuum above `substrate`.
    pub fn over(substrate: Medium, emitter_height: f64, wavelength: f64) -> Result<Self, LdosError> {
        Self::new(emitter_height, Medium::VACUUM, substrate, wavelength)
    }

    pub fn with_height(mut self, z: f64) -> Self {
        self.emitter_height = z;
        self
    }

    pub fn with_wavelength(mut self, wavelength: f64) -> Self {
        self.wavelength = wavelength;
        self
    }

    pub fn validate(&self) -> Result<(), LdosError> {
        if !(self.emitter_height >= 0.0 && self.emitter_height.is_finite()) {
            return Err(LdosError::Domain(format!("emitter height {} nm must be >= 0", self.emitter_height)));
        }
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(LdosError::Domain(format!("wavelength {} nm must be > 0", self.wavelength)));
        }
        let e1 = self.emitter_medium.permittivity;
        if e1.im != 0.0 || e1.re <= 0.0 {
            return Err(LdosError::Domain(format!("emitter medium must be a lossless dielectric, got {e1}")));
        }
        Medium::new(self.substrate.permittivity)?;
        Ok(())
    }

    /// Wavenumber in the emitter medium, nm⁻¹.
    pub fn k1(&self) -> f64 {
        2.0 * PI * self.emitter_medium.permittivity.re.sqrt() / self.wavelength
    }

    pub(crate) fn interface(&self) -> Interface {
        Interface { eps_r: self.substrate.permittivity / self.emitter_medium.permittivity }
    }

    fn is_homogeneous(&self) -> bool {
        self.substrate.permittivity == self.emitter_medium.permittivity
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub rel_tolerance: f64,
    /// Hard upper limit on `s`; only reached when the evanescent envelope
    /// does not decay (vanishing height).
    pub s_max: f64,
    /// Heights below this floor (nm) are rejected.
    pub min_height: f64,
    pub max_panels: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { rel_tolerance: 1e-10, s_max: 1e5, min_height: 1.0, max_panels: 4000 }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<(), LdosError> {
        if !(self.rel_tolerance > 0.0) {
            return Err(LdosError::Domain("rel_tolerance must be > 0".into()));
        }
        if !(self.s_max > 1.0) {
            return Err(LdosError::Domain("s_max must exceed 1".into()));
        }
        if !(self.min_height >= 0.0) {
            return Err(LdosError::Domain("min_height must be >= 0".into()));
        }
        Ok(())
    }
}

/// How a dipole tilted by `phi` from the surface mixes the parallel and
/// perpendicular responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrientationWeighting {
    /// `cos(phi) rho_par + sin(phi) rho_perp`.
    #[default]
    Linear,
    /// `cos^2(phi) rho_par + sin^2(phi) rho_perp`, the projection of the
    /// dipole moment onto the two axes.
    Squared,
}

impl OrientationWeighting {
    /// `(w_par, w_perp)` for tilt `phi`.
    pub fn weights(self, phi: f64) -> (f64, f64) {
        match self {
            Self::Linear => (phi.cos(), phi.sin()),
            Self::Squared => (phi.cos().powi(2), phi.sin().powi(2)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Component {
    Parallel,
    Perpendicular,
}

/// Detailed result of one component integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentIntegral {
    /// `rho` including the free-space unity term.
    pub rho: f64,
    pub error: f64,
    /// The evanescent range was clipped at `s_max` before its envelope decayed.
    pub truncated: bool,
}

/// Parallel and perpendicular enhancements at one height and wavelength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdosComponents {
    pub parallel: f64,
    pub perpendicular: f64,
}

impl LdosComponents {
    pub const FREE_SPACE: LdosComponents = LdosComponents { parallel: 1.0, perpendicular: 1.0 };

    pub fn oriented(&self, phi: f64, weighting: OrientationWeighting) -> f64 {
        let (wp, wz) = weighting.weights(phi);
        wp * self.parallel + wz * self.perpendicular
    }

    /// Two orthogonal dipoles with equal free-space rates: one in the
    /// surface plane, the other tilted by `phi` out of it. `phi = 0` is the
    /// both-parallel configuration, `phi = pi/2` the parallel+perpendicular
    /// one. Normalized to one in free space.
    pub fn nv(&self, phi: f64, weighting: OrientationWeighting) -> f64 {
        let (wp, wz) = weighting.weights(phi);
        ((1.0 + wp) * self.parallel + wz * self.perpendicular) / (1.0 + wp + wz)
    }

    /// Single dipole at `phi`, normalized to one in free space.
    pub fn single(&self, phi: f64, weighting: OrientationWeighting) -> f64 {
        let (wp, wz) = weighting.weights(phi);
        (wp * self.parallel + wz * self.perpendicular) / (wp + wz)
    }

    /// Enhancement for `e`'s dipole configuration at its orientation.
    pub fn for_emitter(&self, e: &EmitterModel) -> f64 {
        if e.dipole_pair {
            self.nv(e.orientation, e.weighting)
        } else {
            self.single(e.orientation, e.weighting)
        }
    }
}

fn check_inputs(g: &LayeredGeometry, q: &QuadratureConfig) -> Result<(), LdosError> {
    g.validate()?;
    q.validate()?;
    if g.emitter_height < q.min_height {
        return Err(LdosError::BelowHeightFloor { height: g.emitter_height, floor: q.min_height });
    }
    Ok(())
}

// e^-40 ≈ 4e-18
const ENVELOPE_LOG_CUTOFF: f64 = 40.0;

/// Upper limit of the evanescent variable `v` (with `s = cosh v`).
fn evanescent_limit(a: f64, v_floor: f64, s_max: f64) -> (f64, bool) {
    let v_cap = s_max.acosh();
    // envelope * cosh^3 v  <  e^-40
    let decayed = |v: f64| a * v.sinh() - 3.0 * v.cosh().ln() >= ENVELOPE_LOG_CUTOFF;
    if a <= 0.0 || !decayed(v_cap) {
        return (v_cap, true);
    }
    let mut lo = v_floor.max(0.0);
    if decayed(lo) {
        return (lo.max(1e-3), false);
    }
    let mut hi = (lo * 2.0).max(1.0);
    while !decayed(hi) {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if decayed(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (hi.min(v_cap), false)
}

/// Breakpoints in the unified variable `t`: `t = u` on `[0, pi/2]`,
/// `t = pi/2 + v` beyond.
fn breakpoints(g: &LayeredGeometry, q: &QuadratureConfig) -> (Vec<f64>, bool) {
    let eps_r = g.interface().eps_r;
    let mut inner_u = Vec::new();
    let mut inner_v = Vec::new();
    // k_{z,2} branch point
    if eps_r.re > 0.0 {
        let sb = eps_r.re.sqrt();
        if sb < 1.0 {
            inner_u.push(sb.asin());
        } else if sb > 1.0 {
            inner_v.push(sb.acosh());
        }
    }
    // surface-plasmon pole of r_tm
    if eps_r.re < -1.0 {
        let sp = (eps_r / (eps_r + 1.0)).sqrt().re;
        if sp > 1.0 {
            inner_v.push(sp.acosh());
        }
    }
    let a = 2.0 * g.k1() * g.emitter_height;
    let v_floor = inner_v.iter().cloned().fold(0.0, f64::max);
    let (v_max, truncated) = evanescent_limit(a, v_floor, q.s_max);
    let mut bp = vec![0.0];
    bp.extend(inner_u);
    bp.push(FRAC_PI_2);
    bp.extend(inner_v.into_iter().filter(|&v| v < v_max).map(|v| FRAC_PI_2 + v));
    bp.push(FRAC_PI_2 + v_max);
    bp.sort_by(f64::total_cmp);
    bp.dedup();
    (bp, truncated)
}

fn integrand(g: &LayeredGeometry, c: Component) -> impl Fn(f64) -> f64 {
    let iface = g.interface();
    let a = 2.0 * g.k1() * g.emitter_height;
    move |t: f64| {
        if t <= FRAC_PI_2 {
            // propagating: s = sin u, s/s_z ds = sin u du
            let (s, sz) = t.sin_cos();
            let (r_te, r_tm) = iface.at_sz(Complex64::new(sz, 0.0));
            let phase = Complex64::from_polar(1.0, a * sz);
            match c {
                Component::Parallel => 0.75 * (s * (r_te - sz * sz * r_tm) * phase).re,
                Component::Perpendicular => 1.5 * (s * s * s * r_tm * phase).re,
            }
        } else {
            // evanescent: s = cosh v, s_z = i sinh v, s/s_z ds = -i cosh v dv
            let v = t - FRAC_PI_2;
            let (sh, ch) = (v.sinh(), v.cosh());
            let env = (-a * sh).exp();
            if env == 0.0 {
                return 0.0;
            }
            let (r_te, r_tm) = iface.at_sz(Complex64::new(0.0, sh));
            match c {
                Component::Parallel => 0.75 * ch * env * (r_te + sh * sh * r_tm).im,
                Component::Perpendicular => 1.5 * ch * ch * ch * env * r_tm.im,
            }
        }
    }
}

fn component(g: &LayeredGeometry, q: &QuadratureConfig, c: Component) -> Result<ComponentIntegral, LdosError> {
    check_inputs(g, q)?;
    if g.is_homogeneous() {
        return Ok(ComponentIntegral { rho: 1.0, error: 0.0, truncated: false });
    }
    let (bp, truncated) = breakpoints(g, q);
    let Integral { value, error, converged, .. } =
        quadrature::integrate(integrand(g, c), &bp, q.rel_tolerance, q.rel_tolerance, q.max_panels);
    if !converged || !value.is_finite() {
        return Err(LdosError::NoConvergence { estimate: 1.0 + value, error_bound: error });
    }
    Ok(ComponentIntegral { rho: 1.0 + value, error, truncated })
}

/// Parallel-dipole enhancement with error estimate and truncation flag.
pub fn ldos_parallel_detailed(g: &LayeredGeometry, q: &QuadratureConfig) -> Result<ComponentIntegral, LdosError> {
    component(g, q, Component::Parallel)
}

pub fn ldos_perpendicular_detailed(g: &LayeredGeometry, q: &QuadratureConfig) -> Result<ComponentIntegral, LdosError> {
    component(g, q, Component::Perpendicular)
}

/// Decay-rate enhancement of a dipole parallel to the interface.
pub fn ldos_parallel(g: &LayeredGeometry, q: &QuadratureConfig) -> Result<f64, LdosError> {
    Ok(ldos_parallel_detailed(g, q)?.rho)
}

/// Decay-rate enhancement of a dipole normal to the interface.
pub fn ldos_perpendicular(g: &LayeredGeometry, q: &QuadratureConfig) -> Result<f64, LdosError> {
    Ok(ldos_perpendicular_detailed(g, q)?.rho)
}

pub fn ldos_components(g: &LayeredGeometry, q: &QuadratureConfig) -> Result<LdosComponents, LdosError> {
    Ok(LdosComponents { parallel: ldos_parallel(g, q)?, perpendicular: ldos_perpendicular(g, q)? })
}

fn check_phi(phi: f64) -> Result<(), LdosError> {
    if !(0.0..=FRAC_PI_2).contains(&phi) {
        return Err(LdosError::Domain(format!("orientation {phi} rad outside [0, pi/2]")));
    }
    Ok(())
}

/// Single dipole tilted by `phi` out of the interface plane (not normalized).
pub fn ldos_oriented(
    g: &LayeredGeometry,
    phi: f64,
    weighting: OrientationWeighting,
    q: &QuadratureConfig,
) -> Result<f64, LdosError> {
    check_phi(phi)?;
    Ok(ldos_components(g, q)?.oriented(phi, weighting))
}

/// Orthogonal dipole pair; see [`LdosComponents::nv`].
pub fn ldos_nv(g: &LayeredGeometry, phi: f64, weighting: OrientationWeighting, q: &QuadratureConfig) -> Result<f64, LdosError> {
    check_phi(phi)?;
    Ok(ldos_components(g, q)?.nv(phi, weighting))
}

/// Components averaged over `spectrum`, with the substrate permittivity
/// supplied per wavelength by `substrate_at`.
pub fn spectral_components<F>(
    g: &LayeredGeometry,
    spectrum: &SpectrumModel,
    mut substrate_at: F,
    q: &QuadratureConfig,
) -> Result<LdosComponents, LdosError>
where
    F: FnMut(f64) -> Medium,
{
    spectrum.validate()?;
    let mut acc = LdosComponents { parallel: 0.0, perpendicular: 0.0 };
    for (lambda, w) in spectrum.nodes() {
        let gl = LayeredGeometry { wavelength: lambda, substrate: substrate_at(lambda), ..*g };
        let c = ldos_components(&gl, q)?;
        acc.parallel += w * c.parallel;
        acc.perpendicular += w * c.perpendicular;
    }
    Ok(acc)
}
