use num_complex::Complex64;

use super::{LayeredGeometry, LdosError};

/// Square root on the branch with non-negative imaginary part, so that
/// `exp(i k_z z)` never grows with `z`.
pub(crate) fn sqrt_upper(z: Complex64) -> Complex64 {
    let r = z.sqrt();
    if r.im < 0.0 {
        -r
    } else {
        r
    }
}

/// Planar-interface reflection coefficients for a fixed permittivity ratio
/// `eps_r = eps_substrate / eps_emitter` (both media non-magnetic).
#[derive(Debug, Clone, Copy)]
pub(crate) struct Interface {
    pub eps_r: Complex64,
}

impl Interface {
    /// Coefficients as a function of the normalized axial wavenumber
    /// `s_z = k_{z,1} / k_1`. Working in `s_z` keeps `k_{z,2}` accurate right
    /// at the `s = 1` branch point, where `1 - s^2` cancels.
    #[inline]
    pub fn at_sz(&self, sz: Complex64) -> (Complex64, Complex64) {
        let kz2 = sqrt_upper(self.eps_r - 1.0 + sz * sz);
        let r_te = (sz - kz2) / (sz + kz2);
        let r_tm = (self.eps_r * sz - kz2) / (self.eps_r * sz + kz2);
        (r_te, r_tm)
    }
}

/// TE (`μ`-weighted) and TM (`ε`-weighted) reflection coefficients at the
/// transverse wavenumber `s = k_parallel / k_1`.
///
/// Note on naming: many dipole-interface texts write the `ε`-weighted
/// coefficient as `r^⊥` and the `μ`-weighted one as `r^∥`. Here coefficients
/// are named by polarization: TM couples to a dipole normal to the interface.
pub fn fresnel(s: f64, g: &LayeredGeometry) -> Result<(Complex64, Complex64), LdosError> {
    if !s.is_finite() || s < 0.0 {
        return Err(LdosError::Domain(format!("transverse wavenumber s = {s} must be finite and >= 0")));
    }
    g.validate()?;
    let sz = sqrt_upper(Complex64::new((1.0 - s) * (1.0 + s), 0.0));
    Ok(g.interface().at_sz(sz))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ldos::Medium;

    fn air_over(eps: Complex64) -> LayeredGeometry {
        LayeredGeometry::new(100.0, Medium::VACUUM, Medium::new(eps).unwrap(), 700.0).unwrap()
    }

    #[test]
    fn identical_media_do_not_reflect() {
        let g = LayeredGeometry::new(50.0, Medium::lossless(2.25), Medium::lossless(2.25), 600.0).unwrap();
        let (te, tm) = fresnel(0.0, &g).unwrap();
        assert_eq!(te, Complex64::new(0.0, 0.0));
        assert_eq!(tm, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn normal_incidence_glass() {
        // (n1 - n2) / (n1 + n2)
        let (te, tm) = fresnel(0.0, &air_over(Complex64::new(2.25, 0.0))).unwrap();
        assert!((te - Complex64::new(-0.2, 0.0)).norm() < 1e-15);
        // TM at normal incidence differs only by sign convention.
        assert!((tm - Complex64::new(0.2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn evanescent_branch() {
        let g = air_over(Complex64::new(2.25, 0.0));
        let s: f64 = 2.0;
        let kz1 = sqrt_upper(Complex64::new(1.0 - s * s, 0.0));
        assert!(kz1.re.abs() < 1e-15 && (kz1.im - 3f64.sqrt()).abs() < 1e-15);
        let kz2 = sqrt_upper(Complex64::new(2.25 - s * s, 0.0));
        let te_direct = (kz1 - kz2) / (kz1 + kz2);
        let tm_direct = (2.25 * kz1 - kz2) / (2.25 * kz1 + kz2);
        let (te, tm) = fresnel(s, &g).unwrap();
        assert!(te.norm().is_finite() && tm.norm().is_finite());
        assert!((te - te_direct).norm() < 1e-14);
        assert!((tm - tm_direct).norm() < 1e-14);
        // Both sides evanescent and lossless: reflection is real, so the
        // interface integrand contributes nothing beyond s = n2.
        assert!(te.im.abs() < 1e-15 && tm.im.abs() < 1e-15);
        // Between n1 and n2 light is totally internally reflected.
        let (te, tm) = fresnel(1.2, &g).unwrap();
        assert!((te.norm() - 1.0).abs() < 1e-14 && (tm.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_wavenumber() {
        let g = air_over(Complex64::new(2.25, 0.0));
        assert!(fresnel(f64::NAN, &g).is_err());
        assert!(fresnel(f64::INFINITY, &g).is_err());
    }

    #[test]
    fn sqrt_branch_has_non_negative_imaginary_part() {
        for z in [Complex64::new(-4.0, -0.0), Complex64::new(-4.0, 0.0), Complex64::new(3.0, -1.0)] {
            assert!(sqrt_upper(z).im >= 0.0);
        }
    }
}
