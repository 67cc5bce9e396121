use num_complex::Complex64;
use proptest::prelude::*;
use qeflim::ldos::{
    self, decay_rate, EmitterModel, LayeredGeometry, Medium, OrientationWeighting, QuadratureConfig, SpectrumModel,
};

fn q() -> QuadratureConfig {
    QuadratureConfig::default()
}

fn permittivity() -> impl Strategy<Value = Complex64> {
    prop_oneof![
        (1.0f64..6.0, 0.0f64..0.5).prop_map(|(re, im)| Complex64::new(re, im)),
        (-40.0f64..-2.0, 0.1f64..5.0).prop_map(|(re, im)| Complex64::new(re, im)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn far_field_is_free_space(eps in permittivity(), phi in 0.0f64..=std::f64::consts::FRAC_PI_2) {
        let s = SpectrumModel::default();
        let m = Medium::new(eps).unwrap();
        let g = LayeredGeometry::over(m, 10.0 * s.center, s.center).unwrap();
        let c = ldos::spectral_components(&g, &s, |_| m, &q()).unwrap();
        for w in [OrientationWeighting::Linear, OrientationWeighting::Squared] {
            prop_assert!((c.nv(phi, w) - 1.0).abs() <= 1e-3, "{}", c.nv(phi, w));
            prop_assert!((c.single(phi, w) - 1.0).abs() <= 1e-3, "{}", c.single(phi, w));
        }
    }

    #[test]
    fn identical_media_give_unity(eps in 1.0f64..6.0, z in 1.0f64..1000.0, phi in 0.0f64..=std::f64::consts::FRAC_PI_2) {
        let m = Medium::lossless(eps);
        let g = LayeredGeometry::new(z, m, m, 700.0).unwrap();
        let c = ldos::ldos_components(&g, &q()).unwrap();
        prop_assert_eq!(c.parallel, 1.0);
        prop_assert_eq!(c.perpendicular, 1.0);
        prop_assert_eq!(ldos::ldos_nv(&g, phi, OrientationWeighting::Linear, &q()).unwrap(), 1.0);
    }

    #[test]
    fn lossy_substrate_quenches_monotonically(re in -30.0f64..6.0, im in 0.05f64..5.0) {
        let m = Medium::new(Complex64::new(re, im)).unwrap();
        let rho: Vec<f64> = (2..=20)
            .map(|z| ldos::ldos_perpendicular(&LayeredGeometry::over(m, z as f64, 700.0).unwrap(), &q()).unwrap())
            .collect();
        for w in rho.windows(2) {
            prop_assert!(w[1] < w[0], "{rho:?}");
        }
    }

    #[test]
    fn decay_rate_is_affine_in_rho(k_r0 in 0.1f64..100.0, k_nr in 0.0f64..100.0) {
        let e = EmitterModel::new(0.3, k_r0, k_nr).unwrap();
        let k: Vec<f64> = [0.0, 1.0, 2.5].iter().map(|&r| decay_rate(&e, r)).collect();
        prop_assert!((k[0] - k_nr).abs() <= 1e-12 * k_nr.max(1.0));
        prop_assert!((k[1] - k[0] - k_r0).abs() <= 1e-12 * (k_r0 + k_nr));
        prop_assert!((k[2] - k[0] - 2.5 * k_r0).abs() <= 1e-12 * (k_r0 + k_nr) * 2.5);
    }
}

#[test]
fn quadrature_matches_midpoint_sum_at_spot_points() {
    // coarse spot check; the full 5x5 comparison lives in the acceptance suite
    for (z, eps) in [(20.0, Complex64::new(2.25, 0.0)), (50.0, Complex64::new(-20.0, 1.0))] {
        let g = LayeredGeometry::over(Medium::new(eps).unwrap(), z, 700.0).unwrap();
        let c = ldos::ldos_components(&g, &q()).unwrap();
        let a = 4.0 * std::f64::consts::PI / 700.0 * z;
        let n = 200_000;
        let mut perp = 0.0;
        let hu = std::f64::consts::FRAC_PI_2 / n as f64;
        for i in 0..n {
            let u = (i as f64 + 0.5) * hu;
            let (s, sz) = u.sin_cos();
            let kz2 = (eps - s * s).sqrt();
            let kz2 = if kz2.im < 0.0 { -kz2 } else { kz2 };
            let rp = (eps * sz - kz2) / (eps * sz + kz2);
            perp += 1.5 * (s * s * s * rp * Complex64::new(0.0, a * sz).exp()).re * hu;
        }
        let vmax = (60.0 / a).asinh();
        let hv = vmax / n as f64;
        for i in 0..n {
            let v = (i as f64 + 0.5) * hv;
            let (s, sh) = (v.cosh(), v.sinh());
            let kz1 = Complex64::new(0.0, sh);
            let kz2 = (eps - s * s).sqrt();
            let kz2 = if kz2.im < 0.0 { -kz2 } else { kz2 };
            let rp = (eps * kz1 - kz2) / (eps * kz1 + kz2);
            perp += 1.5 * (s * s * s / kz1 * rp * (-a * sh).exp() * sh).re * hv;
        }
        assert!((c.perpendicular / (1.0 + perp) - 1.0).abs() < 1e-5, "{} vs {}", c.perpendicular, 1.0 + perp);
    }
}
