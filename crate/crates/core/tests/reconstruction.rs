use num_complex::Complex64;
use qeflim::ldos::{EmitterModel, QuadratureConfig, SpectrumModel};
use qeflim::reconstruct::{
    bin_photons, build_volume, g2_correlate, g2_fit, gradient_map, topography_correct, FitConfig, VoxelMask,
};
use qeflim::scene::{
    simulate_hbt, simulate_scan, simulate_scan_field, Background, GroundTruthField, HbtConfig, Material, ScanPlan, Scene,
    Shape, ThreeLevelModel,
};

fn emitter() -> EmitterModel {
    EmitterModel::new(30.7f64.to_radians(), 36.9, 9.0).unwrap().with_spectrum(SpectrumModel::monochromatic(700.0))
}

fn glass() -> Scene {
    Scene::flat(Material::constant("glass", Complex64::new(2.25, 0.0)).unwrap())
}

#[test]
fn photons_are_conserved() {
    let plan = ScanPlan {
        nx: 3,
        ny: 2,
        dwell_ms: 5.0,
        repeats: 2,
        background: Background { fast_fraction: 0.2, flat_rate: 5e4, ..Default::default() },
        ..Default::default()
    };
    let sim = simulate_scan(&glass(), &plan, &emitter(), false, &QuadratureConfig::default()).unwrap();
    for n_bins in [1, 7, 25] {
        let h = bin_photons(&sim.stream, n_bins).unwrap();
        let binned: u64 = (0..h.n_voxels()).map(|v| h.voxel_total(v)).sum();
        assert_eq!(h.photons_in, sim.stream.photon_count() as u64);
        assert_eq!(binned + h.exclusions.total(), h.photons_in);
    }
}

#[test]
fn fit_errors_are_consistent_with_reported_uncertainty() {
    // vacuum below the probe: a single lifetime everywhere
    let scene = Scene::flat(Material::constant("vacuum", Complex64::new(1.0, 0.0)).unwrap());
    let e = emitter();
    let tau_true = 1000.0 / (e.nonradiative_rate + e.radiative_rate_free);
    let plan = ScanPlan { nx: 10, ny: 10, dwell_ms: 10.0, excitation_prob: 0.5, detection_efficiency: 0.2, seed: 21, ..Default::default() };
    let sim = simulate_scan(&scene, &plan, &e, false, &QuadratureConfig::default()).unwrap();
    let v = build_volume(&bin_photons(&sim.stream, 4).unwrap(), &FitConfig::default());
    let z: Vec<f64> = v.voxels.iter().filter_map(|x| x.lifetime()).map(|(t, s)| (t - tau_true) / s).collect();
    assert!(z.len() >= 100, "{}", z.len());
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (z.len() - 1) as f64;
    assert!(mean.abs() < 0.2, "mean {mean}");
    assert!((0.5..=2.0).contains(&var), "variance {var}");
}

#[test]
fn no_lifetime_below_the_surface() {
    let q = QuadratureConfig::default();
    let mut scene = glass();
    let ag = scene.add_material(Material::constant("silver", Complex64::new(-20.0, 1.0)).unwrap());
    scene.add_object(Shape::Cylinder { x0: 0.0, y0: 0.0, angle: std::f64::consts::FRAC_PI_2, radius: 50.0 }, ag);
    let field = GroundTruthField::new(scene, emitter(), false, &q).unwrap();
    let plan = ScanPlan {
        nx: 21,
        ny: 1,
        pitch: 10.0,
        origin: [-100.0, 0.0],
        dwell_ms: 20.0,
        excitation_prob: 0.5,
        detection_efficiency: 0.2,
        probe_offset: [20.0, 0.0],
        ..Default::default()
    };
    let sim = simulate_scan_field(&field, &plan).unwrap();
    let h = topography_correct(&bin_photons(&sim.stream, 8).unwrap(), &sim.heightmap, plan.tip_offset).unwrap();
    let v = build_volume(&h, &FitConfig::default());
    let mut below = 0;
    for ix in 0..plan.nx {
        let xy = plan.emitter_xy(ix, 0);
        for iz in 0..v.z.n {
            let vox = v.at(ix, 0, iz);
            let z = v.z.center(iz);
            if field.scene.is_below_topography([xy[0], xy[1], z]) || z < sim.heightmap[ix] {
                below += 1;
                assert!(vox.lifetime().is_none(), "voxel ({ix}, {iz}) at z {z} reports a lifetime");
                assert_eq!(vox.mask, VoxelMask::BelowSurface);
            }
        }
    }
    assert!(below > 0);
}

#[test]
fn rate_falls_with_height_near_glass() {
    let q = QuadratureConfig::default();
    let field = GroundTruthField::new(glass(), emitter(), false, &q).unwrap();
    let plan = ScanPlan { nx: 2, ny: 2, amplitude: 128.0, dwell_ms: 400.0, excitation_prob: 0.5, detection_efficiency: 0.2, seed: 2, ..Default::default() };
    let sim = simulate_scan_field(&field, &plan).unwrap();
    let h = topography_correct(&bin_photons(&sim.stream, 25).unwrap(), &sim.heightmap, plan.tip_offset).unwrap();
    let v = build_volume(&h, &FitConfig::default());
    let g = gradient_map(&v).unwrap();
    let limit = plan.tip_offset + plan.amplitude / 3.0;
    let mut dz = Vec::new();
    for iy in 0..plan.ny {
        for ix in 0..plan.nx {
            for iz in (0..v.z.n).filter(|&iz| v.z.center(iz) <= limit) {
                if let Some([_, d]) = g.at(ix, iy, iz) {
                    dz.push(d);
                }
            }
        }
    }
    assert!(dz.len() >= 20, "{}", dz.len());
    let negative = dz.iter().filter(|&&d| d < 0.0).count();
    assert!(negative as f64 >= 0.9 * dz.len() as f64, "{negative}/{}", dz.len());
    assert!(dz.iter().sum::<f64>() < 0.0);
}

#[test]
fn two_level_source_is_antibunched() {
    let model = ThreeLevelModel::new(0.0, 10.0, 100.0).unwrap();
    let cfg = HbtConfig { mean_rate: 1e6, duration: 2.0, detection_efficiency: 0.2, seed: 4, ..Default::default() };
    let h = g2_correlate(&simulate_hbt(&model, &cfg).unwrap(), 300.0, 1.0).unwrap();
    let fit = g2_fit(&h).unwrap();
    assert!(fit.params.g2_zero < 0.1, "{:?}", fit.params);
    assert_eq!(fit.is_single_emitter, Some(true));
}

#[test]
fn poisson_light_is_flat_at_long_lags() {
    let model = ThreeLevelModel::new(0.0, 10.0, 100.0).unwrap();
    let cfg = HbtConfig { mean_rate: 4e6, duration: 2.5, poisson: true, seed: 5, ..Default::default() };
    let h = g2_correlate(&simulate_hbt(&model, &cfg).unwrap(), 1000.0, 1.0).unwrap();
    assert!(h.pairs() >= 10_000_000, "{}", h.pairs());
    let m = h.long_lag_mean(500.0).unwrap();
    assert!((0.98..=1.02).contains(&m), "{m}");
}
