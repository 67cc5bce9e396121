use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Geometric, Poisson};
use rayon::prelude::*;

use super::{GroundTruthField, Scene, SceneError};
use crate::ldos::{EmitterModel, QuadratureConfig};
use crate::tagstream::{StreamHeader, TagRecord, TagStream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Background {
    /// ns⁻¹
    pub fast_decay_rate: f64,
    /// Fraction of detection events that come from the fast component.
    pub fast_fraction: f64,
    /// Uncorrelated counts per second.
    pub flat_rate: f64,
}

impl Default for Background {
    fn default() -> Self {
        Self { fast_decay_rate: 2.0, fast_fraction: 0.0, flat_rate: 0.0 }
    }
}

/// Raster scan of an oscillating probe. Lengths in nm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPlan {
    pub nx: usize,
    pub ny: usize,
    pub pitch: f64,
    /// Position of pixel (0, 0).
    pub origin: [f64; 2],
    pub dwell_ms: f64,
    /// Full-frame repetitions, accumulated by pixel index downstream.
    pub repeats: u32,
    /// Peak-to-peak oscillation amplitude.
    pub amplitude: f64,
    /// Hz
    pub cantilever_freq: f64,
    pub marker_divisor: u32,
    /// Hz
    pub sync_rate: f64,
    /// ps
    pub micro_resolution: f64,
    /// ns
    pub macro_resolution: f64,
    pub excitation_prob: f64,
    pub detection_efficiency: f64,
    /// Emitter height above the contact point at the bottom of the oscillation.
    pub tip_offset: f64,
    /// Lateral emitter position relative to the tip apex.
    pub probe_offset: [f64; 2],
    pub background: Background,
    pub seed: u64,
}

impl Default for ScanPlan {
    fn default() -> Self {
        Self {
            nx: 1,
            ny: 1,
            pitch: 10.0,
            origin: [0.0, 0.0],
            dwell_ms: 10.0,
            repeats: 1,
            amplitude: 37.0,
            cantilever_freq: 300e3,
            marker_divisor: 4096,
            sync_rate: 10e6,
            micro_resolution: 16.0,
            macro_resolution: 1.0,
            excitation_prob: 0.05,
            detection_efficiency: 0.1,
            tip_offset: 5.0,
            probe_offset: [0.0, 0.0],
            background: Background::default(),
            seed: 0,
        }
    }
}

impl ScanPlan {
    pub fn header(&self) -> StreamHeader {
        StreamHeader {
            sync_rate: self.sync_rate,
            micro_resolution: self.micro_resolution,
            macro_resolution: self.macro_resolution,
            cantilever_freq: self.cantilever_freq,
            cantilever_amplitude: self.amplitude,
            marker_divisor: self.marker_divisor,
            nx: self.nx as u16,
            ny: self.ny as u16,
            pixel_pitch: self.pitch,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |msg: String| Err(SceneError::Plan(msg));
        if self.nx == 0 || self.ny == 0 || self.repeats == 0 {
            return Err(SceneError::EmptyScan);
        }
        if self.nx > u16::MAX as usize || self.ny > u16::MAX as usize {
            return bad(format!("grid {}x{} exceeds 65535 per axis", self.nx, self.ny));
        }
        if !(0.0..=1.0).contains(&self.excitation_prob) {
            return bad(format!("excitation_prob {} outside [0, 1]", self.excitation_prob));
        }
        if !(0.0..=1.0).contains(&self.detection_efficiency) {
            return bad(format!("detection_efficiency {} outside [0, 1]", self.detection_efficiency));
        }
        if !(self.dwell_ms > 0.0 && self.dwell_ms.is_finite()) {
            return bad(format!("dwell {} ms must be > 0", self.dwell_ms));
        }
        if !(self.pitch > 0.0 && self.amplitude > 0.0 && self.cantilever_freq > 0.0) {
            return bad("pitch, amplitude and cantilever_freq must be > 0".into());
        }
        if !(self.tip_offset >= 0.0) {
            return bad(format!("tip_offset {} must be >= 0", self.tip_offset));
        }
        let b = &self.background;
        if !(0.0..=1.0).contains(&b.fast_fraction) || !(b.flat_rate >= 0.0) || !(b.fast_decay_rate > 0.0) {
            return bad("background needs fast_fraction in [0, 1], flat_rate >= 0, fast_decay_rate > 0".into());
        }
        self.header().validate().map_err(|e| SceneError::Plan(e.to_string()))
    }

    /// Probe height above the bottom of the oscillation at time `t` (ns).
    pub fn oscillation_height(&self, t: f64) -> f64 {
        0.5 * self.amplitude * (1.0 + (2.0 * PI * t * self.cantilever_freq * 1e-9).cos())
    }

    fn dwell_ns(&self) -> f64 {
        self.dwell_ms * 1e6
    }

    pub fn apex(&self, ix: usize, iy: usize) -> [f64; 2] {
        [self.origin[0] + ix as f64 * self.pitch, self.origin[1] + iy as f64 * self.pitch]
    }

    pub fn emitter_xy(&self, ix: usize, iy: usize) -> [f64; 2] {
        let a = self.apex(ix, iy);
        [a[0] + self.probe_offset[0], a[1] + self.probe_offset[1]]
    }

    /// Contact height of the probe at a pixel: neither the apex nor the
    /// emitter can go below the topography under it.
    pub fn contact_height(&self, scene: &Scene, ix: usize, iy: usize) -> f64 {
        let a = self.apex(ix, iy);
        let e = self.emitter_xy(ix, iy);
        scene.z_top(a[0], a[1]).max(scene.z_top(e[0], e[1]))
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedScan {
    pub stream: TagStream,
    /// Contact height per pixel, row-major (`iy * nx + ix`), nm.
    pub heightmap: Vec<f64>,
}

/// Builds the tabulated field and simulates. See [`simulate_scan_field`].
pub fn simulate_scan(
    scene: &Scene,
    plan: &ScanPlan,
    emitter: &EmitterModel,
    spectral: bool,
    q: &QuadratureConfig,
) -> Result<SimulatedScan, SceneError> {
    plan.validate()?;
    let field = GroundTruthField::new(scene.clone(), *emitter, spectral, q)?;
    simulate_scan_field(&field, plan)
}

struct PixelPhotons {
    index: usize,
    photons: Vec<(u64, u16)>,
}

/// Monte-Carlo time tags for a raster scan over `field`.
///
/// Each pixel draws from its own ChaCha stream derived from `plan.seed`,
/// so the output does not depend on the thread count.
pub fn simulate_scan_field(field: &GroundTruthField, plan: &ScanPlan) -> Result<SimulatedScan, SceneError> {
    plan.validate()?;
    let header = plan.header();
    let scene = &field.scene;
    let n_pix = plan.nx * plan.ny;
    let heightmap: Vec<f64> = (0..n_pix).map(|i| plan.contact_height(scene, i % plan.nx, i / plan.nx)).collect();

    let t_sync = header.sync_period_ns();
    let dwell = plan.dwell_ns();
    let n_pulses = (dwell / t_sync).floor() as u64;
    let channels = header.micro_channels();
    let micro_ns = plan.micro_resolution * 1e-3;
    let p_detect = plan.excitation_prob * plan.detection_efficiency;
    let geometric = if p_detect > 0.0 { Some(Geometric::new(p_detect).map_err(|e| SceneError::Plan(e.to_string()))?) } else { None };
    let mean_flat = plan.background.flat_rate * plan.dwell_ms * 1e-3;
    let poisson = if mean_flat > 0.0 { Some(Poisson::new(mean_flat).map_err(|e| SceneError::Plan(e.to_string()))?) } else { None };
    let to_macro = |t: f64| (t / plan.macro_resolution).round() as u64;
    let total = n_pix * plan.repeats as usize;

    let pixels: Vec<PixelPhotons> = (0..total)
        .into_par_iter()
        .map(|lin| -> Result<PixelPhotons, SceneError> {
            let pix = lin % n_pix;
            let (ix, iy) = (pix % plan.nx, pix / plan.nx);
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
            rng.set_stream(lin as u64);
            let t0 = lin as f64 * dwell;
            let xy = plan.emitter_xy(ix, iy);
            let z0 = heightmap[pix] + plan.tip_offset;
            let mut photons = Vec::new();
            let emit = |pulse: u64, delay: f64, photons: &mut Vec<(u64, u16)>| {
                let wraps = (delay / t_sync).floor();
                let micro = (((delay - wraps * t_sync) / micro_ns) as usize).min(channels - 1) as u16;
                let sync = pulse + wraps as u64;
                photons.push((to_macro(t0 + sync as f64 * t_sync), micro));
            };
            if let Some(geo) = &geometric {
                let mut pulse = 0u64;
                loop {
                    pulse = pulse.saturating_add(geo.sample(&mut rng));
                    if pulse >= n_pulses {
                        break;
                    }
                    let t = t0 + pulse as f64 * t_sync;
                    let rate_ns = if rng.random::<f64>() < plan.background.fast_fraction {
                        plan.background.fast_decay_rate
                    } else {
                        let z = z0 + plan.oscillation_height(t);
                        field.rate([xy[0], xy[1], z])? * 1e-3
                    };
                    let delay: f64 = Exp1.sample(&mut rng);
                    emit(pulse, delay / rate_ns, &mut photons);
                    pulse += 1;
                }
            }
            if let Some(poi) = &poisson {
                let n = poi.sample(&mut rng) as u64;
                for _ in 0..n {
                    let pulse = rng.random_range(0..n_pulses.max(1));
                    let micro = rng.random_range(0..channels) as u16;
                    photons.push((to_macro(t0 + pulse as f64 * t_sync), micro));
                }
            }
            photons.sort_unstable();
            Ok(PixelPhotons { index: lin, photons })
        })
        .collect::<Result<_, _>>()?;

    // (macro, rank, pixel, micro): markers before photons at equal times.
    let mut keyed: Vec<(u64, u8, u32, u16, TagRecord)> = Vec::new();
    let end = total as f64 * dwell;
    let span = plan.marker_divisor as f64 * 1e9 / plan.cantilever_freq;
    let n_markers = (end / span).ceil() as u64 + 1;
    for j in 0..=n_markers {
        let m = to_macro(j as f64 * span);
        keyed.push((m, 0, 0, 0, TagRecord::CantileverMarker { macro_time: m }));
    }
    for p in &pixels {
        let m = to_macro(p.index as f64 * dwell);
        let pixel_index = (p.index % n_pix) as u32;
        keyed.push((m, 1, p.index as u32, 0, TagRecord::PixelMarker { macro_time: m, pixel_index }));
        for &(macro_time, micro_time) in &p.photons {
            keyed.push((macro_time, 2, p.index as u32, micro_time, TagRecord::Photon { channel: 0, macro_time, micro_time }));
        }
    }
    keyed.sort_unstable_by_key(|k| (k.0, k.1, k.2, k.3));
    let records = keyed.into_iter().map(|k| k.4).collect();
    Ok(SimulatedScan { stream: TagStream { header, records }, heightmap })
}

/// One ground-truth sample of the reconstruction grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub ix: usize,
    pub iy: usize,
    pub bin: usize,
    /// Absolute emitter height, nm.
    pub z: f64,
    pub tau_ns: f64,
}

/// Lifetime at every (pixel, height-bin center) the scan visits.
pub fn ground_truth_samples(field: &GroundTruthField, plan: &ScanPlan, n_bins: usize) -> Result<Vec<TruthSample>, SceneError> {
    plan.validate()?;
    let mut out = Vec::with_capacity(plan.nx * plan.ny * n_bins);
    for iy in 0..plan.ny {
        for ix in 0..plan.nx {
            let xy = plan.emitter_xy(ix, iy);
            let base = plan.contact_height(&field.scene, ix, iy) + plan.tip_offset;
            for bin in 0..n_bins {
                let z = base + (bin as f64 + 0.5) * plan.amplitude / n_bins as f64;
                let tau_ns = field.lifetime_ns([xy[0], xy[1], z])?;
                out.push(TruthSample { ix, iy, bin, z, tau_ns });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ldos::SpectrumModel;
    use crate::scene::{Material, Shape};
    use num_complex::Complex64;

    fn glass_field() -> GroundTruthField {
        let s = Scene::flat(Material::constant("glass", Complex64::new(2.25, 0.0)).unwrap());
        let e = EmitterModel::new(0.5, 36.9, 9.0).unwrap().with_spectrum(SpectrumModel::monochromatic(700.0));
        GroundTruthField::new(s, e, false, &QuadratureConfig::default()).unwrap()
    }

    fn small_plan() -> ScanPlan {
        ScanPlan { nx: 3, ny: 2, dwell_ms: 2.0, cantilever_freq: 300e3, marker_divisor: 64, seed: 9, ..Default::default() }
    }

    #[test]
    fn markers_only_without_excitation() {
        let plan = ScanPlan { excitation_prob: 0.0, ..small_plan() };
        let out = simulate_scan_field(&glass_field(), &plan).unwrap();
        assert_eq!(out.stream.photon_count(), 0);
        let pixels = out.stream.records.iter().filter(|r| matches!(r, TagRecord::PixelMarker { .. })).count();
        assert_eq!(pixels, 6);
        let markers = crate::tagstream::cantilever_markers(&out.stream);
        let span = 64.0 * 1e9 / 300e3;
        for w in markers.windows(2) {
            assert!((w[1] - w[0] - span).abs() <= 1.0);
        }
        assert!(*markers.last().unwrap() >= 6.0 * 2e6);
    }

    #[test]
    fn deterministic_and_sorted() {
        let f = glass_field();
        let a = simulate_scan_field(&f, &small_plan()).unwrap().stream.encode().unwrap();
        let b = simulate_scan_field(&f, &small_plan()).unwrap().stream.encode().unwrap();
        assert_eq!(a, b);
        let c = simulate_scan_field(&f, &ScanPlan { seed: 10, ..small_plan() }).unwrap().stream.encode().unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn photon_yield_and_background() {
        let f = glass_field();
        let plan = ScanPlan { background: Background { flat_rate: 1e5, ..Default::default() }, ..small_plan() };
        let out = simulate_scan_field(&f, &plan).unwrap();
        // 2e4 pulses per pixel at p = 0.005, plus 200 flat counts per pixel
        let expected = 6.0 * (2e4 * 0.005 + 200.0);
        let n = out.stream.photon_count() as f64;
        assert!((n - expected).abs() < 5.0 * expected.sqrt(), "{n} vs {expected}");
    }

    #[test]
    fn zero_pixels_rejected() {
        let plan = ScanPlan { nx: 0, ..small_plan() };
        assert!(matches!(simulate_scan_field(&glass_field(), &plan), Err(SceneError::EmptyScan)));
    }

    #[test]
    fn contact_height_with_offset() {
        let mut s = Scene::flat(Material::constant("glass", Complex64::new(2.25, 0.0)).unwrap());
        let ag = s.add_material(Material::constant("silver", Complex64::new(-20.0, 1.0)).unwrap());
        s.add_object(Shape::Cylinder { x0: 0.0, y0: 0.0, angle: std::f64::consts::FRAC_PI_2, radius: 50.0 }, ag);
        let plan = ScanPlan { nx: 21, origin: [-100.0, 0.0], probe_offset: [30.0, 0.0], ..Default::default() };
        // apex at x = -70 is over glass but the emitter at -40 is over the wire
        let h = plan.contact_height(&s, 3, 0);
        assert!((h - s.z_top(-40.0, 0.0)).abs() < 1e-12);
        assert!(h > 50.0);
        assert_eq!(plan.contact_height(&s, 0, 0), 0.0);
    }
}
