//! Run configuration, a TOML file with one table per pipeline stage.
//!
//! ```toml
//! [scene]
//! substrate = "glass"
//!
//! [material.glass]
//! eps = [2.25, 0.0]
//!
//! [material.silver]
//! table = [[600.0, -15.0, 0.5], [700.0, -20.0, 1.0]]
//!
//! [[object]]
//! shape = "cylinder"
//! material = "silver"
//! angle_deg = 90.0
//! radius = 50.0
//!
//! [emitter]
//! phi_deg = 30.7
//!
//! [plan]
//! nx = 41
//! dwell_ms = 100.0
//! ```
//!
//! Every key has a default except the scene materials. Unknown keys are
//! rejected with their line number.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use serde::Deserialize;

use qeflim::calibrate::{CalibrationContext, InitialGuess};
use qeflim::ldos::{EmitterModel, Medium, OrientationWeighting, SpectrumModel};
use qeflim::scene::{Background, HbtConfig, Material, ScanPlan, Scene, Shape, ThreeLevelModel};

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scene: Option<SceneSection>,
    #[serde(default)]
    pub material: BTreeMap<String, MaterialSection>,
    #[serde(default)]
    pub object: Vec<ObjectSection>,
    #[serde(default)]
    pub emitter: EmitterSection,
    pub plan: Option<PlanSection>,
    #[serde(default)]
    pub reconstruct: ReconstructSection,
    #[serde(default)]
    pub calibrate: CalibrateSection,
    pub hbt: Option<HbtSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    pub substrate: String,
}

/// Either a constant `eps = [re, im]` or `table = [[lambda_nm, re, im], ...]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSection {
    pub eps: Option<[f64; 2]>,
    pub table: Option<Vec<[f64; 3]>>,
}

/// A cylinder takes `x0`, `y0`, `angle_deg` (all default 0) and `radius`;
/// a sphere takes `center` and `radius`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSection {
    pub shape: ShapeKind,
    pub material: String,
    pub radius: f64,
    pub x0: Option<f64>,
    pub y0: Option<f64>,
    pub angle_deg: Option<f64>,
    pub center: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Cylinder,
    Sphere,
}

impl ObjectSection {
    fn shape(&self, index: usize) -> Result<Shape, CliError> {
        let misplaced = |key: &str| CliError::input(format!("object {} ({}) does not take {key}", index + 1, self.kind_name()));
        match self.shape {
            ShapeKind::Cylinder => {
                if self.center.is_some() {
                    return Err(misplaced("center"));
                }
                Ok(Shape::Cylinder {
                    x0: self.x0.unwrap_or(0.0),
                    y0: self.y0.unwrap_or(0.0),
                    angle: self.angle_deg.unwrap_or(0.0).to_radians(),
                    radius: self.radius,
                })
            }
            ShapeKind::Sphere => {
                for (key, v) in [("x0", self.x0), ("y0", self.y0), ("angle_deg", self.angle_deg)] {
                    if v.is_some() {
                        return Err(misplaced(key));
                    }
                }
                let center = self.center.ok_or_else(|| CliError::input(format!("object {} (sphere) needs center", index + 1)))?;
                Ok(Shape::Sphere { center, radius: self.radius })
            }
        }
    }

    fn kind_name(&self) -> &'static str {
        match self.shape {
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Sphere => "sphere",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Linear,
    Squared,
}

impl From<Weighting> for OrientationWeighting {
    fn from(w: Weighting) -> Self {
        match w {
            Weighting::Linear => OrientationWeighting::Linear,
            Weighting::Squared => OrientationWeighting::Squared,
        }
    }
}

/// Emission spectrum and orientation model shared by the emitter and
/// calibration tables.
struct Optics {
    spectral: bool,
    spectrum: SpectrumModel,
    weighting: OrientationWeighting,
    dipole_pair: bool,
}

fn optics(spectral: bool, center: f64, width: f64, samples: usize, weighting: Weighting, dipole_pair: bool) -> Result<Optics, CliError> {
    Ok(Optics {
        spectral,
        spectrum: SpectrumModel::new(center, width, samples).map_err(CliError::input)?,
        weighting: weighting.into(),
        dipole_pair,
    })
}

/// Rates in µs⁻¹.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitterSection {
    pub phi_deg: f64,
    pub k_r0: f64,
    pub k_nr: f64,
    pub spectral: bool,
    pub spectrum_center: f64,
    pub spectrum_width: f64,
    pub spectrum_samples: usize,
    pub weighting: Weighting,
    pub dipole_pair: bool,
}

impl Default for EmitterSection {
    fn default() -> Self {
        let s = SpectrumModel::default();
        Self {
            phi_deg: 30.7,
            k_r0: 36.9,
            k_nr: 9.0,
            spectral: true,
            spectrum_center: s.center,
            spectrum_width: s.std_dev,
            spectrum_samples: s.n_samples,
            weighting: Weighting::Linear,
            dipole_pair: true,
        }
    }
}

/// Lengths in nm; see [`ScanPlan`] for the meaning of each key.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    pub nx: usize,
    pub ny: usize,
    pub pitch: f64,
    pub origin: [f64; 2],
    pub dwell_ms: f64,
    pub repeats: u32,
    pub amplitude: f64,
    pub cantilever_freq: f64,
    pub marker_divisor: u32,
    pub sync_rate: f64,
    pub micro_resolution_ps: f64,
    pub macro_resolution_ns: f64,
    pub excitation_prob: f64,
    pub detection_efficiency: f64,
    pub tip_offset: f64,
    pub probe_offset: [f64; 2],
    pub fast_decay_rate: f64,
    pub fast_fraction: f64,
    pub flat_rate: f64,
    pub seed: u64,
}

impl Default for PlanSection {
    fn default() -> Self {
        let p = ScanPlan::default();
        Self {
            nx: p.nx,
            ny: p.ny,
            pitch: p.pitch,
            origin: p.origin,
            dwell_ms: p.dwell_ms,
            repeats: p.repeats,
            amplitude: p.amplitude,
            cantilever_freq: p.cantilever_freq,
            marker_divisor: p.marker_divisor,
            sync_rate: p.sync_rate,
            micro_resolution_ps: p.micro_resolution,
            macro_resolution_ns: p.macro_resolution,
            excitation_prob: p.excitation_prob,
            detection_efficiency: p.detection_efficiency,
            tip_offset: p.tip_offset,
            probe_offset: p.probe_offset,
            fast_decay_rate: p.background.fast_decay_rate,
            fast_fraction: p.background.fast_fraction,
            flat_rate: p.background.flat_rate,
            seed: p.seed,
        }
    }
}

impl PlanSection {
    pub fn scan_plan(&self) -> ScanPlan {
        ScanPlan {
            nx: self.nx,
            ny: self.ny,
            pitch: self.pitch,
            origin: self.origin,
            dwell_ms: self.dwell_ms,
            repeats: self.repeats,
            amplitude: self.amplitude,
            cantilever_freq: self.cantilever_freq,
            marker_divisor: self.marker_divisor,
            sync_rate: self.sync_rate,
            micro_resolution: self.micro_resolution_ps,
            macro_resolution: self.macro_resolution_ns,
            excitation_prob: self.excitation_prob,
            detection_efficiency: self.detection_efficiency,
            tip_offset: self.tip_offset,
            probe_offset: self.probe_offset,
            background: Background {
                fast_decay_rate: self.fast_decay_rate,
                fast_fraction: self.fast_fraction,
                flat_rate: self.flat_rate,
            },
            seed: self.seed,
        }
    }
}

/// Height grid of the ground truth written by `simulate`.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructSection {
    pub bins: usize,
}

impl Default for ReconstructSection {
    fn default() -> Self {
        Self { bins: 25 }
    }
}

/// Forward model for approach-curve fits; the emitter sits in vacuum above
/// a homogeneous substrate.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    pub substrate_eps: [f64; 2],
    pub init_k_nr: Option<f64>,
    pub init_k_r0: Option<f64>,
    pub init_phi_deg: Option<f64>,
    pub spectral: bool,
    pub spectrum_center: f64,
    pub spectrum_width: f64,
    pub spectrum_samples: usize,
    pub weighting: Weighting,
    pub dipole_pair: bool,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        let e = EmitterSection::default();
        Self {
            substrate_eps: [2.25, 0.0],
            init_k_nr: None,
            init_k_r0: None,
            init_phi_deg: None,
            spectral: e.spectral,
            spectrum_center: e.spectrum_center,
            spectrum_width: e.spectrum_width,
            spectrum_samples: e.spectrum_samples,
            weighting: e.weighting,
            dipole_pair: e.dipole_pair,
        }
    }
}

impl CalibrateSection {
    pub fn context(&self) -> Result<CalibrationContext, CliError> {
        let [re, im] = self.substrate_eps;
        let o = optics(self.spectral, self.spectrum_center, self.spectrum_width, self.spectrum_samples, self.weighting, self.dipole_pair)?;
        Ok(CalibrationContext {
            substrate: Medium::new(Complex64::new(re, im)).map_err(CliError::input)?,
            emitter_medium: Medium::VACUUM,
            spectrum: o.spectrum,
            spectral: o.spectral,
            weighting: o.weighting,
            dipole_pair: o.dipole_pair,
        })
    }

    pub fn initial_guess(&self) -> Result<Option<InitialGuess>, CliError> {
        match (self.init_k_nr, self.init_k_r0, self.init_phi_deg) {
            (None, None, None) => Ok(None),
            (Some(k_nr), Some(k_r0), Some(phi)) => Ok(Some(InitialGuess { k_nr, k_r0, phi: phi.to_radians() })),
            _ => Err(CliError::input("[calibrate] init_k_nr, init_k_r0 and init_phi_deg go together")),
        }
    }
}

/// Two-detector correlation run. Times in ns, rates in counts per second.
/// `background_rate` and `target_g2_zero` are alternatives.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HbtSection {
    pub bunching_amplitude: f64,
    pub antibunching_ns: f64,
    pub bunching_ns: f64,
    pub signal_rate: f64,
    pub duration_s: f64,
    pub detection_efficiency: f64,
    pub background_rate: Option<f64>,
    pub target_g2_zero: Option<f64>,
    pub poisson: bool,
    pub seed: u64,
}

impl Default for HbtSection {
    fn default() -> Self {
        let c = HbtConfig::default();
        Self {
            bunching_amplitude: 0.5,
            antibunching_ns: 10.0,
            bunching_ns: 150.0,
            signal_rate: c.mean_rate,
            duration_s: c.duration,
            detection_efficiency: c.detection_efficiency,
            background_rate: None,
            target_g2_zero: None,
            poisson: false,
            seed: c.seed,
        }
    }
}

impl HbtSection {
    pub fn model(&self) -> Result<ThreeLevelModel, CliError> {
        ThreeLevelModel::new(self.bunching_amplitude, self.antibunching_ns, self.bunching_ns).map_err(CliError::input)
    }

    pub fn hbt_config(&self) -> Result<HbtConfig, CliError> {
        let background_rate = match (self.background_rate, self.target_g2_zero) {
            (Some(_), Some(_)) => return Err(CliError::input("[hbt] background_rate and target_g2_zero are exclusive")),
            (Some(b), None) => b,
            (None, Some(g)) => qeflim::scene::background_for_g2_zero(self.signal_rate, g).map_err(CliError::input)?,
            (None, None) => 0.0,
        };
        Ok(HbtConfig {
            mean_rate: self.signal_rate,
            duration: self.duration_s,
            detection_efficiency: self.detection_efficiency,
            background_rate,
            poisson: self.poisson,
            seed: self.seed,
        })
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::input(e.to_string().trim_end()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::input(format!("{}: {}", path.display(), e.message)))
    }

    pub fn scene(&self) -> Result<Scene, CliError> {
        let s = self.scene.as_ref().ok_or_else(|| CliError::input("missing [scene] table"))?;
        let material = |name: &str| -> Result<Material, CliError> {
            let m = self.material.get(name).ok_or_else(|| CliError::input(format!("material {name:?} is not defined")))?;
            let built = match (m.eps, &m.table) {
                (Some([re, im]), None) => Material::constant(name, Complex64::new(re, im)),
                (None, Some(t)) => Material::tabulated(name, t.iter().map(|&[l, re, im]| (l, Complex64::new(re, im))).collect()),
                _ => return Err(CliError::input(format!("[material.{name}] needs exactly one of eps or table"))),
            };
            built.map_err(CliError::input)
        };
        let mut scene = Scene::flat(material(&s.substrate)?);
        for (i, obj) in self.object.iter().enumerate() {
            let shape = obj.shape(i)?;
            let index = match scene.material_index(&obj.material) {
                Some(i) => i,
                None => scene.add_material(material(&obj.material)?),
            };
            scene.add_object(shape, index);
        }
        scene.validate().map_err(CliError::input)?;
        Ok(scene)
    }

    pub fn emitter(&self) -> Result<(EmitterModel, bool), CliError> {
        let e = &self.emitter;
        let o = optics(e.spectral, e.spectrum_center, e.spectrum_width, e.spectrum_samples, e.weighting, e.dipole_pair)?;
        let model = EmitterModel::new(e.phi_deg.to_radians(), e.k_r0, e.k_nr)
            .map_err(CliError::input)?
            .with_spectrum(o.spectrum)
            .with_weighting(o.weighting)
            .with_dipole_pair(o.dipole_pair);
        Ok((model, o.spectral))
    }
}
