use rayon::prelude::*;

use super::{Scene, SceneError};
use crate::ldos::{self, EmitterModel, LayeredGeometry, LdosComponents, Medium, QuadratureConfig, SpectrumModel};

/// LDOS components at distance `d` over a half-space of `scene.materials[material]`.
fn components_over(
    scene: &Scene,
    material: usize,
    d: f64,
    spectrum: &SpectrumModel,
    spectral: bool,
    q: &QuadratureConfig,
) -> Result<LdosComponents, SceneError> {
    let m = &scene.materials[material];
    let g = LayeredGeometry::new(d, Medium::VACUUM, m.medium(spectrum.center), spectrum.center)?;
    let c = if spectral {
        ldos::spectral_components(&g, spectrum, |l| m.medium(l), q)?
    } else {
        ldos::ldos_components(&g, q)?
    };
    Ok(c)
}

/// Decay rate (µs⁻¹) at `p` from the planar result for the nearest surface.
pub fn local_decay_rate(
    scene: &Scene,
    e: &EmitterModel,
    p: [f64; 3],
    spectral: bool,
    q: &QuadratureConfig,
) -> Result<f64, SceneError> {
    if scene.is_below_topography(p) {
        return Err(SceneError::BelowTopography(p));
    }
    let hit = scene.nearest_surface(p);
    let c = components_over(scene, hit.material, hit.distance, &e.spectrum, spectral, q)?;
    Ok(ldos::decay_rate(e, c.for_emitter(e)))
}

/// `rho(d)` sampled on a logarithmic distance grid.
#[derive(Debug, Clone)]
pub struct RateTable {
    log_d0: f64,
    step: f64,
    rho: Vec<f64>,
}

impl RateTable {
    pub fn build(
        scene: &Scene,
        material: usize,
        e: &EmitterModel,
        spectral: bool,
        d_range: (f64, f64),
        n: usize,
        q: &QuadratureConfig,
    ) -> Result<Self, SceneError> {
        assert!(n >= 2 && d_range.0 > 0.0 && d_range.1 > d_range.0);
        let log_d0 = d_range.0.ln();
        let step = (d_range.1.ln() - log_d0) / (n - 1) as f64;
        let rho = (0..n)
            .into_par_iter()
            .map(|i| {
                let d = (log_d0 + step * i as f64).exp();
                components_over(scene, material, d, &e.spectrum, spectral, q).map(|c| c.for_emitter(e))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { log_d0, step, rho })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.log_d0.exp(), (self.log_d0 + self.step * (self.rho.len() - 1) as f64).exp())
    }

    /// Linear in `ln d`; clamped to the end values outside the table.
    pub fn rho(&self, d: f64) -> f64 {
        let x = (d.ln() - self.log_d0) / self.step;
        if !(x > 0.0) {
            return self.rho[0];
        }
        let last = self.rho.len() - 1;
        if x >= last as f64 {
            return self.rho[last];
        }
        let i = x as usize;
        let f = x - i as f64;
        self.rho[i] + f * (self.rho[i + 1] - self.rho[i])
    }
}

/// Tabulated decay-rate field of a scene, `k(x, y, z)` in µs⁻¹.
#[derive(Debug, Clone)]
pub struct GroundTruthField {
    pub scene: Scene,
    pub emitter: EmitterModel,
    tables: Vec<Option<RateTable>>,
}

impl GroundTruthField {
    pub const TABLE_POINTS: usize = 400;

    /// Tables run from the quadrature height floor to ten wavelengths for
    /// every material that appears as the substrate or an object.
    pub fn new(scene: Scene, emitter: EmitterModel, spectral: bool, q: &QuadratureConfig) -> Result<Self, SceneError> {
        scene.validate()?;
        emitter.validate()?;
        let range = (q.min_height.max(0.1), 10.0 * emitter.spectrum.center);
        let mut tables = vec![None; scene.materials.len()];
        let used = std::iter::once(scene.substrate).chain(scene.objects.iter().map(|o| o.material));
        for m in used {
            if tables[m].is_none() {
                tables[m] = Some(RateTable::build(&scene, m, &emitter, spectral, range, Self::TABLE_POINTS, q)?);
            }
        }
        Ok(Self { scene, emitter, tables })
    }

    /// Rate at `p`; points below the height floor take the floor value.
    pub fn rate(&self, p: [f64; 3]) -> Result<f64, SceneError> {
        if self.scene.is_below_topography(p) {
            return Err(SceneError::BelowTopography(p));
        }
        let hit = self.scene.nearest_surface(p);
        let t = self.tables[hit.material].as_ref().expect("table built for every used material");
        Ok(ldos::decay_rate(&self.emitter, t.rho(hit.distance)))
    }

    pub fn lifetime_ns(&self, p: [f64; 3]) -> Result<f64, SceneError> {
        Ok(ldos::lifetime_ns(self.rate(p)?))
    }
}
