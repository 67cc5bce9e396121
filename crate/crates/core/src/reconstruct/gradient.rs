use super::{LifetimeVolume, ReconstructError};

/// `(dk/dx, dk/dz)` of the decay rate `k = 1000 / tau` (µs⁻¹/nm) for every
/// (x, z) cell of every row, laid out like the volume.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMap {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// nm
    pub dx: f64,
    /// nm
    pub dz: f64,
    pub x0: f64,
    pub z0: f64,
    pub arrows: Vec<Option<[f64; 2]>>,
}

impl GradientMap {
    pub fn at(&self, ix: usize, iy: usize, iz: usize) -> Option<[f64; 2]> {
        self.arrows[(iy * self.nx + ix) * self.nz + iz]
    }

    /// `(x, z)` of a cell, nm.
    pub fn position(&self, ix: usize, iz: usize) -> (f64, f64) {
        (self.x0 + ix as f64 * self.dx, self.z0 + iz as f64 * self.dz)
    }
}

fn derivative(prev: Option<f64>, here: f64, next: Option<f64>, h: f64) -> Option<f64> {
    match (prev, next) {
        (Some(p), Some(n)) => Some((n - p) / (2.0 * h)),
        (None, Some(n)) => Some((n - here) / h),
        (Some(p), None) => Some((here - p) / h),
        (None, None) => None,
    }
}

/// Central differences between valid neighbours, one-sided where one
/// neighbour is masked; no arrow when either axis has no valid neighbour.
pub fn gradient_map(v: &LifetimeVolume) -> Result<GradientMap, ReconstructError> {
    if !v.z.absolute {
        return Err(ReconstructError::Argument("gradient needs a topography-corrected volume".into()));
    }
    let (nx, ny, nz) = (v.nx, v.ny, v.z.n);
    let rate = |ix: usize, iy: usize, iz: usize| v.at(ix, iy, iz).tau().map(|t| 1000.0 / t);
    let mut arrows = vec![None; nx * ny * nz];
    for iy in 0..ny {
        for ix in 0..nx {
            for iz in 0..nz {
                let Some(k) = rate(ix, iy, iz) else { continue };
                let left = if ix > 0 { rate(ix - 1, iy, iz) } else { None };
                let right = if ix + 1 < nx { rate(ix + 1, iy, iz) } else { None };
                let down = if iz > 0 { rate(ix, iy, iz - 1) } else { None };
                let up = if iz + 1 < nz { rate(ix, iy, iz + 1) } else { None };
                let gx = derivative(left, k, right, v.pixel_pitch);
                let gz = derivative(down, k, up, v.z.step);
                if let (Some(gx), Some(gz)) = (gx, gz) {
                    arrows[(iy * nx + ix) * nz + iz] = Some([gx, gz]);
                }
            }
        }
    }
    Ok(GradientMap { nx, ny, nz, dx: v.pixel_pitch, dz: v.z.step, x0: 0.0, z0: v.z.first_center, arrows })
}
