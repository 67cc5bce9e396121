use rayon::prelude::*;

use super::{fit_lifetime, FitConfig, FitOutcome, HistogramVolume, LifetimeFit, ZAxis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VoxelMask {
    Valid,
    InsufficientCounts,
    /// Enough photons, but the fit did not converge.
    FitFailed,
    BelowSurface,
    Unreached,
}

impl VoxelMask {
    pub fn as_str(self) -> &'static str {
        match self {
            VoxelMask::Valid => "valid",
            VoxelMask::InsufficientCounts => "insufficient_counts",
            VoxelMask::FitFailed => "fit_failed",
            VoxelMask::BelowSurface => "below_surface",
            VoxelMask::Unreached => "unreached",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Voxel {
    pub mask: VoxelMask,
    /// Present only for fitted voxels (valid or failed).
    pub fit: Option<LifetimeFit>,
}

impl Voxel {
    /// `(tau, stderr)` in ns for valid voxels.
    pub fn lifetime(&self) -> Option<(f64, f64)> {
        match (self.mask, &self.fit) {
            (VoxelMask::Valid, Some(f)) => f.lifetime(),
            _ => None,
        }
    }

    pub fn tau(&self) -> Option<f64> {
        self.lifetime().map(|l| l.0)
    }

    fn masked(mask: VoxelMask) -> Self {
        Self { mask, fit: None }
    }

    fn from_histogram(h: &[u32], channel_width: f64, cfg: &FitConfig) -> Self {
        match fit_lifetime(h, channel_width, cfg) {
            (FitOutcome::InsufficientCounts, _) => Voxel::masked(VoxelMask::InsufficientCounts),
            (FitOutcome::Fitted, f) if f.converged => Voxel { mask: VoxelMask::Valid, fit: Some(f) },
            (FitOutcome::Fitted, f) => Voxel { mask: VoxelMask::FitFailed, fit: Some(f) },
        }
    }
}

/// Per-voxel fits on the grid of the source histograms.
#[derive(Debug, Clone, PartialEq)]
pub struct LifetimeVolume {
    pub nx: usize,
    pub ny: usize,
    pub z: ZAxis,
    pub pixel_pitch: f64,
    pub voxels: Vec<Voxel>,
}

impl LifetimeVolume {
    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iy * self.nx + ix) * self.z.n + iz
    }

    pub fn at(&self, ix: usize, iy: usize, iz: usize) -> &Voxel {
        &self.voxels[self.index(ix, iy, iz)]
    }

    pub fn valid_fraction(&self) -> f64 {
        if self.voxels.is_empty() {
            return 0.0;
        }
        self.voxels.iter().filter(|v| v.mask == VoxelMask::Valid).count() as f64 / self.voxels.len() as f64
    }

    pub fn median_tau(&self) -> Option<f64> {
        let mut t: Vec<f64> = self.voxels.iter().filter_map(Voxel::tau).collect();
        if t.is_empty() {
            return None;
        }
        t.sort_by(f64::total_cmp);
        let n = t.len();
        Some(if n % 2 == 1 { t[n / 2] } else { 0.5 * (t[n / 2 - 1] + t[n / 2]) })
    }

    /// Horizontal slice `iz` as a row-major `ny * nx` grid.
    pub fn slice(&self, iz: usize) -> Vec<Voxel> {
        (0..self.ny).flat_map(|iy| (0..self.nx).map(move |ix| (ix, iy))).map(|(ix, iy)| *self.at(ix, iy, iz)).collect()
    }
}

/// Images from pooling the closest and the most distant quarter of the
/// oscillation, row-major `ny * nx`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuarterImages {
    pub closest: Vec<Voxel>,
    pub distant: Vec<Voxel>,
}

pub fn build_volume(h: &HistogramVolume, cfg: &FitConfig) -> LifetimeVolume {
    let voxels = (0..h.n_voxels())
        .into_par_iter()
        .map(|v| match h.preset_mask(v) {
            Some(m) => Voxel::masked(m),
            None => Voxel::from_histogram(h.histogram(v), h.channel_width, cfg),
        })
        .collect();
    LifetimeVolume { nx: h.nx, ny: h.ny, z: h.z, pixel_pitch: h.pixel_pitch, voxels }
}

/// Pools the bins whose centers fall in the bottom and top quarter of the
/// oscillation. Only meaningful on relative-height histograms.
pub fn quarter_images(h: &HistogramVolume, cfg: &FitConfig) -> QuarterImages {
    let a = h.amplitude;
    let lower: Vec<usize> = (0..h.z.n).filter(|&k| h.z.center(k) <= 0.25 * a).collect();
    let upper: Vec<usize> = (0..h.z.n).filter(|&k| h.z.center(k) >= 0.75 * a).collect();
    let image = |bins: &[usize]| -> Vec<Voxel> {
        (0..h.nx * h.ny)
            .into_par_iter()
            .map(|p| {
                let hist = h.pooled(bins.iter().map(|&k| p * h.z.n + k));
                Voxel::from_histogram(&hist, h.channel_width, cfg)
            })
            .collect()
    };
    QuarterImages { closest: image(&lower), distant: image(&upper) }
}
