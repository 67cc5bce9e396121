//! From a tag stream to height-resolved lifetimes: photon binning,
//! per-voxel tail fits, topography correction, decay-rate gradients and
//! photon-correlation analysis.

pub mod export;
mod fit;
mod g2;
mod gradient;
mod histogram;
mod topography;
mod volume;

use thiserror::Error;

use crate::tagstream::CoverageError;

pub use fit::{fit_lifetime, FitConfig, FitOutcome, LifetimeFit};
pub use g2::{g2_correlate, g2_fit, g2_fit_curve, g2_model, G2Histogram, G2Params, G2Result};
pub use gradient::{gradient_map, GradientMap};
pub use histogram::{bin_photons, Exclusions, HistogramVolume, PixelHistograms, ZAxis};
pub use topography::topography_correct;
pub use volume::{build_volume, quarter_images, LifetimeVolume, QuarterImages, Voxel, VoxelMask};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReconstructError {
    #[error(transparent)]
    Coverage(#[from] CoverageError),
    #[error("heightmap has {got} values, scan grid is {}x{}", expected.0, expected.1)]
    Shape { expected: (usize, usize), got: usize },
    #[error("channel error: {0}")]
    Channel(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("format error: {0}")]
    Format(String),
}
