//! Parametric nano-scenes, their decay-rate fields, and Monte-Carlo photon
//! streams from a scanned, oscillating single-emitter probe.
//!
//! Curved objects are handled by the proximity approximation: the rate at a
//! point is the planar half-space rate at the distance to the nearest
//! material surface, for that surface's material.

mod field;
mod geometry;
mod hbt;
mod scan;

use thiserror::Error;

use crate::ldos::LdosError;

pub use field::{local_decay_rate, GroundTruthField, RateTable};
pub use geometry::{Material, Scene, SceneObject, Shape, SurfaceHit};
pub use hbt::{background_for_g2_zero, hbt_header, simulate_hbt, HbtConfig, ThreeLevelModel, ThreeLevelRates};
pub use scan::{
    ground_truth_samples, simulate_scan, simulate_scan_field, Background, ScanPlan, SimulatedScan, TruthSample,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("point {0:?} is below the topography")]
    BelowTopography([f64; 3]),
    #[error("scan has no pixels")]
    EmptyScan,
    #[error("invalid material: {0}")]
    Material(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid scan plan: {0}")]
    Plan(String),
    #[error("emitter model: {0}")]
    Model(String),
    #[error(transparent)]
    Ldos(#[from] LdosError),
}
