//! Cantilever phase and height reconstruction from period markers.
//!
//! A marker is written every `marker_divisor` oscillation periods, at the
//! top of the oscillation. Between two markers the period is taken as
//! constant, so the phase advances linearly; outside the marked range the
//! nearest interval's period is extrapolated for at most one marker span.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverageError {
    #[error("no cantilever markers in stream")]
    NoMarkers,
    #[error("time {t} ns outside marker coverage [{start}, {end}] ns")]
    OutOfCoverage { t: f64, start: f64, end: f64 },
    #[error("cantilever markers are not strictly increasing at index {0}")]
    NonIncreasing(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CantileverPhaseModel {
    /// Nominal oscillation period, ns. Used only when a single marker exists.
    pub period: f64,
    /// Peak-to-peak excursion of the probe, nm.
    pub amplitude: f64,
    pub marker_divisor: u32,
}

impl CantileverPhaseModel {
    pub fn from_header(h: &super::StreamHeader) -> Self {
        Self { period: h.cantilever_period_ns(), amplitude: h.cantilever_amplitude, marker_divisor: h.marker_divisor }
    }

    /// Height above the lowest point for a phase in periods (0 = top).
    #[inline]
    pub fn height_at_phase(&self, phase: f64) -> f64 {
        0.5 * self.amplitude * (1.0 + (2.0 * PI * phase).cos())
    }

    /// Equal-width height bin of `h` (bin 0 is closest to the sample).
    #[inline]
    pub fn bin_of_height(&self, h: f64, n_bins: usize) -> usize {
        let b = (h / self.amplitude * n_bins as f64).floor();
        if b <= 0.0 {
            0
        } else {
            (b as usize).min(n_bins - 1)
        }
    }

    /// Center height of bin `b`.
    pub fn bin_center(&self, b: usize, n_bins: usize) -> f64 {
        (b as f64 + 0.5) * self.amplitude / n_bins as f64
    }
}

/// Marker times plus phase model; answers height queries.
#[derive(Debug, Clone)]
pub struct HeightMapper {
    markers: Vec<f64>,
    model: CantileverPhaseModel,
}

impl HeightMapper {
    /// `markers` are absolute marker times in ns.
    pub fn new(markers: Vec<f64>, model: CantileverPhaseModel) -> Result<Self, CoverageError> {
        if markers.is_empty() {
            return Err(CoverageError::NoMarkers);
        }
        if let Some(i) = markers.windows(2).position(|w| w[1] <= w[0]) {
            return Err(CoverageError::NonIncreasing(i + 1));
        }
        Ok(Self { markers, model })
    }

    pub fn model(&self) -> &CantileverPhaseModel {
        &self.model
    }

    fn period_of_interval(&self, i: usize) -> f64 {
        if self.markers.len() < 2 {
            self.model.period
        } else {
            let i = i.min(self.markers.len() - 2);
            (self.markers[i + 1] - self.markers[i]) / self.model.marker_divisor as f64
        }
    }

    pub fn coverage(&self) -> (f64, f64) {
        let d = self.model.marker_divisor as f64;
        let first = self.markers[0] - self.period_of_interval(0) * d;
        let last = self.markers[self.markers.len() - 1] + self.period_of_interval(usize::MAX) * d;
        (first, last)
    }

    /// Oscillation phase in periods, in `[0, 1)`, at time `t` (ns).
    pub fn phase_at(&self, t: f64) -> Result<f64, CoverageError> {
        let (start, end) = self.coverage();
        if !(t >= start && t <= end) {
            return Err(CoverageError::OutOfCoverage { t, start, end });
        }
        // index of the last marker at or before t (0 when t precedes all markers)
        let i = self.markers.partition_point(|&m| m <= t).saturating_sub(1);
        let period = self.period_of_interval(i);
        Ok(((t - self.markers[i]) / period).rem_euclid(1.0))
    }

    /// Probe height above the lowest point of the oscillation, nm.
    pub fn height_at(&self, t: f64) -> Result<f64, CoverageError> {
        Ok(self.model.height_at_phase(self.phase_at(t)?))
    }

    pub fn bin_at(&self, t: f64, n_bins: usize) -> Result<usize, CoverageError> {
        Ok(self.model.bin_of_height(self.height_at(t)?, n_bins))
    }
}

/// Height at time `t` given marker times (ns).
pub fn height_at(t: f64, markers: &[f64], model: &CantileverPhaseModel) -> Result<f64, CoverageError> {
    HeightMapper::new(markers.to_vec(), *model)?.height_at(t)
}

/// Height-bin index in `[0, n_bins)` for every photon time (ns).
pub fn assign_height_bins(
    photon_times: &[f64],
    markers: &[f64],
    model: &CantileverPhaseModel,
    n_bins: usize,
) -> Result<Vec<usize>, CoverageError> {
    assert!(n_bins >= 1, "n_bins must be >= 1");
    let mapper = HeightMapper::new(markers.to_vec(), *model)?;
    photon_times.iter().map(|&t| mapper.bin_at(t, n_bins)).collect()
}
