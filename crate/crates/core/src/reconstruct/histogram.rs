use super::{ReconstructError, VoxelMask};
use crate::tagstream::{self, CantileverPhaseModel, HeightMapper, TagRecord, TagStream};

/// Vertical axis of a histogram or lifetime volume. Heights are relative to
/// the bottom of the oscillation unless `absolute`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZAxis {
    pub n: usize,
    pub first_center: f64,
    pub step: f64,
    pub absolute: bool,
}

impl ZAxis {
    pub fn center(&self, k: usize) -> f64 {
        self.first_center + k as f64 * self.step
    }
}

/// Photons excluded from binning, by reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Exclusions {
    pub before_first_pixel: u64,
    pub out_of_coverage: u64,
    pub pixel_out_of_range: u64,
}

impl Exclusions {
    pub fn total(&self) -> u64 {
        self.before_first_pixel + self.out_of_coverage + self.pixel_out_of_range
    }
}

/// Micro-time histograms on an `nx * ny * nz` grid, laid out
/// `[(iy * nx + ix) * nz + iz][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramVolume {
    pub nx: usize,
    pub ny: usize,
    pub z: ZAxis,
    pub n_channels: usize,
    /// ns
    pub channel_width: f64,
    /// nm
    pub pixel_pitch: f64,
    /// Oscillation amplitude, nm.
    pub amplitude: f64,
    counts: Vec<u32>,
    /// Geometry masks fixed before fitting (below surface / unreached).
    preset: Vec<Option<VoxelMask>>,
    pub exclusions: Exclusions,
    /// Photons offered to binning.
    pub photons_in: u64,
}

/// Relative-height histograms straight from the stream.
pub type PixelHistograms = HistogramVolume;

impl HistogramVolume {
    pub fn new(nx: usize, ny: usize, z: ZAxis, n_channels: usize, channel_width: f64) -> Self {
        let n_vox = nx * ny * z.n;
        Self {
            nx,
            ny,
            z,
            n_channels,
            channel_width,
            pixel_pitch: 1.0,
            amplitude: z.step * z.n as f64,
            counts: vec![0; n_vox * n_channels],
            preset: vec![None; n_vox],
            exclusions: Exclusions::default(),
            photons_in: 0,
        }
    }

    pub fn n_voxels(&self) -> usize {
        self.nx * self.ny * self.z.n
    }

    #[inline]
    pub fn voxel_index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iy * self.nx + ix) * self.z.n + iz
    }

    pub fn histogram(&self, voxel: usize) -> &[u32] {
        &self.counts[voxel * self.n_channels..(voxel + 1) * self.n_channels]
    }

    pub fn histogram_mut(&mut self, voxel: usize) -> &mut [u32] {
        &mut self.counts[voxel * self.n_channels..(voxel + 1) * self.n_channels]
    }

    pub fn voxel_total(&self, voxel: usize) -> u64 {
        self.histogram(voxel).iter().map(|&c| c as u64).sum()
    }

    pub fn binned_total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn preset_mask(&self, voxel: usize) -> Option<VoxelMask> {
        self.preset[voxel]
    }

    pub fn set_preset_mask(&mut self, voxel: usize, mask: Option<VoxelMask>) {
        self.preset[voxel] = mask;
    }

    /// Sum of the histograms of `voxels`.
    pub fn pooled(&self, voxels: impl IntoIterator<Item = usize>) -> Vec<u32> {
        let mut acc = vec![0u32; self.n_channels];
        for v in voxels {
            for (a, &c) in acc.iter_mut().zip(self.histogram(v)) {
                *a += c;
            }
        }
        acc
    }
}

/// Sorts every photon into its pixel and equal-width height bin.
///
/// A stream without photons needs no markers and yields empty histograms.
pub fn bin_photons(stream: &TagStream, n_bins: usize) -> Result<PixelHistograms, ReconstructError> {
    if n_bins == 0 {
        return Err(ReconstructError::Argument("n_bins must be >= 1".into()));
    }
    let h = &stream.header;
    let (nx, ny) = (h.nx as usize, h.ny as usize);
    let model = CantileverPhaseModel::from_header(h);
    let step = h.cantilever_amplitude / n_bins as f64;
    let axis = ZAxis { n: n_bins, first_center: 0.5 * step, step, absolute: false };
    let mut out = HistogramVolume::new(nx, ny, axis, h.micro_channels(), h.micro_resolution * 1e-3);
    out.pixel_pitch = h.pixel_pitch;
    out.amplitude = h.cantilever_amplitude;

    let n_photons = stream.photon_count() as u64;
    out.photons_in = n_photons;
    if n_photons == 0 {
        return Ok(out);
    }
    let mapper = HeightMapper::new(tagstream::cantilever_markers(stream), model)?;
    let mut pixel: Option<usize> = None;
    for r in &stream.records {
        match *r {
            TagRecord::PixelMarker { pixel_index, .. } => pixel = Some(pixel_index as usize),
            TagRecord::CantileverMarker { .. } => {}
            TagRecord::Photon { macro_time, micro_time, .. } => {
                let Some(p) = pixel else {
                    out.exclusions.before_first_pixel += 1;
                    continue;
                };
                if p >= nx * ny {
                    out.exclusions.pixel_out_of_range += 1;
                    continue;
                }
                // the sync pulse that excited the emitter fixes its height
                let Ok(b) = mapper.bin_at(tagstream::macro_ns(h, macro_time), n_bins) else {
                    out.exclusions.out_of_coverage += 1;
                    continue;
                };
                let ch = (micro_time as usize).min(out.n_channels - 1);
                let v = p * n_bins + b;
                out.counts[v * out.n_channels + ch] += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagstream::StreamHeader;

    fn header() -> StreamHeader {
        StreamHeader { nx: 2, ny: 1, marker_divisor: 1, cantilever_freq: 1e6, cantilever_amplitude: 40.0, ..Default::default() }
    }

    #[test]
    fn conservation_and_exclusions() {
        let photon = |m: u64| TagRecord::Photon { channel: 0, macro_time: m, micro_time: 7 };
        let records = vec![
            photon(0),
            TagRecord::CantileverMarker { macro_time: 1000 },
            TagRecord::PixelMarker { macro_time: 1000, pixel_index: 0 },
            photon(1000),
            photon(1500),
            TagRecord::CantileverMarker { macro_time: 2000 },
            TagRecord::PixelMarker { macro_time: 2000, pixel_index: 1 },
            photon(2240),
            TagRecord::PixelMarker { macro_time: 2400, pixel_index: 9 },
            photon(2500),
            TagRecord::PixelMarker { macro_time: 2600, pixel_index: 1 },
            photon(9000),
        ];
        let s = TagStream { header: header(), records };
        let ph = bin_photons(&s, 4).unwrap();
        assert_eq!(ph.exclusions, Exclusions { before_first_pixel: 1, out_of_coverage: 1, pixel_out_of_range: 1 });
        assert_eq!(ph.binned_total() + ph.exclusions.total(), ph.photons_in);
        // top of the oscillation at the marker, bottom half a period later
        assert_eq!(ph.voxel_total(ph.voxel_index(0, 0, 3)), 1);
        assert_eq!(ph.voxel_total(ph.voxel_index(0, 0, 0)), 1);
        // just before the quarter period: height slightly above A/2
        assert_eq!(ph.voxel_total(ph.voxel_index(1, 0, 2)), 1);
        assert_eq!(ph.histogram(ph.voxel_index(1, 0, 2))[7], 1);
    }

    #[test]
    fn single_bin_and_empty_stream() {
        let mut records = vec![TagRecord::CantileverMarker { macro_time: 0 }, TagRecord::PixelMarker { macro_time: 0, pixel_index: 0 }];
        records.extend((1..200).map(|i| TagRecord::Photon { channel: 0, macro_time: i * 7, micro_time: (i % 50) as u16 }));
        records.push(TagRecord::CantileverMarker { macro_time: 2000 });
        let s = TagStream { header: StreamHeader { nx: 1, ..header() }, records };
        let ph = bin_photons(&s, 1).unwrap();
        assert_eq!(ph.voxel_total(0), 199);

        let empty = TagStream { header: header(), records: vec![] };
        let ph = bin_photons(&empty, 5).unwrap();
        assert_eq!(ph.binned_total(), 0);
        assert_eq!(ph.n_voxels(), 10);
    }

    #[test]
    fn photons_without_markers_fail() {
        let s = TagStream {
            header: header(),
            records: vec![TagRecord::PixelMarker { macro_time: 0, pixel_index: 0 }, TagRecord::Photon { channel: 0, macro_time: 5, micro_time: 0 }],
        };
        assert!(matches!(bin_photons(&s, 3), Err(ReconstructError::Coverage(_))));
    }
}
