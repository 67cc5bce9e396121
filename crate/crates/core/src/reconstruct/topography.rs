use super::{HistogramVolume, ReconstructError, VoxelMask, ZAxis};

/// Re-registers relative height bins to absolute height
/// `z = z_top + tip_offset + bin center` and accumulates them on a common
/// grid with the bin spacing, nearest grid layer wins. Histograms landing in
/// the same voxel are summed. Voxels below the local topography are masked
/// `BelowSurface`; above it but never visited, `Unreached`.
///
/// `heightmap` is row-major `ny * nx`, nm.
pub fn topography_correct(h: &HistogramVolume, heightmap: &[f64], tip_offset: f64) -> Result<HistogramVolume, ReconstructError> {
    if h.z.absolute {
        return Err(ReconstructError::Argument("histograms are already on an absolute grid".into()));
    }
    if heightmap.len() != h.nx * h.ny {
        return Err(ReconstructError::Shape { expected: (h.nx, h.ny), got: heightmap.len() });
    }
    if let Some(bad) = heightmap.iter().find(|v| !v.is_finite()) {
        return Err(ReconstructError::Argument(format!("non-finite heightmap value {bad}")));
    }
    let step = h.z.step;
    let lo = heightmap.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = heightmap.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first_center = lo + tip_offset + h.z.first_center;
    let layer = |z: f64| ((z - first_center) / step).round();
    let top = h.z.center(h.z.n - 1);
    let n = if heightmap.is_empty() { h.z.n } else { layer(hi + tip_offset + top).max(0.0) as usize + 1 };
    let axis = ZAxis { n, first_center, step, absolute: true };

    let mut out = HistogramVolume::new(h.nx, h.ny, axis, h.n_channels, h.channel_width);
    out.pixel_pitch = h.pixel_pitch;
    out.amplitude = h.amplitude;
    out.exclusions = h.exclusions;
    out.photons_in = h.photons_in;
    let mut visited = vec![false; out.n_voxels()];
    for iy in 0..h.ny {
        for ix in 0..h.nx {
            let p = iy * h.nx + ix;
            let base = heightmap[p] + tip_offset;
            for k in 0..h.z.n {
                let t = layer(base + h.z.center(k)).clamp(0.0, (n - 1) as f64) as usize;
                let dst = out.voxel_index(ix, iy, t);
                visited[dst] = true;
                let src = h.histogram(h.voxel_index(ix, iy, k));
                for (d, &c) in out.histogram_mut(dst).iter_mut().zip(src) {
                    *d += c;
                }
            }
            for t in 0..n {
                let v = out.voxel_index(ix, iy, t);
                if axis.center(t) < heightmap[p] {
                    out.set_preset_mask(v, Some(VoxelMask::BelowSurface));
                } else if !visited[v] {
                    out.set_preset_mask(v, Some(VoxelMask::Unreached));
                }
            }
        }
    }
    Ok(out)
}
