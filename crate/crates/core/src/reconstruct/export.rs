//! Plain-text and image exports.

use std::fmt::Write as _;
use std::io::{self, Write};

use super::{G2Histogram, GradientMap, LifetimeVolume, ReconstructError, Voxel};

/// `x,y,z,tau_ns,stderr_ns,mask`; lifetimes empty for masked voxels.
pub fn write_volume_csv<W: Write>(mut out: W, v: &LifetimeVolume) -> io::Result<()> {
    writeln!(out, "x,y,z,tau_ns,stderr_ns,mask")?;
    let mut line = String::new();
    for iy in 0..v.ny {
        for ix in 0..v.nx {
            for iz in 0..v.z.n {
                let vox = v.at(ix, iy, iz);
                line.clear();
                let (x, y, z) = (ix as f64 * v.pixel_pitch, iy as f64 * v.pixel_pitch, v.z.center(iz));
                write!(line, "{x},{y},{z},").unwrap();
                if let Some((t, s)) = vox.lifetime() {
                    write!(line, "{t:.6},{s:.6},").unwrap();
                } else {
                    line.push_str(",,");
                }
                line.push_str(vox.mask.as_str());
                writeln!(out, "{line}")?;
            }
        }
    }
    Ok(())
}

/// Row-major image of lifetimes as CSV (`NaN` where masked).
pub fn write_image_csv<W: Write>(mut out: W, nx: usize, ny: usize, image: &[Voxel]) -> io::Result<()> {
    for iy in 0..ny {
        let row: Vec<String> = (0..nx).map(|ix| image[iy * nx + ix].tau().map_or("NaN".into(), |t| format!("{t:.6}"))).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// 16-bit binary PGM of lifetimes scaled to `[lo, hi]` ns; masked pixels are 0
/// and valid ones map to `1..=65535`.
pub fn write_pgm<W: Write>(mut out: W, nx: usize, ny: usize, image: &[Voxel], range: (f64, f64)) -> io::Result<()> {
    write!(out, "P5\n{nx} {ny}\n65535\n")?;
    let (lo, hi) = range;
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut buf = Vec::with_capacity(nx * ny * 2);
    for v in &image[..nx * ny] {
        let g: u16 = match v.tau() {
            Some(t) => (1.0 + ((t - lo) / span).clamp(0.0, 1.0) * 65534.0).round() as u16,
            None => 0,
        };
        buf.extend_from_slice(&g.to_be_bytes());
    }
    out.write_all(&buf)
}

/// Lifetime range over valid voxels, for shared PGM scaling.
pub fn tau_range<'a>(voxels: impl IntoIterator<Item = &'a Voxel>) -> Option<(f64, f64)> {
    let mut r: Option<(f64, f64)> = None;
    for t in voxels.into_iter().filter_map(Voxel::tau) {
        r = Some(r.map_or((t, t), |(a, b)| (a.min(t), b.max(t))));
    }
    r
}

pub fn write_g2_csv<W: Write>(mut out: W, h: &G2Histogram) -> io::Result<()> {
    writeln!(out, "lag_ns,g2")?;
    for (l, g) in h.lags.iter().zip(&h.g2) {
        writeln!(out, "{l},{g:.6}")?;
    }
    Ok(())
}

/// `x,y,z,dk_dx,dk_dz` for defined arrows.
pub fn write_gradient_csv<W: Write>(mut out: W, g: &GradientMap) -> io::Result<()> {
    writeln!(out, "x,y,z,dk_dx,dk_dz")?;
    for iy in 0..g.ny {
        for ix in 0..g.nx {
            for iz in 0..g.nz {
                if let Some([gx, gz]) = g.at(ix, iy, iz) {
                    let (x, z) = g.position(ix, iz);
                    writeln!(out, "{x},{},{z},{gx:.6e},{gz:.6e}", iy as f64 * g.dx)?;
                }
            }
        }
    }
    Ok(())
}

/// Heightmap grid: `ny` lines of `nx` comma-separated values, nm.
pub fn write_heightmap_csv<W: Write>(mut out: W, nx: usize, heightmap: &[f64]) -> io::Result<()> {
    for row in heightmap.chunks(nx) {
        let s: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", s.join(","))?;
    }
    Ok(())
}

/// Parses a heightmap grid; returns `(nx, ny, values)` row-major.
pub fn parse_heightmap_csv(text: &str) -> Result<(usize, usize, Vec<f64>), ReconstructError> {
    let mut values = Vec::new();
    let mut nx = None;
    let mut ny = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| ReconstructError::Format(format!("heightmap line {}: {e}", i + 1)))?;
        match nx {
            None => nx = Some(row.len()),
            Some(n) if n != row.len() => {
                return Err(ReconstructError::Format(format!("heightmap line {}: {} values, expected {n}", i + 1, row.len())))
            }
            _ => {}
        }
        values.extend(row);
        ny += 1;
    }
    Ok((nx.unwrap_or(0), ny, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reconstruct::{LifetimeFit, VoxelMask, ZAxis};

    fn vox(t: Option<f64>) -> Voxel {
        match t {
            Some(tau) => Voxel {
                mask: VoxelMask::Valid,
                fit: Some(LifetimeFit { tau, amplitude: 1.0, offset: 0.0, stderr_tau: 0.5, n_photons: 500, converged: true }),
            },
            None => Voxel { mask: VoxelMask::InsufficientCounts, fit: None },
        }
    }

    #[test]
    fn volume_csv_layout() {
        let v = LifetimeVolume {
            nx: 2,
            ny: 1,
            z: ZAxis { n: 1, first_center: 2.5, step: 5.0, absolute: false },
            pixel_pitch: 10.0,
            voxels: vec![vox(Some(20.0)), vox(None)],
        };
        let mut buf = Vec::new();
        write_volume_csv(&mut buf, &v).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "x,y,z,tau_ns,stderr_ns,mask");
        assert_eq!(lines[1], "0,0,2.5,20.000000,0.500000,valid");
        assert_eq!(lines[2], "10,0,2.5,,,insufficient_counts");
    }

    #[test]
    fn pgm_header_and_scaling() {
        let img = [vox(Some(10.0)), vox(Some(20.0)), vox(None)];
        let mut buf = Vec::new();
        write_pgm(&mut buf, 3, 1, &img, tau_range(&img).unwrap()).unwrap();
        let header = b"P5\n3 1\n65535\n";
        assert_eq!(&buf[..header.len()], header);
        let px = &buf[header.len()..];
        assert_eq!(px, &[0, 1, 255, 255, 0, 0]);
    }

    #[test]
    fn heightmap_round_trip() {
        let hm = vec![0.0, 1.5, 2.25, 100.0, 0.0, -3.0];
        let mut buf = Vec::new();
        write_heightmap_csv(&mut buf, 3, &hm).unwrap();
        let (nx, ny, v) = parse_heightmap_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!((nx, ny), (3, 2));
        assert_eq!(v, hm);
        assert!(parse_heightmap_csv("1,2\n3\n").is_err());
        assert!(parse_heightmap_csv("1,x\n").is_err());
    }
}
