use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use qeflim::calibrate::{fit_approach_curve, ApproachCurve};
use qeflim::ldos::QuadratureConfig;
use qeflim::reconstruct::export::{self, tau_range};
use qeflim::reconstruct::{
    bin_photons, build_volume, g2_correlate, g2_fit, gradient_map, quarter_images, topography_correct, FitConfig, LifetimeVolume,
    Voxel,
};
use qeflim::scene::{ground_truth_samples, simulate_hbt, simulate_scan_field, GroundTruthField};
use qeflim::tagstream::TagStream;

use crate::config::RunConfig;
use crate::{CliError, FitApproachArgs, G2Args, ReconstructArgs, SimulateArgs};

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::input(format!("cannot create {}: {e}", path.display())))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::input(format!("writing {}: {e}", path.display())))
}

fn out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))
}

fn read_stream(path: &Path) -> Result<TagStream, CliError> {
    TagStream::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Writes `scan.qtag`, `heightmap.csv` and `ground_truth.csv` for a
/// `[plan]`, and `hbt.qtag` for an `[hbt]` table.
pub fn simulate(a: &SimulateArgs) -> Result<String, CliError> {
    let cfg = RunConfig::load(&a.config)?;
    if cfg.plan.is_none() && cfg.hbt.is_none() {
        return Err(CliError::input(format!("{}: nothing to simulate, add a [plan] or [hbt] table", a.config.display())));
    }
    out_dir(&a.out)?;
    let mut report = String::new();

    if let Some(p) = &cfg.plan {
        let mut plan = p.scan_plan();
        if let Some(seed) = a.seed {
            plan.seed = seed;
        }
        plan.validate()?;
        let (emitter, spectral) = cfg.emitter()?;
        let field = GroundTruthField::new(cfg.scene()?, emitter, spectral, &QuadratureConfig::default())?;
        let sim = simulate_scan_field(&field, &plan)?;
        sim.stream.write(a.out.join("scan.qtag"))?;
        write_with(&a.out.join("heightmap.csv"), |w| export::write_heightmap_csv(w, plan.nx, &sim.heightmap))?;

        let bins = cfg.reconstruct.bins;
        if bins == 0 {
            return Err(CliError::input("[reconstruct] bins must be >= 1"));
        }
        let truth = ground_truth_samples(&field, &plan, bins)?;
        write_with(&a.out.join("ground_truth.csv"), |w| {
            writeln!(w, "x,y,z_rel,z,tau_ns")?;
            for t in &truth {
                let z_rel = (t.bin as f64 + 0.5) * plan.amplitude / bins as f64;
                writeln!(w, "{},{},{z_rel},{},{:.6}", t.ix as f64 * plan.pitch, t.iy as f64 * plan.pitch, t.z, t.tau_ns)?;
            }
            Ok(())
        })?;
        writeln!(report, "scan_photons = {}", sim.stream.photon_count()).unwrap();
    }

    if let Some(h) = &cfg.hbt {
        let mut hc = h.hbt_config()?;
        if let Some(seed) = a.seed {
            hc.seed = seed;
        }
        let stream = simulate_hbt(&h.model()?, &hc)?;
        stream.write(a.out.join("hbt.qtag"))?;
        writeln!(report, "hbt_photons = {}", stream.photon_count()).unwrap();
    }
    Ok(report)
}

fn write_slices(dir: &Path, prefix: &str, v: &LifetimeVolume) -> Result<(), CliError> {
    let Some(range) = tau_range(&v.voxels) else { return Ok(()) };
    for iz in 0..v.z.n {
        let s = v.slice(iz);
        write_with(&dir.join(format!("{prefix}_{iz:03}.pgm")), |w| export::write_pgm(w, v.nx, v.ny, &s, range))?;
    }
    Ok(())
}

fn write_image(dir: &Path, name: &str, nx: usize, ny: usize, image: &[Voxel]) -> Result<(), CliError> {
    write_with(&dir.join(format!("{name}.csv")), |w| export::write_image_csv(w, nx, ny, image))?;
    if let Some(range) = tau_range(image) {
        write_with(&dir.join(format!("{name}.pgm")), |w| export::write_pgm(w, nx, ny, image, range))?;
    }
    Ok(())
}

fn summary(report: &mut String, prefix: &str, v: &LifetimeVolume) {
    writeln!(report, "{prefix}valid_fraction = {:.4}", v.valid_fraction()).unwrap();
    match v.median_tau() {
        Some(t) => writeln!(report, "{prefix}median_tau_ns = {t:.4}").unwrap(),
        None => writeln!(report, "{prefix}median_tau_ns = nan").unwrap(),
    }
}

/// Relative-height `volume.csv` with `slice_*.pgm`; with a heightmap also
/// `corrected.csv` and `corrected_*.pgm` on absolute heights.
pub fn reconstruct(a: &ReconstructArgs) -> Result<String, CliError> {
    if !(a.cutoff_ns >= 0.0) {
        return Err(CliError::usage("--cutoff-ns must be >= 0"));
    }
    let stream = read_stream(&a.stream)?;
    let heightmap = match &a.heightmap {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::input(format!("cannot read {}: {e}", p.display())))?;
            Some(export::parse_heightmap_csv(&text)?.2)
        }
        None => None,
    };
    out_dir(&a.out)?;
    let fit = FitConfig { cutoff_ns: a.cutoff_ns, min_counts: a.min_counts, ..Default::default() };
    let hist = bin_photons(&stream, a.bins)?;
    let volume = build_volume(&hist, &fit);
    write_with(&a.out.join("volume.csv"), |w| export::write_volume_csv(w, &volume))?;
    write_slices(&a.out, "slice", &volume)?;

    let mut report = String::new();
    writeln!(report, "photons = {}", hist.photons_in).unwrap();
    writeln!(report, "excluded = {}", hist.exclusions.total()).unwrap();
    writeln!(report, "bins = {}", volume.z.n).unwrap();
    summary(&mut report, "", &volume);

    if a.quarters {
        let q = quarter_images(&hist, &fit);
        write_image(&a.out, "quarter_closest", hist.nx, hist.ny, &q.closest)?;
        write_image(&a.out, "quarter_distant", hist.nx, hist.ny, &q.distant)?;
    }
    if let Some(hm) = heightmap {
        let corrected = build_volume(&topography_correct(&hist, &hm, a.tip_offset)?, &fit);
        write_with(&a.out.join("corrected.csv"), |w| export::write_volume_csv(w, &corrected))?;
        write_slices(&a.out, "corrected", &corrected)?;
        summary(&mut report, "corrected_", &corrected);
        if a.gradient {
            let g = gradient_map(&corrected)?;
            write_with(&a.out.join("gradient.csv"), |w| export::write_gradient_csv(w, &g))?;
        }
    }
    fs::write(a.out.join("summary.txt"), &report).map_err(CliError::input)?;
    Ok(report)
}

/// `g2.csv` and `g2_report.txt`; exits with a numerical failure when the
/// fit does not converge.
pub fn g2(a: &G2Args) -> Result<String, CliError> {
    let stream = read_stream(&a.stream)?;
    let h = g2_correlate(&stream, a.window_ns, a.bin_ns)?;
    out_dir(&a.out)?;
    write_with(&a.out.join("g2.csv"), |w| export::write_g2_csv(w, &h))?;
    let fit = g2_fit(&h)?;
    let p = fit.params;
    let mut r = String::new();
    writeln!(r, "pairs = {}", h.pairs()).unwrap();
    writeln!(r, "g2_zero = {:.6}", p.g2_zero).unwrap();
    writeln!(r, "bunching_amplitude = {:.6}", p.bunching_amplitude).unwrap();
    writeln!(r, "tau1_ns = {:.6}", p.tau1).unwrap();
    writeln!(r, "tau2_ns = {:.6}", p.tau2).unwrap();
    writeln!(r, "chi2 = {:.6}", fit.chi2).unwrap();
    writeln!(r, "converged = {}", fit.converged).unwrap();
    let verdict = fit.is_single_emitter.map_or("undetermined".to_string(), |b| b.to_string());
    writeln!(r, "single_emitter = {verdict}").unwrap();
    if let Some(m) = h.long_lag_mean(0.5 * a.window_ns) {
        writeln!(r, "long_lag_mean = {m:.6}").unwrap();
    }
    fs::write(a.out.join("g2_report.txt"), &r).map_err(CliError::input)?;
    if !fit.converged {
        return Err(CliError::numerical(format!("g2 fit did not converge\n{r}")));
    }
    Ok(r)
}

pub fn fit_approach(a: &FitApproachArgs) -> Result<String, CliError> {
    let text = fs::read_to_string(&a.curve).map_err(|e| CliError::input(format!("cannot read {}: {e}", a.curve.display())))?;
    let curve = ApproachCurve::from_csv(&text).map_err(|e| CliError::input(format!("{}: {e}", a.curve.display())))?;
    let cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ctx = cfg.calibrate.context()?;
    let result = fit_approach_curve(&curve, &ctx, &QuadratureConfig::default(), cfg.calibrate.initial_guess()?)?;
    let report = result.report();
    if let Some(p) = &a.out {
        fs::write(p, &report).map_err(|e| CliError::input(format!("cannot write {}: {e}", p.display())))?;
    }
    Ok(report)
}
