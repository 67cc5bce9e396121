use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qeflim::calibrate::{ApproachCurve, ApproachSample, CalibrationContext};
use qeflim::ldos::QuadratureConfig;

fn qeflim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qeflim")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn report(text: &str) -> BTreeMap<String, String> {
    text.lines().filter_map(|l| l.split_once(" = ")).map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

const GLASS: &str = r#"
[scene]
substrate = "glass"

[material.glass]
eps = [2.25, 0.0]

[emitter]
spectral = false

[plan]
nx = 3
ny = 2
dwell_ms = 2.0
excitation_prob = 0.5
detection_efficiency = 0.2
seed = 1
"#;

const VACUUM: &str = r#"
[scene]
substrate = "air"

[material.air]
eps = [1.0, 0.0]

[emitter]
spectral = false

[plan]
nx = 2
ny = 2
amplitude = 128.0
dwell_ms = 50.0
excitation_prob = 0.5
detection_efficiency = 0.2
"#;

#[test]
fn help_exits_zero() {
    let o = qeflim(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("Usage"));
    let o = qeflim(&["reconstruct", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("--cutoff-ns"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(qeflim(&[]).status.code(), Some(1));
    assert_eq!(qeflim(&["simulate"]).status.code(), Some(1));
    assert_eq!(qeflim(&["reconstruct", "x.qtag", "--gradient"]).status.code(), Some(1));
}

#[test]
fn missing_config_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("nowhere.toml");
    let o = qeflim(&["simulate", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(p(&cfg)), "{}", stderr(&o));
}

#[test]
fn unknown_key_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, GLASS.replace("dwell_ms = 2.0", "dwell = 2.0")).unwrap();
    let o = qeflim(&["simulate", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let line = GLASS.lines().position(|l| l.starts_with("dwell_ms")).unwrap() + 1;
    let err = stderr(&o);
    assert!(err.contains(&format!("line {line}")) && err.contains("dwell"), "{err}");
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("glass.toml");
    fs::write(&cfg, GLASS).unwrap();
    let runs: Vec<_> = [("a", "1"), ("b", "4")]
        .iter()
        .map(|(name, threads)| {
            let out = dir.path().join(name);
            let o = qeflim(&["--threads", threads, "simulate", p(&cfg), "--seed", "7", "--out", p(&out)]);
            assert!(o.status.success(), "{}", stderr(&o));
            out
        })
        .collect();
    for f in ["scan.qtag", "ground_truth.csv", "heightmap.csv"] {
        let a = fs::read(runs[0].join(f)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, fs::read(runs[1].join(f)).unwrap(), "{f}");
    }
    let other = dir.path().join("c");
    qeflim(&["simulate", p(&cfg), "--seed", "8", "--out", p(&other)]);
    assert_ne!(fs::read(runs[0].join("scan.qtag")).unwrap(), fs::read(other.join("scan.qtag")).unwrap());
}

#[test]
fn flat_ground_truth_is_constant_per_height() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("glass.toml");
    fs::write(&cfg, GLASS).unwrap();
    let o = qeflim(&["simulate", p(&cfg), "--out", p(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("ground_truth.csv")).unwrap();
    let mut by_height: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for line in text.lines().skip(1) {
        let c: Vec<&str> = line.split(',').collect();
        by_height.entry(c[2].to_string()).or_default().push(c[4].parse().unwrap());
    }
    assert_eq!(by_height.len(), 25);
    for taus in by_height.values() {
        assert_eq!(taus.len(), 6);
        assert!(taus.iter().all(|t| t == &taus[0]));
    }
    let hm = fs::read_to_string(dir.path().join("heightmap.csv")).unwrap();
    assert_eq!(hm.lines().count(), 2);
}

#[test]
fn closure_on_constant_rate_scene() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("vacuum.toml");
    fs::write(&cfg, VACUUM).unwrap();
    let o = qeflim(&["simulate", p(&cfg), "--seed", "5", "--out", p(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("recon");
    let o = qeflim(&["reconstruct", p(&dir.path().join("scan.qtag")), "--bins", "25", "--quarters", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(&stdout(&o));
    let tau: f64 = r["median_tau_ns"].parse().unwrap();
    let truth = 1000.0 / (9.0 + 36.9);
    assert!((tau / truth - 1.0).abs() < 0.05, "{tau} vs {truth}");
    assert!(r["valid_fraction"].parse::<f64>().unwrap() > 0.9);

    let vol = fs::read_to_string(out.join("volume.csv")).unwrap();
    let heights: std::collections::BTreeSet<&str> = vol.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(heights.len(), 25);
    assert_eq!(vol.lines().count(), 1 + 4 * 25);
    for f in ["slice_000.pgm", "slice_024.pgm", "quarter_closest.csv", "quarter_distant.pgm", "summary.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn corrected_volume_and_gradient() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("wire.toml");
    let text = GLASS.to_string()
        + "\n[material.silver]\neps = [-20.0, 1.0]\n\n[[object]]\nshape = \"cylinder\"\nmaterial = \"silver\"\nangle_deg = 90.0\nradius = 50.0\n";
    let text = text.replace("nx = 3", "nx = 5\npitch = 20.0\norigin = [-40.0, 0.0]").replace("ny = 2", "ny = 1");
    fs::write(&cfg, text).unwrap();
    let o = qeflim(&["simulate", p(&cfg), "--out", p(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("recon");
    let o = qeflim(&[
        "reconstruct",
        p(&dir.path().join("scan.qtag")),
        "--heightmap",
        p(&dir.path().join("heightmap.csv")),
        "--bins",
        "4",
        "--gradient",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(report(&stdout(&o)).contains_key("corrected_valid_fraction"));
    assert!(fs::read_to_string(out.join("corrected.csv")).unwrap().starts_with("x,y,z,tau_ns"));
    assert!(fs::read_to_string(out.join("gradient.csv")).unwrap().starts_with("x,y,z,dk_dx,dk_dz"));

    let short = dir.path().join("short.csv");
    fs::write(&short, "0,0\n").unwrap();
    let o = qeflim(&["reconstruct", p(&dir.path().join("scan.qtag")), "--heightmap", p(&short), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn garbage_stream_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("junk.qtag");
    fs::write(&f, b"definitely not a stream").unwrap();
    let o = qeflim(&["reconstruct", p(&f), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let o = qeflim(&["g2", p(&f), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn g2_of_three_level_stream() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("hbt.toml");
    fs::write(&cfg, "[hbt]\nsignal_rate = 2e6\nduration_s = 1.0\ndetection_efficiency = 0.2\ntarget_g2_zero = 0.3\nseed = 4\n").unwrap();
    let o = qeflim(&["simulate", p(&cfg), "--out", p(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = qeflim(&["g2", p(&dir.path().join("hbt.qtag")), "--window-ns", "1000", "--bin-ns", "1", "--out", p(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(&fs::read_to_string(dir.path().join("g2_report.txt")).unwrap());
    let g0: f64 = r["g2_zero"].parse().unwrap();
    assert!((0.25..=0.35).contains(&g0), "{g0}");
    assert_eq!(r["single_emitter"], "true");
    assert!(fs::read_to_string(dir.path().join("g2.csv")).unwrap().starts_with("lag_ns,g2"));
}

#[test]
fn fit_approach_recovers_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = CalibrationContext { spectral: false, ..CalibrationContext::glass() };
    let heights: Vec<f64> = (0..40).map(|i| 10.0 + 15.0 * i as f64).collect();
    let rates = ctx.forward(&heights, 9.0, 36.9, 30.7f64.to_radians(), &QuadratureConfig::default()).unwrap();
    let curve = ApproachCurve {
        samples: heights.iter().zip(&rates).map(|(&height, &rate)| ApproachSample { height, rate, stderr: None }).collect(),
    };
    let csv = dir.path().join("curve.csv");
    fs::write(&csv, curve.to_csv()).unwrap();
    let cfg = dir.path().join("cal.toml");
    fs::write(&cfg, "[calibrate]\nspectral = false\n").unwrap();
    let rep = dir.path().join("fit.txt");
    let o = qeflim(&["fit-approach", p(&csv), "--config", p(&cfg), "--out", p(&rep)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(&fs::read_to_string(&rep).unwrap());
    let k_nr: f64 = r["k_nr"].parse().unwrap();
    let qe: f64 = r["qe"].parse().unwrap();
    assert!((k_nr / 9.0 - 1.0).abs() < 1e-3, "{k_nr}");
    assert!((qe - 0.804).abs() < 1e-3, "{qe}");

    let two = dir.path().join("two.csv");
    fs::write(&two, "height_nm,rate_per_us\n10,50\n400,45\n").unwrap();
    let o = qeflim(&["fit-approach", p(&two)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("identifiable"), "{}", stderr(&o));
}
