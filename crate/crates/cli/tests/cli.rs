use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jpo_cli::config::{ExperimentConfig, SweepEntry};
use jpo_cli::pipeline::{Manifest, PotentialEntry, SPECTRA_FILE, TRACE_FILE};
use jpo_core::dynamics::telegraph_reference;
use jpo_core::trace_io;

fn jpo(args: &[&str], extra: &[&Path]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jpo"))
        .args(args)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn short_config(dir: &Path) -> PathBuf {
    let mut cfg = ExperimentConfig::template();
    cfg.sim.duration_s = 0.1;
    cfg.sweep.truncate(2);
    let path = dir.join("short.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn run_into(config: &Path, out: &Path) -> Manifest {
    let o = Command::new(env!("CARGO_BIN_EXE_jpo"))
        .arg("run")
        .arg("--config")
        .arg(config)
        .arg("--output")
        .arg(out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    Manifest::load(out).unwrap()
}

#[test]
fn template_validates_and_round_trips() {
    let o = jpo(&["validate-config", "--template"], &[]);
    assert!(o.status.success());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.json");
    fs::write(&path, &o.stdout).unwrap();
    let o = jpo(&["validate-config", "--config"], &[&path]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("configuration OK (5 members)"));
}

#[test]
fn configuration_problems_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{ not json").unwrap();
    assert_eq!(jpo(&["validate-config", "--config"], &[&broken]).status.code(), Some(2));

    let mut cfg = ExperimentConfig::template();
    cfg.sim.duration_s = -1.0;
    let bad = dir.path().join("bad.json");
    fs::write(&bad, serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(jpo(&["validate-config", "--config"], &[&bad]).status.code(), Some(2));
    assert_eq!(jpo(&["run", "--config"], &[&bad]).status.code(), Some(2));
    assert_eq!(jpo(&["run"], &[]).status.code(), Some(2));
}

#[test]
fn io_problems_exit_with_code_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_jpo"))
        .arg("analyze")
        .arg(dir.path().join("missing.jpt"))
        .arg("--output")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4));

    // a non-empty output directory is never overwritten
    let config = short_config(dir.path());
    let out = dir.path().join("busy");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("keep.txt"), b"mine").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_jpo"))
        .arg("run")
        .arg("--config")
        .arg(&config)
        .arg("--output")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(fs::read(out.join("keep.txt")).unwrap(), b"mine");
}

#[test]
fn reanalysis_reproduces_run_spectra_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let manifest = run_into(&short_config(dir.path()), &run);
    let again = dir.path().join("again");
    let o = Command::new(env!("CARGO_BIN_EXE_jpo"))
        .arg("analyze")
        .arg(&run)
        .arg("--output")
        .arg(&again)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for m in &manifest.members {
        let a = fs::read(run.join(&m.dir).join(SPECTRA_FILE)).unwrap();
        let b = fs::read(again.join(&m.dir).join(SPECTRA_FILE)).unwrap();
        assert!(a == b, "{} spectra differ", m.dir);
    }
}

#[test]
fn truncated_trace_is_reported_with_sample_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let manifest = run_into(&short_config(dir.path()), &run);
    let trace = run.join(&manifest.members[0].dir).join(TRACE_FILE);
    let bytes = fs::read(&trace).unwrap();
    let cut = dir.path().join("cut.jpt");
    fs::write(&cut, &bytes[..bytes.len() - 1000]).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_jpo"))
        .arg("analyze")
        .arg(&cut)
        .arg("--output")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("declares") && err.contains("samples"), "{err}");
}

#[test]
fn report_on_an_empty_directory_fails_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = dir.path().join("figures");
    let o = Command::new(env!("CARGO_BIN_EXE_jpo"))
        .arg("report")
        .arg(&empty)
        .arg("--output")
        .arg(&out)
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(!out.exists());
    assert_eq!(fs::read_dir(&empty).unwrap().count(), 0);
}

#[test]
fn report_bundle_leaves_the_run_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let manifest = run_into(&short_config(dir.path()), &run);
    let out = dir.path().join("figures");
    let o = Command::new(env!("CARGO_BIN_EXE_jpo"))
        .arg("report")
        .arg(&run)
        .arg("--output")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["psd.svg", "psd.csv", "histograms.svg", "traces.svg", "report.json"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    assert_eq!(jpo_cli::pipeline::checksum_tree(&run).unwrap(), manifest.files);
}

#[test]
fn manifest_replays_as_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let a = run_into(&short_config(dir.path()), &first);
    let second = dir.path().join("second");
    let b = run_into(&first.join(jpo_cli::pipeline::MANIFEST), &second);
    assert_eq!(a.files, b.files);
    assert_eq!(a.members, b.members);
}

#[test]
fn seed_override_changes_the_traces() {
    let dir = tempfile::tempdir().unwrap();
    let config = short_config(dir.path());
    let a = run_into(&config, &dir.path().join("a"));
    let out = dir.path().join("b");
    let o = Command::new(env!("CARGO_BIN_EXE_jpo"))
        .args(["run", "--seed", "99", "--config"])
        .arg(&config)
        .arg("--output")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success());
    let b = Manifest::load(&out).unwrap();
    assert_eq!(b.members[0].seed, 99);
    let trace = |m: &Manifest| m.files.iter().find(|f| f.path.ends_with(TRACE_FILE)).unwrap().sha256.clone();
    assert_ne!(trace(&a), trace(&b));
}

fn potential_report(dir: &Path, cfg: &ExperimentConfig) -> Vec<PotentialEntry> {
    let path = dir.join("cfg.json");
    fs::write(&path, serde_json::to_string(cfg).unwrap()).unwrap();
    let out = dir.join("potential");
    let o = Command::new(env!("CARGO_BIN_EXE_jpo"))
        .arg("potential")
        .arg("--config")
        .arg(&path)
        .arg("--output")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("potential.svg").is_file());
    serde_json::from_slice(&fs::read(out.join("potential_report.json")).unwrap()).unwrap()
}

#[test]
fn potential_sweep_deepens_the_favoured_well() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::template();
    cfg.sweep.truncate(4);
    let entries = potential_report(dir.path(), &cfg);
    assert_eq!(entries.len(), 4);
    let depths: Vec<f64> = entries.iter().map(|e| e.deeper_well_energy.unwrap()).collect();
    assert!(depths.windows(2).all(|w| w[1] < w[0]), "{depths:?}");
    assert_eq!(entries[0].well_energy_splitting.unwrap().abs(), 0.0);
    for e in &entries[1..] {
        // the qx < 0 well is the deeper one at this locking phase
        assert!(e.well_energy_splitting.unwrap() < 0.0);
    }
}

#[test]
fn opposite_locking_phases_mirror_the_splitting() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::template();
    cfg.sweep = [-FRAC_PI_2, FRAC_PI_2]
        .into_iter()
        .map(|phase| SweepEntry {
            photon_number: Some(0.02),
            ils_phase_rad: Some(phase),
            ..Default::default()
        })
        .collect();
    let e = potential_report(dir.path(), &cfg);
    let (a, b) = (e[0].well_energy_splitting.unwrap(), e[1].well_energy_splitting.unwrap());
    assert!(a < 0.0 && b > 0.0);
    assert!((a + b).abs() <= 1e-9 * a.abs());
}

#[test]
fn analyze_recovers_a_telegraph_corner() {
    let dir = tempfile::tempdir().unwrap();
    let gamma = 1500.0;
    let tr = telegraph_reference(gamma, 1.0, 2e5, 4.0, 8).unwrap();
    let path = dir.path().join("rtn.jpt");
    trace_io::save_binary(&path, &tr).unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_jpo"))
        .arg("analyze")
        .arg(&path)
        .arg("--output")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit: serde_json::Value = serde_json::from_slice(&fs::read(out.join("rtn").join("fit.json")).unwrap()).unwrap();
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("analysis.json")).unwrap()).unwrap();
    let s = &summary[0]["summary"];
    assert_eq!(s["lorentzian_accepted"], true, "{fit}");
    let corner = s["corner_hz"].as_f64().unwrap();
    assert!((corner / (gamma / PI) - 1.0).abs() < 0.1, "corner {corner}");
}
