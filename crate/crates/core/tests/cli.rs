use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rca_ghost::config::{PipelineConfig, Profile};
use rca_ghost::pipeline::{read_metrics, METRICS_REPORT};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rca-ghost"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(cmd: &mut Command) -> (Output, String, String) {
    let out = cmd.output().expect("binary runs");
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    (out, stdout, stderr)
}

#[test]
fn shipped_profiles_match_builtins() {
    // Each file is complete, so it resolves the same over either profile.
    for (file, profile) in [("desk.toml", Profile::Desk), ("full.toml", Profile::Full)] {
        for base in [Profile::Desk, Profile::Full] {
            let cfg = PipelineConfig::load(base, Some(&configs().join(file))).unwrap();
            assert_eq!(cfg, PipelineConfig::profile(profile), "{file} over {base}");
        }
    }
}

#[test]
fn cyst_config_resolves() {
    let cfg = PipelineConfig::load(Profile::Desk, Some(&configs().join("cyst.toml"))).unwrap();
    assert!(cfg.metrics.cnr.is_some());
    assert_eq!(cfg.array, PipelineConfig::profile(Profile::Desk).array);
}

#[test]
fn print_config_applies_overrides() {
    let (out, stdout, _) = run(bin().args([
        "all",
        "--print-config",
        "--seed",
        "42",
        "--out",
        "elsewhere",
    ]));
    assert!(out.status.success());
    let cfg = PipelineConfig::from_toml_overlay(Profile::Full, &stdout).unwrap();
    assert_eq!(cfg.seed, 42);
    assert_eq!(cfg.output_dir, PathBuf::from("elsewhere"));
}

#[test]
fn invalid_config_lists_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[pulse]\nfs = 8e6\n[edge]\nedge_amp = -2.0\n").unwrap();
    let (out, _, stderr) = run(bin().arg("simulate").arg("--config").arg(&path));
    assert!(!out.status.success());
    assert!(stderr.contains("fs must exceed 2·f0"), "{stderr}");
    assert!(stderr.contains("edge_amp"), "{stderr}");
}

#[test]
fn metrics_without_upstream_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let (out, _, stderr) = run(bin().arg("metrics").arg("--out").arg(dir.path()));
    assert!(!out.status.success());
    assert!(stderr.contains("filter.json"), "{stderr}");
    assert!(stderr.contains("`filter`"), "{stderr}");
}

#[test]
fn zero_threads_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (out, _, stderr) = run(bin()
        .args(["simulate", "--threads", "0", "--out"])
        .arg(dir.path()));
    assert!(!out.status.success());
    assert!(stderr.contains("thread"), "{stderr}");
}

#[test]
fn desk_default_run_reports_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (out, stdout, stderr) = run(bin().arg("all").arg("--out").arg(dir.path()));
    assert!(out.status.success(), "{stderr}");
    assert!(dir.path().join(METRICS_REPORT).is_file());
    let report = read_metrics(dir.path()).unwrap();
    assert!(report.fwhm_main.is_some() && report.fwhm_filtered.is_some());
    assert!(report.suppression_db.is_some());
    for key in [
        "fwhm_main",
        "fwhm_filtered",
        "suppression_db",
        "cnr_main",
        "cnr_filtered",
    ] {
        assert!(stdout.contains(key), "{key} missing from {stdout}");
    }
}

#[test]
fn stages_can_run_one_at_a_time() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.toml");
    std::fs::write(
        &path,
        "[array]\nn_rows = 8\nn_cols = 8\n[grid]\nhalf_extent = [0.0008, 0.0008, 0.0004]\n",
    )
    .unwrap();
    for stage in ["simulate", "beamform", "filter", "metrics"] {
        let (out, _, stderr) = run(bin()
            .arg(stage)
            .arg("--config")
            .arg(&path)
            .arg("--out")
            .arg(dir.path()));
        assert!(out.status.success(), "{stage}: {stderr}");
    }
    assert!(read_metrics(dir.path()).is_ok());
}
