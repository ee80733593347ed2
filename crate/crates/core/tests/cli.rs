use std::fs;
use std::path::Path;
use std::process::Command;

use kickwalk::io::{read_distribution_csv, DISTRIBUTION_HEADER, OUTPUT_ENV};

fn simulate(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_simulate"))
        .args(args)
        .current_dir(cwd)
        .env_remove(OUTPUT_ENV)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn preset_run_writes_all_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(&["--preset", "fig3a", "--trajectories", "20", "--seed", "4", "--out", "o", "--threads", "1"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("o/fig3a");
    for f in ["distribution.csv", "metrics.csv", "manifest.toml"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let text = fs::read_to_string(run.join("distribution.csv")).unwrap();
    assert_eq!(text.lines().next(), Some(DISTRIBUTION_HEADER));
}

#[test]
fn fig5_sweep_emits_four_normalized_distributions() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(&["--preset", "fig5", "--trajectories", "10", "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for (panel, fwhm) in [("fig5a", 0.025), ("fig5b", 0.01), ("fig5c", 0.01), ("fig5d", 0.02)] {
        let run = dir.path().join("o").join(panel);
        let dists = read_distribution_csv(&run.join("distribution.csv")).unwrap();
        assert_eq!(dists.len(), 16);
        for d in &dists {
            assert!((d.total() - 1.0).abs() < 1e-8);
        }
        let manifest = fs::read_to_string(run.join("manifest.toml")).unwrap();
        assert!(manifest.contains(&format!("beta_fwhm = {fwhm}")), "{panel}");
    }
}

#[test]
fn env_var_sets_default_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_simulate"))
        .args(["--preset", "fig3a", "--trajectories", "2"])
        .current_dir(dir.path())
        .env(OUTPUT_ENV, dir.path().join("from_env"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("from_env/fig3a/distribution.csv").is_file());
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[walk]\nstepz = 3\n").unwrap();
    let out = simulate(&["--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    assert_eq!(simulate(&["--preset", "fig9"], dir.path()).status.code(), Some(2));
    assert_eq!(simulate(&["--config", "missing.toml"], dir.path()).status.code(), Some(1));
    assert_eq!(simulate(&[], dir.path()).status.code(), Some(2));
}

#[test]
fn boundary_violation_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), "[walk]\nsteps = 15\nn_max = 4\n[ensemble]\ntrajectories = 2\n").unwrap();
    let out = simulate(&["--config", "small.toml", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(&["--preset", "fig3b", "--trajectories", "30", "--seed", "8", "--out", "a"], dir.path());
    assert!(out.status.success());
    let out = simulate(&["--config", "a/fig3b/manifest.toml", "--out", "b", "--threads", "1"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["distribution.csv", "metrics.csv"] {
        assert_eq!(
            fs::read(dir.path().join("a/fig3b").join(f)).unwrap(),
            fs::read(dir.path().join("b/fig3b").join(f)).unwrap(),
            "{f}"
        );
    }
}
