//! End-to-end tests of the `ppns` binary: flags, exit codes, output files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ppns_core::ratings::RatingMatrix;
use ppns_core::seeds;
use rand::Rng;

fn ppns_cmd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ppns"))
}

fn write_small_corpus(dir: &Path) -> PathBuf {
    let mut entries = Vec::new();
    let mut rng = seeds::rng_from(0xc11);
    for u in 1..=80u64 {
        for i in 1..=50u64 {
            if rng.random::<f64>() < 0.35 {
                entries.push((u, i, rng.random_range(1..=5u8)));
            }
        }
    }
    let m = RatingMatrix::from_entries(entries).unwrap();
    let path = dir.join("ratings.csv");
    std::fs::write(&path, m.to_canonical_csv()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    ppns_cmd().args(args).output().expect("binary runs")
}

#[test]
fn missing_method_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "--dataset",
        "x.csv",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_method_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_small_corpus(dir.path());
    let out = run(&[
        "--dataset",
        data.to_str().unwrap(),
        "--format",
        "csv",
        "--method",
        "svd",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown method"), "{stderr}");
}

#[test]
fn missing_dataset_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "--dataset",
        dir.path().join("nope.csv").to_str().unwrap(),
        "--format",
        "csv",
        "--method",
        "knn",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn beta_bound_violation_exits_2_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_small_corpus(dir.path());
    let out = run(&[
        "--dataset",
        data.to_str().unwrap(),
        "--format",
        "csv",
        "--method",
        "ppns",
        "--k",
        "10",
        "--beta",
        "40",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("U/2k"), "{stderr}");
    assert!(!dir.path().join("out").join("mae.csv").exists());
}

#[test]
fn accuracy_grid_writes_reports_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_small_corpus(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "--dataset",
        data.to_str().unwrap(),
        "--format",
        "csv",
        "--method",
        "knn,npns,pncf,ppns",
        "--k",
        "3",
        "--epsilon",
        "1",
        "--beta",
        "1,2,3,4",
        "--trials",
        "2",
        "--seed",
        "11",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let mae = std::fs::read_to_string(out_dir.join("mae.csv")).unwrap();
    let mut lines = mae.lines();
    assert_eq!(lines.next(), Some("method,k,epsilon,beta,seed,mae,n"));
    // 4 methods × 4 betas × 2 seeds, every row self-describing
    assert_eq!(mae.lines().count(), 1 + 4 * 4 * 2);
    for line in mae.lines().skip(1) {
        assert_eq!(line.split(',').count(), 7, "{line}");
    }

    // a 4-point beta sweep gives a 4-line curve per method
    for method in ["knn", "npns", "pncf", "ppns"] {
        let dat = std::fs::read_to_string(out_dir.join(format!("mae_vs_beta__{method}.dat")))
            .unwrap();
        assert_eq!(dat.lines().count(), 4, "{method}: {dat}");
        for line in dat.lines() {
            assert_eq!(line.split(' ').count(), 2);
        }
    }

    // target draws are recorded per replica
    assert!(out_dir.join("targets_seed0.csv").exists());
    assert!(out_dir.join("targets_seed1.csv").exists());
}

#[test]
fn attack_grid_writes_disclosure_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_small_corpus(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "--dataset",
        data.to_str().unwrap(),
        "--format",
        "csv",
        "--method",
        "knn,ppns",
        "--k",
        "5",
        "--beta",
        "2",
        "--attack-m",
        "2,4",
        "--trials",
        "2",
        "--seed",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let attack = std::fs::read_to_string(out_dir.join("attack.csv")).unwrap();
    let mut lines = attack.lines();
    assert_eq!(
        lines.next(),
        Some("method,k,epsilon,beta,m,seed,target_in_nbr,sole_real,attack_mae")
    );
    assert_eq!(attack.lines().count(), 1 + 2 * 2); // 2 methods × 2 m values

    let per_target = std::fs::read_to_string(out_dir.join("attack_targets.csv")).unwrap();
    assert!(per_target.starts_with(
        "method,k,epsilon,beta,m,seed,target,target_in_nbr,sole_real,attack_mae"
    ));
    let dat = std::fs::read_to_string(out_dir.join("attack_mae_vs_m__knn.dat")).unwrap();
    assert_eq!(dat.lines().count(), 2);
    assert!(out_dir.join("targets.csv").exists());
}

#[test]
fn k_sweep_produces_k_axis_curves() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_small_corpus(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "--dataset",
        data.to_str().unwrap(),
        "--format",
        "csv",
        "--method",
        "ppns",
        "--k",
        "2,3,4",
        "--beta",
        "2",
        "--trials",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dat = std::fs::read_to_string(out_dir.join("mae_vs_k__ppns.dat")).unwrap();
    let xs: Vec<&str> = dat.lines().map(|l| l.split(' ').next().unwrap()).collect();
    assert_eq!(xs, vec!["2", "3", "4"]);
}

#[test]
fn item_mode_runs_on_the_transpose() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_small_corpus(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "--dataset",
        data.to_str().unwrap(),
        "--format",
        "csv",
        "--mode",
        "item",
        "--method",
        "knn",
        "--k",
        "3",
        "--trials",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("mae.csv").exists());
}

#[test]
fn synth_format_accepts_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "--dataset",
        "not-a-seed",
        "--format",
        "synth",
        "--method",
        "knn",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("seed"), "{stderr}");
}
