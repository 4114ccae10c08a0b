use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], dir: &Path, threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_second-species"));
    cmd.args(args).arg("--quiet").current_dir(dir);
    if let Some(t) = threads {
        cmd.env("SECOND_SPECIES_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn lambert_quarter_arc_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"lambert": {"pairs": [[[1, 0], [0, 1]]], "revolutions": [0, 1]}}"#);
    let out = run(&["lambert", "--config", &cfg, "--out", "o"], dir.path(), None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("o/lambert.json"));
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    let get = |n: i64, key: &str| rows.iter().find(|r| r["n"] == n).unwrap()[key].as_f64().unwrap();
    assert!((get(0, "f") - PI / 2.0).abs() < 1e-12);
    assert!((get(1, "J") - (2.0 * PI + PI / 2.0)).abs() < 1e-12);
    assert!((get(0, "F") - 3.0 * PI / 4.0).abs() < 1e-12);
    assert!(dir.path().join("o/lambert.csv").exists());
}

#[test]
fn lambert_grid_rows_and_seeded_sampling_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"lambert": {"pairs": [], "revolutions": [0], "grid": [[1, 0], [0, 1], [0, 0]], "random_pairs": 20}}"#,
    );
    let a = run(&["lambert", "--config", &cfg, "--out", "a", "--seed", "7"], dir.path(), None);
    let b = run(&["lambert", "--config", &cfg, "--out", "b", "--seed", "7"], dir.path(), None);
    let c = run(&["lambert", "--config", &cfg, "--out", "c", "--seed", "8"], dir.path(), None);
    assert!(a.status.success() && b.status.success() && c.status.success());
    let ta = fs::read(dir.path().join("a/lambert.json")).unwrap();
    assert_eq!(ta, fs::read(dir.path().join("b/lambert.json")).unwrap());
    assert_ne!(ta, fs::read(dir.path().join("c/lambert.json")).unwrap());
    // Of the six ordered grid pairs only the two avoiding the origin are admissible.
    let v = json(&dir.path().join("a/lambert.json"));
    let grid_rows = v["rows"].as_array().unwrap().iter().filter(|r| r["x_minus"][0].as_f64().unwrap().fract() == 0.0).count();
    assert_eq!(grid_rows, 2);
}

#[test]
fn invalid_lambert_pair_exits_2_with_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"lambert": {"pairs": [[[0, 0], [1, 0]]]}}"#);
    let out = run(&["lambert", "--config", &cfg, "--out", "o"], dir.path(), None);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&dir.path().join("o/error.json"));
    assert_eq!(v["error"]["exit_code"], 2);
    assert_eq!(v["error"]["kind"], "input");
}

#[test]
fn malformed_or_unknown_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"chain": "#);
    assert_eq!(run(&["chain", "--config", &bad, "--out", "o"], dir.path(), None).status.code(), Some(2));
    let unknown = write(dir.path(), "u.json", r#"{"chian": {}}"#);
    assert_eq!(run(&["chain", "--config", &unknown, "--out", "o"], dir.path(), None).status.code(), Some(2));
    let invalid = write(dir.path(), "i.json", r#"{"shadow": {"mu_sweep": [2.0]}}"#);
    assert_eq!(run(&["shadow", "--config", &invalid, "--out", "o"], dir.path(), None).status.code(), Some(2));
    assert_eq!(run(&["shadow", "--out", "o", "--mu-sweep", "1e-4,x"], dir.path(), None).status.code(), Some(2));
}

#[test]
fn degenerate_pattern_exits_4_and_keeps_files() {
    // k₁ = +1 puts body 1 on body 2's own ellipse: the bodies meet early.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"chain": {"k1": [1]}}"#);
    let out = run(&["chain", "--config", &cfg, "--out", "o"], dir.path(), None);
    assert_eq!(out.status.code(), Some(4));
    let v = json(&dir.path().join("o/chain.json"));
    assert_eq!(v["certificate"]["valid"], false);
}

#[test]
fn shadow_without_certificate_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(&["chain", "--out", "o"], dir.path(), None).status.success());
    let mut v = json(&dir.path().join("o/chain.json"));
    v.as_object_mut().unwrap().remove("certificate");
    write(dir.path(), "nocert.json", &v.to_string());
    let out = run(&["shadow", "--chain", "nocert.json", "--out", "o", "--mu-sweep", "1e-4"], dir.path(), None);
    assert_eq!(out.status.code(), Some(2));
    let missing = run(&["shadow", "--chain", "absent.json", "--out", "o"], dir.path(), None);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn single_mu_pipeline_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let one = run(&["pipeline", "--out", "a", "--mu-sweep", "1e-4,1e-5"], dir.path(), Some("1"));
    let four = run(&["pipeline", "--out", "b", "--mu-sweep", "1e-4,1e-5"], dir.path(), Some("4"));
    assert_eq!(one.status.code(), Some(0), "{}", String::from_utf8_lossy(&one.stderr));
    assert_eq!(four.status.code(), Some(0));
    for f in ["lambert.json", "chain.json", "shadow_report.json", "shadow_report.csv", "trajectory_mu_1e-4.csv"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap(), "{f} differs");
    }
    let v = json(&dir.path().join("a/shadow_report.json"));
    assert_eq!(v["members"].as_array().unwrap().len(), 2);
    assert!(v["members"].as_array().unwrap().iter().all(|m| m["status"] == "converged"));
    assert_eq!(v["provenance"]["library_version"], "0.1.0");
    assert_eq!(v["provenance"]["config_sha256"].as_str().unwrap().len(), 64);
    assert!(v["provenance"]["config"]["shadow"]["options"]["rtol"].is_number());

    let single = run(&["shadow", "--chain", "a/chain.json", "--out", "s", "--mu-sweep", "1e-4"], dir.path(), None);
    assert_eq!(single.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("s/shadow_report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn diverging_member_exits_3_with_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(&["chain", "--out", "o"], dir.path(), None).status.success());
    // Eight iterations suffice at μ = 1e-5 but not at μ = 1e-3.
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"shadow": {"mu_sweep": [1e-3, 1e-5], "trajectories": false,
            "options": {"max_iterations": 8, "tol": 1e-10, "rtol": 1e-12, "atol": 1e-16, "epsilon": 0.1, "samples_per_step": 4}}}"#,
    );
    let out = run(&["shadow", "--config", &cfg, "--out", "o"], dir.path(), None);
    assert_eq!(out.status.code(), Some(3));
    let v = json(&dir.path().join("o/shadow_report.json"));
    let members = v["members"].as_array().unwrap();
    assert_eq!(members[0]["status"], "failed");
    assert_eq!(members[1]["status"], "converged");
    assert!(dir.path().join("o/shadow_report.csv").exists());
}
