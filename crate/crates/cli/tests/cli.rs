use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const REFERENCE: &str = "[matrix]\nm11=3\nm12=0\nm21=1\nm22=1\n\n[perturbation]\nt=0\nfreq=(0,1) coeff=(0,0.05) phase=0\n";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multichaos"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn with_config(extra: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("map.txt"), format!("{REFERENCE}{extra}")).unwrap();
    dir
}

#[test]
fn verify_cone_passes_on_reference() {
    let dir = with_config("");
    let out = run(dir.path(), &["--config", "map.txt", "verify-cone", "--grid", "50"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("out/cone.json"));
    assert_eq!(v["result"]["report"]["pass"], Value::Bool(true));
}

#[test]
fn find_periodic_lists_two_fixed_points() {
    let dir = with_config("");
    let out = run(dir.path(), &["--config", "map.txt", "find-periodic", "--period", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&dir.path().join("out/periodic.json"));
    let orbits = v["result"]["orbits"].as_array().unwrap();
    assert_eq!(orbits.len(), 2);
    let classes: Vec<&str> = orbits.iter().map(|o| o["class"].as_str().unwrap()).collect();
    assert_eq!(classes, ["Repeller", "Saddle"]);
}

#[test]
fn missing_map_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["--config", "no_such_map.txt", "verify-cone"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_map.txt"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn validation_errors_exit_two() {
    let dir = with_config("");
    let out = run(dir.path(), &["--config", "map.txt", "--tol", "-1", "conjugacy"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tol must be > 0"));
    fs::write(dir.path().join("unit.txt"), "[matrix]\nm11=1\nm12=1\nm21=0\nm22=1\n").unwrap();
    let out = run(dir.path(), &["--config", "unit.txt", "validate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("(E_M)"));
    let out = run(dir.path(), &["--config", "map.txt", "validate"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn validate_checks_config_sections() {
    let dir = with_config("\n[sweep]\nsamples=1\n\n[ftle]\nwindow=abc\n");
    let out = run(dir.path(), &["--config", "map.txt", "validate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("samples must be >= 2"), "{err}");
    assert!(err.contains("[ftle] window"), "{err}");
}

#[test]
fn circle_commands_need_skew_maps() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cat.txt"), "[matrix]\nm11=2\nm12=1\nm21=1\nm22=2\n").unwrap();
    let out = run(dir.path(), &["--config", "cat.txt", "rotation"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(dir.path(), &["rotation", "--base-x", "0.3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not invariant"));
}

#[test]
fn config_values_and_flag_overrides() {
    let dir = with_config("\n[run]\nseed=11\n\n[find-periodic]\nperiod=2\nseed-grid=8\n");
    assert_eq!(run(dir.path(), &["--config", "map.txt", "find-periodic"]).status.code(), Some(0));
    let v = json(&dir.path().join("out/periodic.json"));
    assert_eq!(v["result"]["period"], 2);
    let m = json(&dir.path().join("out/manifest.json"));
    assert_eq!(m["config"]["seed"], 11);
    assert_eq!(m["config"]["params"]["seed-grid"], 8);
    assert_eq!(
        run(dir.path(), &["--config", "map.txt", "--seed", "5", "find-periodic", "--period", "3"]).status.code(),
        Some(0)
    );
    let v = json(&dir.path().join("out/periodic.json"));
    assert_eq!(v["result"]["period"], 3);
    assert_eq!(json(&dir.path().join("out/manifest.json"))["config"]["seed"], 5);
}

#[test]
fn numerical_failure_exits_three_with_report() {
    let dir = tempfile::tempdir().unwrap();
    // 1 + dG2/dy vanishes at y = 0.
    fs::write(
        dir.path().join("sing.txt"),
        "[matrix]\nm11=3\nm12=0\nm21=1\nm22=1\n[perturbation]\nt=0\nfreq=(0,1) coeff=(0,-0.15915494309189535) phase=0\n",
    )
    .unwrap();
    let out = run(dir.path(), &["--config", "sing.txt", "ftle", "--x0", "0", "--y0", "0"]);
    assert_eq!(out.status.code(), Some(3));
    let e = json(&dir.path().join("out/error.json"));
    assert_eq!(e["kind"], "SingularJacobian");
}

#[test]
fn outputs_carry_the_manifest_checksum() {
    let dir = with_config("");
    let out = run(dir.path(), &["--config", "map.txt", "ftle", "--total", "2000"]);
    assert_eq!(out.status.code(), Some(0));
    let m = json(&dir.path().join("out/manifest.json"));
    let sum = m["manifest"].as_str().unwrap();
    let csv = fs::read_to_string(dir.path().join("out/ftle.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), format!("# manifest={sum}"));
    assert_eq!(csv.lines().nth(1).unwrap(), "start,lambda1,lambda2,count");
    assert_eq!(json(&dir.path().join("out/ftle.json"))["manifest"], sum);
    assert!(m["wall_time_s"].is_number());
    assert!(m["outputs"]["ftle.csv"].is_string());
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical() {
    let dir = with_config("");
    for (cmd, extra) in [
        ("sweep", vec!["--samples", "40", "--iters", "2000"]),
        ("ftle", vec!["--total", "5000"]),
        ("conjugacy", vec!["--samples", "200", "--grid", "8"]),
        ("cover", vec!["--grid", "32"]),
    ] {
        let mut dirs = Vec::new();
        for (i, threads) in ["1", "4"].iter().enumerate() {
            let o = format!("run_{cmd}_{i}");
            let mut args = vec!["--config", "map.txt", "--out", &o, "--threads", threads, cmd];
            args.extend(&extra);
            assert_eq!(run(dir.path(), &args).status.code(), Some(0));
            dirs.push(dir.path().join(o));
        }
        let a = outputs(&dirs[0]);
        assert!(!a.is_empty());
        assert_eq!(a, outputs(&dirs[1]), "{cmd}");
    }
}
