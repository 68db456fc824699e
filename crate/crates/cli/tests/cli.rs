use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn covlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covlab")).args(args).output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json report")
}

fn write(dir: &TempDir, name: &str, value: Value) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, value.to_string()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn counting_line(dir: &TempDir, n: usize) -> PathBuf {
    let points: Vec<Value> = (0..n).map(|i| json!([i])).collect();
    write(dir, "line.json", json!({ "backend": "atomic", "metric": "l1", "points": points, "masses": vec![1; n] }))
}

#[test]
fn segment_line_example() {
    let out = covlab(&["paper", "reproduce", "ex3.9"]);
    let r = report(&out);
    assert_eq!(r["tool"], "covlab");
    assert_eq!(r["seed"], 0);
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
    assert!(r["anchor"].as_str().unwrap().contains("dilation"));
    let res = &r["result"]["data"];
    assert!((res["lhs"].as_f64().unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
    assert!((res["rhs"].as_f64().unwrap() - 0.25).abs() < 1e-15);
    assert!((res["ratio"].as_f64().unwrap() - 2f64.powf(1.5)).abs() < 1e-12);
}

#[test]
fn comb_measure_example() {
    let r = report(&covlab(&["paper", "reproduce", "ex4.7-measures"]));
    let checks = r["result"]["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 27);
    assert!(checks.iter().all(|c| c["passed"] == true));
}

#[test]
fn unit_dilations_give_ratio_one() {
    let dir = TempDir::new().unwrap();
    let space = counting_line(&dir, 6);
    let family = write(
        &dir,
        "family.json",
        json!({ "balls": [{ "center": 0, "radius": 1 }, { "center": 3, "radius": "3/2" }], "weights": [1, "1/3"] }),
    );
    let r = report(&covlab(&["boman", "ratio", "--space", s(&space), "--family", s(&family), "--p", "2"]));
    assert_eq!(r["result"]["ratio"].as_f64().unwrap(), 1.0);
}

#[test]
fn reports_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let space = counting_line(&dir, 7);
    let args = ["boman", "search", "--space", s(&space), "--p", "3/2", "--families", "12", "--iters", "40", "--seed", "9"];
    let a = covlab(&args);
    let mut threaded = vec!["--threads", "1"];
    threaded.extend_from_slice(&args);
    let b = covlab(&threaded);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    let out = dir.path().join("r.json");
    let mut to_file = args.to_vec();
    to_file.extend_from_slice(&["--out", s(&out)]);
    assert!(covlab(&to_file).status.success());
    assert_eq!(std::fs::read(&out).unwrap(), a.stdout);
    assert_eq!(report(&a)["seed"], 9);
}

#[test]
fn bad_flags_exit_two() {
    assert_eq!(covlab(&["boman", "ratio", "--nope"]).status.code(), Some(2));
    assert_eq!(covlab(&["paper", "reproduce", "ex9.9"]).status.code(), Some(2));
}

#[test]
fn invalid_inputs_exit_three() {
    let dir = TempDir::new().unwrap();
    let coincident = write(&dir, "bad.json", json!({ "backend": "atomic", "points": [[0], [0]], "masses": [1, 1] }));
    let out = covlab(&["space", "build", "--spec", s(&coincident)]);
    assert_eq!(out.status.code(), Some(3));
    let negative = write(&dir, "neg.json", json!({ "backend": "atomic", "points": [[0], [1]], "masses": [1, -1] }));
    assert_eq!(covlab(&["space", "build", "--spec", s(&negative)]).status.code(), Some(3));
    let missing = dir.path().join("missing.json");
    assert_eq!(covlab(&["doubling", "--space", s(&missing)]).status.code(), Some(3));
}

#[test]
fn space_build_normalizes_fractions() {
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "s.json", json!({ "backend": "atomic", "points": [["1/2"], [2]], "masses": ["1/4", "3/4"] }));
    let r = report(&covlab(&["space", "build", "--spec", s(&spec)]));
    assert_eq!(r["result"]["atoms"], 2);
    assert!((r["result"]["total_mass"].as_f64().unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn maximal_eval_as_csv() {
    let dir = TempDir::new().unwrap();
    let space = counting_line(&dir, 4);
    let g = write(&dir, "g.json", json!([1, 0, 0, 0]));
    let out = covlab(&["--format", "csv", "maximal", "eval", "--space", s(&space), "--fn", s(&g), "--variant", "uncentered"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# covlab"));
    assert_eq!(lines.next().unwrap(), "x,quantity,value,lower,upper");
    assert_eq!(lines.nth(1).unwrap(), "1,maximal,0.5,,");
}

#[test]
fn doubling_on_a_subset() {
    let dir = TempDir::new().unwrap();
    let points: Vec<Value> = (-10..=10).map(|i| json!([i])).collect();
    let space = write(&dir, "w.json", json!({ "backend": "atomic", "metric": "l1", "points": points, "masses": vec![1; 21] }));
    let subset = write(&dir, "e.json", json!([10]));
    let r = report(&covlab(&["doubling", "--space", s(&space)]));
    assert_eq!(r["result"]["constant"].as_f64().unwrap(), 3.0);
    let r = report(&covlab(&["doubling", "--space", s(&space), "--subset", s(&subset)]));
    assert!(r["result"]["constant"].as_f64().unwrap() <= 3.0);
}

#[test]
fn norm_searches_report_witnesses() {
    let dir = TempDir::new().unwrap();
    let space = counting_line(&dir, 6);
    for kind in ["strong", "weak"] {
        let r = report(&covlab(&["norm", kind, "--space", s(&space), "--variant", "uncentered", "--p", "2", "--strategy", "ascent", "--seed", "3", "--iterations", "40"]));
        assert!(r["result"]["value"].as_f64().unwrap() >= 1.0 - 1e-8);
        assert_eq!(r["result"]["witness"]["g"].as_array().unwrap().len(), 6);
        assert_eq!(r["seed"], 3);
    }
}

#[test]
fn oracle_commands() {
    let dir = TempDir::new().unwrap();
    let space = counting_line(&dir, 5);
    let r = report(&covlab(&["oracle", "compare", "--space", s(&space), "--trials", "5", "--seed", "1"]));
    assert_eq!(r["result"]["agree"], true);
    let r = report(&covlab(&["oracle", "consistency", "--space", s(&space), "--p", "2"]));
    assert!(r["result"]["violations"].as_array().unwrap().is_empty());
}

#[test]
fn fixtures_compare_and_detect_tampering() {
    let pinned = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/oracle.json");
    let r = report(&covlab(&["oracle", "fixtures", "--path", s(&pinned)]));
    assert!(r["result"]["mismatches"].as_array().unwrap().is_empty());
    let dir = TempDir::new().unwrap();
    let mut fixtures: Value = serde_json::from_str(&std::fs::read_to_string(&pinned).unwrap()).unwrap();
    fixtures["values"]["line4.distinct_balls"] = json!(10.0);
    let tampered = write(&dir, "f.json", fixtures);
    assert_eq!(covlab(&["oracle", "fixtures", "--path", s(&tampered)]).status.code(), Some(4));
    let blessed = dir.path().join("new.json");
    assert!(covlab(&["oracle", "fixtures", "--bless", "--path", s(&blessed)]).status.success());
    assert!(covlab(&["oracle", "fixtures", "--path", s(&blessed)]).status.success());
}

#[test]
fn thresholds_and_segment_ratios() {
    let dir = TempDir::new().unwrap();
    let space = counting_line(&dir, 8);
    let balls = write(&dir, "b.json", json!([{ "center": 2, "radius": 1 }, { "center": 0, "radius": 3 }]));
    let r = report(&covlab(&["boman", "thresholds", "--space", s(&space), "--balls", s(&balls)]));
    for t in r["result"].as_array().unwrap() {
        let t = t["threshold"].as_f64().unwrap();
        assert!(t > 0.0 && t < 1.0);
    }
    let line = write(&dir, "seg.json", json!({ "backend": "segments", "segments": [{ "height": 0, "x_lo": -64, "x_hi": 64, "density": 1 }] }));
    let fam = write(&dir, "fam.json", json!({ "balls": [{ "center": [0, 0], "radius": 1 }], "dilations": [8] }));
    let r = report(&covlab(&["boman", "reverse", "--space", s(&line), "--family", s(&fam), "--p", "2"]));
    assert!((r["result"]["ratio"].as_f64().unwrap() - 2f64.powf(1.5)).abs() < 1e-12);
}
