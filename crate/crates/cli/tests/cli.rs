use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn detline(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_detline")).args(args).output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("report on stdout")
}

#[test]
fn trivial_circle_has_tau_minus_one() {
    let out = detline(&["eta", scenario("eta-trivial.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    let e = &r["entries"][0];
    assert_eq!(e["status"], "pass");
    let tau = e["results"]["tau"].as_array().unwrap();
    assert!((tau[0].as_f64().unwrap() + 1.0).abs() < 1e-12);
    assert_eq!(e["results"]["kernel_dim"], 1);
}

#[test]
fn interval_tau_and_equivariance() {
    let out = detline(&["tau", scenario("tau-interval.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let e = &report(&out)["entries"][0];
    assert!(e["residuals"]["equivariance"].as_f64().unwrap() < 1e-10);
    assert_eq!(e["results"]["element"]["grade"], 0);
}

#[test]
fn malformed_file_exits_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"id": "x", "kind": "eta", "operator": {"type": "circle"}}"#).unwrap();
    let out = detline(&["run", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    let invalid = dir.path().join("invalid.json");
    std::fs::write(
        &invalid,
        r#"{"id": "x", "kind": "eta", "operator": {"type": "circle",
            "circle": {"circumference": -1.0, "spin": "bounding"},
            "bundle": {"rank": 1, "potential": {"type": "poly", "coefficients": [[[[0, 0]]]]}}}}"#,
    )
    .unwrap();
    let out = detline(&["run", invalid.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("x.operator.circle.circumference"));
}

#[test]
fn command_must_match_scenario_kind() {
    let out = detline(&["holonomy", scenario("eta-trivial.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tight_window_is_a_numeric_error() {
    let out = detline(&["eta", scenario("eta-massive.json").to_str().unwrap(), "--lambda", "0.1"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(&out)["entries"][0]["error"]["class"], "numeric");
}

#[test]
fn tolerance_override_turns_pass_into_fail() {
    let out = detline(&["variation-check", scenario("variation.json").to_str().unwrap(), "--tol", "1e-14"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["summary"]["failed"], 1);
}

#[test]
fn suite_output_is_deterministic_and_writes_series() {
    let file = scenario("suite-default.json");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |dir: &std::path::Path, threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_detline"))
            .env("DETLINE_THREADS", threads)
            .args(["suite", file.to_str().unwrap(), "--out", dir.to_str().unwrap()])
            .output()
            .unwrap()
    };
    assert_eq!(run(a.path(), "1").status.code(), Some(0));
    assert_eq!(run(b.path(), "4").status.code(), Some(0));
    let ra = std::fs::read(a.path().join("report.json")).unwrap();
    assert_eq!(ra, std::fs::read(b.path().join("report.json")).unwrap());
    let r: Value = serde_json::from_slice(&ra).unwrap();
    let ids: Vec<&str> = r["entries"].as_array().unwrap().iter().map(|e| e["id"].as_str().unwrap()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    let csv = std::fs::read_to_string(a.path().join("variation.variation.csv")).unwrap();
    assert!(csv.starts_with("step,derivative_re,derivative_im,residual"));
    assert!(a.path().join("eta-trivial.spectrum.csv").exists());
}

#[test]
fn transport_writes_eps_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = detline(&["transport", scenario("transport-u1.json").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("transport-u1.eps.csv")).unwrap();
    assert_eq!(rdr.records().count(), 4);
}
