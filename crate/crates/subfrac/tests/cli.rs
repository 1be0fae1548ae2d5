use std::process::{Command, Output};

use subfrac_core::convergence::{ExperimentReport, PClassReport};

fn subfrac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subfrac"))
        .args(args)
        .env_remove("SUBFRAC_MAX_PANELS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let head = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|x| x.unwrap().iter().map(String::from).collect())
        .collect();
    (head, rows)
}

#[test]
fn kernel_prints_the_cauchy_value() {
    let o = subfrac(&[
        "kernel", "--model", "euclid1", "--family", "frac-heat", "--alpha", "1", "--t", "1", "--r",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let (head, rows) = csv_rows(&stdout(&o));
    assert_eq!(head.last().unwrap(), "value");
    let v: f64 = rows[0].last().unwrap().parse().unwrap();
    assert!((v - 1.0 / std::f64::consts::PI).abs() < 1e-12);
    // 17 significant digits
    assert_eq!(rows[0].last().unwrap().trim_start_matches("0.").len(), 17);
}

#[test]
fn input_errors_exit_two() {
    let o = subfrac(&["kernel", "--alpha", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha must lie in (0,2)"));
    let o = subfrac(&[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(subfrac(&["kernel", "--t", "nan-ish"]).status.code(), Some(2));
    assert_eq!(subfrac(&["hyperbolic"]).status.code(), Some(2));
}

#[test]
fn class_check_reports_four_axioms() {
    let o = subfrac(&["class-check", "--family", "extension", "--sigma", "0.5", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let rep: PClassReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(rep.positivity_symmetry.pass && rep.normalization.pass);
    assert!(rep.quotient.pass && rep.hoelder.pass);
}

#[test]
fn critical_region_row() {
    let o = subfrac(&["hyperbolic", "--model", "h3", "--t", "10", "--eps", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let (head, rows) = csv_rows(&stdout(&o));
    let i = head.iter().position(|h| h == "inside").unwrap();
    assert!(rows[0][i].parse::<f64>().unwrap() >= 0.6);
}

#[test]
fn experiment_json_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let o = subfrac(&[
        "converge",
        "--family",
        "frac-heat",
        "--alpha",
        "1",
        "--times",
        "100,300,1000,3000",
        "--format",
        "json",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    let rep: ExperimentReport = serde_json::from_str(&text).unwrap();
    assert_eq!(rep.times.len(), 4);
    assert!((rep.fitted_slope.unwrap() + 1.0).abs() < 0.15);
    let back = serde_json::to_string(&rep).unwrap();
    assert_eq!(serde_json::from_str::<ExperimentReport>(&back).unwrap(), rep);
}

#[test]
fn rate_command_checks_slopes() {
    let o = subfrac(&["rate", "--family", "extension", "--sigma", "0.25"]);
    assert_eq!(o.status.code(), Some(0));
    let (_, rows) = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.last().unwrap() == "true"));
}

#[test]
fn hyperbolic_dichotomy_flags() {
    let o = subfrac(&[
        "converge", "--model", "h3", "--times", "10,15,20", "--format", "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let rep: ExperimentReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(rep.flags["stays_above_half_deficiency"]);
    assert!(rep.weighted_sup_values.iter().all(Option::is_none));
}

#[test]
fn verification_and_accuracy_exit_codes() {
    // k = 6 runs into the overflow guard on t
    let o = subfrac(&["prescribe-rate", "--alpha", "1", "--k", "6"]);
    assert_eq!(o.status.code(), Some(1));
    let o = subfrac(&["prescribe-rate", "--alpha", "1", "--k", "3"]);
    assert_eq!(o.status.code(), Some(0));
    // fractional heat with α = 0.5 in R³ exceeds the envelope spread limit
    let o = subfrac(&["bounds", "--model", "euclid3", "--family", "frac-heat", "--alpha", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_subfrac"))
        .args(["converge", "--family", "frac-heat", "--alpha", "1"])
        .env("SUBFRAC_MAX_PANELS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    let o = Command::new(env!("CARGO_BIN_EXE_subfrac"))
        .args(["kernel", "--alpha", "1", "--t", "1"])
        .env("SUBFRAC_MAX_PANELS", "lots")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn output_is_deterministic() {
    let args = ["subordinator", "--alpha", "1.5", "--t", "2"];
    assert_eq!(stdout(&subfrac(&args)), stdout(&subfrac(&args)));
}

#[test]
fn other_tasks_produce_tables() {
    for args in [
        vec!["hyperbolic", "--model", "h3", "--task", "shape", "--format", "json"],
        vec!["hyperbolic", "--model", "h3", "--task", "quotient"],
        vec!["hyperbolic", "--model", "h3", "--task", "busemann"],
        vec!["hyperbolic", "--model", "h3", "--task", "deficiency", "--y", "1"],
        vec!["bounds", "--family", "extension", "--sigma", "0.75"],
        vec!["subordinator", "--alpha", "0.5", "--u", "3"],
    ] {
        let o = subfrac(&args);
        assert_eq!(o.status.code(), Some(0), "{args:?}");
        assert!(!stdout(&o).is_empty());
    }
}
