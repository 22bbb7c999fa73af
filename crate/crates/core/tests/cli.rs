//! End-to-end tests of the command-line binary: file formats, exit codes,
//! determinism, and the JSON/CSV output contracts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_efftox-design"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

const EMAX_MM: &str = r#"{
    "efficacy": {"family": "emax", "params": [0.0, 0.466, 25.0]},
    "toxicity": {"family": "michaelis-menten", "params": [300.0, 50.0]},
    "covariance": {"sigma_e": 0.2, "sigma_t": 20.0, "rho": 0.5},
    "range": {"L": 0.0, "R": 150.0}
}"#;

const EMAX_QUAD: &str = r#"{
    "efficacy": {"family": "emax", "params": [2.588, 15.64, 0.26]},
    "toxicity": {"family": "quadratic", "params": [0.24, -11.632, 25.11]},
    "covariance": {"sigma_e": 7.272, "sigma_t": 8.311, "rho": 0.387},
    "range": {"L": 0.0, "R": 1.0}
}"#;

#[test]
fn optimize_reproduces_reference_design_deterministically() {
    let dir = TempDir::new().unwrap();
    let problem = write(dir.path(), "p.json", EMAX_MM);
    let out1 = dir.path().join("a.json");
    let out2 = dir.path().join("b.json");
    for out in [&out1, &out2] {
        let status = bin()
            .args(["optimize"])
            .arg(&problem)
            .args(["--seed", "11", "--out"])
            .arg(out)
            .output()
            .unwrap();
        assert!(status.status.code() == Some(0), "{}", stderr_of(&status));
    }
    let text1 = fs::read_to_string(&out1).unwrap();
    assert_eq!(text1, fs::read_to_string(&out2).unwrap(), "same seed, different bytes");

    let v: serde_json::Value = serde_json::from_str(&text1).unwrap();
    assert_eq!(v["converged"], serde_json::json!(true));
    assert_eq!(v["seed"], serde_json::json!(11));
    let points: Vec<f64> = serde_json::from_value(v["design"]["points"].clone()).unwrap();
    let weights: Vec<f64> = serde_json::from_value(v["design"]["weights"].clone()).unwrap();
    assert_eq!(points.len(), 3);
    assert!((points[0] - 0.0).abs() < 1e-9);
    assert!((points[1] - 23.8417).abs() < 0.05, "{points:?}");
    assert!((points[2] - 150.0).abs() < 1e-9);
    for (w, target) in weights.iter().zip([0.2, 0.4, 0.4]) {
        assert!((w - target).abs() < 1e-3, "{weights:?}");
    }
    assert!(v["report"]["optimal"].as_bool().unwrap());
}

#[test]
fn verify_round_trips_an_optimize_result() {
    let dir = TempDir::new().unwrap();
    let problem = write(dir.path(), "p.json", EMAX_MM);
    let design = dir.path().join("opt.json");
    let status = bin()
        .arg("optimize")
        .arg(&problem)
        .args(["--seed", "3", "--out"])
        .arg(&design)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    // the optimize output (wrapped form) doubles as a verify input
    let report_path = dir.path().join("report.json");
    let status = bin()
        .arg("verify")
        .arg(&problem)
        .arg(&design)
        .arg("--out")
        .arg(&report_path)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", stderr_of(&status));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert!(report["optimal"].as_bool().unwrap());
    assert!(report["efficiency_lower_bound"].as_f64().unwrap() > 0.999);
}

#[test]
fn minimal_design_verifies_non_optimal_with_exit_2() {
    let dir = TempDir::new().unwrap();
    let problem = write(dir.path(), "p.json", EMAX_QUAD);
    let minimal = dir.path().join("min.json");
    let status = bin()
        .arg("minimal")
        .arg(&problem)
        .arg("--out")
        .arg(&minimal)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&minimal).unwrap()).unwrap();
    let points: Vec<f64> = serde_json::from_value(v["design"]["points"].clone()).unwrap();
    assert!((points[1] - 0.3123635).abs() < 1e-4, "{points:?}");
    // the 3-point minimal design is not globally D-optimal here
    let status = bin().arg("verify").arg(&problem).arg(&minimal).output().unwrap();
    assert_eq!(status.status.code(), Some(2), "{}", stderr_of(&status));
}

#[test]
fn curve_csv_has_contracted_header_and_row_count() {
    let dir = TempDir::new().unwrap();
    let problem = write(dir.path(), "p.json", EMAX_QUAD);
    let design = write(
        dir.path(),
        "d.json",
        r#"{"points": [0.0, 0.3123635, 1.0], "weights": [0.3333333333333333, 0.3333333333333333, 0.3333333333333334]}"#,
    );
    let curve = dir.path().join("curve.csv");
    let status = bin()
        .arg("verify")
        .arg(&problem)
        .arg(&design)
        .args(["--grid", "101", "--curve"])
        .arg(&curve)
        .output()
        .unwrap();
    // non-optimal design: exit 2, but the curve is still written
    assert_eq!(status.status.code(), Some(2));
    let text = fs::read_to_string(&curve).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "dose,sensitivity");
    assert_eq!(lines.len(), 102);
    let first: Vec<f64> = lines[1].split(',').map(|t| t.parse().unwrap()).collect();
    let last: Vec<f64> = lines[101].split(',').map(|t| t.parse().unwrap()).collect();
    assert_eq!(first[0], 0.0);
    assert_eq!(last[0], 1.0);
}

#[test]
fn input_errors_exit_1_with_field_path() {
    let dir = TempDir::new().unwrap();
    let bad = write(
        dir.path(),
        "bad.json",
        &EMAX_MM.replace("[300.0, 50.0]", "[300.0, -50.0]"),
    );
    let out = bin().arg("minimal").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("toxicity.params[1]"), "{}", stderr_of(&out));

    let out = bin().arg("minimal").arg(dir.path().join("absent.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let garbled = write(dir.path(), "garbled.json", "{not json");
    let out = bin().arg("minimal").arg(&garbled).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn uncovered_pair_exits_4_with_advice() {
    let dir = TempDir::new().unwrap();
    let problem = write(
        dir.path(),
        "p.json",
        &EMAX_MM.replace(
            r#""toxicity": {"family": "michaelis-menten", "params": [300.0, 50.0]}"#,
            r#""toxicity": {"family": "linear", "params": [0.1, 0.9]}"#,
        ),
    );
    let out = bin().arg("minimal").arg(&problem).output().unwrap();
    assert_eq!(out.status.code(), Some(4), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("optimize --k"), "{}", stderr_of(&out));
}

#[test]
fn e_criterion_with_active_control() {
    let dir = TempDir::new().unwrap();
    let text = EMAX_MM.replace(
        r#""range": {"L": 0.0, "R": 150.0}"#,
        r#""range": {"L": 0.0, "R": 150.0},
           "criterion": {"p": "-inf"},
           "control": {"sigma_e": 0.2, "sigma_t": 29.8}"#,
    );
    let problem = write(dir.path(), "p.json", &text);
    let out_path = dir.path().join("e.json");
    let status = bin()
        .arg("optimize")
        .arg(&problem)
        .args(["--seed", "5", "--out"])
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", stderr_of(&status));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(v["p"], serde_json::json!("-inf"));
    let w = v["active_control"]["control_weight"].as_f64().unwrap();
    assert!((0.03..0.08).contains(&w), "control weight {w}");
    let points: Vec<f64> =
        serde_json::from_value(v["design"]["points"].clone()).unwrap();
    assert!((points[1] - 19.3702).abs() < 0.05, "{points:?}");
}

#[test]
fn efficiency_of_a_design_against_itself_is_one() {
    let dir = TempDir::new().unwrap();
    let problem = write(dir.path(), "p.json", EMAX_QUAD);
    let design = write(
        dir.path(),
        "d.json",
        r#"{"points": [0.0, 0.31, 1.0], "weights": [0.4, 0.3, 0.3]}"#,
    );
    let out = bin()
        .arg("efficiency")
        .arg(&problem)
        .arg(&design)
        .arg(&design)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let val: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((val - 1.0).abs() < 1e-12, "self-efficiency {val}");
}

#[test]
fn help_exits_0_and_bad_flags_exit_1() {
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
    assert_eq!(
        bin().arg("optimize").arg("--bogus").output().unwrap().status.code(),
        Some(1)
    );
    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(1));
}

#[test]
fn seed_flag_overrides_problem_file_seed() {
    let dir = TempDir::new().unwrap();
    let text = EMAX_MM.replace(
        r#""range": {"L": 0.0, "R": 150.0}"#,
        r#""range": {"L": 0.0, "R": 150.0}, "pso": {"seed": 1}"#,
    );
    let problem = write(dir.path(), "p.json", &text);
    let out = bin()
        .arg("optimize")
        .arg(&problem)
        .args(["--seed", "77"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(v["seed"], serde_json::json!(77));
}
