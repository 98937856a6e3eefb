use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn socpd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_socpd")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &TempDir, name: &str, extra: &[&str]) -> PathBuf {
    let path = dir.path().join(name);
    let mut args = vec!["generate", "synthetic", "--out", path_str(&path)];
    args.extend_from_slice(extra);
    let out = socpd(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generation_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = generate(&dir, "a.json", &["--n", "7", "--K", "4", "--seed", "3"]);
    let b = generate(&dir, "b.json", &["--n", "7", "--K", "4", "--seed", "3"]);
    let c = generate(&dir, "c.json", &["--n", "7", "--K", "4", "--seed", "4"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn oa_and_enumeration_agree() {
    let dir = TempDir::new().unwrap();
    let inst = generate(&dir, "i.json", &["--n", "10", "--K", "10", "--seed", "1"]);
    let mut values = Vec::new();
    for method in ["oa", "enum"] {
        let rep = dir.path().join(format!("{method}.json"));
        let out = socpd(&["solve", "--instance", path_str(&inst), "--method", method, "--out", path_str(&rep)]);
        assert_eq!(code(&out), 0);
        let r = json(&rep);
        assert_eq!(r["termination"], "optimal");
        values.push(r["objective_value"].as_f64().unwrap());
    }
    assert!((values[0] - values[1]).abs() <= 1e-6 * values[1]);

    let table = socpd(&["report", path_str(&dir.path().join("oa.json")), path_str(&dir.path().join("enum.json"))]);
    assert_eq!(code(&table), 0);
    assert_eq!(String::from_utf8_lossy(&table.stdout).lines().count(), 3);
}

#[test]
fn gm_report_carries_the_guarantee() {
    let dir = TempDir::new().unwrap();
    let inst = generate(&dir, "i.json", &["--n", "8", "--K", "5", "--seed", "2"]);
    let rep = dir.path().join("gm.json");
    let out = socpd(&["solve", "--instance", path_str(&inst), "--method", "gm", "--out", path_str(&rep)]);
    assert_eq!(code(&out), 0);
    let r = json(&rep);
    for field in ["gm_value", "am_value_of_design", "gamma", "L", "U", "design"] {
        assert!(!r[field].is_null(), "missing {field}");
    }
    assert!(r["am_value_of_design"].as_f64().unwrap() >= r["gm_value"].as_f64().unwrap());
}

#[test]
fn profit_instances_solve_to_the_profit_optimum() {
    let dir = TempDir::new().unwrap();
    let inst = generate(&dir, "p.json", &["--n", "9", "--K", "5", "--seed", "5", "--profit"]);
    let oa = socpd(&["solve", "--instance", path_str(&inst)]);
    let en = socpd(&["solve", "--instance", path_str(&inst), "--method", "enum"]);
    assert_eq!(code(&oa), 0);
    assert_eq!(code(&en), 0);
    let a: Value = serde_json::from_slice(&oa.stdout).unwrap();
    let b: Value = serde_json::from_slice(&en.stdout).unwrap();
    assert_eq!(a["objective"], "expected_profit");
    assert!((a["objective_value"].as_f64().unwrap() - b["objective_value"].as_f64().unwrap()).abs() <= 1e-6);
}

#[test]
fn verify_scores_designs_and_flags_violations() {
    let dir = TempDir::new().unwrap();
    let inst = dir.path().join("c.json");
    fs::write(
        &inst,
        r#"{"n": 2, "K": 1, "lambda": [1.0], "beta0": [0.0], "beta": [[1.0, 1.0]],
            "constraints": [{"coeffs": [{"index": 0, "value": 1.0}, {"index": 1, "value": 1.0}], "rhs": 1.0}],
            "objective": {"kind": "share_of_choice"}}"#,
    )
    .unwrap();
    let good = dir.path().join("good.json");
    fs::write(&good, "[1, 0]").unwrap();
    let out = socpd(&["verify", "--instance", path_str(&inst), "--design", path_str(&good)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((r["share_of_choice"].as_f64().unwrap() - 0.731058578630005).abs() < 1e-12);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"design": [1, 1]}"#).unwrap();
    let out = socpd(&["verify", "--instance", path_str(&inst), "--design", path_str(&bad)]);
    assert_eq!(code(&out), 1);
}

#[test]
fn export_writes_the_expected_cones() {
    let dir = TempDir::new().unwrap();
    let inst = generate(&dir, "i.json", &["--n", "4", "--K", "2", "--seed", "1"]);
    for (formulation, cones) in [("micp", 8), ("gm", 4)] {
        let cbf = dir.path().join(format!("{formulation}.cbf"));
        let out = socpd(&["export", "--instance", path_str(&inst), "--formulation", formulation, "--out", path_str(&cbf)]);
        assert_eq!(code(&out), 0);
        let text = fs::read_to_string(&cbf).unwrap();
        assert_eq!(text.matches("EXP 3").count(), cones, "{formulation}");
    }
}

#[test]
fn exit_codes_separate_failure_kinds() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(code(&socpd(&["solve", "--instance", path_str(&missing)])), 66);
    assert_eq!(code(&socpd(&["solve", "--bogus-flag"])), 64);

    let garbled = dir.path().join("garbled.json");
    fs::write(&garbled, "{ not json").unwrap();
    assert_eq!(code(&socpd(&["solve", "--instance", path_str(&garbled)])), 66);

    let invalid = dir.path().join("invalid.json");
    fs::write(
        &invalid,
        r#"{"n": 1, "K": 2, "lambda": [0.6, 0.6], "beta0": [0.0, 0.0], "beta": [[1.0], [1.0]],
            "constraints": [], "objective": {"kind": "share_of_choice"}}"#,
    )
    .unwrap();
    let cbf = dir.path().join("x.cbf");
    assert_eq!(code(&socpd(&["export", "--instance", path_str(&invalid), "--out", path_str(&cbf)])), 65);
    assert!(!cbf.exists());

    let infeasible = dir.path().join("infeasible.json");
    fs::write(
        &infeasible,
        r#"{"n": 1, "K": 1, "lambda": [1.0], "beta0": [0.0], "beta": [[1.0]],
            "constraints": [{"coeffs": [{"index": 0, "value": 1.0}], "rhs": -1.0}],
            "objective": {"kind": "share_of_choice"}}"#,
    )
    .unwrap();
    assert_eq!(code(&socpd(&["solve", "--instance", path_str(&infeasible)])), 3);

    let big = generate(&dir, "big.json", &["--n", "25", "--K", "2", "--seed", "1"]);
    assert_eq!(code(&socpd(&["solve", "--instance", path_str(&big), "--method", "enum"])), 64);

    let hard = generate(&dir, "hard.json", &["--n", "18", "--K", "15", "--seed", "2"]);
    let rep = dir.path().join("limited.json");
    let out = socpd(&["solve", "--instance", path_str(&hard), "--node-limit", "2", "--out", path_str(&rep)]);
    assert_eq!(code(&out), 2);
    assert_eq!(json(&rep)["termination"], "node_limit");
}

#[test]
fn gamma_curve_is_csv() {
    let out = socpd(&["gamma-curve", "--K", "2,5", "--max-ratio", "10"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 21);
    assert!(text.lines().nth(1).unwrap().starts_with("2,1,1.0"));
}

#[test]
fn max3sat_reduction_reports_the_assignment() {
    let dir = TempDir::new().unwrap();
    let cnf = dir.path().join("f.cnf");
    fs::write(&cnf, "p cnf 3 2\n1 2 3 0\n-1 -2 3 0\n").unwrap();
    let inst = dir.path().join("sat.json");
    assert_eq!(code(&socpd(&["generate", "max3sat", "--cnf", path_str(&cnf), "--out", path_str(&inst)])), 0);
    let rep = dir.path().join("r.json");
    assert_eq!(code(&socpd(&["solve", "--instance", path_str(&inst), "--out", path_str(&rep)])), 0);
    let design = dir.path().join("d.json");
    fs::write(&design, serde_json::to_string(&json(&rep)["design"]).unwrap()).unwrap();
    let out = socpd(&["verify", "--instance", path_str(&inst), "--design", path_str(&design)]);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["satisfied_clauses"], 2);
}
