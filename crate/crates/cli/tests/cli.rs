use std::path::Path;
use std::process::{Command, Output};

fn inicon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inicon")).args(args).env("CR_THREADS", "2").output().expect("spawn inicon")
}

const TINY: &str = r#"{
  "scenario": "test1",
  "grid": { "nx": 11, "outer_half_width": 2.0 },
  "basis": { "modes": 4, "quadrature_nodes": 129 },
  "iterations": 2
}"#;

fn write_tiny(dir: &Path) -> String {
    let path = dir.join("tiny.json");
    std::fs::write(&path, TINY).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn lists_builtin_scenarios() {
    let out = inicon(&["scenarios"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["test1", "test2", "test3", "test4", "zero-smoke", "linear-smooth"] {
        assert!(text.lines().any(|l| l == name), "{name} missing from {text}");
    }
}

#[test]
fn run_writes_the_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let out_dir = dir.path().join("out");
    let out = inicon(&["run", &cfg, "--seed", "3", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["p_true.csv", "metrics.json", "recursive_error.csv", "config_echo.json", "p_iter_0.csv", "p_iter_2.csv"] {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["parameters"]["seed"], 3);
    assert_eq!(metrics["recursive_errors"].as_array().unwrap().len(), 2);
    let p = std::fs::read_to_string(out_dir.join("p_iter_2.csv")).unwrap();
    assert_eq!(p.lines().next(), Some("x,y,p"));
    assert_eq!(p.lines().count(), 1 + 11 * 11);
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(inicon(&["run", &cfg, "--noise", "0.1", "--out", a.to_str().unwrap()]).status.success());
    let echo = a.join("config_echo.json");
    assert!(inicon(&["run", echo.to_str().unwrap(), "--out", b.to_str().unwrap()]).status.success());
    for f in ["metrics.json", "p_iter_2.csv", "recursive_error.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(inicon(&["run", "no-such-scenario"]).status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"grid": {"nx": 1}}"#).unwrap();
    let out = inicon(&["run", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.nx"));
    std::fs::write(&bad, r#"{"bogus": 1}"#).unwrap();
    assert_eq!(inicon(&["run", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(inicon(&["run", "test1", "--preset", "huge"]).status.code(), Some(2));
    assert_eq!(inicon(&["run", "test1", "--n1", "235", "--nx", "80"]).status.code(), Some(2));
}

#[test]
fn blow_up_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("blow.json");
    std::fs::write(
        &cfg,
        r#"{
  "scenario": {"name": "blow", "coefficient": {"kind": "constant", "value": 1.0}, "q": "exp(s)",
               "inclusions": [{"label": "d", "value": 30.0, "shape": {"kind": "disk", "cx": 0.0, "cy": 0.0, "r": 0.5}}]},
  "grid": { "nx": 11, "outer_half_width": 2.0 },
  "basis": { "modes": 4, "quadrature_nodes": 129 }
}"#,
    )
    .unwrap();
    let out = inicon(&["run", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn carleman_check_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = inicon(&["carleman-check", "--family", "all", "--count", "4", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("carleman_report_polynomial.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("lambda,lhs,term_hess,term_grad,term_val,c_hat"));
    assert_eq!(csv.lines().count(), 5);
    assert!(dir.path().join("carleman_report_cosine_k3.csv").is_file());
    assert_eq!(inicon(&["carleman-check", "--points", "11", "--out", dir.path().to_str().unwrap()]).status.code(), Some(2));
}
