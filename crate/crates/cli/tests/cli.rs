use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn respectra(args: &[&str], config: Option<&str>, dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_respectra"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("config.json");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.env("RESPECTRA_THREADS", "2").output().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

#[test]
fn validate_runs_the_full_suite() {
    let d = tempfile::tempdir().unwrap();
    let out = respectra(&["validate"], None, d.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let table = String::from_utf8(out.stdout).unwrap();
    let rows = table.lines().skip(1).filter(|l| l.contains("PASS")).count();
    assert!(rows >= 15, "{table}");
    let json: serde_json::Value = serde_json::from_str(&read(d.path(), "validation.json")).unwrap();
    assert_eq!(json["passed"], true);
    assert_eq!(json["spec_version"], respectra_cli::SPEC_VERSION);
}

#[test]
fn failing_checks_exit_with_the_validation_code() {
    // Too few oracle levels to reproduce the dynamics.
    let d = tempfile::tempdir().unwrap();
    let out = respectra(&[], Some(r#"{"command":"validate","oracle_levels":20}"#), d.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL"));
}

#[test]
fn uncoupled_spectrum_sits_on_the_level() {
    let d = tempfile::tempdir().unwrap();
    let cfg = r#"{"command":"spectrum","model":{"family":"sqrt_exp","params":[1.0],"omega":1.5,"epsilon":0.0}}"#;
    let out = respectra(&[], Some(cfg), d.path());
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_str(&read(d.path(), "spectrum.json")).unwrap();
    assert_eq!(json["pole"]["lambda_pole"], serde_json::json!([1.5, 0.0]));
    assert_eq!(json["lambda_perturbative"], serde_json::json!([1.5, 0.0]));
    assert_eq!(json["gap"], 0.0);
    assert_eq!(json["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn exponential_column_reaches_one_over_e_at_one_lifetime() {
    let d = tempfile::tempdir().unwrap();
    let out = respectra(&[], Some(r#"{"command":"evolve","times":{"span":1.0,"points":2},"oracle_levels":400}"#), d.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = read(d.path(), "decay.csv");
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash "));
    assert_eq!(lines.next().unwrap(), "t,survival_spectral,survival_oracle,survival_exponential");
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert!((last[3] - (-1.0f64).exp()).abs() < 1e-15);
}

#[test]
fn identical_configs_give_identical_bytes() {
    let cfg = r#"{"command":"liouville","liouville_nodes":30,"times":{"span":3.0,"points":7}}"#;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(respectra(&[], Some(cfg), a.path()).status.code(), Some(0));
    assert_eq!(respectra(&[], Some(cfg), b.path()).status.code(), Some(0));
    for name in ["liouville_eigenvalues.csv", "liouville_trajectory.csv"] {
        assert_eq!(read(a.path(), name), read(b.path(), name));
    }
    let cloud = read(a.path(), "liouville_eigenvalues.csv");
    assert_eq!(cloud.lines().count(), 2 + 2 + 2 * 30 + 30 * 30);
}

#[test]
fn barrier_writes_resonance_and_sweep() {
    let d = tempfile::tempdir().unwrap();
    let cfg = r#"{"command":"barrier","barrier":{"a":1,"b":5,"v0":1,"v1":0.8,"mu":1,"hbar":1},"sweep":[4.0,5.0]}"#;
    assert_eq!(respectra(&[], Some(cfg), d.path()).status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_str(&read(d.path(), "barrier.json")).unwrap();
    let (w, m) = (json["resonance"]["width"].as_f64().unwrap(), json["mapped_width"].as_f64().unwrap());
    assert!((m / w - 1.0).abs() < 1e-8);
    assert_eq!(read(d.path(), "barrier_sweep.csv").lines().count(), 4);
}

#[test]
fn grid_dump_lists_every_node() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(respectra(&["spectrum", "--nodes", "40", "--dump-grid"], None, d.path()).status.code(), Some(0));
    assert_eq!(read(d.path(), "grid.csv").lines().count(), 2 + 40);
}

#[test]
fn bad_inputs_exit_with_the_config_code() {
    let d = tempfile::tempdir().unwrap();
    let cases: [(&[&str], Option<&str>); 5] = [
        (&[], None),
        (&[], Some(r#"{"command":"spectrum","bogus":1}"#)),
        (&["evolve"], Some(r#"{"command":"spectrum"}"#)),
        (&[], Some(r#"{"command":"barrier","barrier":{"a":1,"b":5,"v0":1,"v1":0.3,"mu":1,"hbar":1}}"#)),
        (&[], Some(r#"{"command":"spectrum","model":{"family":"gauss","omega":1,"epsilon":0.1}}"#)),
    ];
    for (args, cfg) in cases {
        let out = respectra(args, cfg, d.path());
        assert_eq!(out.status.code(), Some(2), "{args:?} {cfg:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn numerical_failures_exit_with_code_one() {
    // A coupling this strong pushes the pole below a shallow contour.
    let d = tempfile::tempdir().unwrap();
    let cfg = r#"{"command":"spectrum","model":{"family":"sqrt_exp","params":[1.0],"omega":1.0,"epsilon":0.9,
        "contour":{"depth":0.05,"cutoff":20.0,"n_nodes":200}}}"#;
    let out = respectra(&[], Some(cfg), d.path());
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
}
