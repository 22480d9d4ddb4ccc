//! Exit codes, report shape and config validation of the binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_thermal-kms"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str], cfg: &Path) -> Output {
    bin().args(args).arg("--config").arg(cfg).output().unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

const TWO_ATOM_HEAD: &str = r#"
schema = "thermal-kms/config/v1"
beta = 2.0

[[test_functions]]
kind = "nodes"
name = "zero_mode"
dim = 1
real = true
nodes = [{ k = [0.0], w = 1.0, re = 1.0, im = 0.0 }]

[[points]]
test_function = "zero_mode"
tau = 0.0

[[points]]
test_function = "zero_mode"
tau = 0.3
"#;

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, format!("{TWO_ATOM_HEAD}\n{body}")).unwrap();
    path
}

#[test]
fn shipped_configs_pass_cheap_commands() {
    for name in ["free.toml", "generalized_free.toml", "two_atom.toml"] {
        for cmd in ["kernel-eval", "green-eval", "cumulant", "audit-positivity", "audit-invariance"] {
            let out = run(&[cmd], &config(name));
            assert_eq!(out.status.code(), Some(0), "{name} {cmd}: {}", String::from_utf8_lossy(&out.stderr));
            let r = report(&out);
            assert_eq!(r["schema"], "thermal-kms/report/v1");
            assert_eq!(r["command"], cmd);
            assert_eq!(r["passed"], true);
            assert!(r["timestamp"].is_u64());
        }
    }
}

#[test]
fn two_atom_cumulant_is_reported() {
    let out = run(&["cumulant"], &config("two_atom.toml"));
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let res = &r["results"]["cumulant"];
    assert_eq!(res["verdict"], "non_quasi_free");
    let k4 = res["fourth_cumulant"].as_f64().unwrap();
    let coth = |x: f64| 1.0 / x.tanh();
    assert!((k4 - 0.75 * (coth(1.0) - coth(2.0)).powi(2)).abs() < 1e-10);
}

#[test]
fn overrides_are_recorded() {
    let out = run(&["sample-validate", "--seed", "5", "--samples", "20000", "--tolerance", "1e-9"], &config("two_atom.toml"));
    assert!(matches!(out.status.code(), Some(0) | Some(2)));
    let r = report(&out);
    let ov = &r["provenance"]["overrides"];
    assert_eq!(ov["seed"], 5);
    assert_eq!(ov["samples"], 20000);
    assert_eq!(r["provenance"]["config"]["run"]["seed"], 5);
    assert_eq!(r["tolerances"]["psd"], 1e-9);
}

#[test]
fn failed_check_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[model]
type = "mixture"
dispersion = "nonrelativistic"
floor = 0.5
atoms = [{ mu = 1.0, weight = 0.5 }, { mu = 2.0, weight = 0.5 }]

[run]
seed = 1
samples = 2000
tolerances = { sigma = 1e-6 }
"#,
    );
    let out = run(&["sample-validate"], &cfg);
    assert_eq!(out.status.code(), Some(2));
    let r = report(&out);
    assert_eq!(r["passed"], false);
    assert!(r["checks"].as_array().unwrap().iter().any(|c| c["passed"] == false));
}

#[test]
fn atom_below_floor_is_rejected_with_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[model]
type = "mixture"
dispersion = "nonrelativistic"
floor = 0.5
atoms = [{ mu = 1.0, weight = 0.5 }, { mu = 0.2, weight = 0.5 }]
"#,
    );
    let out = run(&["kernel-eval"], &cfg);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("model.atoms[1].mu"), "{err}");
}

#[test]
fn unknown_fields_and_missing_config_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[model]
type = "free"
dispersion = "nonrelativistic"
mu = 1.0
colour = "blue"
"#,
    );
    let out = run(&["kernel-eval"], &cfg);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));

    let out = bin().arg("kernel-eval").output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["kernel-eval", "--tolerance=-1"], &config("free.toml"));
    assert_eq!(out.status.code(), Some(1));

    // usage errors must not look like a failed check
    let out = bin().args(["no-such-command"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn report_goes_to_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let out = bin()
        .args(["green-eval", "--config"])
        .arg(config("free.toml"))
        .arg("--out")
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(r["command"], "green-eval");
}
