use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const ZERO_HALF: &str = r#"{"dim": 1, "bound": 1, "support": "half-line", "kind": "zero", "parameters": {}}"#;
const ZERO_WHOLE: &str = r#"{"dim": 1, "bound": 1, "support": "whole-line", "kind": "zero", "parameters": {}}"#;

fn mweyl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mweyl"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup() -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("zero.json"), ZERO_HALF).unwrap();
    fs::write(dir.path().join("zero-line.json"), ZERO_WHOLE).unwrap();
    dir
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn files_with(dir: &Path, prefix: &str, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let name = p.file_name().unwrap().to_string_lossy();
            name.starts_with(prefix) && name.ends_with(ext)
        })
        .collect();
    v.sort();
    v
}

#[test]
fn selftest_passes() {
    let dir = setup();
    let out = mweyl(dir.path(), &["selftest"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("free m+(2i)"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn mfunction_free_case() {
    let dir = setup();
    let out = mweyl(dir.path(), &["mfunction", "--spec", "zero.json", "--z", "0+2i"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    let rec = &v["records"][0];
    assert!((rec["value_im"][0][0].as_f64().unwrap() - (2f64.sqrt() - 1.0)).abs() < 1e-10);
    assert!(rec["value_re"][0][0].as_f64().unwrap().abs() < 1e-12);
    let csv = files_with(dir.path(), "mfunction-", ".csv");
    assert_eq!(csv.len(), 1);
    let text = fs::read_to_string(&csv[0]).unwrap();
    assert!(text.starts_with("# mweyl "));
    assert!(text.contains("m00_re,m00_im"));
}

#[test]
fn bp_defect_on_full_line_is_zero() {
    let dir = setup();
    let out = mweyl(
        dir.path(),
        &["bp-defect", "--spec", "zero.json", "--a=-1:1", "--s=-inf:inf", "--n-list", "4,16", "--points-per-unit", "128"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert!(v["defect"].as_array().unwrap().iter().all(|d| d.as_f64() == Some(0.0)));
}

#[test]
fn reflectionless_free_case() {
    let dir = setup();
    let out = mweyl(
        dir.path(),
        &["reflectionless", "--spec", "zero-line.json", "--a=-1.9:1.9", "--eps", "1e-4,1e-5", "--grid-step", "0.01"],
    );
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    let max: Vec<f64> = v["max"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!(max[0] <= 5e-3 && max[1] <= 5e-4);
    assert!(v["decay_order"].as_f64().unwrap() >= 0.9);
}

#[test]
fn omega_of_periodic_spec() {
    let dir = setup();
    let spec = r#"{"dim": 1, "bound": 2, "support": "half-line", "kind": "periodic",
                   "parameters": {"matrices": [[1.0], [-1.0]]}}"#;
    fs::write(dir.path().join("p2.json"), spec).unwrap();
    let out = mweyl(dir.path(), &["omega", "--spec", "p2.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["representatives"], 2);
    assert_eq!(files_with(dir.path(), "omega-", ".csv").len(), 1);
}

#[test]
fn siegel_pair_and_battery() {
    let dir = setup();
    let out = mweyl(dir.path(), &["siegel-dist", "--z1", "0+1i", "--z2", "0+2i"]);
    assert_eq!(out.status.code(), Some(0));
    assert!((stdout_json(&out)["distance"].as_f64().unwrap() - 2f64.ln()).abs() < 1e-12);

    let m = r#"{"re": [[0, 0], [0, 0]], "im": [[1, 0], [0, 1]]}"#;
    let out = mweyl(dir.path(), &["siegel-dist", "--z1", m, "--z2", m]);
    assert_eq!(stdout_json(&out)["distance"].as_f64(), Some(0.0));

    let out = mweyl(dir.path(), &["siegel-dist", "--trials", "30", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["pass"], true);
}

#[test]
fn config_file_and_override() {
    let dir = setup();
    let cfg = r#"{"spec": "zero.json", "z": ["0+2i", "1+1i"], "side": "minus"}"#;
    fs::write(dir.path().join("run.json"), cfg).unwrap();
    let out = mweyl(dir.path(), &["--config", "run.json", "mfunction"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["records"].as_array().unwrap().len(), 2);

    let out = mweyl(dir.path(), &["--config", "run.json", "mfunction", "--z", "0+3i"]);
    let v = stdout_json(&out);
    assert_eq!(v["records"].as_array().unwrap().len(), 1);
    assert_eq!(v["records"][0]["side"], "-");
}

#[test]
fn exit_codes() {
    let dir = setup();
    assert_eq!(mweyl(dir.path(), &["mfunction", "--z", "1+1i"]).status.code(), Some(1));
    assert_eq!(mweyl(dir.path(), &["mfunction", "--spec", "zero.json", "--z", "1"]).status.code(), Some(1));
    assert_eq!(mweyl(dir.path(), &["mfunction", "--spec", "missing.json", "--z", "i"]).status.code(), Some(1));
    fs::write(dir.path().join("bad.json"), r#"{"epsilon": 1}"#).unwrap();
    assert_eq!(mweyl(dir.path(), &["--config", "bad.json", "selftest"]).status.code(), Some(1));
    let out = mweyl(dir.path(), &["bp-defect", "--spec", "zero.json", "--a=-1:1", "--c", "2"]);
    assert_eq!(out.status.code(), Some(1));

    let out = mweyl(dir.path(), &["mfunction", "--spec", "zero.json", "--z", "0.1+1e-9i", "--tol", "1e-30"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no convergence"));
}

#[test]
fn outputs_are_deterministic() {
    let dir = setup();
    let args = ["--jobs", "2", "reflectionless", "--spec", "zero-line.json", "--a=-1:1", "--grid-step", "0.05"];
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let mut v = vec!["--out", out.to_str().unwrap()];
        v.extend(args);
        assert_eq!(mweyl(dir.path(), &v).status.code(), Some(0));
    }
    let fa = files_with(&a, "reflectionless-", ".csv");
    let fb = files_with(&b, "reflectionless-", ".csv");
    assert_eq!(fa.len(), 1);
    assert_eq!(fa[0].file_name(), fb[0].file_name());
    assert_eq!(fs::read(&fa[0]).unwrap(), fs::read(&fb[0]).unwrap());
}
