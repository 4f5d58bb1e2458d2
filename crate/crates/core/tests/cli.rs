use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use varfrac::grid::Grid;
use varfrac::report::read_profile;

fn default_json() -> Value {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn varfrac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varfrac")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small(cfg: &mut Value) {
    cfg["grid"] = 64.into();
}

#[test]
fn shipped_config_checks_clean() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.json");
    let o = varfrac(&["check", path]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["entries"].as_array().unwrap().iter().all(|e| e["pass"] == true));
}

#[test]
fn negative_alpha_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = default_json();
    cfg["alpha"] = (-1.0).into();
    let path = write_config(dir.path(), "neg.json", &cfg);
    let o = varfrac(&["check", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("alpha must be > 0"), "{}", stderr(&o));
}

#[test]
fn misspelled_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = default_json();
    let alpha = cfg.as_object_mut().unwrap().remove("alpha").unwrap();
    cfg["alhpa"] = alpha;
    let path = write_config(dir.path(), "typo.json", &cfg);
    let o = varfrac(&["check", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("alhpa"), "{}", stderr(&o));
}

#[test]
fn inadmissible_alpha_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = default_json();
    small(&mut cfg);
    cfg["alpha"] = 1e6.into();
    let path = write_config(dir.path(), "big.json", &cfg);
    let out = dir.path().join("out");
    let o = varfrac(&["solve", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("alpha"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(varfrac(&["solve"]).status.code(), Some(1));
    assert_eq!(varfrac(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn solve_is_byte_identical_and_profiles_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = default_json();
    small(&mut cfg);
    let path = write_config(dir.path(), "small.json", &cfg);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = varfrac(&["solve", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        (o.stdout, out)
    };
    let (first, out) = run("a");
    let (second, _) = run("b");
    assert_eq!(first, second);

    let report: Value = serde_json::from_slice(&first).unwrap();
    let grid = Grid::new(0.0, 1.0, 64).unwrap();
    for (key, file) in [("saddle", "saddle.csv"), ("minimizer", "minimizer.csv")] {
        let u = read_profile(&out.join(file), grid).unwrap();
        let json: Vec<f64> = report[key]["solution"]["values"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        assert_eq!(u.values.len(), json.len());
        for (a, b) in u.values.iter().zip(&json) {
            assert_eq!(a.to_bits(), b.to_bits(), "{key}");
        }
    }
}

#[test]
fn shipped_config_round_trips() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.json");
    let cfg = varfrac::config::ProblemConfig::load(Path::new(path)).unwrap();
    let text = serde_json::to_string(&cfg).unwrap();
    let back: varfrac::config::ProblemConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string(&back).unwrap(), text);
}
