use std::fs;
use std::path::Path;
use std::process::Command;

fn melvin(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_melvin")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> String {
    let p = dir.join("run.json");
    fs::write(&p, json).unwrap();
    p.to_string_lossy().into_owned()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn assert_same_output_for_worker_counts(json: &str) {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), json);
    let mut runs = Vec::new();
    for w in ["1", "4"] {
        let out = tmp.path().join(format!("w{w}"));
        let res = melvin(&["--config", &cfg, "--workers", w, "--out", out.to_str().unwrap()]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        runs.push(read_dir_sorted(&out));
    }
    assert!(!runs[0].is_empty());
    assert_eq!(runs[0].len(), runs[1].len());
    for (a, b) in runs[0].iter().zip(&runs[1]) {
        assert_eq!(a.0, b.0);
        assert!(a.1 == b.1, "{} differs between worker counts", a.0);
    }
}

#[test]
fn equilibria_output_is_independent_of_workers() {
    assert_same_output_for_worker_counts(r#"{"command": "equilibria", "b": 0.15, "equilibria": {"b_values": [0.0, 0.15, 0.3], "n_samples": 100}}"#);
}

#[test]
fn hill_output_is_independent_of_workers() {
    assert_same_output_for_worker_counts(
        r#"{"command": "hill", "b": 0.15, "hill": {"points": [[2.8, 1.3], [4.3, 1.7]], "oracle": {"n_r": 200, "n_theta": 120, "r_box": 100.0},
            "mask": {"y_range": [0.0, 8.0], "z_range": [-8.0, 8.0], "ny": 40, "nz": 80}}}"#,
    );
}

#[test]
fn poincare_output_is_independent_of_workers() {
    assert_same_output_for_worker_counts(
        r#"{"command": "poincare", "b": 0.15, "l": 2.8, "poincare": {"energies": [1.19], "auto_seeds": 4, "iterations": 20, "fixed_points": true}}"#,
    );
}

#[test]
fn melnikov_table_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("m");
    let res = melvin(&["melnikov", "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    let csv = fs::read_to_string(out.join("melnikov.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "r_u,L,C_theta,J1_closed,J1_quadrature,rel_err");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 25);
    assert!(rows.iter().all(|r| r[5] < 1e-6));
    // at least 16 significant digits are written
    assert!(csv.lines().nth(1).unwrap().split(',').all(|x| x.split('e').next().unwrap().len() >= 17));
}

#[test]
fn flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"command": "hill", "b": 0.3, "hill": {"points": [[2.8, 1.3]], "oracle": {"n_r": 100, "n_theta": 60, "r_box": 50.0}}}"#);
    let out = tmp.path().join("o");
    let res = melvin(&["--config", &cfg, "--b", "0.15", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(out.join("hill.json")).unwrap()).unwrap();
    assert_eq!(meta["b"], 0.15);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    let o = out.to_str().unwrap();
    // unknown config field
    let bad = write_config(tmp.path(), r#"{"command": "hill", "bee": 0.1}"#);
    assert_eq!(melvin(&["--config", &bad]).status.code(), Some(2));
    // missing config file
    assert_eq!(melvin(&["--config", "/nonexistent/run.json"]).status.code(), Some(2));
    // no command at all
    assert_eq!(melvin(&["--out", o]).status.code(), Some(2));
    // negative field strength
    assert_eq!(melvin(&["fieldlines", "--b", "-0.1", "--out", o]).status.code(), Some(2));
    // trajectory without integrals
    assert_eq!(melvin(&["trajectory", "--b", "0.1", "--out", o]).status.code(), Some(2));
    assert_eq!(melvin(&["melnikov", "--workers", "0", "--out", o]).status.code(), Some(2));
    assert_eq!(melvin(&["melnikov", "--out", o]).status.code(), Some(0));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "json") {
            melvin::cli::RunConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 11);
}
