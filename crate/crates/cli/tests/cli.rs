use std::path::Path;
use std::process::{Command, Output};

fn ksbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ksbm")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn is_sci(cell: &str) -> bool {
    let Some((m, e)) = cell.split_once('e') else { return false };
    let digits = m.trim_start_matches('-');
    let exp_ok = (e.starts_with('+') || e.starts_with('-')) && e.len() >= 3 && e[1..].chars().all(|c| c.is_ascii_digit());
    let mant_ok = digits.len() == 14 && digits.as_bytes()[1] == b'.' && digits.replace('.', "").chars().all(|c| c.is_ascii_digit());
    exp_ok && mant_ok
}

#[test]
fn phi_eval() {
    let o = ksbm(&["phi", "eval", "--family", "stable", "--delta", "0.75", "--lambda", "4"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "phi(4) = 2.828427124746e+00");
    let o = ksbm(&["phi", "eval", "--family", "mixture", "--terms", "1:0.6,1:0.9", "--lambda", "1"]);
    assert_eq!(stdout(&o).trim(), "phi(1) = 2.000000000000e+00");
}

#[test]
fn phi_scaling_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scaling.json");
    let o = ksbm(&["phi", "scaling", "--family", "mixture", "--terms", "1:0.6,1:0.9", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let (d1, d2) = (v["delta1_hat"].as_f64().unwrap(), v["delta2_hat"].as_f64().unwrap());
    assert!(0.6 <= d1 && d1 <= d2 && d2 <= 0.9);
}

#[test]
fn quad_selftest_passes() {
    let o = ksbm(&["quad", "selftest"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert_eq!(s.lines().filter(|l| l.trim_end().ends_with("PASS")).count(), 3);
}

#[test]
fn kernel_table_csv() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("phi.json");
    std::fs::write(&spec, r#"{"family":"stable","delta":0.75}"#).unwrap();
    let out = dir.path().join("h.csv");
    let o = ksbm(&[
        "kernel", "table", "--what", "h", "--spec", spec.to_str().unwrap(), "--xmin", "0.5", "--xmax", "2", "--n", "4",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,h");
    assert_eq!(lines.len(), 5);
    for l in &lines[1..] {
        let cells: Vec<&str> = l.split(',').collect();
        assert_eq!(cells.len(), 2);
        assert!(cells.iter().all(|c| is_sci(c)), "{l}");
    }
    assert!(lines[3].starts_with("1.500000000000e+00,"));
    let o = ksbm(&["kernel", "table", "--what", "gz", "--xmin", "1", "--xmax", "1", "--n", "1", "--log"]);
    let s = stdout(&o);
    let row = s.lines().nth(1).unwrap();
    let v: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((v - 2.063159).abs() < 1e-6);
}

#[test]
fn solve_green_csv_and_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("green.csv");
    let o = ksbm(&["solve", "green", "--a", "1", "--b", "2", "--n", "16", "--process", "z", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    let n = rows.len();
    assert!(n == 15 || n == 16, "{n} rows");
    let body = if n == 16 { &rows[1..] } else { &rows[..] };
    assert!(body.iter().all(|r| r.len() == 15 && r.iter().all(|c| is_sci(c))));
    let rec: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for key in ["kind", "grid", "value", "bracket", "refinement_drift"] {
        assert!(rec.get(key).is_some(), "{key}");
    }
}

#[test]
fn solve_records() {
    let o = ksbm(&["solve", "exit", "--R", "1", "--x", "0.5", "--aseq", "0.04,0.02,0.01", "--n", "256"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rec: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let v = rec["value"].as_f64().unwrap();
    assert!(v > 0.0884 - 0.02 && v < std::f64::consts::FRAC_1_SQRT_2 + 0.02);
    let o = ksbm(&["solve", "harnack", "--r", "1", "--afrac", "0.5", "--n", "64"]);
    assert!(o.status.success());
    let rec: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(rec["value"].as_f64().unwrap() >= 1.0);
}

#[test]
fn mc_exit_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exits.csv");
    let o = ksbm(&["mc", "exit", "--dt", "1e-3", "--paths", "50", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "exit_time,exit_position,side,censored");
    assert_eq!(lines.len(), 51);
    for l in &lines[1..] {
        let c: Vec<&str> = l.split(',').collect();
        assert!(is_sci(c[0]) && is_sci(c[1]));
        assert!(["below", "above", "none"].contains(&c[2]));
        assert!(c[3] == "0" || c[3] == "1");
    }
    let again = dir.path().join("again.csv");
    ksbm(&["mc", "exit", "--dt", "1e-3", "--paths", "50", "--seed", "3", "--out", again.to_str().unwrap()]);
    assert_eq!(text, std::fs::read_to_string(&again).unwrap());
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.json");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"specs":[{"family":"stable","delta":0.75}],"n":32}"#);
    let out = dir.path().join("report.json");
    let o = ksbm(&["verify", "one", "--name", "h-homogeneity", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().any(|l| l.starts_with("PASS") && l.contains("h-homogeneity")));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["checks"].as_array().unwrap().len(), 1);

    let o = ksbm(&["verify", "one", "--name", "no-such-check"]);
    assert_eq!(o.status.code(), Some(2));
    let empty = write_config(dir.path(), r#"{"specs":[]}"#);
    assert_eq!(ksbm(&["verify", "all", "--config", &empty]).status.code(), Some(2));
    assert_eq!(ksbm(&["verify", "all", "--config", "/nonexistent/run.json"]).status.code(), Some(2));
}

#[test]
fn domain_errors_exit_nonzero() {
    let o = ksbm(&["phi", "eval", "--lambda=-1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
    let o = ksbm(&["phi", "eval", "--family", "stable", "--delta", "1.5", "--lambda", "1"]);
    assert_ne!(o.status.code(), Some(0));
}
