use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_defaultlab"))
        .args(args)
        .env("DEFAULTLAB_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&ok(args)).unwrap()
}

#[test]
fn calibrate_then_risk() {
    let dir = tempfile::tempdir().unwrap();
    let cal = dir.path().join("vas.json");
    let cal_s = cal.to_str().unwrap();
    ok(&["calibrate", "--model", "vasicek", "--n", "200", "--m", "0.02", "--rho", "0.08", "--out", cal_s]);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&cal).unwrap()).unwrap();
    let rho_a = v["params"]["rho_a"].as_f64().unwrap();
    assert!((rho_a / 0.3439 - 1.0).abs() < 1e-3, "{rho_a}");

    let risk = json(&["risk", "--from", cal_s, "--alpha", "0.99"]);
    assert_eq!(risk[0]["var"], 40);
    assert_eq!(risk[0]["n"], 200);
}

#[test]
fn torri_branch_reports_activation_probability() {
    let v = json(&["calibrate", "--model", "torri", "--p", "0.003109"]);
    let pi_n = v["pi_n"].as_f64().unwrap();
    assert!((pi_n - 0.1679).abs() < 5e-4);
}

#[test]
fn pmf_table_is_a_distribution() {
    let csv = ok(&["pmf", "--model", "torri-mid", "--n", "50"]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("h,P,S"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 51);
    let total: f64 = rows.iter().map(|r| r[1]).sum();
    assert!((total - 1.0).abs() < 1e-10);
    assert!((rows[0][2] - 1.0).abs() < 1e-12);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["pmf", "--model", "vasicek:p=0.1,rho=1.5"]).status.code(), Some(2));
    assert_eq!(run(&["summary", "--data", "/nonexistent/panel.csv"]).status.code(), Some(3));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "year,n,defaults,class\n2000,10,11,ALL\n").unwrap();
    let out = run(&["summary", "--data", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("11"));
}

#[test]
fn outputs_are_byte_identical() {
    let sim = ["simulate", "--spec", "hier-torri:mu=-2.3,sigma=0.4,u=0.9,v=0.3", "--years", "30", "--seed", "5"];
    assert_eq!(ok(&sim), ok(&sim));
    let id = ["identify", "--T", "30", "--R", "3", "--seed", "2", "--targets", "torri-high;vasicek-ref"];
    assert_eq!(ok(&id), ok(&id));
    let mut other = sim.to_vec();
    let last = other.len() - 1;
    other[last] = "6";
    assert_ne!(ok(&sim), ok(&other));
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_then_fit_recovers_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let panel = ok(&[
        "simulate", "--spec", "vasicek:p=0.02,rho=0.2", "--years", "2001", "--pools", "150,200,250", "--seed", "11",
    ]);
    let path = write(dir.path(), "panel.csv", &panel);
    let fit = json(&["fit", "--data", &path, "--spec", "vasicek"]);
    let params = &fit["fits"][0]["params"];
    let p = params["p"].as_f64().unwrap();
    let rho_a = params["rho_a"].as_f64().unwrap();
    assert!((p / 0.02 - 1.0).abs() < 0.15, "p = {p}");
    assert!((rho_a / 0.2 - 1.0).abs() < 0.15, "rho_a = {rho_a}");
    assert_eq!(fit["years"], 2001);

    let summary = json(&["summary", "--data", &path]);
    assert_eq!(summary["years"], 2001);
    assert_eq!(summary["mean_n"], 200.0);
}

/// Every subcommand documented in the README exists, and every subcommand
/// of the binary is documented.
#[test]
fn readme_covers_every_subcommand() {
    let readme = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md")).unwrap();
    let section = readme.split("## Command-line interface").nth(1).expect("CLI section");
    let documented: Vec<&str> = section
        .lines()
        .filter_map(|l| l.strip_prefix("| `"))
        .filter_map(|l| l.split('`').next())
        .collect();
    assert!(documented.len() >= 12, "{documented:?}");
    for cmd in &documented {
        assert!(run(&[cmd, "--help"]).status.success(), "`{cmd} --help` failed");
    }

    let help = ok(&["--help"]);
    let listed: Vec<&str> = help
        .split("Commands:")
        .nth(1)
        .unwrap()
        .split("Options:")
        .next()
        .unwrap()
        .lines()
        .filter_map(|l| l.split_whitespace().next())
        .filter(|c| *c != "help")
        .collect();
    for cmd in listed {
        assert!(documented.contains(&cmd), "`{cmd}` is missing from the README");
    }
}
