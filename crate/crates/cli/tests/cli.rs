use std::path::Path;
use std::process::{Command, Output};

use robust_beliefs::limit_game::solve_limit_equilibrium;
use robust_beliefs::quadrature::QuadratureSpec;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_robust-beliefs"));
    c.env_remove("ROBUST_BELIEFS_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn error_record(out: &Output) -> Value {
    let line = String::from_utf8(out.stderr.clone()).unwrap();
    serde_json::from_str(line.lines().last().unwrap()).expect("stderr ends with a JSON error record")
}

#[test]
fn unknown_flag_is_a_config_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("out.json");
    let out = run(&["solve-finite", "--n", "1", "--bogus", "--out", path_str(&target)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"]["kind"], "config_error");
    assert!(!target.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn out_of_range_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("out.json");
    for args in [
        vec!["solve-finite", "--n", "0"],
        vec!["solve-limit", "--tol", "1e-3"],
        vec!["limit-profile", "--step", "0.05"],
        vec!["asymptotics", "--pi-true", "0.5"],
        vec!["convergence", "--n-list", "5,4"],
        vec!["general-rate", "--signals", "1"],
        vec!["solve-finite", "--n", "3", "--loss", "log", "--method", "structural"],
        vec!["solve-limit", "--loss", "log"],
    ] {
        let mut a = args.clone();
        a.extend(["--out", path_str(&target)]);
        let out = run(&a);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!target.exists(), "{args:?}");
    }
}

#[test]
fn solve_limit_report() {
    let out = run(&["solve-limit", "--tol", "1e-9"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["schema_version"], "robust-beliefs.report/1");
    assert_eq!(v["config_echo"]["command"]["name"], "solve-limit");
    let c = v["results"]["c_star"].as_f64().unwrap();
    let w = v["results"]["w_star"].as_f64().unwrap();
    assert!((c - 0.799).abs() < 5e-3 && (w - 0.476).abs() < 5e-3);
    assert!(v["provenance"]["wall_time_ms"].is_null());
    assert_eq!(v["provenance"]["quadrature"]["nodes"], 400);
    // full-precision floats survive the round trip
    let s = solve_limit_equilibrium(&QuadratureSpec::default(), 1e-9).unwrap();
    assert_eq!(c, s.params.c_star);
    assert_eq!(v["results"]["value"].as_f64().unwrap(), s.value);
}

#[test]
fn timing_is_opt_in() {
    let out = run(&["solve-finite", "--n", "2", "--timing"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["provenance"]["wall_time_ms"].is_u64());
}

#[test]
fn reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for args in [vec!["trend", "--n-min", "3", "--n-max", "8"], vec!["general-rate", "--signals", "5", "--n-list", "4,8", "--draws", "5000", "--seed", "7"]] {
        let mut texts = Vec::new();
        let p = dir.path().join("r.json");
        for _ in 0..2 {
            let mut a = args.clone();
            a.extend(["--quiet", "--out", path_str(&p)]);
            let out = run(&a);
            assert!(out.status.success(), "{args:?}");
            assert!(out.stderr.is_empty());
            texts.push(std::fs::read(&p).unwrap());
        }
        assert_eq!(texts[0], texts[1], "{args:?}");
    }
    let a = run(&["general-rate", "--signals", "5", "--n-list", "4,8", "--draws", "5000", "--seed", "7", "--format", "csv"]);
    let b = run(&["general-rate", "--signals", "5", "--n-list", "4,8", "--draws", "5000", "--seed", "8", "--format", "csv"]);
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn trend_csv_is_ragged_with_blank_tails() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("trend.csv");
    assert!(run(&["trend", "--n-min", "3", "--n-max", "6", "--out", path_str(&p)]).status.success());
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(!text.contains('\r') && text.ends_with('\n'));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,pi_star,w,value,a_0,a_1,a_2,a_3,a_4,a_5,a_6");
    assert_eq!(lines.len(), 5);
    for l in &lines {
        assert_eq!(l.split(',').count(), 11);
    }
    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(first[0], "3");
    assert!(first[8..].iter().all(|c| c.is_empty()));
    assert!(first[..8].iter().all(|c| !c.is_empty()));
}

#[test]
fn csv_headers() {
    for (args, header) in [
        (vec!["limit-profile"], "b,regret"),
        (vec!["asymptotics", "--n-list", "100,200"], "n,L_n,log_L_n,L_oracle,R_mis,p_under,p_over"),
        (vec!["general-rate", "--n-list", "25,50"], "alpha,n,regret,stderr"),
        (vec!["convergence", "--n-list", "3..5"], "n,pi_star,local_precision,w,value,sup_distance"),
    ] {
        let mut a = args.clone();
        a.extend(["--format", "csv"]);
        let out = run(&a);
        assert!(out.status.success(), "{args:?}");
        let text = String::from_utf8(out.stdout).unwrap();
        assert_eq!(text.lines().next().unwrap(), header);
    }
}

#[test]
fn reproduce_writes_figure_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["reproduce", "--figure", "4", "--out", path_str(dir.path()), "--quiet"]);
    assert!(out.status.success());
    for (f, h) in [
        ("fig4_pi_star.csv", "n,pi_star"),
        ("fig4_value.csv", "n,value"),
        ("fig4_weight.csv", "n,w"),
        ("fig4_beliefs.csv", "n,k,k_over_n,a_k"),
    ] {
        let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert_eq!(text.lines().next().unwrap(), h);
    }
    let pis: Vec<f64> = std::fs::read_to_string(dir.path().join("fig4_pi_star.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(pis.len(), 16);
    assert!(pis.windows(2).all(|w| w[1] < w[0]));

    let out = run(&["reproduce", "--figure", "fig1", "--out", path_str(dir.path()), "--quiet"]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("fig1_envelope.csv")).unwrap();
    let row = text.lines().find(|l| l.starts_with("0.75,")).unwrap();
    let cells: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
    assert!((cells[1] - 0.0625).abs() < 1e-15 && (cells[2] - 0.0625).abs() < 1e-15);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("reproduce_report.json")).unwrap()).unwrap();
    assert_eq!(report["results"]["figures"][0]["checks"]["argmin_a1"], 0.75);
}

#[test]
fn thread_cap_from_environment() {
    let ok = bin().args(["solve-finite", "--n", "4"]).env("ROBUST_BELIEFS_THREADS", "1").output().unwrap();
    assert!(ok.status.success());
    let bad = bin().args(["solve-finite", "--n", "4"]).env("ROBUST_BELIEFS_THREADS", "many").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn both_methods_agree_at_small_n() {
    let out = run(&["solve-finite", "--n", "5", "--method", "both"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["results"]["agreement"]["max_belief_gap"].as_f64().unwrap() < 1e-6);
    assert!(v["results"]["agreement"]["value_gap"].as_f64().unwrap() < 1e-8);
}

#[test]
fn log_loss_routes_to_double_oracle() {
    let out = run(&["solve-finite", "--n", "3", "--loss", "log", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("double-oracle,3,"));
}
