use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn critmac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_critmac"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn json(args: &[&str]) -> Value {
    let mut all = args.to_vec();
    all.extend(["--format", "json"]);
    let out = critmac(&all);
    assert!(out.status.success(), "{}", stderr(&out));
    serde_json::from_str(&stdout(&out)).unwrap()
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

/// `name value` lines of a single-record table.
fn table_value(text: &str, name: &str) -> String {
    text.lines()
        .find_map(|l| {
            let mut parts = l.split_whitespace();
            (parts.next() == Some(name)).then(|| parts.next().unwrap().to_owned())
        })
        .unwrap_or_else(|| panic!("{name} missing from\n{text}"))
}

#[test]
fn analyze_reports_table_values() {
    let out = critmac(&[
        "analyze", "--n", "10", "--theta", "0.1", "--q", "0.1051", "--r", "0.4786",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(table_value(&text, "c_norm"), "0.8040");
    assert_eq!(table_value(&text, "t_c"), "2.4374");
    assert!((table_value(&text, "d_crit").parse::<f64>().unwrap() - 1.5297).abs() <= 5e-4);
    assert!(!text.contains("d_crit_enhanced"));
}

#[test]
fn analyze_enhanced_and_single_success_runs() {
    let v = json(&[
        "analyze",
        "--n",
        "10",
        "--theta",
        "0.1",
        "--q",
        "0.105",
        "--r",
        "0.479",
        "--enhanced",
    ]);
    assert!((num(&v["d_crit_enhanced"]) - 0.93).abs() < 0.005);
    assert!((num(&v["d_crit"]) - 1.53).abs() < 0.005);
    let v = json(&[
        "analyze", "--n", "10", "--theta", "1.0", "--q", "0.105", "--r", "0.479",
    ]);
    assert_eq!(num(&v["t_s"]), 1.0);
    assert_eq!(num(&v["f_norm"]), 1.0);
}

#[test]
fn optimize_regimes() {
    let v = json(&["optimize", "--n", "10", "--theta", "0.1"]);
    assert!((num(&v["q_opt"]) - 0.105).abs() < 0.005 && (num(&v["r_opt"]) - 0.479).abs() < 0.005);
    assert!((num(&v["c_norm"]) - 0.804).abs() < 0.002);
    assert_eq!(v["status"], "slack-interior");
    assert_eq!(v["eta"], "inf");

    let v = json(&["optimize", "--n", "10", "--theta", "0.1", "--eta", "1"]);
    assert_eq!(v["status"], "binding-interior");
    assert!((num(&v["d_crit"]) - 1.0).abs() < 0.005);
    assert!((num(&v["eta_star"]) - 1.531).abs() < 0.01);

    let v = json(&["optimize", "--n", "10", "--theta", "0.1", "--eta", "0.5"]);
    assert_eq!(v["status"], "binding-corner");
    assert_eq!(num(&v["r_opt"]), 0.01);
}

#[test]
fn infeasible_threshold_exits_with_four() {
    // even (0.01, 0.01) has a mean critical delay of about 0.4355
    let out = critmac(&["optimize", "--n", "10", "--theta", "0.1", "--eta", "0.3"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(table_value(&stdout(&out), "status"), "infeasible");
    assert!(stderr(&out).contains("Infeasible"));
}

#[test]
fn errors_map_to_exit_codes() {
    let bad_theta = critmac(&[
        "analyze", "--n", "10", "--theta", "2", "--q", "0.1", "--r", "0.5",
    ]);
    assert_eq!(bad_theta.status.code(), Some(2));
    assert!(stderr(&bad_theta).contains("BadParams"));
    assert!(bad_theta.stdout.is_empty());

    let singular = critmac(&[
        "analyze", "--n", "10", "--theta", "0.1", "--q", "0", "--r", "0.5",
    ]);
    assert_eq!(singular.status.code(), Some(3));
    assert!(stderr(&singular).contains("SingularSystem"));

    let stalled = critmac(&[
        "simulate",
        "--n",
        "3",
        "--q",
        "1",
        "--r",
        "1",
        "--rounds",
        "1",
        "--max-critical-slots",
        "100",
    ]);
    assert_eq!(stalled.status.code(), Some(3));
    assert!(stderr(&stalled).contains("Stalled"));

    let one_packet = critmac(&[
        "simulate",
        "--scenario",
        "two-critical-during-success",
        "--packets",
        "1",
        "--rounds",
        "5",
    ]);
    assert_eq!(one_packet.status.code(), Some(2));
    assert!(stderr(&one_packet).contains("ScenarioUnsatisfiable"));

    assert_eq!(critmac(&["analyze", "--n", "10"]).status.code(), Some(2));
    assert_eq!(critmac(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(critmac(&["sweep", "--axis", "n"]).status.code(), Some(2));
    assert_eq!(
        critmac(&["sweep", "--axis", "theta", "--from", "0.1", "--to", "0.2"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        critmac(&["simulate", "--packets", "3", "--geometric-mean", "4"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        critmac(&["analyze", "--config", "/nonexistent/config"])
            .status
            .code(),
        Some(2)
    );

    let help = critmac(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("simulate"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("design.conf");
    fs::write(&cfg, "# design point\nn = 10\ntheta = 0.1\nq = 0.105\nr = 0.479\nenhanced = true\nformat = json\n").unwrap();
    let path = cfg.to_str().unwrap();

    let out = critmac(&["analyze", "--config", path]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(num(&v["q"]), 0.105);
    assert!(v.get("d_crit_enhanced").is_some());

    let out = critmac(&["analyze", "--config", path, "--q", "0.2", "--format", "csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[2], "0.2");
}

#[test]
fn output_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("out.json");
    let out = critmac(&[
        "analyze",
        "--n",
        "3",
        "--theta",
        "0.2",
        "--q",
        "0.3",
        "--r",
        "0.5",
        "--format",
        "json",
        "--output",
        file.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&fs::read_to_string(&file).unwrap()).unwrap();
    assert_eq!(num(&v["t_s"]), 5.0);
}

#[test]
fn simulate_reports_side_by_side() {
    let v = json(&[
        "simulate", "--n", "3", "--theta", "0.1", "--rounds", "300", "--seed", "42",
    ]);
    let setup = &v["setup"];
    assert_eq!(setup["scenario"], "single-critical");
    assert_eq!(setup["enhanced"], "false");
    assert!((num(&setup["q"]) - 0.3397).abs() < 0.005);
    let metrics = v["metrics"].as_array().unwrap();
    let names: Vec<&str> = metrics
        .iter()
        .map(|m| m["metric"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["t_s", "t_c", "c_norm", "d_crit", "max_d_crit"]);
    for m in &metrics[..4] {
        let z = (num(&m["simulated"]) - num(&m["analysis"])).abs() / num(&m["se"]);
        assert!(z < 4.0, "{m}");
    }
    assert!(metrics[4]["analysis"].is_null());

    let v = json(&[
        "simulate",
        "--n",
        "10",
        "--theta",
        "0.2",
        "--rounds",
        "500",
        "--enhanced",
        "--b",
        "5",
    ]);
    let max = &v["metrics"][4];
    assert!(num(&max["simulated"]) <= 5.0);
    assert_eq!(num(&max["analysis"]), 5.0);

    let out = critmac(&["simulate", "--n", "3", "--rounds", "50", "--format", "csv"]);
    let text = stdout(&out);
    assert!(text.starts_with("metric,simulated,se,analysis\n"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn simulate_two_critical_scenario() {
    let v = json(&[
        "simulate",
        "--scenario",
        "two-critical-simultaneous",
        "--rounds",
        "200",
    ]);
    assert_eq!(v["setup"]["enhanced"], "true");
    let p = &v["properties"];
    assert_eq!(num(&p["runs"]), 200.0);
    assert_eq!(num(&p["violations"]), 0.0);
    assert_eq!(num(&p["max_inference_latency"]), 6.0);
}

#[test]
fn simulate_exports_traces() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("trace.csv");
    let out = critmac(&[
        "simulate",
        "--n",
        "3",
        "--rounds",
        "3",
        "--seed",
        "7",
        "--trace",
        file.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = fs::read_to_string(&file).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("round,slot,phase,u0,u1,u2"));
    let rounds: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rounds.first(), Some(&"0"));
    assert_eq!(rounds.last(), Some(&"2"));
    // 100 normal slots and at least 20 critical ones per round
    assert!(rounds.len() >= 3 * 120);
}

#[test]
fn sweep_outputs() {
    let out = critmac(&[
        "sweep", "--axis", "n", "--from", "3", "--to", "4", "--theta", "0.1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,n_hat,theta,eta,q,r,c_norm,d_crit,status,error");
    assert_eq!(lines.len(), 3);
    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(first[0], "3");
    assert_eq!(first[3], "inf");
    assert!((first[4].parse::<f64>().unwrap() - 0.34).abs() < 0.005);
    assert_eq!(first[8], "slack-interior");

    let out = critmac(&[
        "sweep", "--axis", "qr", "--n", "10", "--theta", "0.1", "--step", "0.1",
    ]);
    // both axes run from 0.01 to 0.99 inclusive
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1 + 11 * 11);

    let out = critmac(&[
        "sweep", "--axis", "theta", "--from", "0", "--to", "0.1", "--step", "0.1",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let failed: Vec<&str> = text.lines().nth(1).unwrap().splitn(10, ',').collect();
    assert_eq!(&failed[4..9], ["", "", "", "", ""]);
    assert!(failed[9].contains("theta"));
}

#[test]
fn underestimated_user_count_violates_threshold() {
    let v = json(&[
        "sweep", "--axis", "nhat", "--n", "10", "--from", "8", "--to", "11", "--eta", "1",
    ]);
    for row in v.as_array().unwrap() {
        let n_hat = num(&row["n_hat"]);
        let d = num(&row["d_crit"]);
        if n_hat < 10.0 {
            assert!(d > 1.005, "{row}");
        } else {
            assert!(d <= 1.005, "{row}");
        }
    }
}

#[test]
fn repeated_invocations_are_byte_identical() {
    for args in [
        [
            "simulate", "--n", "5", "--rounds", "200", "--seed", "9", "--format", "csv",
        ],
        [
            "simulate", "--n", "5", "--rounds", "200", "--seed", "9", "--format", "json",
        ],
    ] {
        let first = critmac(&args);
        let serial = Command::new(env!("CARGO_BIN_EXE_critmac"))
            .args(args)
            .env("RAYON_NUM_THREADS", "1")
            .output()
            .unwrap();
        assert!(first.status.success());
        assert_eq!(first.stdout, critmac(&args).stdout);
        assert_eq!(first.stdout, serial.stdout);
    }
    let other_seed = critmac(&[
        "simulate", "--n", "5", "--rounds", "200", "--seed", "10", "--format", "csv",
    ]);
    assert_ne!(
        other_seed.stdout,
        critmac(&["simulate", "--n", "5", "--rounds", "200", "--seed", "9", "--format", "csv"])
            .stdout
    );
}
