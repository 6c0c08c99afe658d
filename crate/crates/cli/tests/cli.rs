use std::process::{Command, Output};

use serde_json::Value;

fn lazymc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lazymc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn plan_reports_burn_in_and_cost_terms() {
    let v = json(&lazymc(&["plan", "-d", "3", "-a", "2", "--eps", "0.1"]));
    assert_eq!(v["n0"], 40_960_000);
    assert_eq!(v["cost_burn_in"], 40_960_000);
    assert_eq!(v["cost_samples"], 102_400_000_000u64);
    assert_eq!(v["phi_metropolis"].as_f64(), Some(0.000625));
    assert_eq!(v["phi_lazy"].as_f64(), Some(0.0003125));
    assert_eq!(v["delta"].as_f64(), Some(0.5));
}

#[test]
fn plan_without_burn_in_for_uniform_density() {
    let v = json(&lazymc(&["plan", "-d", "2", "-a", "0", "-n", "10000"]));
    assert_eq!(v["n0"], 0);
    assert_eq!(v["raw_error_bound"].as_f64(), Some(240.0));
    let v = json(&lazymc(&[
        "plan", "-d", "2", "-a", "0", "-n", "10000", "--f-sup", "0.5",
    ]));
    assert_eq!(v["raw_error_bound"].as_f64(), Some(120.0));
}

#[test]
fn missing_parameters_exit_with_usage_status() {
    assert_eq!(lazymc(&["plan", "-d", "3"]).status.code(), Some(2));
    assert_eq!(
        lazymc(&["plan", "-d", "3", "-a", "1"]).status.code(),
        Some(2)
    );
    assert_eq!(
        lazymc(&["integrate", "-d", "2", "--f", "one", "-n", "10"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        lazymc(&[
            "integrate",
            "-d",
            "2",
            "--rho",
            "bogus",
            "--f",
            "one",
            "-n",
            "10"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        lazymc(&["sweep", "--alphas", "1", "--eps", "0.1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(lazymc(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn integrate_uniform_second_moment() {
    let v = json(&lazymc(&[
        "integrate",
        "-d",
        "2",
        "--rho",
        "uniform",
        "--f",
        "coord2:1",
        "-n",
        "1000000",
        "--seed",
        "7",
    ]));
    let est = v["run"]["estimate"].as_f64().unwrap();
    assert!((est - 0.25).abs() < 0.005, "{est}");
    assert_eq!(v["reference"]["value"].as_f64(), Some(0.25));
    assert!(v["report"].is_null());
}

#[test]
fn integrate_replications_report_rmse_and_bound() {
    let args = [
        "integrate",
        "-d",
        "2",
        "--rho",
        "uniform",
        "--f",
        "coord:1",
        "-n",
        "2000",
        "--reps",
        "100",
        "--seed",
        "3",
    ];
    let out = lazymc(&args);
    let v = json(&out);
    let report = &v["report"];
    for key in [
        "empirical_rmse",
        "theoretical_bound",
        "margin",
        "rmse_std_error",
        "mean_estimate",
    ] {
        assert!(report[key].is_number(), "{key}");
    }
    assert_eq!(report["replications"], 100);
    assert_eq!(report["within_bound"], true);
    // Same seed, same bytes, whatever the worker count.
    let mut again: Vec<&str> = args.to_vec();
    again.extend(["--jobs", "1"]);
    assert_eq!(out.stdout, lazymc(&again).stdout);
}

#[test]
fn integrate_appends_csv_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("runs.csv");
    let p = path.to_str().unwrap();
    for seed in ["1", "2"] {
        let out = lazymc(&[
            "integrate",
            "-d",
            "2",
            "--rho",
            "explin:1,0",
            "--f",
            "coord:1",
            "-n",
            "5000",
            "--n0",
            "100",
            "--seed",
            seed,
            "--format",
            "csv",
            "-o",
            p,
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(
        lines[0],
        "d,alpha,delta,n,n0,seed,estimate,reference,rmse,bound,margin"
    );
    assert!(
        lines[1].starts_with("2,1,0.577350269,5000,100,1,"),
        "{}",
        lines[1]
    );
    assert!(lines[1].contains(",0.240193724,"), "{}", lines[1]);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, r#"{"dim": 3, "alpha": 2, "eps": 0.5}"#).unwrap();
    let cfg = path.to_str().unwrap();
    let v = json(&lazymc(&["plan", "--config", cfg]));
    assert_eq!(v["dimension"], 3);
    let v = json(&lazymc(&["plan", "--config", cfg, "-d", "1"]));
    assert_eq!(v["dimension"], 1);
}

#[test]
fn verify_is_deterministic_and_passes() {
    let a = lazymc(&["verify", "--seed", "42"]);
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );
    let b = lazymc(&["verify", "--seed", "42"]);
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["violations"] == 0));
}

#[test]
fn verify_reports_injected_non_lazy_chain() {
    let out = lazymc(&["verify", "--inject-non-lazy"]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let psd = v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "operator_psd")
        .unwrap();
    assert_eq!(psd["violations"], 1);
    let repro = &psd["reproducers"][0];
    assert_eq!(
        repro["instance"]["matrix"],
        serde_json::json!([[0.0, 1.0], [1.0, 0.0]])
    );
    assert!(repro["detail"].as_str().unwrap().contains("-1"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[[0.0,1.0],[1.0,0.0]]"));
}

#[test]
fn sweep_tables() {
    let out = lazymc(&[
        "sweep", "--dims", "1,2,4,8", "--alphas", "1", "--eps", "0.1",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 4);
    let costs: Vec<u64> = rows.iter().map(|r| r[8].parse().unwrap()).collect();
    assert!(costs.windows(2).all(|w| w[0] < w[1]));

    let out = lazymc(&[
        "sweep", "--dims", "2", "--alphas", "0,1,2,4", "--eps", "0.1",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let n0: Vec<u64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(6).unwrap().parse().unwrap())
        .collect();
    assert_eq!(n0, vec![0, 11_520_000, 30_720_000, 245_760_000]);

    let out = lazymc(&["sweep", "-d", "3", "-a", "2", "--eps", "0.1"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 2);
}
