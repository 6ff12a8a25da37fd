use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn run(args: &[&str], out: &Path) -> i32 {
    let mut v = vec!["ss-yield".to_string()];
    v.extend(args.iter().map(|s| s.to_string()));
    v.push("--out".into());
    v.push(out.display().to_string());
    ss_yield::run(v)
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// The drifted Brownian preset written out as an inline model.
const INLINE_BM: &str = r#"{
    "model": {
        "label": "inline_bm",
        "constants": {"mu": 1, "sigma": 1, "c_b": 5, "c_h": 1, "k1": 2, "k2": 1, "x0": 0},
        "drift": "-mu",
        "dispersion": "sigma",
        "interval": ["-inf", "inf"],
        "x0": "x0",
        "left": "natural",
        "right": "natural",
        "scale_log_density": "2 * mu * (x - x0) / sigma^2"
    },
    "costs": {
        "holding": "((c_h - c_b) * x + (c_h + c_b) * abs(x)) / 2",
        "holding_limits": ["inf", "inf"],
        "ordering": "k1 + k2 * (z - y)",
        "fixed_cost": "k1"
    },
    "yields": {"kind": "base_pushforward", "delta": 0.5, "base": {"kind": "uniform"}},
    "command": {"y": -0.5, "z": 2}
}"#;

#[test]
fn inline_model_matches_its_preset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bm.json");
    std::fs::write(&cfg, INLINE_BM).unwrap();
    assert_eq!(run(&["evaluate", "--config", cfg.to_str().unwrap()], &dir.path().join("a")), 0);
    assert_eq!(
        run(&["evaluate", "--preset", "drifted_bm", "--y", "-0.5", "--z", "2"], &dir.path().join("b")),
        0
    );
    let a = read_json(&dir.path().join("a/evaluate.json"));
    let b = read_json(&dir.path().join("b/evaluate.json"));
    assert_eq!(a["model"]["label"], "inline_bm");
    for key in ["H0", "hat_Bzeta", "mean_supply"] {
        let (x, y) = (a["result"][key].as_f64().unwrap(), b["result"][key].as_f64().unwrap());
        assert!((x - y).abs() <= 1e-8 * y.abs(), "{key}: {x} vs {y}");
    }
}

#[test]
fn embedded_config_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bm.json");
    std::fs::write(&cfg, INLINE_BM).unwrap();
    let first = dir.path().join("first");
    assert_eq!(
        run(&["evaluate", "--config", cfg.to_str().unwrap(), "--set", "sigma=0.8"], &first),
        0
    );
    let report = read_json(&first.join("evaluate.json"));
    assert_eq!(report["model"]["params"]["sigma"], 0.8);
    let replay = dir.path().join("replay.json");
    std::fs::write(&replay, report["config"].to_string()).unwrap();
    let second = dir.path().join("second");
    assert_eq!(run(&["evaluate", "--config", replay.to_str().unwrap()], &second), 0);
    let again = read_json(&second.join("evaluate.json"));
    assert_eq!(report["result"], again["result"]);

    // same for a preset
    assert_eq!(run(&["evaluate", "--preset", "gbm_power_cost", "--set", "beta=-2", "--y", "0.4", "--z", "1.5"], &first), 0);
    let report = read_json(&first.join("evaluate.json"));
    std::fs::write(&replay, report["config"].to_string()).unwrap();
    assert_eq!(run(&["evaluate", "--config", replay.to_str().unwrap()], &second), 0);
    assert_eq!(report["result"], read_json(&second.join("evaluate.json"))["result"]);
    assert_eq!(report["seed"], 20_240_901);
}

#[test]
fn diagonal_policy_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(&["evaluate", "--preset", "logistic_zskew", "--y", "0.5", "--z", "0.5"], dir.path());
    assert_eq!(code, 1);
    let r = read_json(&dir.path().join("evaluate.json"));
    assert_eq!(r["status"], "error");
    assert_eq!(r["error"]["exit_code"], 1);
    assert!(r["error"]["message"].as_str().unwrap().contains("diagonal"));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["optimize", "--preset", "no_such_model"], dir.path()), 1);
    assert_eq!(run(&["optimize", "--preset", "drifted_bm", "--set", "nu=1"], dir.path()), 1);
    assert_eq!(run(&["optimize"], dir.path()), 1);
    assert_eq!(run(&["evaluate", "--preset", "drifted_bm", "--y", "0"], dir.path()), 1);
    assert_eq!(run(&["optimize", "--preset", "drifted_bm", "--no-such-flag"], dir.path()), 1);
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"model": {"preset": "drifted_bm"}, "comand": {}}"#).unwrap();
    assert_eq!(run(&["optimize", "--config", cfg.to_str().unwrap()], dir.path()), 1);
}

#[test]
fn failed_condition_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(
        &["verify", "--preset", "logistic_zskew", "--set", "k0=0.5", "--set", "k1=20", "--format", "json"],
        dir.path(),
    );
    assert_eq!(code, 2);
    let r = read_json(&dir.path().join("verify.json"));
    assert_eq!(r["status"], "condition_failure");
    let c24 = r["result"]["conditions"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["condition_id"] == "C2_4")
        .unwrap();
    assert_eq!(c24["verdict"], "fail");
}

#[test]
fn scan_writes_a_full_lattice() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "scan",
        "--preset",
        "logistic_zskew",
        "--resolution",
        "12",
        "--y-range",
        "0.2,0.6",
        "--z-range",
        "0.4,0.8",
        "--format",
        "json",
    ];
    assert_eq!(run(&args, dir.path()), 0);
    let text = std::fs::read_to_string(dir.path().join("scan.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("y,z,H0"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 144);
    for r in &rows {
        let (y, z): (f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap());
        assert_eq!(r[2].is_empty(), y >= z, "{r:?}");
    }
    let r = read_json(&dir.path().join("scan.json"));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["result"]["quantity"], "H0");
}

#[test]
fn compare_writes_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "compare",
        "--preset",
        "logistic_zskew",
        "--set",
        "model=2",
        "--y",
        "0.381724",
        "--z",
        "0.56993",
        "--horizon",
        "500",
        "--replications",
        "4",
        "--seed",
        "7",
    ];
    assert_eq!(run(&args, dir.path()), 0);
    let text = std::fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "quantity,analytic,simulated,se,z_score,flagged");
    let names: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["J", "cycle_length", "order_frequency", "mean_supply"]);
    let r = read_json(&dir.path().join("compare.json"));
    assert_eq!(r["seed"], 7);
    assert_eq!(r["result"]["simulation"]["seed"], 7);
    assert_eq!(r["config"]["seed"], 7);
}

#[test]
fn json_only_and_csv_only_formats() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert_eq!(run(&["evaluate", "--preset", "drifted_bm", "--y", "-1", "--z", "2", "--format", "json"], &a), 0);
    assert!(a.join("evaluate.json").exists());
    assert!(!a.join("evaluate.csv").exists());
    let b = dir.path().join("b");
    assert_eq!(run(&["evaluate", "--preset", "drifted_bm", "--y", "-1", "--z", "2", "--format", "csv"], &b), 0);
    assert!(!b.join("evaluate.json").exists());
    let text = std::fs::read_to_string(b.join("evaluate.csv")).unwrap();
    assert!(text.starts_with("key,value\n"));
    assert!(text.lines().any(|l| l.starts_with("H0,")));
    assert!(b.join("evaluate.txt").exists());
}

#[test]
fn deterministic_model_classification_warns() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["classify", "--preset", "logistic_zskew", "--set", "model=1"], dir.path()), 0);
    let r = read_json(&dir.path().join("classify.json"));
    assert_eq!(r["status"], "warning");
    assert!(r["result"]["endpoints"].is_null());
}

#[test]
fn thread_variable_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_ss-yield");
    let base = ["classify", "--preset", "drifted_bm", "--out", dir.path().to_str().unwrap()];
    let st = Command::new(bin).args(base).env("SS_YIELD_THREADS", "zero").output().unwrap();
    assert_eq!(st.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&st.stderr).contains("SS_YIELD_THREADS"));
    let st = Command::new(bin).args(base).env("SS_YIELD_THREADS", "1").output().unwrap();
    assert_eq!(st.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&st.stdout).contains("left endpoint: natural"));
}
