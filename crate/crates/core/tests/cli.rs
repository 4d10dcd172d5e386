use serde_json::Value;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gluedet"));
    c.env_remove("GLUE_THREADS");
    c
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gluedet-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn run(args: &[&str], out: &str) -> (i32, Value) {
    let path = tmp(out);
    let status = bin().args(args).arg("--out").arg(&path).status().unwrap();
    let report = std::fs::read_to_string(&path).map(|s| serde_json::from_str(&s).unwrap()).unwrap_or(Value::Null);
    (status.code().unwrap(), report)
}

#[test]
fn index_of_k_squared_on_disk() {
    let (code, r) = run(&["index", "--geometry", "disk", "--bundle", "K^2"], "index.json");
    assert_eq!(code, 0);
    let p = &r["payload"];
    assert_eq!(p["result"]["index"], -3);
    assert_eq!(p["schema_version"], gluedet::cli::SCHEMA_VERSION);
    assert_eq!(p["config"]["bundle"], "K^2");
    assert!(r["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn bfk_example_passes() {
    let (code, r) = run(&["bfk", "--geometry", "torus", "--a", "1", "--b", "1", "--lambda", "1", "--tol", "1e-6"], "bfk.json");
    assert_eq!(code, 0);
    assert!(r["payload"]["residual"].as_f64().unwrap() < 1e-6);
    assert_eq!(r["payload"]["pass"], true);
}

#[test]
fn tolerance_failure_still_writes_report() {
    let (code, r) = run(&["sphere", "--tol", "1e-30"], "sphere.json");
    assert_eq!(code, 1);
    assert_eq!(r["payload"]["pass"], false);
    assert!(r["payload"]["residual"].as_f64().unwrap() < 1e-6);
}

#[test]
fn numerical_error_is_exit_one() {
    // the trivial framing is not generic
    let (code, r) = run(&["zero-modes", "--twist", "0", "--n-max", "32"], "zm.json");
    assert_eq!(code, 1);
    assert!(r["payload"]["error"].as_str().unwrap().contains("generic"));
}

#[test]
fn invalid_configs_exit_two() {
    for args in [
        vec!["bfk", "--a", "-1"],
        vec!["nope"],
        vec!["index", "--bundle", "L^2"],
        vec!["det", "--geometry", "klein"],
        vec!["bfk", "--q", "other"],
        vec!["bosonize", "--points", "0.1"],
        vec!["sphere", "--tol", "0"],
    ] {
        let status = bin().args(&args).arg("--out").arg(tmp("bad.json")).status().unwrap();
        assert_eq!(status.code(), Some(2), "{args:?}");
    }
    let bad = tmp("bad_config.json");
    std::fs::write(&bad, r#"{"geometry": "disk", "unknown_key": 1}"#).unwrap();
    assert_eq!(bin().args(["index", "--config"]).arg(&bad).status().unwrap().code(), Some(2));
    let status = bin().args(["selftest"]).env("GLUE_THREADS", "many").status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let (code, r) = run(&["selftest"], "self.json");
    assert_eq!(code, 0, "{r}");
    assert!(r["payload"]["result"]["cases"].as_array().unwrap().len() >= 5);
}

#[test]
fn payload_is_deterministic_across_thread_counts() {
    let args = ["det", "--geometry", "torus", "--bc", "closed", "--lambda-max", "1000", "--lambda", "0,1"];
    let path1 = tmp("det1.json");
    let path2 = tmp("det2.json");
    assert_eq!(bin().args(args).args(["--threads", "1", "--out"]).arg(&path1).status().unwrap().code(), Some(0));
    assert_eq!(bin().args(args).arg("--out").arg(&path2).env("GLUE_THREADS", "4").status().unwrap().code(), Some(0));
    let p = |path: &PathBuf| {
        let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        serde_json::to_string(&v["payload"]).unwrap()
    };
    assert_eq!(p(&path1), p(&path2));
}

#[test]
fn config_file_round_trip_and_flag_override() {
    let (code, r) = run(&["index", "--geometry", "annulus", "--r-in", "0.4"], "ann.json");
    assert_eq!(code, 0);
    let cfg = tmp("ann_config.json");
    std::fs::write(&cfg, serde_json::to_string(&r["payload"]["config"]).unwrap()).unwrap();
    let again = tmp("ann_again.json");
    assert_eq!(bin().args(["index", "--config"]).arg(&cfg).arg("--out").arg(&again).status().unwrap().code(), Some(0));
    let r2: Value = serde_json::from_str(&std::fs::read_to_string(&again).unwrap()).unwrap();
    assert_eq!(r["payload"], r2["payload"]);
    // flags override file entries
    let over = tmp("ann_over.json");
    let st = bin().args(["index", "--config"]).arg(&cfg).args(["--geometry", "disk", "--out"]).arg(&over).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let r3: Value = serde_json::from_str(&std::fs::read_to_string(&over).unwrap()).unwrap();
    assert_eq!(r3["payload"]["config"]["geometry"], "disk");
    assert_eq!(r3["payload"]["result"]["index"], 1);
}

#[test]
fn spectrum_csv() {
    let csv = tmp("spec.csv");
    let out = tmp("spec.json");
    let st = bin()
        .args(["spectrum", "--geometry", "sphere", "--lambda-max", "5000", "--csv"])
        .arg(&csv)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,lambda,mult"));
    // sphere levels l(l+1) with multiplicity 2l+1
    let row: Vec<&str> = lines.nth(2).unwrap().split(',').collect();
    assert_eq!(row[0], "2");
    assert!((row[1].parse::<f64>().unwrap() - 6.0).abs() < 1e-12);
    assert_eq!(row[2], "5");
}

#[test]
fn in_process_help_exits_zero() {
    assert_eq!(gluedet::cli::run(["gluedet", "--help"]), 0);
    assert_eq!(gluedet::cli::run(["gluedet", "frobnicate"]), 2);
}
