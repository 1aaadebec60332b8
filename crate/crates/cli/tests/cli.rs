use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn rmed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmed")).args(args).env_remove("RMED_WORKERS").output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn generate(dir: &Path, name: &str, args: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut full = vec!["generate"];
    full.extend_from_slice(args);
    full.extend_from_slice(&["-o", path.to_str().unwrap()]);
    assert!(rmed(&full).status.success());
    path
}

fn ratio(v: &Value) -> f64 {
    let s = v.as_str().expect("rational string");
    match s.split_once('/') {
        Some((p, q)) => p.parse::<f64>().unwrap() / q.parse::<f64>().unwrap(),
        None => s.parse().unwrap(),
    }
}

#[test]
fn gap_fixture_shapes() {
    let a = json(&rmed(&["generate", "gap-a", "--t", "3"]));
    assert_eq!(a["facilities"].as_array().unwrap().len(), 2);
    assert_eq!(a["clients"].as_array().unwrap().len(), 63);
    assert_eq!((a["k"].as_u64(), a["m"].as_u64()), (Some(1), Some(30)));
    let b = json(&rmed(&["generate", "gap-b", "--t", "4"]));
    assert_eq!(b["facilities"].as_array().unwrap().len(), 3);
    assert_eq!(b["clients"].as_array().unwrap().len(), 20);
    assert_eq!((b["k"].as_u64(), b["m"].as_u64()), (Some(2), Some(17)));
}

#[test]
fn oracle_reports_gap_a_values() {
    let dir = TempDir::new().unwrap();
    let path = generate(dir.path(), "a.json", &["gap-a", "--t", "3"]);
    let v = json(&rmed(&["oracle", "-i", path.to_str().unwrap()]));
    assert_eq!(v["opt_cost"], "30");
    assert_eq!(v["lp_basic_value"], "12");
}

#[test]
fn pseudo_run_on_gap_a() {
    let dir = TempDir::new().unwrap();
    let path = generate(dir.path(), "a.json", &["gap-a", "--t", "3"]);
    let v = json(&rmed(&["run", "-i", path.to_str().unwrap(), "--pseudo"]));
    assert!(v["open"].as_array().unwrap().len() <= 2);
    assert!(ratio(&v["cost"]) <= 7.081 * 12.0);
    assert_eq!(v["mode"], "pseudo");
}

#[test]
fn full_run_on_gap_a_meets_the_bound() {
    let dir = TempDir::new().unwrap();
    let path = generate(dir.path(), "a.json", &["gap-a", "--t", "3"]);
    let v = json(&rmed(&["run", "-i", path.to_str().unwrap(), "--mode", "full", "--epsilon", "1/2"]));
    assert_eq!(v["open"].as_array().unwrap().len(), 1);
    assert_eq!(v["served"].as_array().unwrap().len(), 30);
    assert!(ratio(&v["cost"]) <= 7.081 * 1.5 * 30.0);
}

#[test]
fn collocated_clients_cost_nothing() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("t.json");
    std::fs::write(
        &path,
        r#"{"q":1,"k":1,"m":2,"facilities":["f","g"],"clients":["a","b","c"],
            "dist":{"mode":"matrix","rows":[[0,4,0,0,4],[4,0,4,4,0],[0,4,0,0,4],[0,4,0,0,4],[4,0,4,4,0]]}}"#,
    )
    .unwrap();
    for mode in ["oracle-guided", "full"] {
        let v = json(&rmed(&["run", "-i", path.to_str().unwrap(), "--mode", mode]));
        assert_eq!(v["cost"], "0", "mode {mode}");
        assert_eq!(v["open"], serde_json::json!(["f"]));
    }
}

#[test]
fn infeasible_knapsack_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let path = generate(dir.path(), "k.json", &["random-metric", "--facilities", "3", "--clients", "5", "--knapsack-budget", "1/2"]);
    for mode in ["oracle-guided", "full"] {
        let out = rmed(&["run", "-i", path.to_str().unwrap(), "--problem", "knapmed", "--mode", mode]);
        assert_eq!(out.status.code(), Some(2), "mode {mode}");
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn usage_errors_do_not_use_the_infeasible_code() {
    assert_eq!(rmed(&["run", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(rmed(&["--help"]).status.code(), Some(0));
}

#[test]
fn verify_passes_and_reports_injected_fault() {
    let dir = TempDir::new().unwrap();
    let path = generate(dir.path(), "a.json", &["gap-a", "--t", "2"]);
    let ok = json(&rmed(&["verify", "-i", path.to_str().unwrap(), "--pseudo"]));
    assert_eq!(ok["passed"], true);
    let out = rmed(&["verify", "-i", path.to_str().unwrap(), "--inject-fault", "inner-ball"]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], false);
    assert!(v["failure"].as_str().unwrap().contains("inner-ball"));
    let tally = v["invariants"].as_array().unwrap().iter().find(|t| t["name"] == "inner-ball").unwrap();
    assert!(tally["failures"].as_u64().unwrap() >= 1);
}

#[test]
fn output_file_matches_stdout_and_runs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let path = generate(dir.path(), "r.json", &["random-metric", "--facilities", "5", "--clients", "9", "--seed", "7", "--q", "2"]);
    let input = path.to_str().unwrap();
    let out_file = dir.path().join("report.json");
    let args = ["run", "-i", input, "--problem", "rkmeans", "--seed", "3", "--offsets", "4"];
    let first = rmed(&args);
    let second = rmed(&[&args[..], &["--output", "-"]].concat());
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    assert!(rmed(&[&args[..], &["-o", out_file.to_str().unwrap()]].concat()).status.success());
    assert_eq!(std::fs::read(&out_file).unwrap(), first.stdout);
    let parallel = Command::new(env!("CARGO_BIN_EXE_rmed")).args(args).env("RMED_WORKERS", "3").output().unwrap();
    assert_eq!(parallel.stdout, first.stdout);
}

#[test]
fn generated_instances_round_trip_through_the_solver() {
    let dir = TempDir::new().unwrap();
    let euclid = generate(dir.path(), "e.json", &["euclidean", "--facilities", "4", "--clients", "8", "--seed", "2"]);
    let v = json(&rmed(&["run", "-i", euclid.to_str().unwrap()]));
    assert_eq!(v["served"].as_array().unwrap().len(), 6);
    let classes = generate(dir.path(), "m.json", &["random-metric", "--facilities", "6", "--clients", "7", "--classes", "2"]);
    let v = json(&rmed(&["run", "-i", classes.to_str().unwrap(), "--problem", "matmed"]));
    assert_eq!(v["served"].as_array().unwrap().len(), 7);
    assert!(v["open"].as_array().unwrap().len() <= 2);
}

#[test]
fn bench_reports_ratios_within_the_bound() {
    let v = json(&rmed(&["bench", "--seeds", "4", "--facilities", "4", "--clients", "7"]));
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for row in rows {
        assert!(row["ratio"].as_f64().unwrap() <= row["bound"].as_f64().unwrap());
    }
}
