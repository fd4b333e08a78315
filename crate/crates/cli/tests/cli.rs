//! The `msp` binary driven through its command line.

use std::path::Path;
use std::process::{Command, Output};

fn msp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msp")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = msp(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn solve_reports_share_the_reference() {
    let dir = tempfile::tempdir().unwrap();
    let mut refs = Vec::new();
    for m in ["detequiv", "sddp", "sddp-l1"] {
        let rep = dir.path().join(format!("{m}.csv"));
        ok(&["solve", "--family", "EP", "--stages", "3", "--seed", "5", "--method", m, "--report", s(&rep)]);
        let csv = std::fs::read_to_string(&rep).unwrap();
        assert_eq!(csv.lines().count(), 2);
        let v = json(&rep.with_extension("json"));
        assert_eq!(v["feasible"], true);
        assert!(v["error_ratio"].as_f64().unwrap() <= 0.005 + 1e-6);
        refs.push(v["reference_objective"].as_f64().unwrap());
    }
    assert!(refs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("r.csv");
    let out = msp(&["solve", "--family", "EP", "--stages", "3", "--method", "neural", "--report", s(&rep)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
    assert!(!rep.exists());
    assert!(!msp(&["solve", "--family", "QQ", "--stages", "3", "--method", "sddp", "--report", s(&rep)]).status.success());
    assert!(!msp(&["train", "--data", s(&dir.path().join("missing")), "--out-checkpoint", "m.msck"]).status.success());
}

#[test]
fn data_train_eval_round() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.msds.jsonl");
    let ckpt = dir.path().join("m.msck");
    let rep = dir.path().join("e.csv");
    ok(&["gen-data", "--family", "EP", "--stages", "3", "--instances", "9", "--seed", "2", "--out", s(&data)]);
    let lines = std::fs::read_to_string(&data).unwrap().lines().count();
    assert!(lines > 1);
    ok(&["train", "--data", s(&data), "--folds", "3", "--epochs", "2", "--out-checkpoint", s(&ckpt), "--log-csv", s(&dir.path().join("log.csv"))]);
    assert_eq!(std::fs::read_to_string(dir.path().join("log.csv")).unwrap().lines().count(), 3);
    ok(&["eval", "--checkpoint", s(&ckpt), "--family", "EP", "--stages", "3", "--test-instances", "3", "--report", s(&rep), "--workers", "2"]);
    assert_eq!(std::fs::read_to_string(&rep).unwrap().lines().count(), 1 + 3 * 3);
    let v = json(&rep.with_extension("json"));
    let methods: Vec<&str> = v["methods"].as_array().unwrap().iter().map(|m| m["method"].as_str().unwrap()).collect();
    assert_eq!(methods, ["sddp", "sddp-l1", "neural"]);
    assert_eq!(v["methods"][0]["infeasibility_ratio"], 0.0);
}

#[test]
fn instance_tree_and_single_probe() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("i.json");
    let tree = dir.path().join("t.json");
    let vf = dir.path().join("vf.csv");
    ok(&["instance", "--family", "EP", "--stages", "2", "--lambda", "mu_I=20,sigma_I=5", "--out", s(&inst)]);
    assert_eq!(json(&inst)["lambda"]["mu_I"], 20.0);
    ok(&["tree", "--family", "EP", "--stages", "3", "--branches", "3", "--instance", s(&inst), "--out", s(&tree)]);
    let t: msp_core::scenario::ScenarioTree = serde_json::from_str(&std::fs::read_to_string(&tree).unwrap()).unwrap();
    t.validate().unwrap();
    assert_eq!(t.len(), 1 + 3);
    ok(&["compare-vf", "--instance", s(&inst), "--grid", "30:30:1", "--samples", "20", "--sddp-branches", "30", "--out-csv", s(&vf)]);
    let csv = std::fs::read_to_string(&vf).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("x,exact_mean,exact_std,samples,sddp\n"));
    assert!(json(&vf.with_extension("json"))["max_excess"][0].as_f64().unwrap() <= 0.0);
}

#[test]
fn exported_tree_round_trips_through_solve() {
    let dir = tempfile::tempdir().unwrap();
    let tree = dir.path().join("t.json");
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let log = dir.path().join("log.csv");
    ok(&["tree", "--family", "PP", "--stages", "3", "--seed", "4", "--branches", "3", "--out", s(&tree)]);
    ok(&["solve", "--family", "PP", "--stages", "3", "--seed", "4", "--branches", "3", "--method", "sddp", "--report", s(&a), "--convergence-log", s(&log)]);
    ok(&["solve", "--family", "PP", "--stages", "3", "--seed", "4", "--tree", s(&tree), "--method", "sddp", "--report", s(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let text = std::fs::read_to_string(&log).unwrap();
    let iterations = json(&a.with_extension("json"))["iterations"].as_u64().unwrap() as usize;
    assert!(text.starts_with("iteration,lower,v_bar,upper,gap,cuts_per_stage,seconds\n"));
    assert_eq!(text.lines().count(), 1 + iterations);

    let short = dir.path().join("short.json");
    ok(&["tree", "--family", "PP", "--stages", "2", "--out", s(&short)]);
    assert!(!msp(&["solve", "--family", "PP", "--stages", "3", "--tree", s(&short), "--method", "sddp", "--report", s(&a)]).status.success());
}
