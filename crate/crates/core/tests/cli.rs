//! End-to-end checks of the `ctm` binary: exit codes, output schemas and
//! config handling.

use std::path::Path;
use std::process::{Command, Output};

use ctm_core::harness::{read_records, CSV_HEADER};

fn ctm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctm"))
        .args(args)
        .output()
        .expect("spawn ctm")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(ctm(&["--help"]).status.code(), Some(0));
    assert_eq!(ctm(&["--version"]).status.code(), Some(0));
    assert_eq!(ctm(&[]).status.code(), Some(1));
    assert_eq!(ctm(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(ctm(&["simulate", "--reps", "0"]).status.code(), Some(1));
    assert_eq!(ctm(&["simulate", "--mode", "sideways"]).status.code(), Some(1));
    assert_eq!(ctm(&["simulate", "--pi0", "1.5"]).status.code(), Some(1));
    assert_eq!(ctm(&["benchmarks", "--data", "0120"]).status.code(), Some(1));
    assert_eq!(ctm(&["summary", "--input", "/nonexistent/x.csv"]).status.code(), Some(1));
    assert_eq!(ctm(&["verify", "--reps", "0"]).status.code(), Some(1));
}

#[test]
fn simulate_writes_schema_to_file_and_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let args = ["simulate", "--reps", "5", "--inner-bk", "4", "--seed", "9"];
    let to_stdout = ctm(&args);
    assert!(to_stdout.status.success());
    let mut with_file = args.to_vec();
    with_file.extend(["--out", path(&out)]);
    let o = ctm(&with_file);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());

    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text, stdout(&to_stdout));
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    let records = read_records(text.as_bytes()).unwrap();
    assert_eq!(records.len(), 5);
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r.rep, i as u64);
        assert_eq!(r.dataset.len(), 20);
        assert_eq!(r.total_ones, r.k0 + r.k1);
        assert!(r.lb <= r.ub);
    }
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"replications": 3, "inner_bk": 2, "seed": 5, "mode": "fixed-dataset",
            "alt": {"n0": 4, "n1": 6, "pi0": 0.2, "pi1": 0.7}}"#,
    )
    .unwrap();
    let o = ctm(&["simulate", "--config", path(&cfg), "--reps", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = read_records(o.stdout.as_slice()).unwrap();
    assert_eq!(records.len(), 4);
    assert!(records.iter().all(|r| r.dataset == records[0].dataset && r.dataset.len() == 10));
    assert!(records.iter().all(|r| r.batch == records[0].batch));

    std::fs::write(&cfg, r#"{"replicas": 3}"#).unwrap();
    assert_eq!(ctm(&["simulate", "--config", path(&cfg)]).status.code(), Some(1));
}

#[test]
fn summary_reads_simulate_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    assert!(ctm(&["simulate", "--reps", "6", "--inner-bk", "3", "--out", path(&out)])
        .status
        .success());
    let o = ctm(&["summary", "--input", path(&out)]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["count"], 6);
    for process in ["bk", "mean_bk", "batch", "lb", "ub"] {
        let s = &v[process];
        let q = |k: &str| s[k].as_f64().unwrap();
        assert!(q("q05") <= q("q25") && q("q25") <= q("median"));
        assert!(q("median") <= q("q75") && q("q75") <= q("q95"));
    }
}

#[test]
fn benchmarks_report() {
    let o = ctm(&["benchmarks", "--data", "00000000001111111111"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let want = 1.8f64.powi(20);
    assert!((v["lb"].as_f64().unwrap() / want - 1.0).abs() < 1e-12);
    assert!((v["ub"].as_f64().unwrap() / want - 1.0).abs() < 1e-12);
    assert!((v["batch"].as_f64().unwrap() - 71_851.783_024_714).abs() < 1e-6);
    assert_eq!(v["K"], 10);
    assert_eq!(v["k1"], 10);

    // Short prefixes have no batch value.
    let v: serde_json::Value =
        serde_json::from_slice(&ctm(&["benchmarks", "--data", "0101"]).stdout).unwrap();
    assert!(v["batch"].is_null());
    assert_eq!(v["k0"], 2);
}

#[test]
fn pvalues_output() {
    let o = ctm(&["pvalues", "--data", "0011", "--seed", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,z,tau,p"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    // First p-value is τ itself.
    assert_eq!(rows[0][2], rows[0][3]);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r[3])));

    let g = ctm(&["pvalues", "--model", "gaussian-var1", "--data", "0,1.4142135623730951"]);
    let text = stdout(&g);
    let second: Vec<&str> = text.lines().nth(2).unwrap().split(',').collect();
    let p: f64 = second[3].parse().unwrap();
    assert!((p - 0.841_344_746_068_542_9).abs() < 1e-12);

    assert_eq!(ctm(&["pvalues", "--model", "gaussian-var1", "--data", "1,x"]).status.code(), Some(1));
}

#[test]
fn naturalize_tree() {
    let dir = tempfile::tempdir().unwrap();
    let finals = dir.path().join("finals.csv");
    std::fs::write(&finals, "dataset,value\n00,0\n01,4\n10,2\n11,8\n").unwrap();
    let o = ctm(&["naturalize", "--finals", path(&finals), "--theta", "0.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let rows: Vec<(String, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.to_string(), b.parse().unwrap())
        })
        .collect();
    let get = |p: &str| rows.iter().find(|r| r.0 == p).unwrap().1;
    assert_eq!(text.lines().next(), Some("prefix,value"));
    assert_eq!(rows.len(), 7);
    assert_eq!(get("0"), 2.0);
    assert_eq!(get("1"), 5.0);
    assert_eq!(get(""), 3.5);
    assert_eq!(get("11"), 8.0);

    // Incomplete table.
    std::fs::write(&finals, "dataset,value\n00,0\n01,4\n").unwrap();
    assert_eq!(ctm(&["naturalize", "--finals", path(&finals), "--theta", "0.5"]).status.code(), Some(1));
}
