use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn plexisim(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plexisim"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_owned).collect()
}

#[test]
fn enroll_writes_unique_tokens_and_refuses_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let out = plexisim(dir.path(), &["enroll", "10", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let tokens = lines(&dir.path().join("tokens.jsonl"));
    assert_eq!(tokens.len(), 10);
    let mut ids: Vec<String> = tokens
        .iter()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["token_id"].as_str().unwrap().to_owned())
        .collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 10);

    let again = plexisim(dir.path(), &["enroll", "10", "--seed", "3"]);
    assert_eq!(again.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&again.stderr).contains("already holds a token"));
}

#[test]
fn enroll_zero_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let out = plexisim(dir.path(), &["enroll", "0"]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(dir.path().join("tokens.jsonl")).unwrap(), "");
}

#[test]
fn trade_example_selects_a_and_b() {
    let dir = tempfile::tempdir().unwrap();
    let out = plexisim(dir.path(), &["trade"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let schedules: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("schedules.json")).unwrap()).unwrap();
    assert_eq!(schedules[0]["selected_bids"], serde_json::json!(["A", "B"]));
    assert_eq!(schedules[0]["total_cost"], 28.0);
    let trace: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("trace.json")).unwrap()).unwrap();
    let kinds: Vec<&str> = trace.as_array().unwrap().iter().map(|r| r["event_kind"].as_str().unwrap()).collect();
    assert_eq!(kinds.first(), Some(&"CREATE_FLEX_REQUEST"));
    assert_eq!(kinds.last(), Some(&"ACTIVATION_SETTLEMENT"));
    let blocks = lines(&dir.path().join("ledger.jsonl"));
    assert!(!blocks.is_empty());
    let first: Value = serde_json::from_str(&blocks[0]).unwrap();
    for key in ["height", "prev_hash", "block_hash", "txs"] {
        assert!(first.get(key).is_some(), "block line lacks {key}");
    }
}

#[test]
fn trade_with_insufficient_bids_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = serde_json::json!({
        "seed": 5,
        "resources": [{
            "resource_id": "dg-1", "kind": "DG", "controllable": true, "capacity_kw": 4.0,
            "baseline_setpoint": {"action": "IDLE", "level_kw": 0.0}, "owner": "alice"
        }],
        "requests": [{
            "request_id": "r", "window": {"start": 1, "duration": 1}, "shape": "shed",
            "quantity_kw": 10.0, "direction": "increase_supply", "incentive_per_kw": 1.0, "issuer": "dso"
        }],
        "bids": [{
            "request_id": "r", "bid_id": "x", "prosumer": "alice", "offered_kw": 4.0,
            "price_per_kw": 1.0, "resource_ids": ["dg-1"]
        }]
    });
    let cfg = dir.path().join("scenario.json");
    fs::write(&cfg, scenario.to_string()).unwrap();
    let out = plexisim(dir.path(), &["trade", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("unsat.json").exists());
    let trace: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("trace.json")).unwrap()).unwrap();
    assert_eq!(trace.as_array().unwrap().last().unwrap()["event_kind"], "BID_OFFER");
}

fn report_rows(dir: &Path) -> Vec<Vec<String>> {
    lines(&dir.join("attack_report.csv"))
        .iter()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn attack_fdi_and_madiot_directions() {
    let dir = tempfile::tempdir().unwrap();
    let out = plexisim(dir.path(), &["attack", "--attack", "fdi", "--fraction", "2", "--synthetic", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let header = &lines(&dir.path().join("attack_report.csv"))[0];
    assert_eq!(header, "time,original,attacked,df_original,df_attacked,flagged");
    let rows = report_rows(dir.path());
    assert_eq!(rows.len(), 96);
    for r in &rows {
        let (o, a): (f64, f64) = (r[3].parse().unwrap(), r[4].parse().unwrap());
        assert!(a >= o);
        assert_eq!(r[5], "true");
    }

    let out = plexisim(dir.path(), &["attack", "--attack", "madiot", "--synthetic", "2"]);
    assert!(out.status.success());
    for r in report_rows(dir.path()) {
        let (o, a): (f64, f64) = (r[3].parse().unwrap(), r[4].parse().unwrap());
        assert!(a <= o);
    }
}

#[test]
fn attack_ingestion_error_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    fs::write(&data, "time,net,tamb,hvac,hvac_demand_res\n2020-01-01T00:00:00,1,20,0,0\n2020-01-01T00:30:00,oops,20,0,0\n").unwrap();
    let cfg = dir.path().join("scenario.json");
    fs::write(&cfg, r#"{"seed": 1, "dataset": "bad.csv"}"#).unwrap();
    let out = plexisim(dir.path(), &["attack", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn bench_is_deterministic_and_ordered() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["bench", "--rates", "100,140,180", "--seed", "9"];
    assert!(plexisim(a.path(), &args).status.success());
    assert!(plexisim(b.path(), &args).status.success());
    for f in ["metrics_nft.csv", "metrics_certificate.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
    let summary: Value = serde_json::from_str(&fs::read_to_string(a.path().join("summary.json")).unwrap()).unwrap();
    assert!((summary["footprint_ratio"].as_f64().unwrap() - 0.667).abs() <= 0.001);
    let sat = |m: &str| summary["saturation"][m]["throughput_tps"].as_f64().unwrap();
    assert!(sat("nft") > sat("certificate"));
}

#[test]
fn bad_flags_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = plexisim(dir.path(), &["bench", "--mode", "x509"]);
    assert!(!out.status.success());
}
