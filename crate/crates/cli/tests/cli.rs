use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pbrs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pbrs")).args(args).output().unwrap()
}

fn json_ok(args: &[&str]) -> Value {
    let mut full = vec!["--format", "json"];
    full.extend_from_slice(args);
    let out = pbrs(&full);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn pseudo_random(len: usize, mut seed: u64) -> Vec<u8> {
    (0..len)
        .map(|_| {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 33) as u8
        })
        .collect()
}

fn encode_mib(dir: &Path, codec: &str) -> Value {
    let input = dir.join("in.bin");
    fs::write(&input, pseudo_random(1 << 20, 5)).unwrap();
    let out = dir.join("blocks");
    json_ok(&[
        "encode",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--block-size",
        "65536",
        "--codec",
        codec,
    ])
}

fn manifest(dir: &Path, stripe: usize) -> String {
    dir.join(format!("blocks/in.bin-{stripe:06}.manifest.json"))
        .to_string_lossy()
        .into_owned()
}

fn block(dir: &Path, stripe: usize, i: usize) -> std::path::PathBuf {
    dir.join(format!("blocks/in.bin-{stripe:06}.{i}.blk"))
}

#[test]
fn encode_reports_stripes_and_overhead() {
    let dir = tempfile::tempdir().unwrap();
    let v = encode_mib(dir.path(), "piggybacked-rs");
    assert_eq!(v["stripes"], 2);
    assert_eq!(v["overhead"], 1.4);

    let empty = dir.path().join("empty");
    fs::write(&empty, b"").unwrap();
    let v = json_ok(&[
        "encode",
        empty.to_str().unwrap(),
        "-o",
        dir.path().join("e").to_str().unwrap(),
    ]);
    assert_eq!(v["stripes"], 0);
    let index: Value = serde_json::from_slice(&fs::read(dir.path().join("e/empty.index.json")).unwrap()).unwrap();
    assert_eq!(index["stripes"], Value::Array(vec![]));
}

#[test]
fn repair_prints_ledger_and_restores_block() {
    let dir = tempfile::tempdir().unwrap();
    encode_mib(dir.path(), "piggybacked-rs");
    let original = fs::read(block(dir.path(), 0, 2)).unwrap();
    fs::remove_file(block(dir.path(), 0, 2)).unwrap();
    let v = json_ok(&["repair", &manifest(dir.path(), 0), "--missing", "2"]);
    assert_eq!(v["ratio_vs_rs"], 0.7);
    assert_eq!(v["total_bytes"], 14 * 32768);
    assert_eq!(fs::read(block(dir.path(), 0, 2)).unwrap(), original);

    let rs_dir = tempfile::tempdir().unwrap();
    encode_mib(rs_dir.path(), "rs");
    fs::remove_file(block(rs_dir.path(), 1, 2)).unwrap();
    let v = json_ok(&["repair", &manifest(rs_dir.path(), 1), "--missing", "2"]);
    assert_eq!(v["ratio_vs_rs"], 1.0);
}

#[test]
fn five_lost_blocks_are_unrecoverable() {
    let dir = tempfile::tempdir().unwrap();
    encode_mib(dir.path(), "piggybacked-rs");
    for i in [0, 3, 6, 9, 12] {
        fs::remove_file(block(dir.path(), 0, i)).unwrap();
    }
    let out = pbrs(&["repair", &manifest(dir.path(), 0), "--missing", "0"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn verify_detects_damage() {
    let dir = tempfile::tempdir().unwrap();
    encode_mib(dir.path(), "piggybacked-rs");
    let v = json_ok(&["verify", &manifest(dir.path(), 1)]);
    assert_eq!(v["ok"], true);
    let path = block(dir.path(), 1, 11);
    let mut b = fs::read(&path).unwrap();
    b[77] ^= 0x10;
    fs::write(&path, b).unwrap();
    let out = pbrs(&["--format", "json", "verify", &manifest(dir.path(), 1)]);
    assert_eq!(out.status.code(), Some(5));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["crc_mismatches"], serde_json::json!([11]));
}

#[test]
fn decode_round_trips_with_missing_block() {
    let dir = tempfile::tempdir().unwrap();
    encode_mib(dir.path(), "piggybacked-rs");
    fs::remove_file(block(dir.path(), 0, 4)).unwrap();
    let out = dir.path().join("back.bin");
    json_ok(&[
        "decode",
        dir.path().join("blocks/in.bin.index.json").to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(fs::read(out).unwrap(), fs::read(dir.path().join("in.bin")).unwrap());
}

#[test]
fn bundled_calibration_saves_over_fifty_tb() {
    let v = json_ok(&["simulate"]);
    let flat = v["summary"]["median_flat_savings_tb"].as_f64().unwrap();
    let implemented = v["summary"]["median_savings_tb"].as_f64().unwrap();
    assert!(flat > 50.0, "{flat}");
    assert!(implemented < flat);
}

#[test]
fn zero_days_is_an_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let v = json_ok(&["simulate", "--days", "0", "--report", report.to_str().unwrap()]);
    assert_eq!(v["summary"]["days"], 0);
    let saved: Value = serde_json::from_slice(&fs::read(report).unwrap()).unwrap();
    assert_eq!(saved["days"], Value::Array(vec![]));
}

#[test]
fn same_seed_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<String> = (0..2)
        .map(|i| dir.path().join(format!("r{i}.json")).to_string_lossy().into_owned())
        .collect();
    for p in &paths {
        json_ok(&[
            "simulate",
            "--days",
            "3",
            "--seed",
            "17",
            "--desk-scale",
            "100",
            "--report",
            p,
        ]);
    }
    assert_eq!(fs::read(&paths[0]).unwrap(), fs::read(&paths[1]).unwrap());
    let v = json_ok(&["report", &paths[0]]);
    assert_eq!(v["summary"]["days"], 3);
}

#[test]
fn trace_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    fs::write(
        &trace,
        "timestamp,node_id,event\n2013-02-01T00:00:00Z,4,down\nnot-a-time,4,up\n",
    )
    .unwrap();
    let out = pbrs(&["simulate", "--trace", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn generated_trace_feeds_the_simulator() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    json_ok(&["gen-trace", "--days", "2", "--seed", "9", "-o", trace.to_str().unwrap()]);
    let text = fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("timestamp,node_id,event\n"));
    let out = pbrs(&[
        "--format",
        "csv",
        "simulate",
        "--trace",
        trace.to_str().unwrap(),
        "--desk-scale",
        "100",
    ]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(pbrs(&["encode"]).status.code(), Some(2));
    assert_eq!(pbrs(&["simulate", "--k", "0"]).status.code(), Some(2));
    assert_eq!(pbrs(&["simulate", "--racks", "5"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x");
    fs::write(&input, b"abc").unwrap();
    let out = pbrs(&["encode", input.to_str().unwrap(), "-o", "o", "--partition", "0,0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_is_an_io_error() {
    assert_eq!(
        pbrs(&["encode", "/nonexistent/file", "-o", "/tmp/x"]).status.code(),
        Some(1)
    );
}
