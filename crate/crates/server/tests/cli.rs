#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixtures_dir;
use serde_json::Value;

fn bin(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_haptic-agent"))
        .arg("--store")
        .arg(store)
        .args(args)
        .env_remove("RUST_LOG")
        .env("HAPTIC_SCHOLAR_FIXTURE", fixtures_dir().join("scholar_metadata.json"))
        .output()
        .expect("binary runs")
}

fn ok(store: &Path, args: &[&str]) -> String {
    let out = bin(store, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn corpus() -> String {
    fixtures_dir().join("corpus.json").to_string_lossy().into_owned()
}

#[test]
fn stats_count_matches_fixture_entries() {
    let store = tempfile::tempdir().unwrap();
    let out = ok(store.path(), &["db", "stats", "--corpus", &corpus()]);
    let entries = common::raw_entries().len();
    assert!(out.lines().any(|l| l == format!("devices: {entries}")), "{out}");
    assert!(out.contains("41 machine, 18 usage, 12 context"));
}

#[test]
fn query_is_deterministic_and_leaves_no_trace() {
    let store = tempfile::tempdir().unwrap();
    let args = ["query", "a grounded device with 6 DOF for surgical training", "--corpus", &corpus()];
    let a = ok(store.path(), &args);
    let b = ok(store.path(), &args);
    assert_eq!(a, b);
    assert!(!a.contains("[device:"), "markers must be resolved: {a}");
    assert!(a.contains("Recommendations:"));
    assert!(a.contains("https://"));
    assert_eq!(std::fs::read_dir(store.path()).unwrap().count(), 0);
}

#[test]
fn named_sessions_continue_across_runs() {
    let store = tempfile::tempdir().unwrap();
    let c = corpus();
    let first: Value =
        serde_json::from_str(&ok(store.path(), &["query", "a wearable glove", "--session", "demo", "--corpus", &c, "--json"])).unwrap();
    let second: Value = serde_json::from_str(&ok(
        store.path(),
        &["query", "what's the weather like?", "--session", "demo", "--corpus", &c, "--json"],
    ))
    .unwrap();
    let earlier: Vec<&Value> = first["recommendations"].as_array().unwrap().iter().map(|r| &r["id"]).collect();
    let later = second["recommendations"].as_array().unwrap();
    assert!(!later.is_empty());
    assert!(later.iter().all(|r| earlier.contains(&&r["id"])));
    assert!(store.path().join("sessions/demo.jsonl").exists());
}

#[test]
fn import_then_export_round_trips() {
    let store = tempfile::tempdir().unwrap();
    let out = store.path().join("out.json");
    ok(store.path(), &["import", &corpus()]);
    ok(store.path(), &["export", out.to_str().unwrap()]);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), common::corpus_json());
}

#[test]
fn import_can_embed_missing_vectors() {
    let store = tempfile::tempdir().unwrap();
    let mut entries = common::raw_entries();
    for e in &mut entries {
        e.as_object_mut().unwrap().remove("embedding");
    }
    let bare = store.path().join("bare.json");
    std::fs::write(&bare, serde_json::to_string(&entries).unwrap()).unwrap();
    let report = ok(store.path(), &["import", bare.to_str().unwrap(), "--embed-missing"]);
    assert!(report.contains(&format!("({} embedded now)", entries.len())), "{report}");
    let out = store.path().join("out.json");
    ok(store.path(), &["export", out.to_str().unwrap()]);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), common::corpus_json());
}

fn ingest_all(store: &Path) -> String {
    let manifest = fixtures_dir().join("documents/manifest.json");
    ok(store, &["ingest", "--manifest", manifest.to_str().unwrap()]);
    for id in 1..=4 {
        ok(store, &["review", "approve", &id.to_string()]);
    }
    let out = store.join("export.json");
    ok(store, &["export", out.to_str().unwrap()]);
    std::fs::read_to_string(out).unwrap()
}

#[test]
fn cli_ingestion_is_idempotent() {
    let a = tempfile::tempdir().unwrap();
    let first = ingest_all(a.path());
    assert_eq!(ingest_all(a.path()), first);
    let b = tempfile::tempdir().unwrap();
    assert_eq!(ingest_all(b.path()), first);
    let exported: Vec<Value> = serde_json::from_str(&first).unwrap();
    assert_eq!(exported.len(), 4);
    assert!(exported.iter().all(|e| e["embedding"].is_string()));
}

#[test]
fn review_flow() {
    let store = tempfile::tempdir().unwrap();
    let doc = fixtures_dir().join("documents/gannet_arm.txt");
    let staged = ok(
        store.path(),
        &["ingest", doc.to_str().unwrap(), "--source-kind", "commercial", "--uri", "https://example.com/products/gannet-arm"],
    );
    assert_eq!(staged.trim(), "staged 1 https://example.com/products/gannet-arm");
    let listed = ok(store.path(), &["review", "list"]);
    assert!(listed.contains("dof = 6  {6:4, 7:1}"), "{listed}");

    let bad = bin(store.path(), &["review", "correct", "1", "--set", "dof=many"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("error: bad_request"));

    let done = ok(store.path(), &["review", "correct", "1", "--set", "dof=7", "--set", "manufacturer="]);
    assert_eq!(done.trim(), "corrected 1 Gannet Teleoperation Arm");
    assert_eq!(ok(store.path(), &["review", "list"]).trim(), "no drafts awaiting review");

    let again = bin(store.path(), &["review", "approve", "1"]);
    assert!(!again.status.success());
    assert!(String::from_utf8_lossy(&again.stderr).contains("error: conflict"));
    let missing = bin(store.path(), &["review", "approve", "99"]);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error: not_found"));

    let stats = ok(store.path(), &["db", "stats"]);
    assert!(stats.contains("devices: 1\nembedded: 1\napproved: 1\npending_review: 0"), "{stats}");
}

#[test]
fn bad_input_exits_nonzero() {
    let store = tempfile::tempdir().unwrap();
    let out = bin(store.path(), &["query", "   ", "--corpus", &corpus()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).lines().any(|l| l.starts_with("error: bad_request")));
    let out = bin(store.path(), &["ingest", "notes.pdf", "--source-kind", "commercial"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--kind"));
}
