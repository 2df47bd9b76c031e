//! End-to-end runs of the `specrag` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn specrag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specrag"))
        .args(args)
        .env_remove("SPECRAG_EMBED_ENDPOINT")
        .env_remove("SPECRAG_RERANK_ENDPOINT")
        .env_remove("SPECRAG_LLM_ENDPOINT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = specrag(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a planted corpus and ingests it; returns (dir, index path).
fn planted(docs: &str, questions: &str) -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--out", s(dir.path()), "--docs", docs, "--questions", questions, "--seed", "5"]);
    let index = dir.path().join("index.srix");
    ok(&["ingest", "--corpus", s(&dir.path().join("corpus")), "--index-out", s(&index)]);
    (dir, index)
}

#[test]
fn ingest_is_idempotent_and_counts_match() {
    let (dir, index) = planted("3", "6");
    let again = dir.path().join("again.srix");
    let summary: Value = serde_json::from_str(&ok(&[
        "ingest",
        "--corpus",
        s(&dir.path().join("corpus")),
        "--index-out",
        s(&again),
        "--json",
    ]))
    .unwrap();
    assert_eq!(std::fs::read(&index).unwrap(), std::fs::read(&again).unwrap());
    let lines = ok(&["chunk-inspect", "--corpus", s(&dir.path().join("corpus"))]);
    assert_eq!(summary["docs"], 3);
    assert_eq!(summary["chunks"].as_u64().unwrap() as usize, lines.lines().count());
    let first: Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(first["chunk_id"], "doc-0000#0");
    assert!(first["sentence_range"].is_array());
}

#[test]
fn io_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let out = specrag(&["ingest", "--corpus", s(&missing), "--index-out", s(&dir.path().join("i"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("i").exists());

    let idx = dir.path().join("missing.srix");
    let out = specrag(&["query", "--index", s(&idx), "--question", "q"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(s(&idx)));

    let out = specrag(&["ablate", "--dataset", "x.json"]);
    assert_eq!(out.status.code(), Some(2), "missing --grid is a usage error");
}

#[test]
fn query_reports_gold_option_and_provenance() {
    let (dir, index) = planted("4", "8");
    let first: Value =
        serde_json::from_str(std::fs::read_to_string(dir.path().join("questions.jsonl")).unwrap().lines().next().unwrap())
            .unwrap();
    let gold: Value =
        serde_json::from_str(std::fs::read_to_string(dir.path().join("gold.jsonl")).unwrap().lines().next().unwrap())
            .unwrap();
    let mut args = vec!["query", "--index", s(&index), "--question", first["question"].as_str().unwrap(), "--json"];
    let options: Vec<String> = first["options"].as_array().unwrap().iter().map(|o| o.as_str().unwrap().to_string()).collect();
    for o in &options {
        args.push("--option");
        args.push(o);
    }
    let out: Value = serde_json::from_str(&ok(&args)).unwrap();
    assert_eq!(out["answer_index"].as_u64().unwrap() + 1, first["answer"].as_u64().unwrap());
    let top = &out["contexts"][0];
    assert_eq!(top["doc_id"], gold["doc_id"]);
    assert!(top["text"].as_str().unwrap().contains(out["answer"].as_str().unwrap()));

    args.push("--no-context");
    let out: Value = serde_json::from_str(&ok(&args)).unwrap();
    assert_eq!(out["contexts"].as_array().unwrap().len(), 0);
    assert_eq!(out["answer_index"], 0);
}

#[test]
fn eval_and_ablate_reports() {
    let (dir, index) = planted("5", "20");
    let report = dir.path().join("report.json");
    ok(&[
        "eval",
        "--index",
        s(&index),
        "--dataset",
        s(&dir.path().join("questions.jsonl")),
        "--gold",
        s(&dir.path().join("gold.jsonl")),
        "--stub-generator",
        "--out",
        s(&report),
    ]);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["accuracy"], 1.0);
    assert_eq!(r["recall_at_15"], 1.0);
    assert!(r.get("latency").is_none());

    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "ablate",
            "--corpus",
            s(&dir.path().join("corpus")),
            "--dataset",
            s(&dir.path().join("questions.jsonl")),
            "--grid",
            "RR,SC",
            "--seed",
            "7",
            "--stub-generator",
            "--stub-scorer",
            "--jobs",
            "2",
            "--out",
            s(&out),
        ]);
        std::fs::read(out).unwrap()
    };
    let a = run("a.json");
    assert_eq!(a, run("b.json"));
    let reports: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 4);
}

#[test]
fn malformed_dataset_names_item() {
    let (dir, index) = planted("2", "2");
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"[{"question": "q?", "options": ["a", "b"], "answer": 1}, {"question": "q?", "options": ["a", "b"], "answer": 9}]"#,
    )
    .unwrap();
    let out = specrag(&["eval", "--index", s(&index), "--dataset", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("item 1"));
}

#[test]
fn failed_generations_exit_one() {
    let (dir, index) = planted("2", "3");
    let out = specrag(&[
        "eval",
        "--index",
        s(&index),
        "--dataset",
        s(&dir.path().join("questions.jsonl")),
        "--generator",
        "http",
        "--llm-endpoint",
        "http://127.0.0.1:9",
        "--json",
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["failed"], 3);
    assert_eq!(r["unparsable"], 3);
    assert_eq!(r["accuracy"], 0.0);
}
