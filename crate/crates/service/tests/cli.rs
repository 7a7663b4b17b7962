//! The `kgqa` binary end to end.

mod common;

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use common::Fixture;
use serde_json::Value;

fn kgqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgqa")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn usage_errors_exit_2_and_help_exits_0() {
    assert_eq!(kgqa(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(kgqa(&["ingest", "--kg", "x.nt"]).status.code(), Some(2));
    assert_eq!(kgqa(&["eval", "--workspace", "w", "--benchmark", "b", "--configs", "sql,graph"]).status.code(), Some(1));
    let help = kgqa(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("ingest"));
}

#[test]
fn malformed_ntriples_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let kg = dir.path().join("bad.nt");
    std::fs::write(
        &kg,
        "<http://x/a> <http://x/p> \"ok\" .\n\n<http://x/b> <http://x/p> \"unterminated .\n",
    )
    .unwrap();
    let out = kgqa(&["ingest", "--kg", p(&kg), "--out", p(&dir.path().join("ws"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.starts_with("error: "), "{err}");
    assert!(err.contains("line 3"), "{err}");
    assert!(!dir.path().join("ws").join("kg.db").exists());
}

#[test]
fn fixture_ingest_verbalize_induce() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx");
    assert!(kgqa(&["gen-fixture", "--out", p(&fx)]).status.success());

    let ws = dir.path().join("ws");
    let out = kgqa(&[
        "--json", "ingest", "--kg", p(&fx.join("kg.nt")), "--docs", p(&fx.join("docs")),
        "--profiles", p(&fx.join("profiles.json")), "--out", p(&ws),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["summary"]["tables"], 7);
    assert_eq!(summary["summary"]["kgPassages"], 466);
    for file in ["kg.db", "ddl.sql", "passages.jsonl", "profiles.json", "schema-report.json"] {
        assert!(ws.join(file).exists(), "{file}");
    }

    let passages = dir.path().join("passages.jsonl");
    let out = kgqa(&["verbalize", "--kg", p(&fx.join("kg.nt")), "--out", p(&passages), "--acronym", "bmw=BMW"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&passages).unwrap();
    assert_eq!(text.lines().count(), 466);

    let db = dir.path().join("only.db");
    let out = kgqa(&["induce", "--kg", p(&fx.join("kg.nt")), "--db", p(&db)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let ddl = String::from_utf8(out.stdout).unwrap();
    assert_eq!(ddl.matches("CREATE TABLE").count(), 7);
    assert!(db.exists());
}

#[test]
fn eval_writes_a_deterministic_report() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx");
    assert!(kgqa(&["gen-fixture", "--out", p(&fx)]).status.success());
    let ws = dir.path().join("ws");
    let out = kgqa(&[
        "ingest", "--kg", p(&fx.join("kg.nt")), "--docs", p(&fx.join("docs")),
        "--profiles", p(&fx.join("profiles.json")), "--out", p(&ws),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let run = |name: &str| {
        let report = dir.path().join(name);
        let out = kgqa(&[
            "eval", "--workspace", p(&ws), "--benchmark", p(&fx.join("benchmark.jsonl")),
            "--configs", "sql,text,both", "--report", p(&report), "--virtual-clock",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(String::from_utf8_lossy(&out.stdout).contains("accuracy"));
        std::fs::read(report).unwrap()
    };
    let a = run("a.json");
    assert_eq!(a, run("b.json"));
    let report: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["perConfiguration"].as_array().unwrap().len(), 3);
}

#[test]
fn serve_reads_workspace_and_port_from_the_environment() {
    let fx = Fixture::ingested(None);
    let mut child = Command::new(env!("CARGO_BIN_EXE_kgqa"))
        .args(["--json", "serve"])
        .env("KGQA_WORKSPACE", &fx.workspace)
        .env("KGQA_PORT", "0")
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let info: Value = serde_json::from_str(&line).unwrap();
    let port = info["port"].as_u64().unwrap();
    assert_ne!(port, 0);
    let health: Value = ureq::get(&format!("http://127.0.0.1:{port}/health"))
        .call()
        .unwrap()
        .into_json()
        .unwrap();
    assert_eq!(health["status"], "ok");
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(fx.store_path().exists());
}
