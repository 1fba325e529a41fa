use std::path::{Path, PathBuf};
use std::process::Command;

use hqe::minisql::{canonical_digest, parse_sql};
use hqe::tpch;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hqe"))
}

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets")
}

fn only_session(dir: &Path) -> PathBuf {
    let mut it = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_dir());
    let s = it.next().expect("a session directory");
    assert!(it.next().is_none());
    assert!(s.file_name().unwrap().to_str().unwrap().starts_with("session-"));
    s
}

fn run(args: &[&str]) -> (i32, String) {
    let out = bin().args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn extract_writes_the_session_layout() {
    let out = tempfile::tempdir().unwrap();
    let cfg = assets().join("q0/q0.toml");
    let (code, _) = run(&["--config", cfg.to_str().unwrap(), "--out-dir", out.path().to_str().unwrap(), "extract"]);
    assert_eq!(code, 0);
    let s = only_session(out.path());
    for f in ["journal.jsonl", "seed.sql", "final.sql", "report.json", "prompts/round-01-IP.txt"] {
        assert!(s.join(f).exists(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(s.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["prompt_sequence"], serde_json::json!(["IP"]));
    assert_eq!(report["check"]["verdict"], "pass");
    let journal = std::fs::read_to_string(s.join("journal.jsonl")).unwrap();
    let n = report["xre"]["invocations"].as_u64().unwrap() + report["xfe"]["invocations"].as_u64().unwrap();
    assert_eq!(journal.lines().count() as u64, n);

    // the journal replays against a fresh oracle
    let (code, stdout) =
        run(&["--config", cfg.to_str().unwrap(), "--out-dir", out.path().to_str().unwrap(), "replay", s.join("journal.jsonl").to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("0 mismatches"));
}

#[test]
fn seed_only_stops_after_xre() {
    let out = tempfile::tempdir().unwrap();
    let cfg = assets().join("union/union.toml");
    let (code, _) = run(&["--config", cfg.to_str().unwrap(), "--out-dir", out.path().to_str().unwrap(), "seed-only"]);
    assert_eq!(code, 0);
    let s = only_session(out.path());
    assert!(s.join("seed.sql").exists());
    assert!(!s.join("final.sql").exists());
    let seed = std::fs::read_to_string(s.join("seed.sql")).unwrap();
    assert!(parse_sql(&seed).unwrap().is_union());
}

#[test]
fn check_exit_codes() {
    let out = tempfile::tempdir().unwrap();
    let cfg = assets().join("union/union.toml");
    let base = ["--config", cfg.to_str().unwrap(), "--out-dir", out.path().to_str().unwrap(), "--max-trials", "10"];
    let (code, _) = run(&[&base[..], &["check", tpch::UNION_FINAL_SQL]].concat());
    assert_eq!(code, 0);
    let (code, _) = run(&[&base[..], &["check", tpch::UNION_SEED_SQL]].concat());
    assert_eq!(code, 2);
    let bundle = std::fs::read_dir(out.path()).unwrap().map(|e| e.unwrap().path().join("counterexample")).find(|p| p.exists()).expect("a replay bundle");
    assert!(bundle.join("diff.txt").exists() && bundle.join("data/supplier.csv").exists());
}

#[test]
fn configuration_errors_exit_3() {
    let out = tempfile::tempdir().unwrap();
    let cfg = out.path().join("bad.toml");
    std::fs::write(&cfg, "[oracle]\nsql = \"SELECT c_name FROM customer\"\n").unwrap();
    let (code, _) = run(&["--config", cfg.to_str().unwrap(), "--out-dir", out.path().to_str().unwrap(), "seed-only"]);
    assert_eq!(code, 3);
    std::fs::write(&cfg, "[limits]\nunknown_knob = 1\n").unwrap();
    let (code, _) = run(&["--config", cfg.to_str().unwrap(), "extract"]);
    assert_eq!(code, 3);
}

#[test]
fn failed_refinement_exits_1() {
    let out = tempfile::tempdir().unwrap();
    let transcript = out.path().join("t.jsonl");
    std::fs::write(&transcript, "{\"round\": 1, \"reply_sql\": \"SELECT c_name FROM customer\"}\n").unwrap();
    let cfg = assets().join("q0/q0.toml");
    let (code, _) =
        run(&["--config", cfg.to_str().unwrap(), "--mock-transcript", transcript.to_str().unwrap(), "--out-dir", out.path().to_str().unwrap(), "extract"]);
    assert_eq!(code, 1);
}

#[test]
fn external_oracle_through_the_shim() {
    let out = tempfile::tempdir().unwrap();
    let cfg = assets().join("q0/q0.toml");
    let cmd = format!("{} oracle-shim --sql-file {}", env!("CARGO_BIN_EXE_hqe"), assets().join("q0/hidden.sql").display());
    let (code, stdout) = run(&["--config", cfg.to_str().unwrap(), "--oracle-cmd", &cmd, "--out-dir", out.path().to_str().unwrap(), "seed-only"]);
    assert_eq!(code, 0, "{stdout}");
    let seed = std::fs::read_to_string(only_session(out.path()).join("seed.sql")).unwrap();
    assert_eq!(canonical_digest(&parse_sql(&seed).unwrap()), canonical_digest(&parse_sql(&seed_q0()).unwrap()));
}

fn seed_q0() -> String {
    "SELECT c_name AS name, c_phone AS phone FROM customer, orders WHERE c_custkey = o_custkey AND c_acctbal <= 10000.00".into()
}

#[test]
fn gen_db_writes_csvs() {
    let out = tempfile::tempdir().unwrap();
    let target = out.path().join("db");
    let (code, _) = run(&["gen-db", "--seed", "4", "--out-dir", target.to_str().unwrap()]);
    assert_eq!(code, 0);
    let db = hqe::relcore::load::load_instance(tpch::catalog(), &target).unwrap();
    assert!(hqe::checker::referential_violations(&db).is_empty());
    assert_eq!(db.catalog().tables.len(), 8);
}

#[test]
fn corpus_table() {
    let out = tempfile::tempdir().unwrap();
    let json = out.path().join("rows.json");
    let (code, stdout) = run(&["corpus", "nested", "--count", "8", "--json", json.to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("8 queries, 8 pass"));
    let rows: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 8);
}
