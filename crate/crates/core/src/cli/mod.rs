//! The `hqe` command line: session setup, the XRE → XFE → checker
//! pipeline, and the replay, generator and corpus utilities.
//!
//! Exit codes: 0 success, 1 extraction failure, 2 checker counterexample,
//! 3 configuration or scope error.

pub mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

pub use config::{Config, ConfigError};

use crate::checker::{gen_random_db, result_equivalent, write_replay_bundle, Hints, Verdict};
use crate::corpus::{corpus_instance, flat_suite, nested_suite, run_suite};
use crate::minisql::{parse_sql, render_pretty, render_sql, QueryIR};
use crate::oracle::{read_journal, replay, JournalRecord, OracleHandle};
use crate::relcore::load::dump_instance;
use crate::xfe::{prompt_bundle, run_xfe, XfeOutcome, XfeReport};
use crate::xre::{extract_seed, ExtractionReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_COUNTEREXAMPLE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hqe", version, about = "Extract the SQL query hidden in an opaque executable")]
pub struct Cli {
    /// TOML session configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// External executable acting as the oracle; overrides [oracle].
    #[arg(long, global = true)]
    pub oracle_cmd: Option<String>,
    /// Scripted chat transcript (JSON Lines); overrides [llm].
    #[arg(long, global = true)]
    pub mock_transcript: Option<PathBuf>,
    /// Randomized checker trials; overrides [checker].trials.
    #[arg(long, global = true)]
    pub max_trials: Option<usize>,
    /// Checker and generator seed; overrides [checker].seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parent of session directories, or the target of gen-db.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full pipeline: seed extraction, refinement, randomized check.
    Extract,
    /// Seed extraction only.
    SeedOnly,
    /// Check a candidate query against the oracle on random instances.
    Check {
        /// SQL text or a file holding it.
        query: String,
    },
    /// Re-run a session journal against the oracle and compare digests.
    Replay { journal: PathBuf },
    /// Write a random instance of the schema as CSV files.
    GenDb,
    /// Extract every query of a generated corpus and tabulate the outcome.
    Corpus {
        #[arg(value_parser = ["flat", "nested"], default_value = "flat")]
        kind: String,
        #[arg(long, default_value_t = 200)]
        count: usize,
        /// Write the table as JSON to this file as well.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Serve the oracle line protocol for a query on stdin/stdout.
    #[command(hide = true)]
    OracleShim {
        #[arg(long)]
        sql: Option<String>,
        #[arg(long)]
        sql_file: Option<PathBuf>,
    },
}

/// Errors carrying their exit code.
#[derive(Debug)]
pub struct Exit {
    pub code: i32,
    pub message: String,
}

impl Exit {
    fn config(m: impl std::fmt::Display) -> Self {
        Exit { code: EXIT_CONFIG, message: m.to_string() }
    }
}

impl From<ConfigError> for Exit {
    fn from(e: ConfigError) -> Self {
        Exit::config(e)
    }
}

impl From<std::io::Error> for Exit {
    fn from(e: std::io::Error) -> Self {
        Exit::config(format!("io: {e}"))
    }
}

fn resolve_config(cli: &Cli) -> Result<Config, Exit> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(c) = &cli.oracle_cmd {
        cfg.oracle.command = Some(c.clone());
    }
    if let Some(t) = &cli.mock_transcript {
        // flag paths are relative to the working directory
        cfg.llm.mock_transcript = Some(std::path::absolute(t)?);
    }
    if let Some(n) = cli.max_trials {
        cfg.checker.trials = n;
    }
    if let Some(s) = cli.seed {
        cfg.checker.seed = s;
    }
    Ok(cfg)
}

/// A fresh `session-<timestamp>/` under `parent`.
pub fn create_session_dir(parent: &Path) -> std::io::Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%3fZ").to_string();
    let mut dir = parent.join(format!("session-{stamp}"));
    let mut n = 1;
    while dir.exists() {
        dir = parent.join(format!("session-{stamp}-{n}"));
        n += 1;
    }
    fs::create_dir_all(dir.join("prompts"))?;
    Ok(dir)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct PhaseStat {
    pub invocations: usize,
    /// Time spent inside the oracle.
    pub oracle_ms: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ModuleStat {
    pub wall_ms: f64,
    pub invocations: usize,
    /// Journal phases, grouped by their first two components.
    pub phases: BTreeMap<String, PhaseStat>,
}

impl ModuleStat {
    fn from_records(records: &[JournalRecord], wall: std::time::Duration) -> Self {
        let mut phases: BTreeMap<String, PhaseStat> = BTreeMap::new();
        for r in records {
            let key = r.phase.split('.').take(2).collect::<Vec<_>>().join(".");
            let e = phases.entry(key).or_default();
            e.invocations += 1;
            e.oracle_ms += r.elapsed_us as f64 / 1000.0;
        }
        ModuleStat { wall_ms: wall.as_secs_f64() * 1000.0, invocations: records.len(), phases }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CheckStat {
    pub wall_ms: f64,
    pub invocations: usize,
    pub trials: usize,
    pub seed: u64,
    pub verdict: String,
    pub detail: Option<String>,
}

#[derive(Debug, Default, Serialize)]
pub struct SessionReport {
    pub command: String,
    pub exit_code: i32,
    pub oracle: String,
    pub seed_sql: Option<String>,
    pub final_sql: Option<String>,
    pub xre: Option<ModuleStat>,
    pub xfe: Option<ModuleStat>,
    pub llm_rounds: usize,
    pub prompt_sequence: Vec<String>,
    pub xfe_outcome: Option<String>,
    pub check: Option<CheckStat>,
    pub total_wall_ms: f64,
    pub error: Option<String>,
    pub extraction: Option<ExtractionReport>,
    pub refinement: Option<XfeReport>,
}

fn oracle_kind(cfg: &Config) -> String {
    match &cfg.oracle.command {
        Some(c) => format!("external: {c}"),
        None => "embedded".into(),
    }
}

fn write_sql(path: &Path, q: &QueryIR) -> std::io::Result<()> {
    fs::write(path, format!("{}\n", render_pretty(q)))
}

/// Runs one command and returns its exit code; diagnostics go to stderr.
pub fn run(cli: Cli) -> i32 {
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("hqe: {}", e.message);
            e.code
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32, Exit> {
    match &cli.command {
        Command::OracleShim { sql, sql_file } => {
            let text = match (sql, sql_file) {
                (Some(s), None) => s.clone(),
                (None, Some(p)) => fs::read_to_string(p)?,
                _ => return Err(Exit::config("oracle-shim takes exactly one of --sql, --sql-file")),
            };
            let stdin = std::io::stdin();
            crate::oracle::external::serve_shim(&text, stdin.lock(), std::io::stdout())?;
            Ok(EXIT_OK)
        }
        Command::Extract => extract(cli, true),
        Command::SeedOnly => extract(cli, false),
        Command::Check { query } => check(cli, query),
        Command::Replay { journal } => replay_cmd(cli, journal),
        Command::GenDb => gen_db(cli),
        Command::Corpus { kind, count, json } => corpus(cli, kind, *count, json.as_deref()),
    }
}

fn out_parent(cli: &Cli) -> PathBuf {
    cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn finish(dir: &Path, report: &SessionReport) -> Result<i32, Exit> {
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(report).expect("report serializes"))?;
    println!("session: {}", dir.display());
    Ok(report.exit_code)
}

fn extract(cli: &Cli, full: bool) -> Result<i32, Exit> {
    let cfg = resolve_config(cli)?;
    let mut db = cfg.instance()?;
    // fail on configuration before any probing
    let description = if full { Some(cfg.description()?) } else { None };
    let mut client = if full { Some(cfg.client()?) } else { None };
    let dir = create_session_dir(&out_parent(cli))?;
    let mut h = cfg.oracle(&dir)?;
    h.persist_to(&dir.join("journal.jsonl"))?;
    let total = Instant::now();
    let mut report = SessionReport { command: if full { "extract" } else { "seed-only" }.into(), oracle: oracle_kind(&cfg), ..Default::default() };

    let t = Instant::now();
    let extracted = extract_seed(&mut h, &mut db, &cfg.xre());
    report.xre = Some(ModuleStat::from_records(h.journal(), t.elapsed()));
    let (seed, xre_report) = match extracted {
        Ok(x) => x,
        Err(e) => {
            report.exit_code = EXIT_CONFIG;
            report.error = Some(format!("extraction: {e}"));
            eprintln!("hqe: extraction: {e}");
            report.total_wall_ms = total.elapsed().as_secs_f64() * 1000.0;
            return finish(&dir, &report);
        }
    };
    write_sql(&dir.join("seed.sql"), &seed)?;
    report.seed_sql = Some(render_sql(&seed));
    report.extraction = Some(xre_report);
    if !full {
        report.total_wall_ms = total.elapsed().as_secs_f64() * 1000.0;
        println!("{}", render_pretty(&seed));
        return finish(&dir, &report);
    }

    let xre_count = h.invocation_count();
    let t = Instant::now();
    h.set_phase("xfe.r_h");
    let r_h = h.invoke(&db).map_err(|e| Exit { code: EXIT_FAILURE, message: format!("oracle on D_I: {e}") })?;
    let schema_ddl = db.catalog().to_ddl();
    let bundle = prompt_bundle(&description.expect("full run"), &schema_ddl, &seed, &r_h, &db).map_err(Exit::config)?;
    let xfe = run_xfe(client.as_deref_mut().expect("full run"), &db, &seed, &r_h, &bundle, &cfg.xfe());
    report.xfe = Some(ModuleStat::from_records(&h.journal()[xre_count..], t.elapsed()));
    let xfe = match xfe {
        Ok(x) => x,
        Err(e) => {
            report.exit_code = EXIT_FAILURE;
            report.error = Some(format!("refinement: {e}"));
            report.total_wall_ms = total.elapsed().as_secs_f64() * 1000.0;
            return finish(&dir, &report);
        }
    };
    for r in &xfe.refine.rounds {
        let stem = format!("round-{:02}-{}", r.round, r.kind.tag());
        fs::write(dir.join("prompts").join(format!("{stem}.txt")), &r.prompt)?;
        fs::write(dir.join("prompts").join(format!("{stem}.reply.txt")), &r.reply)?;
    }
    report.llm_rounds = xfe.refine.rounds.len();
    report.prompt_sequence = xfe.refine.sequence().iter().map(|s| s.to_string()).collect();
    let final_q = match (&xfe.outcome, xfe.query.clone()) {
        (XfeOutcome::Failure { reason }, _) => Err(reason.clone()),
        (_, None) => Err("no final query".to_string()),
        (_, Some(q)) => Ok(q),
    };
    report.refinement = Some(xfe);
    let final_q = match final_q {
        Ok(q) => q,
        Err(reason) => {
            report.xfe_outcome = Some(format!("failure: {reason}"));
            report.exit_code = EXIT_FAILURE;
            report.error = Some(format!("refinement failed: {reason}"));
            eprintln!("hqe: refinement failed: {reason}");
            report.total_wall_ms = total.elapsed().as_secs_f64() * 1000.0;
            return finish(&dir, &report);
        }
    };
    report.xfe_outcome = Some(match &report.refinement.as_ref().expect("set above").outcome {
        XfeOutcome::Llm { .. } => "llm".into(),
        XfeOutcome::Combinatorial { tried, skeleton, .. } => format!("combinatorial ({skeleton}, {tried} candidates)"),
        XfeOutcome::Failure { reason } => format!("failure: {reason}"),
    });
    write_sql(&dir.join("final.sql"), &final_q)?;
    report.final_sql = Some(render_sql(&final_q));
    println!("{}", render_pretty(&final_q));

    let check_cfg = cfg.check()?;
    let (stat, code) = run_check(&mut h.fresh(), &final_q, &db, &check_cfg, &dir)?;
    report.check = Some(stat);
    report.exit_code = code;
    report.total_wall_ms = total.elapsed().as_secs_f64() * 1000.0;
    finish(&dir, &report)
}

/// Runs the checker and writes a replay bundle on a counterexample.
fn run_check(
    h: &mut OracleHandle,
    qe: &QueryIR,
    db: &crate::relcore::DatabaseState,
    cfg: &crate::checker::CheckConfig,
    dir: &Path,
) -> Result<(CheckStat, i32), Exit> {
    let t = Instant::now();
    h.set_phase("check");
    let verdict = result_equivalent(h, qe, db.catalog(), cfg);
    let mut stat = CheckStat { seed: cfg.seed, invocations: h.invocation_count(), ..Default::default() };
    let code = match verdict {
        Ok(Verdict::Pass { trials, skipped }) => {
            stat.trials = trials;
            stat.verdict = "pass".into();
            if !skipped.is_empty() {
                stat.detail = Some(format!("{} trials skipped on oracle errors", skipped.len()));
            }
            println!("check: pass ({trials} trials)");
            EXIT_OK
        }
        Ok(Verdict::Counterexample(cex)) => {
            stat.trials = cex.trial + 1;
            stat.verdict = "counterexample".into();
            stat.detail = Some(cex.summary());
            write_replay_bundle(&dir.join("counterexample"), qe, db.catalog(), &cex, &cfg.profile)?;
            println!("check: counterexample on {}", cex.summary());
            EXIT_COUNTEREXAMPLE
        }
        Err(e) => {
            stat.verdict = "error".into();
            stat.detail = Some(e.to_string());
            eprintln!("hqe: check: {e}");
            EXIT_FAILURE
        }
    };
    stat.wall_ms = t.elapsed().as_secs_f64() * 1000.0;
    Ok((stat, code))
}

fn check(cli: &Cli, query: &str) -> Result<i32, Exit> {
    let cfg = resolve_config(cli)?;
    let text = if Path::new(query).is_file() { fs::read_to_string(query)? } else { query.to_string() };
    let qe = parse_sql(&text).map_err(|e| Exit::config(format!("candidate: {e}")))?;
    // the instance only supplies the catalog here
    let db = cfg.instance().or_else(|_| cfg.catalog().map(crate::relcore::DatabaseState::new))?;
    let check_cfg = cfg.check()?;
    let dir = create_session_dir(&out_parent(cli))?;
    let mut h = cfg.oracle(&dir)?;
    let total = Instant::now();
    let (stat, code) = run_check(&mut h, &qe, &db, &check_cfg, &dir)?;
    fs::write(dir.join("final.sql"), format!("{}\n", render_pretty(&qe)))?;
    let report = SessionReport {
        command: "check".into(),
        exit_code: code,
        oracle: oracle_kind(&cfg),
        final_sql: Some(render_sql(&qe)),
        check: Some(stat),
        total_wall_ms: total.elapsed().as_secs_f64() * 1000.0,
        ..Default::default()
    };
    finish(&dir, &report)
}

fn replay_cmd(cli: &Cli, journal: &Path) -> Result<i32, Exit> {
    let cfg = resolve_config(cli)?;
    let db = cfg.instance()?;
    let records = read_journal(journal)?;
    let scratch = tempdir_under(&out_parent(cli))?;
    let mut h = cfg.oracle(&scratch)?;
    let rep = replay(&records, &db, &mut h).map_err(Exit::config)?;
    let _ = fs::remove_dir_all(&scratch);
    println!("replayed {} invocations, {} mismatches", rep.checked, rep.mismatches.len());
    if rep.ok() {
        Ok(EXIT_OK)
    } else {
        println!("mismatching records: {:?}", rep.mismatches);
        Ok(EXIT_FAILURE)
    }
}

fn tempdir_under(parent: &Path) -> std::io::Result<PathBuf> {
    let d = parent.join(format!(".hqe-replay-{}", std::process::id()));
    fs::create_dir_all(&d)?;
    Ok(d)
}

fn gen_db(cli: &Cli) -> Result<i32, Exit> {
    let cfg = resolve_config(cli)?;
    let cat = cfg.catalog()?;
    let out = cli.out_dir.clone().ok_or_else(|| Exit::config("gen-db needs --out-dir"))?;
    let db = gen_random_db(&cat, cfg.checker.seed, &cfg.profile()?, &Hints::default()).map_err(Exit::config)?;
    dump_instance(&db, &out).map_err(Exit::config)?;
    println!("{} rows in {} tables written to {}", db.total_rows(), cat.tables.len(), out.display());
    Ok(EXIT_OK)
}

fn corpus(cli: &Cli, kind: &str, count: usize, json: Option<&Path>) -> Result<i32, Exit> {
    let cfg = resolve_config(cli)?;
    let cat = cfg.catalog()?;
    let seed = cli.seed.unwrap_or(7);
    let mut db = corpus_instance(&cat, seed);
    let suite = if kind == "nested" { nested_suite(&db, count, seed + 4) } else { flat_suite(&db, count, seed.wrapping_sub(2)) };
    let t = Instant::now();
    let rows = run_suite(&mut db, &suite, &cfg.xre());
    println!("{:<28} {:<22} {:>7} {:>8}  result", "query", "family", "probes", "ms");
    for r in &rows {
        let status = match (&r.seed, &r.discrepancy) {
            (Err(e), _) => format!("FAIL extraction: {e}"),
            (Ok(_), Some(d)) if r.passed() => format!("PASS {}", serde_json::to_string(d).expect("serializes")),
            (Ok(_), d) => format!("FAIL {}", serde_json::to_string(d).expect("serializes")),
        };
        let fam = serde_json::to_value(&r.family).expect("serializes");
        println!("{:<28} {:<22} {:>7} {:>8}  {status}", r.name, fam.as_str().unwrap_or(""), r.invocations, r.elapsed_ms);
    }
    let bad = rows.iter().filter(|r| !r.passed()).count();
    println!("{} queries, {} pass, {bad} fail, {:.1}s", rows.len(), rows.len() - bad, t.elapsed().as_secs_f64());
    if let Some(p) = json {
        fs::write(p, serde_json::to_string_pretty(&rows).expect("rows serialize"))?;
    }
    Ok(if bad == 0 { EXIT_OK } else { EXIT_FAILURE })
}
