//! The opaque executable: a sealed query behind `invoke(db) -> result`,
//! with invocation accounting and a replayable JSON Lines journal.
//!
//! Two backends exist. The embedded one runs a sealed `QueryIR` through the
//! executor; nothing in this module hands the query back out. The external
//! one drives a subprocess over a line protocol (see [`external`]).

pub mod external;
pub mod wire;

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::minisql::{execute, parse_sql, ExecError, QueryIR, SqlError};
use crate::relcore::{DatabaseState, FitClass, Mutation, ResultSet};

pub use external::serve_shim;
pub use wire::{read_result_csv, write_result_csv};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    /// The query references a table or column that does not resolve. This
    /// is the signal extraction-by-error relies on.
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("timed out after {0:?}")]
    Timeout(Duration),
    #[error("protocol error: {0}")]
    Protocol(String),
    /// Any other runtime failure of the hidden query (type mismatch,
    /// subquery cardinality).
    #[error("execution error: {0}")]
    Execution(String),
}

impl EngineError {
    pub fn is_resolution(&self) -> bool {
        matches!(self, EngineError::Resolution(_))
    }

    pub fn code(&self) -> &'static str {
        match self {
            EngineError::Resolution(_) => "RESOLUTION",
            EngineError::Timeout(_) => "TIMEOUT",
            EngineError::Protocol(_) => "PROTOCOL",
            EngineError::Execution(_) => "EXECUTION",
        }
    }
}

impl From<ExecError> for EngineError {
    fn from(e: ExecError) -> Self {
        match e {
            ExecError::Resolution(m) => EngineError::Resolution(m),
            other => EngineError::Execution(other.to_string()),
        }
    }
}

/// One invocation. `mutations` holds the state changes since the previous
/// record of the same lineage, so replaying all records in order against
/// the initial instance reproduces every probed state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JournalRecord {
    pub seq: usize,
    pub phase: String,
    pub generation: u64,
    /// True when the probed state is not a descendant of the previous one;
    /// replay restarts from the initial instance.
    pub reset: bool,
    pub mutations: Vec<Mutation>,
    pub mutation_digest: String,
    pub result_digest: Option<String>,
    pub fit: Option<FitClass>,
    pub rows: usize,
    pub error: Option<String>,
    pub elapsed_us: u64,
}

struct Sealed(QueryIR);

enum Backend {
    Embedded(Sealed),
    External(external::ExternalProcess),
}

pub struct OracleHandle {
    backend: Backend,
    journal: Vec<JournalRecord>,
    cursor: usize,
    lineage: Option<u64>,
    phase: String,
    sink: Option<BufWriter<File>>,
}

impl fmt::Debug for OracleHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.backend {
            Backend::Embedded(_) => "embedded",
            Backend::External(_) => "external",
        };
        f.debug_struct("OracleHandle").field("backend", &kind).field("invocations", &self.journal.len()).finish()
    }
}

fn digest_mutations(ms: &[Mutation]) -> String {
    let text = serde_json::to_string(ms).expect("mutations serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl OracleHandle {
    fn with_backend(backend: Backend) -> Self {
        OracleHandle { backend, journal: Vec::new(), cursor: 0, lineage: None, phase: "init".into(), sink: None }
    }

    /// Seals `sql` inside a new embedded handle.
    pub fn embedded(sql: &str) -> Result<Self, SqlError> {
        Ok(Self::embedded_ir(parse_sql(sql)?))
    }

    pub fn embedded_ir(q: QueryIR) -> Self {
        Self::with_backend(Backend::Embedded(Sealed(q)))
    }

    /// Wraps an external executable speaking the line protocol. Each
    /// request dumps the state under `workdir`.
    pub fn external(command: &str, workdir: PathBuf, timeout: Duration) -> Self {
        Self::with_backend(Backend::External(external::ExternalProcess::new(command, workdir, timeout)))
    }

    /// A new handle over the same sealed query with an empty journal.
    pub fn fresh(&self) -> Self {
        let backend = match &self.backend {
            Backend::Embedded(s) => Backend::Embedded(Sealed(s.0.clone())),
            Backend::External(p) => Backend::External(p.respawn()),
        };
        Self::with_backend(backend)
    }

    pub fn invocation_count(&self) -> usize {
        self.journal.len()
    }

    pub fn journal(&self) -> &[JournalRecord] {
        &self.journal
    }

    /// Labels subsequent journal records (e.g. `xre`, `xfe`, `check`).
    pub fn set_phase(&mut self, phase: &str) {
        self.phase = phase.to_string();
    }

    pub fn phase(&self) -> &str {
        &self.phase
    }

    pub fn invocations_in_phase(&self, phase: &str) -> usize {
        self.journal.iter().filter(|r| r.phase == phase).count()
    }

    /// Streams the journal to `path`: records so far are written at once,
    /// later ones as they happen.
    pub fn persist_to(&mut self, path: &Path) -> std::io::Result<()> {
        let f = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
        let mut w = BufWriter::new(f);
        for r in &self.journal {
            writeln!(w, "{}", serde_json::to_string(r).expect("record serializes"))?;
        }
        w.flush()?;
        self.sink = Some(w);
        Ok(())
    }

    fn run(&mut self, db: &DatabaseState) -> Result<ResultSet, EngineError> {
        match &mut self.backend {
            Backend::Embedded(s) => Ok(execute(&s.0, db)?),
            Backend::External(p) => p.request(db),
        }
    }

    /// Runs the hidden query on the current state of `db`. The journal is
    /// appended whether or not the query succeeds.
    pub fn invoke(&mut self, db: &DatabaseState) -> Result<ResultSet, EngineError> {
        let start = Instant::now();
        let out = self.run(db);
        let elapsed_us = start.elapsed().as_micros() as u64;

        let log = db.log();
        let lineage = db.lineage_id();
        let reset = self.lineage != Some(lineage) || log.len() < self.cursor;
        let from = if reset { 0 } else { self.cursor };
        let mutations = log[from..].to_vec();
        self.cursor = log.len();
        self.lineage = Some(lineage);

        let (result_digest, fit, rows, error) = match &out {
            Ok(rs) => (Some(rs.digest()), Some(rs.fit()), rs.len(), None),
            Err(e) => (None, None, 0, Some(format!("{}: {e}", e.code()))),
        };
        let rec = JournalRecord {
            seq: self.journal.len(),
            phase: self.phase.clone(),
            generation: db.generation(),
            reset,
            mutation_digest: digest_mutations(&mutations),
            mutations,
            result_digest,
            fit,
            rows,
            error,
            elapsed_us,
        };
        if let Some(w) = &mut self.sink {
            // the journal is diagnostic; a failed write must not abort extraction
            let _ = writeln!(w, "{}", serde_json::to_string(&rec).expect("record serializes")).and_then(|_| w.flush());
        }
        self.journal.push(rec);
        out
    }

    /// Invokes and classifies; engine errors count as non-FIT.
    pub fn fit(&mut self, db: &DatabaseState) -> Result<FitClass, EngineError> {
        match self.invoke(db) {
            Ok(rs) => Ok(rs.fit()),
            Err(EngineError::Resolution(_)) | Err(EngineError::Execution(_)) => Ok(FitClass::Empty),
            Err(e) => Err(e),
        }
    }
}

pub fn read_journal(path: &Path) -> std::io::Result<Vec<JournalRecord>> {
    let f = File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JournalRecord = serde_json::from_str(&line).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ReplayReport {
    pub checked: usize,
    pub mismatches: Vec<usize>,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Re-applies every record's mutations to a copy of `initial` and checks
/// that `h` reproduces the recorded result digest (or error class).
pub fn replay(records: &[JournalRecord], initial: &DatabaseState, h: &mut OracleHandle) -> Result<ReplayReport, String> {
    let mut db = initial.snapshot();
    let mut report = ReplayReport::default();
    for r in records {
        if r.reset {
            db = initial.snapshot();
        }
        for m in &r.mutations {
            db.apply(m).map_err(|e| format!("record {}: {e}", r.seq))?;
        }
        let got = h.invoke(&db);
        let same = match (&got, &r.result_digest) {
            (Ok(rs), Some(d)) => &rs.digest() == d,
            (Err(e), None) => r.error.as_deref().map(|s| s.starts_with(e.code())).unwrap_or(false),
            _ => false,
        };
        if !same {
            report.mismatches.push(r.seq);
        }
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tpch;

    #[test]
    fn counts_and_journals_every_invocation() {
        let mut h = OracleHandle::embedded(tpch::Q0_SQL).unwrap();
        assert_eq!(h.invocation_count(), 0);
        let mut db = tpch::q0_instance();
        assert_eq!(h.invoke(&db).unwrap().fit(), FitClass::Fit);
        let t = db.rename_table("customer", "customer_dummy").unwrap();
        assert!(h.invoke(&db).unwrap_err().is_resolution());
        db.revert(t).unwrap();
        assert_eq!(h.invocation_count(), 2);
        assert_eq!(h.journal().len(), 2);
        assert_eq!(h.journal()[1].mutations.len(), 1);
        assert!(h.journal()[1].error.as_deref().unwrap().starts_with("RESOLUTION"));
    }

    #[test]
    fn running_example_is_fit_on_the_initial_instance() {
        let mut h = OracleHandle::embedded(tpch::UNION_HIDDEN_SQL).unwrap();
        let rs = h.invoke(&tpch::union_instance()).unwrap();
        assert_eq!(rs.fit(), FitClass::Fit);
        assert_eq!(rs.len(), 5);
    }

    #[test]
    fn debug_output_does_not_leak_the_query() {
        let h = OracleHandle::embedded(tpch::Q0_SQL).unwrap();
        let dbg = format!("{h:?}");
        assert!(!dbg.contains("c_acctbal") && !dbg.contains("customer"));
    }

    #[test]
    fn replay_reproduces_digests() {
        let mut h = OracleHandle::embedded(tpch::Q0_SQL).unwrap();
        let d_i = tpch::q0_instance();
        let mut db = d_i.snapshot();
        h.invoke(&db).unwrap();
        let t = db.retain_rows("orders", &[0]).unwrap();
        h.invoke(&db).unwrap();
        db.set_value("customer", 0, "c_acctbal", crate::relcore::Value::dec("20000.00").unwrap()).unwrap();
        h.invoke(&db).unwrap();
        db.revert_to(t.0).unwrap();
        h.invoke(&db).unwrap();
        // a probe on an unrelated state forces a reset record
        h.invoke(&tpch::union_instance()).unwrap();
        assert!(h.journal()[4].reset);
        let records = h.journal().to_vec();
        let mut again = h.fresh();
        let rep = replay(&records[..4], &d_i, &mut again).unwrap();
        assert!(rep.ok(), "{rep:?}");
        assert_eq!(rep.checked, 4);
    }
}
