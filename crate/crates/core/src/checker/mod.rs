//! Result-based equivalence: run the oracle and a candidate on randomized
//! instances and diff their outputs as multisets. A pass is probabilistic
//! evidence only; a counterexample is definitive and replayable.

pub mod gen;
pub mod mutants;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use gen::{gen_random_db, referential_violations, Hints, SizeProfile};
pub use mutants::{mutant_corpus, Mutant};

use crate::minisql::{execute, render_sql, QueryIR};
use crate::oracle::wire::write_result_csv;
use crate::oracle::OracleHandle;
use crate::relcore::load::dump_instance;
use crate::relcore::{DatabaseState, ResultSet, Row, SchemaCatalog};

pub const DEFAULT_TRIALS: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckConfig {
    pub trials: usize,
    pub seed: u64,
    pub profile: SizeProfile,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig { trials: DEFAULT_TRIALS, seed: 0, profile: SizeProfile::small() }
    }
}

/// Seed of the instance generated for `trial`.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(trial as u64 + 1)
}

#[derive(Clone, Debug, Serialize)]
pub struct Counterexample {
    pub trial: usize,
    pub db_seed: u64,
    /// Rows the oracle returns more often than the candidate.
    pub missing: Vec<Row>,
    /// Rows the candidate returns more often than the oracle.
    pub extra: Vec<Row>,
    #[serde(skip)]
    pub oracle: ResultSet,
    #[serde(skip)]
    pub candidate: ResultSet,
}

impl Counterexample {
    pub fn summary(&self) -> String {
        let show = |rows: &[Row]| rows.iter().take(5).map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" | ")).collect::<Vec<_>>().join("\n  ");
        format!(
            "trial {} (db seed {}): oracle {} rows, candidate {} rows\nmissing {}:\n  {}\nextra {}:\n  {}\n",
            self.trial,
            self.db_seed,
            self.oracle.len(),
            self.candidate.len(),
            self.missing.len(),
            show(&self.missing),
            self.extra.len(),
            show(&self.extra)
        )
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass { trials: usize, skipped: Vec<(usize, String)> },
    Counterexample(Counterexample),
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CheckError {
    #[error("instance generation: {0}")]
    Generate(String),
    #[error("candidate does not execute on trial {trial}: {message}")]
    Candidate { trial: usize, message: String },
}

/// Instance, oracle result and candidate result of one trial.
pub type Trial = (DatabaseState, Result<ResultSet, String>, Result<ResultSet, String>);

/// Instance and both results for one trial; the replay of a counterexample.
pub fn run_trial(h: &mut OracleHandle, qe: &QueryIR, cat: &SchemaCatalog, db_seed: u64, profile: &SizeProfile) -> Result<Trial, CheckError> {
    let db = gen_random_db(cat, db_seed, profile, &Hints::from_query(qe)).map_err(|e| CheckError::Generate(e.to_string()))?;
    let oracle = h.invoke(&db).map_err(|e| e.to_string());
    let cand = execute(qe, &db).map_err(|e| e.to_string());
    Ok((db, oracle, cand))
}

pub fn result_equivalent(h: &mut OracleHandle, qe: &QueryIR, cat: &SchemaCatalog, cfg: &CheckConfig) -> Result<Verdict, CheckError> {
    let mut skipped = Vec::new();
    for trial in 0..cfg.trials {
        let db_seed = trial_seed(cfg.seed, trial);
        let (_, oracle, cand) = run_trial(h, qe, cat, db_seed, &cfg.profile)?;
        let oracle = match oracle {
            Ok(r) => r,
            Err(e) => {
                skipped.push((trial, e));
                continue;
            }
        };
        let cand = cand.map_err(|message| CheckError::Candidate { trial, message })?;
        let (missing, extra) = oracle.bag_diff(&cand);
        if !missing.is_empty() || !extra.is_empty() {
            return Ok(Verdict::Counterexample(Counterexample { trial, db_seed, missing, extra, oracle, candidate: cand }));
        }
    }
    Ok(Verdict::Pass { trials: cfg.trials - skipped.len(), skipped })
}

/// Regenerates the counterexample's instance and diffs again.
pub fn replay_counterexample(h: &mut OracleHandle, qe: &QueryIR, cat: &SchemaCatalog, cex: &Counterexample, profile: &SizeProfile) -> Result<bool, CheckError> {
    let (_, oracle, cand) = run_trial(h, qe, cat, cex.db_seed, profile)?;
    match (oracle, cand) {
        (Ok(o), Ok(c)) => Ok(!o.bag_eq(&c)),
        _ => Ok(false),
    }
}

#[derive(Serialize)]
struct BundleMeta<'a> {
    db_seed: u64,
    trial: usize,
    candidate_sql: String,
    profile: &'a SizeProfile,
}

/// Writes seed, generated CSVs, both result CSVs and a diff summary.
pub fn write_replay_bundle(dir: &Path, qe: &QueryIR, cat: &SchemaCatalog, cex: &Counterexample, profile: &SizeProfile) -> std::io::Result<()> {
    let io = |e: crate::relcore::RelError| std::io::Error::other(e.to_string());
    std::fs::create_dir_all(dir)?;
    let db = gen_random_db(cat, cex.db_seed, profile, &Hints::from_query(qe)).map_err(io)?;
    dump_instance(&db, &dir.join("data")).map_err(io)?;
    let meta = BundleMeta { db_seed: cex.db_seed, trial: cex.trial, candidate_sql: render_sql(qe), profile };
    std::fs::write(dir.join("seed.json"), serde_json::to_string_pretty(&meta).map_err(std::io::Error::other)?)?;
    std::fs::write(dir.join("oracle.csv"), write_result_csv(&cex.oracle))?;
    std::fs::write(dir.join("candidate.csv"), write_result_csv(&cex.candidate))?;
    std::fs::write(dir.join("diff.txt"), cex.summary())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minisql::parse_sql;
    use crate::tpch;

    #[test]
    fn hidden_query_passes_against_itself() {
        let mut h = OracleHandle::embedded(tpch::UNION_HIDDEN_SQL).unwrap();
        let q = parse_sql(tpch::UNION_HIDDEN_SQL).unwrap();
        let v = result_equivalent(&mut h, &q, &tpch::catalog(), &CheckConfig { trials: 20, ..Default::default() }).unwrap();
        assert!(matches!(v, Verdict::Pass { trials: 20, .. }), "{v:?}");
    }

    #[test]
    fn final_query_passes_and_seed_fails() {
        let cat = tpch::catalog();
        let mut h = OracleHandle::embedded(tpch::UNION_HIDDEN_SQL).unwrap();
        let fin = parse_sql(tpch::UNION_FINAL_SQL).unwrap();
        assert!(result_equivalent(&mut h, &fin, &cat, &CheckConfig::default()).unwrap().is_pass());
        let seed = parse_sql(tpch::UNION_SEED_SQL).unwrap();
        let Verdict::Counterexample(cex) = result_equivalent(&mut h, &seed, &cat, &CheckConfig::default()).unwrap() else {
            panic!("seed should be rejected");
        };
        assert!(replay_counterexample(&mut h, &seed, &cat, &cex, &SizeProfile::small()).unwrap());
        let dir = tempfile::tempdir().unwrap();
        write_replay_bundle(dir.path(), &seed, &cat, &cex, &SizeProfile::small()).unwrap();
        assert!(dir.path().join("data/orders.csv").exists());
        assert!(std::fs::read_to_string(dir.path().join("diff.txt")).unwrap().contains("missing"));
    }

    #[test]
    fn bound_shift_is_caught_quickly() {
        let cat = tpch::catalog();
        let mut h = OracleHandle::embedded(tpch::UNION_HIDDEN_SQL).unwrap();
        let q = parse_sql(&tpch::UNION_HIDDEN_SQL.replace("10000", "9000.00")).unwrap();
        for seed in 0..10 {
            let v = result_equivalent(&mut h, &q, &cat, &CheckConfig { trials: 10, seed, ..Default::default() }).unwrap();
            assert!(!v.is_pass(), "seed {seed}");
        }
    }
}
