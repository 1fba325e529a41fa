//! The prompting loop: initial prompt, then clause- or result-correction
//! prompts until the candidate's result matches the hidden query's.

use std::collections::BTreeSet;

use serde::Serialize;

use super::align::{check_alignment, Violation};
use super::client::{extract_sql, ChatClient, Message};
use super::prompts::{build_feedback_prompt, build_initial_prompt, Feedback, PromptBundle, PromptKind};
use super::XfeError;
use crate::minisql::{canonical_digest, execute, parse_sql, QueryIR};
use crate::relcore::{DatabaseState, ResultSet};

#[derive(Clone, Debug, Serialize)]
pub struct RefineConfig {
    /// Unsuccessful result trials before falling back.
    pub threshold: usize,
    /// Hard cap on rounds of any kind.
    pub max_rounds: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig { threshold: 6, max_rounds: 24 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    ResultMatch,
    ResultMismatch { cardinality: bool },
    Misaligned { guidelines: Vec<u8> },
    ParseError { message: String },
    Duplicate,
}

#[derive(Clone, Debug, Serialize)]
pub struct SynthesisCandidate {
    pub attempt: usize,
    pub sql: String,
    #[serde(skip)]
    pub query: Option<QueryIR>,
    pub digest: Option<String>,
    pub verdict: Verdict,
    pub rows: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub kind: PromptKind,
    pub prompt: String,
    pub reply: String,
    pub candidate: SynthesisCandidate,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackReason {
    Duplicate,
    Threshold,
    RoundCap,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum RefineOutcome {
    Success { sql: String },
    FallbackNeeded { reason: FallbackReason },
    Failure { reason: String },
}

#[derive(Clone, Debug, Serialize)]
pub struct RefineReport {
    pub outcome: RefineOutcome,
    pub rounds: Vec<RoundRecord>,
    /// Counted result trials (clause corrections excluded).
    pub trials: usize,
    #[serde(skip)]
    pub query: Option<QueryIR>,
    /// Last parseable candidate, the skeleton for combinatorial synthesis.
    #[serde(skip)]
    pub last: Option<QueryIR>,
}

impl RefineReport {
    pub fn sequence(&self) -> Vec<&'static str> {
        self.rounds.iter().map(|r| r.kind.tag()).collect()
    }
}

/// Results compare as bags unless the seed orders its output.
pub fn results_match(seed: &QueryIR, got: &ResultSet, want: &ResultSet) -> bool {
    let ordered = seed.branches.len() == 1 && !seed.branches[0].order_by.is_empty();
    got.matches(want, ordered)
}

pub fn refine_loop(
    client: &mut dyn ChatClient,
    db: &DatabaseState,
    seed: &QueryIR,
    r_h: &ResultSet,
    bundle: &PromptBundle,
    cfg: &RefineConfig,
) -> Result<RefineReport, XfeError> {
    let mut report = RefineReport { outcome: RefineOutcome::Failure { reason: String::new() }, rounds: vec![], trials: 0, query: None, last: None };
    let mut messages: Vec<Message> = Vec::new();
    let (mut kind, mut prompt) = (PromptKind::Initial, build_initial_prompt(bundle)?);
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for round in 1..=cfg.max_rounds {
        messages.push(Message::user(&prompt));
        let reply = match client.complete(round, &messages) {
            Ok(r) => r,
            Err(e) => {
                report.outcome = RefineOutcome::Failure { reason: e.to_string() };
                return Ok(report);
            }
        };
        messages.push(Message::assistant(&reply));
        let sql = extract_sql(&reply);
        let mut cand = SynthesisCandidate { attempt: round, sql: sql.clone(), query: None, digest: None, verdict: Verdict::Duplicate, rows: None };
        let feedback: Feedback;
        match parse_sql(&sql) {
            Err(e) => {
                cand.verdict = Verdict::ParseError { message: e.to_string() };
                report.trials += 1;
                feedback = Feedback::Clauses(vec![Violation { guideline: 1, clause: "SQL syntax".into(), detail: e.to_string() }]);
            }
            Ok(q) => {
                let digest = canonical_digest(&q);
                cand.digest = Some(digest.clone());
                cand.query = Some(q.clone());
                report.last = Some(q.clone());
                if !seen.insert(digest) {
                    cand.verdict = Verdict::Duplicate;
                    report.rounds.push(RoundRecord { round, kind, prompt, reply, candidate: cand });
                    report.outcome = RefineOutcome::FallbackNeeded { reason: FallbackReason::Duplicate };
                    return Ok(report);
                }
                let violations = check_alignment(&q, seed);
                if !violations.is_empty() {
                    cand.verdict = Verdict::Misaligned { guidelines: violations.iter().map(|v| v.guideline).collect() };
                    feedback = Feedback::Clauses(violations);
                } else {
                    match execute(&q, db) {
                        Err(e) => {
                            cand.verdict = Verdict::ParseError { message: e.to_string() };
                            report.trials += 1;
                            feedback = Feedback::Clauses(vec![Violation { guideline: 1, clause: "SQL syntax".into(), detail: e.to_string() }]);
                        }
                        Ok(rs) => {
                            cand.rows = Some(rs.len());
                            if results_match(seed, &rs, r_h) {
                                cand.verdict = Verdict::ResultMatch;
                                report.rounds.push(RoundRecord { round, kind, prompt, reply, candidate: cand });
                                report.outcome = RefineOutcome::Success { sql: crate::minisql::render_sql(&q) };
                                report.query = Some(q);
                                return Ok(report);
                            }
                            report.trials += 1;
                            let cardinality = rs.len() != r_h.len();
                            cand.verdict = Verdict::ResultMismatch { cardinality };
                            feedback = if cardinality { Feedback::Cardinality { r_e: rs.len(), r_h: r_h.len() } } else { Feedback::Content };
                        }
                    }
                }
            }
        }
        report.rounds.push(RoundRecord { round, kind, prompt, reply, candidate: cand });
        if report.trials >= cfg.threshold {
            report.outcome = RefineOutcome::FallbackNeeded { reason: FallbackReason::Threshold };
            return Ok(report);
        }
        (kind, prompt) = build_feedback_prompt(&sql, &feedback)?;
    }
    report.outcome = RefineOutcome::FallbackNeeded { reason: FallbackReason::RoundCap };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::OracleHandle;
    use crate::tpch;
    use crate::xfe::client::{MockClient, TranscriptEntry};

    fn setup() -> (DatabaseState, QueryIR, ResultSet, PromptBundle) {
        let db = tpch::union_instance();
        let seed = parse_sql(tpch::UNION_SEED_SQL).unwrap();
        let mut h = OracleHandle::embedded(tpch::UNION_HIDDEN_SQL).unwrap();
        let r_h = h.invoke(&db).unwrap();
        let r_s = execute(&seed, &db).unwrap();
        let bundle = PromptBundle {
            description: tpch::UNION_DESCRIPTION.into(),
            schema_ddl: tpch::SCHEMA_DDL.into(),
            seed_sql: tpch::UNION_SEED_SQL.into(),
            r_h: r_h.len(),
            r_s: r_s.len(),
        };
        (db, seed, r_h, bundle)
    }

    fn mock(replies: &[&str]) -> MockClient {
        MockClient::new(replies.iter().enumerate().map(|(i, s)| TranscriptEntry { round: i + 1, reply_sql: s.to_string() }).collect())
    }

    #[test]
    fn correct_first_reply_succeeds_in_one_round() {
        let (db, seed, r_h, b) = setup();
        let r = refine_loop(&mut mock(&[tpch::UNION_FINAL_SQL]), &db, &seed, &r_h, &b, &RefineConfig::default()).unwrap();
        assert!(matches!(r.outcome, RefineOutcome::Success { .. }));
        assert_eq!(r.sequence(), vec!["IP"]);
    }

    #[test]
    fn repeated_wrong_reply_falls_back() {
        let (db, seed, r_h, b) = setup();
        let r = refine_loop(&mut mock(&[tpch::UNION_SEED_SQL, tpch::UNION_SEED_SQL]), &db, &seed, &r_h, &b, &RefineConfig::default()).unwrap();
        assert!(matches!(r.outcome, RefineOutcome::FallbackNeeded { reason: FallbackReason::Duplicate }), "{:?}", r.outcome);
        assert_eq!(r.rounds.len(), 2);
    }

    #[test]
    fn threshold_counts_only_result_trials() {
        let (db, seed, r_h, b) = setup();
        // distinct wrong-but-aligned replies: the seed with shifted bounds
        let wrong: Vec<String> = (0..8).map(|i| tpch::UNION_SEED_SQL.replace("10000.00", &format!("{}.00", 100 + i))).collect();
        let mut replies: Vec<&str> = vec!["SELECT p_name FROM part"];
        replies.extend(wrong.iter().map(|s| s.as_str()));
        let cfg = RefineConfig { threshold: 3, max_rounds: 20 };
        let r = refine_loop(&mut mock(&replies), &db, &seed, &r_h, &b, &cfg).unwrap();
        assert!(matches!(r.outcome, RefineOutcome::FallbackNeeded { reason: FallbackReason::Threshold }));
        assert_eq!(r.sequence()[..2], ["IP", "CCP"]);
        assert_eq!(r.trials, 3);
        assert_eq!(r.rounds.len(), 4);
    }
}
