//! Refinement of a flat seed into the hidden query's nested form: a chat
//! model steered by guidelines and correction prompts, with combinatorial
//! synthesis as the fallback.

pub mod align;
pub mod client;
pub mod combinatorial;
pub mod prompts;
pub mod refine;

use serde::Serialize;

pub use align::{check_alignment, Violation};
pub use client::{ChatClient, HttpClient, HttpConfig, MockClient};
pub use combinatorial::{combinatorial_synthesis, CombinatorialOutcome, Skeleton};
pub use prompts::{PromptBundle, PromptKind};
pub use refine::{refine_loop, RefineConfig, RefineOutcome, RefineReport};

use crate::minisql::{execute, render_sql, QueryIR};
use crate::relcore::{DatabaseState, ResultSet};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum XfeError {
    #[error("prompt slot {0} has no value")]
    MissingSlot(String),
    #[error("transcript: {0}")]
    Transcript(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("candidate budget of {0} exhausted")]
    Exhausted(usize),
    #[error("no candidate matched R_H after {0} tries")]
    NoMatch(usize),
    #[error("seed does not execute: {0}")]
    Seed(String),
}

#[derive(Clone, Debug, Serialize)]
pub struct XfeConfig {
    pub refine: RefineConfig,
    pub cap: usize,
}

impl Default for XfeConfig {
    fn default() -> Self {
        XfeConfig { refine: RefineConfig::default(), cap: combinatorial::DEFAULT_CAP }
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "via", rename_all = "snake_case")]
pub enum XfeOutcome {
    Llm { sql: String },
    Combinatorial { sql: String, tried: usize, skeleton: &'static str },
    Failure { reason: String },
}

#[derive(Clone, Debug, Serialize)]
pub struct XfeReport {
    pub outcome: XfeOutcome,
    pub refine: RefineReport,
    #[serde(skip)]
    pub query: Option<QueryIR>,
}

/// Builds the initial prompt's slot values; R_H is computed by the caller
/// with one oracle invocation.
pub fn prompt_bundle(description: &str, schema_ddl: &str, seed: &QueryIR, r_h: &ResultSet, db: &DatabaseState) -> Result<PromptBundle, XfeError> {
    let r_s = execute(seed, db).map_err(|e| XfeError::Seed(e.to_string()))?;
    Ok(PromptBundle {
        description: description.into(),
        schema_ddl: schema_ddl.into(),
        seed_sql: crate::minisql::render_pretty(seed),
        r_h: r_h.len(),
        r_s: r_s.len(),
    })
}

/// Refinement with fallback.
pub fn run_xfe(
    client: &mut dyn ChatClient,
    db: &DatabaseState,
    seed: &QueryIR,
    r_h: &ResultSet,
    bundle: &PromptBundle,
    cfg: &XfeConfig,
) -> Result<XfeReport, XfeError> {
    let refine = refine_loop(client, db, seed, r_h, bundle, &cfg.refine)?;
    let (outcome, query) = match &refine.outcome {
        RefineOutcome::Success { sql } => (XfeOutcome::Llm { sql: sql.clone() }, refine.query.clone()),
        RefineOutcome::Failure { reason } => (XfeOutcome::Failure { reason: reason.clone() }, None),
        RefineOutcome::FallbackNeeded { .. } => {
            let skeleton = refine.last.as_ref().map(Skeleton::of).unwrap_or(Skeleton::Flat);
            match combinatorial_synthesis(seed, &skeleton, r_h, db, cfg.cap) {
                Ok(c) => (XfeOutcome::Combinatorial { sql: render_sql(&c.query), tried: c.tried, skeleton: c.skeleton }, Some(c.query)),
                Err(e) => (XfeOutcome::Failure { reason: e.to_string() }, None),
            }
        }
    };
    Ok(XfeReport { outcome, refine, query })
}
