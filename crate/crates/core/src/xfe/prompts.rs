//! Guidelines and prompt templates, with slot filling.

use serde::Serialize;

use super::align::Violation;
use super::XfeError;

const GUIDELINES: &str = include_str!("../../assets/prompts/guidelines.txt");
const IP: &str = include_str!("../../assets/prompts/ip.txt");
const RCP_V1: &str = include_str!("../../assets/prompts/rcp_v1.txt");
const RCP_V2: &str = include_str!("../../assets/prompts/rcp_v2.txt");
const CCP: &str = include_str!("../../assets/prompts/ccp.txt");

/// The fifteen guidelines, in order; index 0 is G1.
pub fn guidelines() -> Vec<&'static str> {
    GUIDELINES.lines().filter(|l| !l.trim().is_empty()).collect()
}

pub fn guideline(id: u8) -> &'static str {
    guidelines()[id as usize - 1]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PromptKind {
    #[serde(rename = "IP")]
    Initial,
    #[serde(rename = "RCP.v1")]
    ResultCardinality,
    #[serde(rename = "RCP.v2")]
    ResultContent,
    #[serde(rename = "CCP")]
    Clause,
}

impl PromptKind {
    pub fn tag(self) -> &'static str {
        match self {
            PromptKind::Initial => "IP",
            PromptKind::ResultCardinality => "RCP.v1",
            PromptKind::ResultContent => "RCP.v2",
            PromptKind::Clause => "CCP",
        }
    }
}

/// Slot values of the initial prompt.
#[derive(Clone, Debug, Serialize)]
pub struct PromptBundle {
    pub description: String,
    pub schema_ddl: String,
    pub seed_sql: String,
    pub r_h: usize,
    pub r_s: usize,
}

fn fill(template: &str, slots: &[(&str, String)]) -> Result<String, XfeError> {
    let mut out = template.to_string();
    for (k, v) in slots {
        if v.trim().is_empty() {
            return Err(XfeError::MissingSlot(k.to_string()));
        }
        out = out.replace(&format!("{{{k}}}"), v.trim_end());
    }
    Ok(out)
}

pub fn render_guidelines() -> String {
    guidelines().iter().enumerate().map(|(i, g)| format!("G{}. {g}", i + 1)).collect::<Vec<_>>().join("\n")
}

pub fn build_initial_prompt(b: &PromptBundle) -> Result<String, XfeError> {
    fill(
        IP,
        &[
            ("tx_q", b.description.clone()),
            ("schema", b.schema_ddl.clone()),
            ("seed", b.seed_sql.clone()),
            ("guidelines", render_guidelines()),
            ("r_h", b.r_h.to_string()),
            ("r_s", b.r_s.to_string()),
        ],
    )
}

/// What the feedback prompt reacts to.
#[derive(Clone, Debug)]
pub enum Feedback {
    Cardinality { r_e: usize, r_h: usize },
    Content,
    Clauses(Vec<Violation>),
}

pub fn build_feedback_prompt(last_sql: &str, fb: &Feedback) -> Result<(PromptKind, String), XfeError> {
    let last = last_sql.to_string();
    match fb {
        Feedback::Cardinality { r_e, r_h } => {
            Ok((PromptKind::ResultCardinality, fill(RCP_V1, &[("last", last), ("r_e", r_e.to_string()), ("r_h", r_h.to_string())])?))
        }
        Feedback::Content => Ok((PromptKind::ResultContent, fill(RCP_V2, &[("last", last)])?)),
        Feedback::Clauses(vs) => {
            let mut clauses: Vec<&str> = Vec::new();
            for v in vs {
                if !clauses.contains(&v.clause.as_str()) {
                    clauses.push(&v.clause);
                }
            }
            if clauses.is_empty() {
                return Err(XfeError::MissingSlot("incorrect clause".into()));
            }
            let fixes = clauses.iter().map(|c| format!("Fix its {c} as per Q_S")).collect::<Vec<_>>().join("\n");
            Ok((PromptKind::Clause, fill(CCP, &[("last", last), ("fixes", fixes)])?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tpch;

    fn bundle() -> PromptBundle {
        PromptBundle { description: tpch::UNION_DESCRIPTION.into(), schema_ddl: tpch::SCHEMA_DDL.into(), seed_sql: tpch::UNION_SEED_SQL.into(), r_h: 7, r_s: 9 }
    }

    #[test]
    fn fifteen_guidelines_in_order() {
        let g = guidelines();
        assert_eq!(g.len(), 15);
        assert!(g[0].starts_with("Do not formulate syntactically"));
        assert!(g[10].starts_with("A semi-join"));
        assert!(g[14].contains("more GROUP BY attributes"));
    }

    #[test]
    fn initial_prompt_carries_every_slot() {
        let p = build_initial_prompt(&bundle()).unwrap();
        assert!(p.contains(tpch::UNION_SEED_SQL));
        assert!(p.contains(tpch::UNION_DESCRIPTION));
        for i in 1..=15 {
            assert!(p.contains(&format!("G{i}. ")));
        }
        assert!(!p.contains("{seed}") && !p.contains("{tx_q}"));
        assert_eq!(p, build_initial_prompt(&bundle()).unwrap());
    }

    #[test]
    fn empty_description_is_rejected() {
        let mut b = bundle();
        b.description = "  ".into();
        assert_eq!(build_initial_prompt(&b), Err(XfeError::MissingSlot("tx_q".into())));
    }

    #[test]
    fn feedback_variants() {
        let (k, p) = build_feedback_prompt("SELECT 1 FROM t", &Feedback::Cardinality { r_e: 12, r_h: 9 }).unwrap();
        assert_eq!(k, PromptKind::ResultCardinality);
        assert!(p.contains("number of rows: 12") && p.contains("cardinality: 9"));
        let (k, _) = build_feedback_prompt("SELECT 1 FROM t", &Feedback::Content).unwrap();
        assert_eq!(k, PromptKind::ResultContent);
        let v = Violation { guideline: 5, clause: "FROM clause".into(), detail: "part".into() };
        let (k, p) = build_feedback_prompt("SELECT 1 FROM t", &Feedback::Clauses(vec![v])).unwrap();
        assert_eq!(k, PromptKind::Clause);
        assert_eq!(p.matches("Fix its FROM clause as per Q_S").count(), 1);
    }
}
