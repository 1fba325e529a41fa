//! Parser, renderer, canonicalizer and executor for the supported SQL
//! subset: SPJ with GROUP BY, aggregates, ORDER BY and LIMIT; UNION ALL;
//! LEFT OUTER JOIN; IN over lists and subqueries; scalar aggregate
//! subqueries; LIKE with `%`; IS NULL; arithmetic projections.

pub mod ast;
pub mod canon;
pub mod exec;
pub mod lexer;
pub mod parser;
pub mod render;
#[cfg(test)]
mod testgen;

pub use ast::*;
pub use canon::{canonical_digest, canonicalize};
pub use exec::{execute, ExecError};
pub use parser::parse_sql;
pub use render::{render_expr, render_literal, render_pretty, render_sql};

/// Deepest nesting level accepted; the top-level block is level 0.
pub const MAX_NESTING: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SqlError {
    #[error("syntax error at {start}..{end}: {message}")]
    Syntax { message: String, start: usize, end: usize },
    #[error("unsupported construct '{construct}' at {start}..{end}")]
    Unsupported { construct: String, start: usize, end: usize },
}

impl SqlError {
    pub fn syntax(message: impl Into<String>, start: usize, end: usize) -> Self {
        SqlError::Syntax { message: message.into(), start, end }
    }

    pub fn unsupported(construct: impl Into<String>, start: usize, end: usize) -> Self {
        SqlError::Unsupported { construct: construct.into(), start, end }
    }

    /// Stable short code: `E_SYNTAX` or `E_UNSUPPORTED`.
    pub fn code(&self) -> &'static str {
        match self {
            SqlError::Syntax { .. } => "E_SYNTAX",
            SqlError::Unsupported { .. } => "E_UNSUPPORTED",
        }
    }

    pub fn span(&self) -> (usize, usize) {
        match self {
            SqlError::Syntax { start, end, .. } | SqlError::Unsupported { start, end, .. } => (*start, *end),
        }
    }
}
