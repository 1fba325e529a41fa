//! Reverse engineering: recover a flat UNION ALL of conjunctive blocks
//! from the hidden query's behavior on mutated instances.
//!
//! Per branch the flow is: isolate the branch by voiding the other
//! branches' tables, minimize to one row per table, probe each column of
//! that row for filters and joins, read the tail clauses off controlled
//! duplicates of the row, and finally run the IN-list loop, which needs
//! the unminimized instance back.

pub mod pred;
pub mod seed;
pub mod tail;
pub mod text;
pub mod union;

use std::fmt;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::mutator::MutatorError;
use crate::oracle::{EngineError, OracleHandle};
use crate::relcore::{AttrDomain, DatabaseState, DomainKind, FitClass, RelError, ResultSet, Value};

pub use pred::{compute_svi_all, confirm_inequality, enumerate_inequality_candidates, extract_equalities, extract_filter_bounds};
pub use seed::{assemble_seed, extract_seed, BranchReport, ExtractionReport, XreConfig};
pub use union::{assign_tables, extract_common_tables, extract_tables_ebe, extract_union_family, isolate_subquery, UnionTableFamily};

/// A column of a base table.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColRef {
    pub table: String,
    pub column: String,
}

impl ColRef {
    pub fn new(table: &str, column: &str) -> Self {
        ColRef { table: table.to_ascii_lowercase(), column: column.to_ascii_lowercase() }
    }
}

impl fmt::Display for ColRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum XreError {
    #[error(transparent)]
    Mutator(#[from] MutatorError),
    #[error(transparent)]
    Union(#[from] union::UnionError),
    #[error("satisfying values of {0} do not form one interval")]
    NonMonotone(ColRef),
    #[error("IN-list budget of {0} literals exhausted on {1}")]
    Budget(usize, ColRef),
    #[error("extraction precondition failed: {0}")]
    Precondition(String),
}

impl From<EngineError> for XreError {
    fn from(e: EngineError) -> Self {
        XreError::Mutator(e.into())
    }
}

impl From<RelError> for XreError {
    fn from(e: RelError) -> Self {
        XreError::Mutator(e.into())
    }
}

pub type XResult<T> = Result<T, XreError>;

/// Numeric view used for cross-type comparisons: dates count days.
pub fn num(v: &Value) -> Option<Decimal> {
    match v {
        Value::Date(d) => Some(Decimal::from(*d)),
        other => other.as_decimal(),
    }
}

/// Integer, decimal and date columns: the ones searched on a step grid.
pub fn is_numeric_domain(d: &AttrDomain) -> bool {
    matches!(d.kind, DomainKind::Integer | DomainKind::Decimal { .. } | DomainKind::Date)
}

/// Oracle and session state for probing a minimized instance. Every
/// `*_with` helper applies its cell changes to row 0, probes, and reverts.
pub struct Prober<'a> {
    pub h: &'a mut OracleHandle,
    pub db: &'a mut DatabaseState,
}

impl<'a> Prober<'a> {
    pub fn new(h: &'a mut OracleHandle, db: &'a mut DatabaseState) -> Self {
        Prober { h, db }
    }

    pub fn fit(&mut self) -> XResult<bool> {
        Ok(self.h.fit(self.db)? == FitClass::Fit)
    }

    pub fn result(&mut self) -> XResult<Option<ResultSet>> {
        match self.h.invoke(self.db) {
            Ok(rs) => Ok(Some(rs)),
            Err(EngineError::Resolution(_)) | Err(EngineError::Execution(_)) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn domain(&self, c: &ColRef) -> AttrDomain {
        self.db.schema(&c.table).ok().and_then(|t| t.column(&c.column)).map(|col| col.domain.clone()).expect("column of the catalog")
    }

    pub fn value(&self, c: &ColRef) -> Value {
        let t = self.db.schema(&c.table).expect("table");
        let i = t.column_index(&c.column).expect("column");
        self.db.rows(&c.table).expect("rows")[0][i].clone()
    }

    /// Sets cells; `None` if some value does not fit its column's domain
    /// (in which case nothing stays applied).
    fn set_all(&mut self, cells: &[(ColRef, Value)]) -> XResult<Option<usize>> {
        let depth = self.db.undo_depth();
        for (c, v) in cells {
            if self.db.set_value(&c.table, 0, &c.column, v.clone()).is_err() {
                self.db.revert_to(depth)?;
                return Ok(None);
            }
        }
        Ok(Some(depth))
    }

    pub fn fit_with(&mut self, cells: &[(ColRef, Value)]) -> XResult<bool> {
        let Some(depth) = self.set_all(cells)? else { return Ok(false) };
        let out = self.fit();
        self.db.revert_to(depth)?;
        out
    }

    pub fn result_with(&mut self, cells: &[(ColRef, Value)]) -> XResult<Option<ResultSet>> {
        let Some(depth) = self.set_all(cells)? else { return Ok(None) };
        let out = self.result();
        self.db.revert_to(depth)?;
        out
    }

    /// Keeps the cell changes applied; the caller reverts to the returned
    /// depth.
    pub fn hold(&mut self, cells: &[(ColRef, Value)]) -> XResult<Option<usize>> {
        self.set_all(cells)
    }
}
