//! Relational data model: typed values, schemas with domains, table storage
//! with reversible mutations, and result sets.

pub mod ddl;
pub mod domain;
pub mod load;
pub mod result;
pub mod schema;
pub mod state;
pub mod value;

pub use ddl::parse_ddl;
pub use domain::{domain_midpoint, AttrDomain, DomainKind};
pub use result::{classify_fit, FitClass, ResultSet};
pub use schema::{ColumnSchema, DomainSpec, ForeignKey, SchemaCatalog, TableSchema};
pub use state::{DatabaseState, Mutation, UndoToken};
pub use value::{format_date, parse_date, Row, Value};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum RelError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("load error: {0}")]
    Load(String),
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("name collision: {0}")]
    NameCollision(String),
    #[error("undo order violated: {0}")]
    UndoOrder(String),
}
