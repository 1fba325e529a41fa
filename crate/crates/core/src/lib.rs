//! Hidden-query extraction: recover the SQL query sealed in an opaque
//! executable from its behavior on mutated databases, then refine the
//! recovered seed into nested form with a guideline-driven chat model and
//! a combinatorial fallback, and validate the result on random databases.

pub mod checker;
pub mod cli;
pub mod corpus;
pub mod minisql;
pub mod mutator;
pub mod oracle;
pub mod relcore;
pub mod tpch;
pub mod xfe;
pub mod xre;
