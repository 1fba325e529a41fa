use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::domain::{AttrDomain, DomainKind};
use super::RelError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    /// Declared SQL type, kept for rendering the schema DDL back out.
    pub sql_type: String,
    pub domain: AttrDomain,
    pub nullable: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub columns: Vec<String>,
    pub ref_table: String,
    pub ref_columns: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    pub name: String,
    pub columns: Vec<ColumnSchema>,
    pub primary_key: Vec<String>,
    pub foreign_keys: Vec<ForeignKey>,
}

impl TableSchema {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSchema> {
        self.column_index(name).map(|i| &self.columns[i])
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaCatalog {
    pub tables: Vec<TableSchema>,
}

/// Sidecar domain override for one column.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DomainSpec {
    pub min: Option<serde_json::Value>,
    pub max: Option<serde_json::Value>,
    #[serde(rename = "enum")]
    pub enum_values: Option<Vec<String>>,
}

impl SchemaCatalog {
    pub fn new(tables: Vec<TableSchema>) -> Result<Self, RelError> {
        let cat = SchemaCatalog { tables };
        cat.validate()?;
        Ok(cat)
    }

    pub fn table(&self, name: &str) -> Option<&TableSchema> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn table_names(&self) -> Vec<String> {
        self.tables.iter().map(|t| t.name.clone()).collect()
    }

    /// Tables whose column `name` is unambiguous across the whole catalog.
    pub fn owner_of_column(&self, column: &str) -> Option<&TableSchema> {
        let mut owners = self.tables.iter().filter(|t| t.column_index(column).is_some());
        let first = owners.next()?;
        if owners.next().is_some() {
            None
        } else {
            Some(first)
        }
    }

    pub fn validate(&self) -> Result<(), RelError> {
        let mut names = HashSet::new();
        for t in &self.tables {
            if !names.insert(t.name.to_ascii_lowercase()) {
                return Err(RelError::Schema(format!("duplicate table {}", t.name)));
            }
            let mut cols = HashSet::new();
            for c in &t.columns {
                if !cols.insert(c.name.to_ascii_lowercase()) {
                    return Err(RelError::Schema(format!("duplicate column {}.{}", t.name, c.name)));
                }
                c.domain.validate().map_err(|e| RelError::Schema(format!("{}.{}: {e}", t.name, c.name)))?;
            }
            for k in &t.primary_key {
                if t.column_index(k).is_none() {
                    return Err(RelError::Schema(format!("primary key column {}.{k} missing", t.name)));
                }
            }
        }
        for t in &self.tables {
            for fk in &t.foreign_keys {
                let target = self.table(&fk.ref_table).ok_or_else(|| RelError::Schema(format!("{}: foreign key to unknown table {}", t.name, fk.ref_table)))?;
                if fk.columns.len() != fk.ref_columns.len() {
                    return Err(RelError::Schema(format!("{}: foreign key arity mismatch", t.name)));
                }
                for (c, rc) in fk.columns.iter().zip(&fk.ref_columns) {
                    if t.column_index(c).is_none() || target.column_index(rc).is_none() {
                        return Err(RelError::Schema(format!("{}: foreign key {c} -> {}.{rc} does not resolve", t.name, fk.ref_table)));
                    }
                }
            }
        }
        Ok(())
    }

    /// Applies `table.column -> {min, max, enum}` overrides.
    pub fn apply_domains(&mut self, specs: &BTreeMap<String, DomainSpec>) -> Result<(), RelError> {
        for (key, spec) in specs {
            let (tname, cname) = key.split_once('.').ok_or_else(|| RelError::Schema(format!("domain key '{key}' is not table.column")))?;
            let table = self
                .tables
                .iter_mut()
                .find(|t| t.name.eq_ignore_ascii_case(tname))
                .ok_or_else(|| RelError::Schema(format!("domain for unknown table {tname}")))?;
            let col = table
                .columns
                .iter_mut()
                .find(|c| c.name.eq_ignore_ascii_case(cname))
                .ok_or_else(|| RelError::Schema(format!("domain for unknown column {key}")))?;
            if let Some(values) = &spec.enum_values {
                col.domain = AttrDomain::categorical(values.clone());
            }
            let field = |v: &serde_json::Value| match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            if !matches!(col.domain.kind, DomainKind::Categorical | DomainKind::FreeText) {
                if let Some(v) = &spec.min {
                    col.domain.min = col.domain.parse_field(&field(v))?;
                }
                if let Some(v) = &spec.max {
                    col.domain.max = col.domain.parse_field(&field(v))?;
                }
            }
            col.domain.validate().map_err(|e| RelError::Schema(format!("{key}: {e}")))?;
        }
        Ok(())
    }

    /// Renders the catalog as CREATE TABLE statements.
    pub fn to_ddl(&self) -> String {
        let mut out = String::new();
        for t in &self.tables {
            out.push_str(&format!("CREATE TABLE {} (\n", t.name));
            let mut lines: Vec<String> = t
                .columns
                .iter()
                .map(|c| {
                    let null = if c.nullable { "" } else { " NOT NULL" };
                    format!("  {} {}{}", c.name, c.sql_type, null)
                })
                .collect();
            if !t.primary_key.is_empty() {
                lines.push(format!("  PRIMARY KEY ({})", t.primary_key.join(", ")));
            }
            for fk in &t.foreign_keys {
                lines.push(format!("  FOREIGN KEY ({}) REFERENCES {} ({})", fk.columns.join(", "), fk.ref_table, fk.ref_columns.join(", ")));
            }
            out.push_str(&lines.join(",\n"));
            out.push_str("\n);\n");
        }
        out
    }
}
