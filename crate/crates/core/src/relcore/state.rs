use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::schema::{SchemaCatalog, TableSchema};
use super::value::{Row, Value};
use super::RelError;

/// One recorded state change. The log of these is enough to rebuild any
/// state from the instance it started from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Mutation {
    Void { tables: Vec<String> },
    Rename { table: String, dummy: String },
    Set { table: String, row: usize, column: String, value: Value },
    Retain { table: String, rows: Vec<usize> },
    Insert { table: String, rows: Vec<Row> },
    Revert,
    Commit,
}

impl Mutation {
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).expect("mutation serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Undo {
    Unvoid(Vec<String>),
    Unrename(String),
    Cell { table: String, row: usize, col: usize, old: Value },
    Rows { table: String, old: Vec<Row> },
}

/// Handle returned by every reversible mutation. Reverts are LIFO.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UndoToken(pub usize);

/// Mutable relational instance with a rename overlay, a void set, an undo
/// stack and a lineage log.
#[derive(Debug)]
pub struct DatabaseState {
    catalog: SchemaCatalog,
    tables: BTreeMap<String, Vec<Row>>,
    renames: BTreeMap<String, String>,
    voided: BTreeSet<String>,
    generation: u64,
    undo: Vec<Undo>,
    log: Vec<Mutation>,
    lineage: u64,
}

static LINEAGE: AtomicU64 = AtomicU64::new(1);

fn next_lineage() -> u64 {
    LINEAGE.fetch_add(1, AtomicOrdering::Relaxed)
}

// A clone starts its own lineage: its log diverges from the original's as
// soon as either side mutates.
impl Clone for DatabaseState {
    fn clone(&self) -> Self {
        DatabaseState {
            catalog: self.catalog.clone(),
            tables: self.tables.clone(),
            renames: self.renames.clone(),
            voided: self.voided.clone(),
            generation: self.generation,
            undo: self.undo.clone(),
            log: self.log.clone(),
            lineage: next_lineage(),
        }
    }
}

impl DatabaseState {
    pub fn new(catalog: SchemaCatalog) -> Self {
        let tables = catalog.tables.iter().map(|t| (t.name.to_ascii_lowercase(), Vec::new())).collect();
        DatabaseState {
            catalog,
            tables,
            renames: BTreeMap::new(),
            voided: BTreeSet::new(),
            generation: 0,
            undo: Vec::new(),
            log: Vec::new(),
            lineage: next_lineage(),
        }
    }

    pub fn catalog(&self) -> &SchemaCatalog {
        &self.catalog
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Identifies this object's mutation history; distinct for every
    /// constructed, cloned or snapshotted state.
    pub fn lineage_id(&self) -> u64 {
        self.lineage
    }

    pub fn log(&self) -> &[Mutation] {
        &self.log
    }

    pub fn undo_depth(&self) -> usize {
        self.undo.len()
    }

    pub fn voided(&self) -> &BTreeSet<String> {
        &self.voided
    }

    pub fn renames(&self) -> &BTreeMap<String, String> {
        &self.renames
    }

    fn key(&self, table: &str) -> Result<String, RelError> {
        let k = table.to_ascii_lowercase();
        if self.tables.contains_key(&k) {
            Ok(k)
        } else {
            Err(RelError::UnknownTable(table.to_string()))
        }
    }

    pub fn schema(&self, table: &str) -> Result<&TableSchema, RelError> {
        self.catalog.table(table).ok_or_else(|| RelError::UnknownTable(table.to_string()))
    }

    /// Rows stored for `table` by original name, ignoring voiding.
    pub fn raw_rows(&self, table: &str) -> Result<&[Row], RelError> {
        let k = self.key(table)?;
        Ok(&self.tables[&k])
    }

    /// Rows visible for `table` by original name: empty when voided.
    pub fn rows(&self, table: &str) -> Result<&[Row], RelError> {
        let k = self.key(table)?;
        if self.voided.contains(&k) {
            Ok(&[])
        } else {
            Ok(&self.tables[&k])
        }
    }

    pub fn row_count(&self, table: &str) -> usize {
        self.rows(table).map(|r| r.len()).unwrap_or(0)
    }

    /// Resolves a name as a query would see it, honoring renames. Returns
    /// the schema and visible rows.
    pub fn resolve(&self, name: &str) -> Option<(&TableSchema, &[Row])> {
        let n = name.to_ascii_lowercase();
        let original = if let Some((orig, _)) = self.renames.iter().find(|(_, d)| **d == n) {
            orig.clone()
        } else if self.renames.contains_key(&n) {
            return None;
        } else {
            n
        };
        let schema = self.catalog.table(&original)?;
        let rows = self.rows(&original).ok()?;
        Some((schema, rows))
    }

    /// Bulk load outside the undo/log machinery; used to build instances.
    pub fn load_rows(&mut self, table: &str, rows: Vec<Row>) -> Result<(), RelError> {
        let k = self.key(table)?;
        let schema = self.schema(&k)?.clone();
        let mut fixed = Vec::with_capacity(rows.len());
        for row in rows {
            if row.len() != schema.columns.len() {
                return Err(RelError::Load(format!("{k}: row arity {} != {}", row.len(), schema.columns.len())));
            }
            let mut out = Vec::with_capacity(row.len());
            for (v, c) in row.iter().zip(&schema.columns) {
                out.push(c.domain.coerce(v).map_err(|e| RelError::Load(format!("{k}.{}: {e}", c.name)))?);
            }
            fixed.push(out);
        }
        self.tables.get_mut(&k).expect("checked").extend(fixed);
        Ok(())
    }

    /// Fails when any cell of any table is NULL.
    pub fn assert_null_free(&self) -> Result<(), RelError> {
        for (t, rows) in &self.tables {
            for (i, row) in rows.iter().enumerate() {
                if let Some(j) = row.iter().position(Value::is_null) {
                    let col = &self.schema(t)?.columns[j].name;
                    return Err(RelError::Load(format!("NULL in {t}.{col} at row {i}")));
                }
            }
        }
        Ok(())
    }

    fn push(&mut self, m: Mutation, u: Undo) -> UndoToken {
        self.log.push(m);
        self.undo.push(u);
        self.generation += 1;
        UndoToken(self.undo.len() - 1)
    }

    pub fn void_tables(&mut self, tables: &[String]) -> Result<UndoToken, RelError> {
        let mut keys = Vec::new();
        for t in tables {
            keys.push(self.key(t)?);
        }
        let newly: Vec<String> = keys.iter().filter(|k| !self.voided.contains(*k)).cloned().collect();
        for k in &newly {
            self.voided.insert(k.clone());
        }
        Ok(self.push(Mutation::Void { tables: keys }, Undo::Unvoid(newly)))
    }

    pub fn rename_table(&mut self, table: &str, dummy: &str) -> Result<UndoToken, RelError> {
        let k = self.key(table)?;
        let d = dummy.to_ascii_lowercase();
        if self.tables.contains_key(&d) || self.renames.values().any(|x| *x == d) {
            return Err(RelError::NameCollision(dummy.to_string()));
        }
        if self.renames.contains_key(&k) {
            return Err(RelError::NameCollision(format!("{table} already renamed")));
        }
        self.renames.insert(k.clone(), d.clone());
        Ok(self.push(Mutation::Rename { table: k.clone(), dummy: d }, Undo::Unrename(k)))
    }

    pub fn set_value(&mut self, table: &str, row: usize, column: &str, value: Value) -> Result<UndoToken, RelError> {
        let k = self.key(table)?;
        let schema = self.schema(&k)?;
        let col = schema.column_index(column).ok_or_else(|| RelError::UnknownColumn(format!("{k}.{column}")))?;
        let dom = &schema.columns[col].domain;
        if !dom.contains(&value) {
            return Err(RelError::Domain(format!("{value} outside domain of {k}.{column}")));
        }
        let value = dom.coerce(&value)?;
        let cname = schema.columns[col].name.clone();
        let rows = self.tables.get_mut(&k).expect("checked");
        let cell = rows.get_mut(row).ok_or_else(|| RelError::Domain(format!("{k} has no row {row}")))?.get_mut(col).expect("arity");
        let old = std::mem::replace(cell, value.clone());
        Ok(self.push(Mutation::Set { table: k.clone(), row, column: cname, value }, Undo::Cell { table: k, row, col, old }))
    }

    /// Keeps only the listed rows (by current position, in that order).
    pub fn retain_rows(&mut self, table: &str, keep: &[usize]) -> Result<UndoToken, RelError> {
        let k = self.key(table)?;
        let rows = self.tables.get_mut(&k).expect("checked");
        if let Some(bad) = keep.iter().find(|&&i| i >= rows.len()) {
            return Err(RelError::Domain(format!("{k} has no row {bad}")));
        }
        let kept: Vec<Row> = keep.iter().map(|&i| rows[i].clone()).collect();
        let old = std::mem::replace(rows, kept);
        Ok(self.push(Mutation::Retain { table: k.clone(), rows: keep.to_vec() }, Undo::Rows { table: k, old }))
    }

    pub fn insert_rows(&mut self, table: &str, new_rows: Vec<Row>) -> Result<UndoToken, RelError> {
        let k = self.key(table)?;
        let schema = self.schema(&k)?.clone();
        let mut fixed = Vec::new();
        for row in &new_rows {
            if row.len() != schema.columns.len() {
                return Err(RelError::Domain(format!("{k}: row arity mismatch")));
            }
            let mut out = Vec::new();
            for (v, c) in row.iter().zip(&schema.columns) {
                out.push(c.domain.coerce(v)?);
            }
            fixed.push(out);
        }
        let rows = self.tables.get_mut(&k).expect("checked");
        let old = rows.clone();
        rows.extend(fixed.iter().cloned());
        Ok(self.push(Mutation::Insert { table: k.clone(), rows: fixed }, Undo::Rows { table: k, old }))
    }

    /// Undoes the mutation behind `token`, which must be the most recent
    /// outstanding one.
    pub fn revert(&mut self, token: UndoToken) -> Result<(), RelError> {
        if self.undo.is_empty() || token.0 != self.undo.len() - 1 {
            return Err(RelError::UndoOrder(format!("token {} is not the top of the undo stack (depth {})", token.0, self.undo.len())));
        }
        match self.undo.pop().expect("non-empty") {
            Undo::Unvoid(ts) => {
                for t in ts {
                    self.voided.remove(&t);
                }
            }
            Undo::Unrename(t) => {
                self.renames.remove(&t);
            }
            Undo::Cell { table, row, col, old } => {
                self.tables.get_mut(&table).expect("table")[row][col] = old;
            }
            Undo::Rows { table, old } => {
                *self.tables.get_mut(&table).expect("table") = old;
            }
        }
        self.log.push(Mutation::Revert);
        self.generation += 1;
        Ok(())
    }

    /// Reverts every outstanding mutation down to `depth`.
    pub fn revert_to(&mut self, depth: usize) -> Result<(), RelError> {
        while self.undo.len() > depth {
            self.revert(UndoToken(self.undo.len() - 1))?;
        }
        Ok(())
    }

    /// Makes all outstanding mutations permanent.
    pub fn commit(&mut self) {
        if !self.undo.is_empty() {
            self.undo.clear();
            self.log.push(Mutation::Commit);
            self.generation += 1;
        }
    }

    /// Applies a logged mutation. Used by journal replay.
    pub fn apply(&mut self, m: &Mutation) -> Result<(), RelError> {
        match m {
            Mutation::Void { tables } => self.void_tables(tables).map(|_| ()),
            Mutation::Rename { table, dummy } => self.rename_table(table, dummy).map(|_| ()),
            Mutation::Set { table, row, column, value } => self.set_value(table, *row, column, value.clone()).map(|_| ()),
            Mutation::Retain { table, rows } => self.retain_rows(table, rows).map(|_| ()),
            Mutation::Insert { table, rows } => self.insert_rows(table, rows.clone()).map(|_| ()),
            Mutation::Revert => {
                let top = self.undo.len().checked_sub(1).ok_or_else(|| RelError::UndoOrder("nothing to revert".into()))?;
                self.revert(UndoToken(top))
            }
            Mutation::Commit => {
                self.commit();
                Ok(())
            }
        }
    }

    /// A copy of the visible contents with a fresh log and undo stack.
    pub fn snapshot(&self) -> DatabaseState {
        let mut s = self.clone();
        s.undo.clear();
        s.log.clear();
        s.generation = 0;
        s
    }

    /// Deep equality of contents, overlay and void set.
    pub fn contents_eq(&self, other: &DatabaseState) -> bool {
        self.tables == other.tables && self.renames == other.renames && self.voided == other.voided
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (t, rows) in &self.tables {
            h.update(t.as_bytes());
            h.update(if self.voided.contains(t) { b"V" } else { b"-" });
            if let Some(d) = self.renames.get(t) {
                h.update(d.as_bytes());
            }
            for row in rows {
                for v in row {
                    h.update(format!("{v:?}").as_bytes());
                    h.update(b"\x1f");
                }
                h.update(b"\x1e");
            }
            h.update(b"\x1d");
        }
        hex::encode(h.finalize())
    }

    pub fn total_rows(&self) -> usize {
        self.tables.keys().map(|t| self.row_count(t)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relcore::ddl::parse_ddl;
    use proptest::prelude::*;

    fn db() -> DatabaseState {
        let cat = parse_ddl("CREATE TABLE a (x INT, y DECIMAL(10,2)); CREATE TABLE b (z INT);").unwrap();
        let mut d = DatabaseState::new(cat);
        d.load_rows("a", vec![vec![Value::Int(1), Value::Int(2)], vec![Value::Int(3), Value::dec("4.5").unwrap()]]).unwrap();
        d.load_rows("b", vec![vec![Value::Int(9)]]).unwrap();
        d
    }

    #[test]
    fn void_hides_rows_keeps_schema() {
        let mut d = db();
        let t = d.void_tables(&["A".into()]).unwrap();
        assert_eq!(d.row_count("a"), 0);
        assert!(d.resolve("a").is_some());
        d.revert(t).unwrap();
        assert_eq!(d.row_count("a"), 2);
    }

    #[test]
    fn rename_breaks_resolution() {
        let mut d = db();
        let t = d.rename_table("a", "a_dummy").unwrap();
        assert!(d.resolve("a").is_none());
        assert!(d.resolve("a_dummy").is_some());
        assert!(d.rename_table("b", "a_dummy").is_err());
        d.revert(t).unwrap();
        assert!(d.resolve("a").is_some());
    }

    #[test]
    fn out_of_order_revert_rejected() {
        let mut d = db();
        let t1 = d.set_value("a", 0, "x", Value::Int(5)).unwrap();
        let _t2 = d.set_value("a", 0, "x", Value::Int(6)).unwrap();
        assert!(matches!(d.revert(t1), Err(RelError::UndoOrder(_))));
    }

    #[test]
    fn set_value_checks_domain() {
        let mut d = db();
        assert!(d.set_value("a", 0, "y", Value::dec("1.001").unwrap()).is_err());
        assert!(d.set_value("a", 0, "y", Value::Int(1i64 << 40)).is_err());
    }

    #[test]
    fn replay_reproduces_state() {
        let mut d = db();
        let base = d.snapshot();
        d.retain_rows("a", &[1]).unwrap();
        let t = d.set_value("a", 0, "x", Value::Int(7)).unwrap();
        d.revert(t).unwrap();
        d.void_tables(&["b".into()]).unwrap();
        let mut r = base.clone();
        for m in d.log().to_vec() {
            r.apply(&m).unwrap();
        }
        assert!(r.contents_eq(&d));
        assert_eq!(r.digest(), d.digest());
    }

    proptest! {
        #[test]
        fn mutation_sequences_revert_to_snapshot(ops in proptest::collection::vec((0u8..5, 0i64..100), 0..30)) {
            let mut d = db();
            let before = d.snapshot();
            let mut n = 0;
            for (op, v) in ops {
                let r = match op {
                    0 => d.void_tables(&["a".into()]),
                    1 => d.rename_table("b", &format!("dummy_{n}")),
                    2 => d.set_value("a", (v % 2) as usize, "x", Value::Int(v)),
                    3 => d.retain_rows("a", &[0]),
                    _ => d.insert_rows("b", vec![vec![Value::Int(v)]]),
                };
                if r.is_ok() { n += 1; }
            }
            d.revert_to(0).unwrap();
            prop_assert!(d.contents_eq(&before));
            prop_assert_eq!(d.digest(), before.digest());
        }
    }
}
