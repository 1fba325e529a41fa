//! Schema, domain sidecar and CSV instance loading.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::ddl::parse_ddl;
use super::schema::{DomainSpec, SchemaCatalog};
use super::state::DatabaseState;
use super::RelError;

fn io(path: &Path, e: impl std::fmt::Display) -> RelError {
    RelError::Load(format!("{}: {e}", path.display()))
}

/// Reads a DDL file and, if given, a JSON domain sidecar.
pub fn load_catalog(ddl: &Path, domains: Option<&Path>) -> Result<SchemaCatalog, RelError> {
    let src = fs::read_to_string(ddl).map_err(|e| io(ddl, e))?;
    let mut cat = parse_ddl(&src)?;
    if let Some(p) = domains {
        let text = fs::read_to_string(p).map_err(|e| io(p, e))?;
        let specs: BTreeMap<String, DomainSpec> = serde_json::from_str(&text).map_err(|e| io(p, e))?;
        cat.apply_domains(&specs)?;
    }
    Ok(cat)
}

/// Parses CSV text for one table. The header must name every column.
pub fn parse_table_csv(db: &mut DatabaseState, table: &str, text: &str) -> Result<(), RelError> {
    let schema = db.schema(table)?.clone();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| RelError::Load(format!("{table}: {e}")))?.clone();
    let mut positions = Vec::new();
    for col in &schema.columns {
        let pos = headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(&col.name))
            .ok_or_else(|| RelError::Load(format!("{table}: header lacks column {}", col.name)))?;
        positions.push(pos);
    }
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| RelError::Load(format!("{table} record {n}: {e}")))?;
        let mut row = Vec::with_capacity(positions.len());
        for (col, &pos) in schema.columns.iter().zip(&positions) {
            let raw = rec.get(pos).unwrap_or("");
            row.push(col.domain.parse_field(raw).map_err(|e| RelError::Load(format!("{table}.{} record {n}: {e}", col.name)))?);
        }
        rows.push(row);
    }
    db.load_rows(table, rows)
}

/// Loads `<table>.csv` for every catalog table found in `dir` and asserts
/// that the instance is NULL-free.
pub fn load_instance(catalog: SchemaCatalog, dir: &Path) -> Result<DatabaseState, RelError> {
    let mut db = DatabaseState::new(catalog.clone());
    for t in &catalog.tables {
        let p = dir.join(format!("{}.csv", t.name));
        if !p.exists() {
            continue;
        }
        let text = fs::read_to_string(&p).map_err(|e| io(&p, e))?;
        parse_table_csv(&mut db, &t.name, &text)?;
    }
    db.assert_null_free()?;
    Ok(db)
}

pub fn table_csv(db: &DatabaseState, table: &str) -> Result<String, RelError> {
    let schema = db.schema(table)?;
    let mut w = csv::Writer::from_writer(vec![]);
    let names: Vec<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
    w.write_record(&names).map_err(|e| RelError::Load(e.to_string()))?;
    for row in db.rows(table)? {
        let fields: Vec<String> = row.iter().map(|v| v.to_field()).collect();
        w.write_record(&fields).map_err(|e| RelError::Load(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| RelError::Load(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| RelError::Load(e.to_string()))
}

/// Writes one CSV per table plus `schema.sql` into `dir`.
pub fn dump_instance(db: &DatabaseState, dir: &Path) -> Result<(), RelError> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    fs::write(dir.join("schema.sql"), db.catalog().to_ddl()).map_err(|e| io(dir, e))?;
    for t in &db.catalog().tables {
        let p = dir.join(format!("{}.csv", t.name));
        fs::write(&p, table_csv(db, &t.name)?).map_err(|e| io(&p, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relcore::Value;

    fn cat() -> SchemaCatalog {
        parse_ddl("CREATE TABLE t (k INTEGER, name VARCHAR(20), d DATE, amt DECIMAL(8,2));").unwrap()
    }

    #[test]
    fn csv_round_trip_with_quoting() {
        let mut db = DatabaseState::new(cat());
        parse_table_csv(&mut db, "t", "k,name,d,amt\n1,\"a, \"\"b\"\"\",1995-03-16,774.84\n").unwrap();
        assert_eq!(db.rows("t").unwrap()[0][1], Value::text("a, \"b\""));
        let text = table_csv(&db, "t").unwrap();
        let mut db2 = DatabaseState::new(cat());
        parse_table_csv(&mut db2, "t", &text).unwrap();
        assert!(db.contents_eq(&db2));
    }

    #[test]
    fn null_rejected_at_load() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("t.csv"), "k,name,d,amt\n1,,1995-01-01,1.00\n").unwrap();
        let err = load_instance(cat(), dir.path()).unwrap_err();
        assert!(err.to_string().contains("NULL"));
    }

    #[test]
    fn domain_sidecar_applies() {
        let dir = tempfile::tempdir().unwrap();
        let ddl = dir.path().join("s.sql");
        let dom = dir.path().join("d.json");
        std::fs::write(&ddl, "CREATE TABLE t (k INTEGER, mode VARCHAR(10));").unwrap();
        std::fs::write(&dom, r#"{"t.k": {"min": 0, "max": 100}, "t.mode": {"enum": ["AIR", "RAIL"]}}"#).unwrap();
        let c = load_catalog(&ddl, Some(&dom)).unwrap();
        let t = c.table("t").unwrap();
        assert_eq!(t.columns[0].domain.max, Value::Int(100));
        assert_eq!(t.columns[1].domain.enum_values.as_ref().unwrap().len(), 2);
    }
}
