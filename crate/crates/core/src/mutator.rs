//! Database mutations driven by extraction, and the minimizer that shrinks
//! a FIT instance to one row per participating table.
//!
//! Every mutation goes through the session's [`DatabaseState`], so each
//! one sits on its undo stack and in its log. The minimizer works in place:
//! the rows it drops stay as outstanding mutations and the caller reverts
//! to [`MinTrace::base_depth`] to get the original instance back.

use serde::Serialize;

use crate::oracle::{EngineError, OracleHandle};
use crate::relcore::{DatabaseState, FitClass, RelError, UndoToken, Value};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MutatorError {
    #[error(transparent)]
    Rel(#[from] RelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("minimization failed: {0}")]
    MinimizationFailure(String),
}

pub fn void_tables(db: &mut DatabaseState, tables: &[String]) -> Result<UndoToken, MutatorError> {
    Ok(db.void_tables(tables)?)
}

pub fn rename_table(db: &mut DatabaseState, table: &str, dummy: &str) -> Result<UndoToken, MutatorError> {
    Ok(db.rename_table(table, dummy)?)
}

/// Sets `column` in the first row of `table`, which is the only row once
/// the instance is minimized.
pub fn set_value(db: &mut DatabaseState, table: &str, column: &str, v: Value) -> Result<UndoToken, MutatorError> {
    Ok(db.set_value(table, 0, column, v)?)
}

/// A dummy table name not used by the catalog or any current rename.
pub fn fresh_dummy(db: &DatabaseState, table: &str) -> String {
    let taken = |n: &str| db.catalog().table(n).is_some() || db.renames().values().any(|d| d == n);
    let mut n = 0;
    loop {
        let cand = format!("{table}_hqe{n}");
        if !taken(&cand) {
            return cand;
        }
        n += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum MinStep {
    Halve { table: String, kept: &'static str, before: usize, after: usize },
    Drop { table: String, row: usize },
    Clear { table: String },
}

/// What a minimization did and how many oracle calls it took.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinTrace {
    /// Undo depth before the first minimizing mutation.
    pub base_depth: usize,
    pub steps: Vec<MinStep>,
    pub probes: usize,
}

fn probe(h: &mut OracleHandle, db: &DatabaseState, probes: &mut usize) -> Result<bool, MutatorError> {
    *probes += 1;
    Ok(h.fit(db)? == FitClass::Fit)
}

/// Shrinks every table of `t_h` to a single row while keeping the result
/// FIT. Tables are halved round-robin, keeping whichever half stays FIT;
/// a table where neither half does falls back to dropping one row at a
/// time. Tables outside `t_h` that are not voided are emptied. Afterwards
/// each remaining row is checked to be necessary.
pub fn minimize(db: &mut DatabaseState, h: &mut OracleHandle, t_h: &[String]) -> Result<MinTrace, MutatorError> {
    let mut trace = MinTrace { base_depth: db.undo_depth(), steps: Vec::new(), probes: 0 };
    if !probe(h, db, &mut trace.probes)? {
        return Err(MutatorError::MinimizationFailure("instance is not FIT before minimization".into()));
    }

    let others: Vec<String> = db
        .catalog()
        .table_names()
        .into_iter()
        .filter(|t| !t_h.iter().any(|x| x.eq_ignore_ascii_case(t)) && !db.voided().contains(t) && db.row_count(t) > 0)
        .collect();
    for t in others {
        db.retain_rows(&t, &[])?;
        trace.steps.push(MinStep::Clear { table: t });
    }
    if !others_clear_ok(h, db, &mut trace)? {
        return Err(MutatorError::MinimizationFailure("emptying non-participating tables lost FIT".into()));
    }

    let mut stuck = vec![false; t_h.len()];
    loop {
        let mut progressed = false;
        for (i, t) in t_h.iter().enumerate() {
            let n = db.row_count(t);
            if n <= 1 || stuck[i] {
                continue;
            }
            let mid = n / 2;
            let halves: [(&'static str, Vec<usize>); 2] = [("first", (0..mid).collect()), ("second", (mid..n).collect())];
            let mut kept = false;
            for (name, keep) in halves {
                let tok = db.retain_rows(t, &keep)?;
                if probe(h, db, &mut trace.probes)? {
                    trace.steps.push(MinStep::Halve { table: t.clone(), kept: name, before: n, after: keep.len() });
                    kept = true;
                    break;
                }
                db.revert(tok)?;
            }
            if kept {
                progressed = true;
            } else {
                stuck[i] = true;
            }
        }
        if progressed {
            continue;
        }
        // neither half alone keeps FIT: eliminate rows one at a time
        for (i, t) in t_h.iter().enumerate() {
            if !stuck[i] {
                continue;
            }
            let mut row = 0;
            while db.row_count(t) > 1 && row < db.row_count(t) {
                let keep: Vec<usize> = (0..db.row_count(t)).filter(|&r| r != row).collect();
                let tok = db.retain_rows(t, &keep)?;
                if probe(h, db, &mut trace.probes)? {
                    trace.steps.push(MinStep::Drop { table: t.clone(), row });
                    progressed = true;
                } else {
                    db.revert(tok)?;
                    row += 1;
                }
            }
            stuck[i] = false;
        }
        if !progressed {
            break;
        }
    }

    for t in t_h {
        let n = db.row_count(t);
        if n != 1 {
            return Err(MutatorError::MinimizationFailure(format!("{t} keeps {n} rows; no single row preserves FIT")));
        }
    }
    for t in t_h {
        let tok = db.retain_rows(t, &[])?;
        let still = probe(h, db, &mut trace.probes)?;
        db.revert(tok)?;
        if still {
            return Err(MutatorError::MinimizationFailure(format!("the row of {t} is not needed for FIT")));
        }
    }
    Ok(trace)
}

fn others_clear_ok(h: &mut OracleHandle, db: &DatabaseState, trace: &mut MinTrace) -> Result<bool, MutatorError> {
    if trace.steps.is_empty() {
        return Ok(true);
    }
    probe(h, db, &mut trace.probes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minisql::parse_sql;
    use crate::relcore::{parse_ddl, Row};
    use crate::tpch;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn th(ts: &[&str]) -> Vec<String> {
        ts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn q0_minimizes_to_a_joinable_pair() {
        let mut db = tpch::q0_instance();
        let mut h = OracleHandle::embedded(tpch::Q0_SQL).unwrap();
        let tr = minimize(&mut db, &mut h, &th(&["customer", "orders"])).unwrap();
        assert_eq!(db.row_count("customer"), 1);
        assert_eq!(db.row_count("orders"), 1);
        assert_eq!(db.rows("customer").unwrap()[0][0], db.rows("orders").unwrap()[0][1]);
        assert_eq!(h.invocation_count(), tr.probes);
        db.revert_to(tr.base_depth).unwrap();
        assert!(db.contents_eq(&tpch::q0_instance()));
    }

    #[test]
    fn single_row_instance_is_a_fixpoint() {
        let mut db = tpch::q0_instance();
        db.retain_rows("customer", &[0]).unwrap();
        db.retain_rows("orders", &[0]).unwrap();
        db.commit();
        let before = db.digest();
        let mut h = OracleHandle::embedded(tpch::Q0_SQL).unwrap();
        let tr = minimize(&mut db, &mut h, &th(&["customer", "orders"])).unwrap();
        assert!(tr.steps.is_empty());
        assert_eq!(db.digest(), before);
    }

    #[test]
    fn set_value_probes_the_threshold() {
        let mut db = tpch::q0_instance();
        let mut h = OracleHandle::embedded(tpch::Q0_SQL).unwrap();
        let tr = minimize(&mut db, &mut h, &th(&["customer", "orders"])).unwrap();
        let dom = db.schema("customer").unwrap().column("c_acctbal").unwrap().domain.clone();
        let before = db.digest();
        let t = set_value(&mut db, "customer", "c_acctbal", dom.min.clone()).unwrap();
        assert_eq!(h.fit(&db).unwrap(), FitClass::Fit);
        db.revert(t).unwrap();
        assert_eq!(db.digest(), before);
        let t = set_value(&mut db, "customer", "c_acctbal", dom.max.clone()).unwrap();
        assert_eq!(h.fit(&db).unwrap(), FitClass::Empty);
        db.revert(t).unwrap();
        assert!(set_value(&mut db, "customer", "c_acctbal", Value::Int(i64::MAX)).is_err());
        db.revert_to(tr.base_depth).unwrap();
    }

    #[test]
    fn voiding_and_renaming_on_the_union_example() {
        let mut db = tpch::union_instance();
        let mut h = OracleHandle::embedded(tpch::UNION_HIDDEN_SQL).unwrap();
        let t = void_tables(&mut db, &th(&["customer"])).unwrap();
        assert_eq!(h.fit(&db).unwrap(), FitClass::Fit);
        db.revert(t).unwrap();
        let t = void_tables(&mut db, &[]).unwrap();
        assert!(db.contents_eq(&tpch::union_instance()));
        db.revert(t).unwrap();
        let t = void_tables(&mut db, &th(&["supplier", "customer"])).unwrap();
        assert_ne!(h.fit(&db).unwrap(), FitClass::Fit);
        db.revert(t).unwrap();

        let mut q = OracleHandle::embedded(tpch::Q0_SQL).unwrap();
        let mut db = tpch::q0_instance();
        let base = q.invoke(&db).unwrap().digest();
        let d = fresh_dummy(&db, "orders");
        let t = rename_table(&mut db, "orders", &d).unwrap();
        assert!(q.invoke(&db).unwrap_err().is_resolution());
        db.revert(t).unwrap();
        assert_eq!(q.invoke(&db).unwrap().digest(), base);
        let t = rename_table(&mut db, "part", "part_x").unwrap();
        assert_eq!(q.invoke(&db).unwrap().digest(), base);
        db.revert(t).unwrap();
        assert!(rename_table(&mut db, "orders", "customer").is_err());
    }

    #[test]
    fn rename_revert_pairs_restore_the_instance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut db = tpch::union_instance();
        let names = db.catalog().table_names();
        for _ in 0..100 {
            let t = &names[rng.gen_range(0..names.len())];
            let d = fresh_dummy(&db, t);
            let tok = rename_table(&mut db, t, &d).unwrap();
            db.revert(tok).unwrap();
        }
        assert!(db.contents_eq(&tpch::union_instance()));
        assert_eq!(db.undo_depth(), 0);
    }

    const SPJ_DDL: &str = "CREATE TABLE r (a INTEGER, b INTEGER); CREATE TABLE s (a INTEGER, c INTEGER); CREATE TABLE u (c INTEGER, d INTEGER);";

    fn spj_instance(rows: [Vec<(i64, i64)>; 3]) -> DatabaseState {
        let mut cat = parse_ddl(SPJ_DDL).unwrap();
        for t in &mut cat.tables {
            for c in &mut t.columns {
                c.domain = crate::relcore::AttrDomain::integer(0, 20);
            }
        }
        let mut db = DatabaseState::new(cat);
        for (t, rs) in ["r", "s", "u"].iter().zip(rows) {
            db.load_rows(t, rs.into_iter().map(|(x, y)| vec![Value::Int(x), Value::Int(y)] as Row).collect()).unwrap();
        }
        db
    }

    fn spj_query() -> impl Strategy<Value = (String, Vec<String>)> {
        let filters = prop::collection::vec((0usize..6, 0i64..20, prop::bool::ANY), 0..3);
        (1usize..4, filters).prop_map(|(n, fs)| {
            let tables = ["r", "s", "u"][..n].to_vec();
            let cols = [("r", "a"), ("r", "b"), ("s", "a"), ("s", "c"), ("u", "c"), ("u", "d")];
            let mut conds = Vec::new();
            if n >= 2 {
                conds.push("r.a = s.a".to_string());
            }
            if n >= 3 {
                conds.push("s.c = u.c".to_string());
            }
            for (ci, v, le) in fs {
                let (t, c) = cols[ci];
                if tables.contains(&t) {
                    conds.push(format!("{t}.{c} {} {v}", if le { "<=" } else { ">=" }));
                }
            }
            let w = if conds.is_empty() { String::new() } else { format!(" WHERE {}", conds.join(" AND ")) };
            let sql = format!("SELECT r.b FROM {}{}", tables.join(", "), w);
            (sql, tables.iter().map(|s| s.to_string()).collect())
        })
    }

    fn rows() -> impl Strategy<Value = Vec<(i64, i64)>> {
        prop::collection::vec((0i64..6, 0i64..20), 1..22)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn minimized_instances_are_single_row_and_fit((sql, tables) in spj_query(), r in rows(), s in rows(), u in rows()) {
            let mut db = spj_instance([r, s, u]);
            let mut h = OracleHandle::embedded_ir(parse_sql(&sql).unwrap());
            prop_assume!(h.fit(&db).unwrap() == FitClass::Fit);
            let tr = minimize(&mut db, &mut h, &tables).unwrap();
            for t in &tables {
                prop_assert_eq!(db.row_count(t), 1);
            }
            prop_assert_eq!(h.fit(&db).unwrap(), FitClass::Fit);
            prop_assert!(tr.probes > 0);
        }
    }
}
