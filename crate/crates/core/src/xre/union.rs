//! Which tables the hidden query reads, and how they split across the
//! branches of a UNION ALL.
//!
//! Table usage comes from renaming (a resolution error means the table is
//! referenced). The branch split comes from voiding: a table whose voiding
//! alone kills the result is common to all branches; the rest are
//! auxiliary, and the power set of auxiliary tables is classified bottom-up
//! into sets whose voiding kills every branch (core) and sets that leave
//! some branch alive (side). The maximal side sets are exactly the
//! complements of each branch's auxiliary tables.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::mutator::{fresh_dummy, MutatorError};
use crate::oracle::{EngineError, OracleHandle};
use crate::relcore::{DatabaseState, FitClass, UndoToken};

pub type TableSet = BTreeSet<String>;

pub const DEFAULT_AUX_CAP: usize = 12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum UnionError {
    #[error(transparent)]
    Mutator(#[from] MutatorError),
    #[error("{0} auxiliary tables exceed the cap of {1}")]
    Scope(usize, usize),
    #[error("union assumption violated: {0}")]
    AssumptionViolation(String),
}

impl From<EngineError> for UnionError {
    fn from(e: EngineError) -> Self {
        UnionError::Mutator(e.into())
    }
}

impl From<crate::relcore::RelError> for UnionError {
    fn from(e: crate::relcore::RelError) -> Self {
        UnionError::Mutator(e.into())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct UnionTableFamily {
    pub t_h: TableSet,
    pub common: TableSet,
    pub aux_all: TableSet,
    pub core: Vec<TableSet>,
    pub side: Vec<TableSet>,
    pub max_side: Vec<TableSet>,
    pub aux: Vec<TableSet>,
    pub from_set: Vec<TableSet>,
    /// Void probes issued while classifying the lattice.
    pub lattice_probes: usize,
    /// Lattice members classified as core by upward closure, unprobed.
    pub skipped: usize,
}

fn set(items: impl IntoIterator<Item = String>) -> TableSet {
    items.into_iter().collect()
}

/// Tables referenced by the hidden query, found by renaming each catalog
/// table in turn.
pub fn extract_tables_ebe(h: &mut OracleHandle, db: &mut DatabaseState) -> Result<TableSet, UnionError> {
    let mut used = TableSet::new();
    for t in db.catalog().table_names() {
        let dummy = fresh_dummy(db, &t);
        let tok = db.rename_table(&t, &dummy)?;
        let out = h.invoke(db);
        db.revert(tok)?;
        match out {
            Err(EngineError::Resolution(_)) => {
                used.insert(t);
            }
            Ok(_) | Err(EngineError::Execution(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(used)
}

fn voided_fit(h: &mut OracleHandle, db: &mut DatabaseState, ts: &TableSet) -> Result<bool, UnionError> {
    let v: Vec<String> = ts.iter().cloned().collect();
    let tok = db.void_tables(&v)?;
    let fit = h.fit(db);
    db.revert(tok)?;
    Ok(fit? == FitClass::Fit)
}

/// Tables whose voiding alone makes the result non-FIT.
pub fn extract_common_tables(h: &mut OracleHandle, db: &mut DatabaseState, t_h: &TableSet) -> Result<TableSet, UnionError> {
    let mut common = TableSet::new();
    for t in t_h {
        if !voided_fit(h, db, &set([t.clone()]))? {
            common.insert(t.clone());
        }
    }
    Ok(common)
}

/// Non-empty proper subsets of `all`, by ascending size and then
/// lexicographically.
fn lattice(all: &TableSet) -> Vec<TableSet> {
    let items: Vec<&String> = all.iter().collect();
    let n = items.len();
    let mut out: Vec<TableSet> = (1u64..(1u64 << n) - 1).map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).map(|i| items[i].clone()).collect()).collect();
    out.sort_by(|a: &TableSet, b: &TableSet| a.len().cmp(&b.len()).then_with(|| a.iter().cmp(b.iter())));
    out
}

/// Classifies the auxiliary-table lattice and derives each branch's FROM
/// tables. All voidings are reverted.
pub fn assign_tables(h: &mut OracleHandle, db: &mut DatabaseState, aux_all: &TableSet, common: &TableSet, cap: usize) -> Result<UnionTableFamily, UnionError> {
    let mut fam = UnionTableFamily { t_h: aux_all.union(common).cloned().collect(), common: common.clone(), aux_all: aux_all.clone(), ..Default::default() };
    if aux_all.len() > cap {
        return Err(UnionError::Scope(aux_all.len(), cap));
    }
    if aux_all.len() <= 1 {
        fam.aux = vec![aux_all.clone()];
        fam.from_set = vec![fam.t_h.clone()];
        return Ok(fam);
    }

    for u in lattice(aux_all) {
        if fam.core.iter().any(|c| c.is_subset(&u)) {
            fam.skipped += 1;
            fam.core.push(u);
            continue;
        }
        fam.lattice_probes += 1;
        if voided_fit(h, db, &u)? {
            fam.side.push(u);
        } else {
            fam.core.push(u);
        }
    }

    let is_core = |s: &TableSet, core: &[TableSet]| s == aux_all || core.contains(s);
    for s in &fam.side {
        let maximal = aux_all.difference(s).all(|a| {
            let mut bigger = s.clone();
            bigger.insert(a.clone());
            is_core(&bigger, &fam.core)
        });
        if maximal {
            fam.max_side.push(s.clone());
        }
    }
    if fam.max_side.is_empty() {
        return Err(UnionError::AssumptionViolation("no maximal side table set".into()));
    }
    fam.aux = fam.max_side.iter().map(|s| aux_all.difference(s).cloned().collect()).collect();
    for (i, a) in fam.aux.iter().enumerate() {
        for (j, b) in fam.aux.iter().enumerate() {
            if i != j && a.is_subset(b) {
                return Err(UnionError::AssumptionViolation(format!("auxiliary tables {a:?} of one branch are contained in {b:?} of another")));
            }
        }
    }
    fam.from_set = fam.aux.iter().map(|a| a.union(common).cloned().collect()).collect();
    Ok(fam)
}

/// Voids every table of `t_h` outside `fs`, leaving one branch alive.
pub fn isolate_subquery(db: &mut DatabaseState, fs: &TableSet, t_h: &TableSet) -> Result<UndoToken, UnionError> {
    let others: Vec<String> = t_h.difference(fs).cloned().collect();
    Ok(db.void_tables(&others)?)
}

/// Runs table discovery and branch assignment end to end.
pub fn extract_union_family(h: &mut OracleHandle, db: &mut DatabaseState, cap: usize) -> Result<UnionTableFamily, UnionError> {
    let t_h = extract_tables_ebe(h, db)?;
    let common = extract_common_tables(h, db, &t_h)?;
    let aux_all: TableSet = t_h.difference(&common).cloned().collect();
    assign_tables(h, db, &aux_all, &common, cap)
}

/// Upward closure of the core sets over a full classification.
pub fn core_is_upward_closed(fam: &UnionTableFamily) -> bool {
    fam.core.iter().all(|c| fam.side.iter().all(|s| !c.is_subset(s)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tpch;

    fn ts(names: &[&str]) -> TableSet {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn q0_uses_customer_and_orders() {
        let mut h = OracleHandle::embedded(tpch::Q0_SQL).unwrap();
        let mut db = tpch::q0_instance();
        assert_eq!(extract_tables_ebe(&mut h, &mut db).unwrap(), ts(&["customer", "orders"]));
        let fam = extract_union_family(&mut h, &mut db, DEFAULT_AUX_CAP).unwrap();
        assert_eq!(fam.common, ts(&["customer", "orders"]));
        assert!(fam.aux_all.is_empty());
        assert_eq!(fam.from_set, vec![ts(&["customer", "orders"])]);
        assert_eq!(db.undo_depth(), 0);
    }

    #[test]
    fn inner_join_variant_matches_the_lattice_table() {
        let mut h = OracleHandle::embedded(tpch::UNION_INNER_SQL).unwrap();
        let mut db = tpch::union_instance();
        let before = db.digest();
        let fam = extract_union_family(&mut h, &mut db, DEFAULT_AUX_CAP).unwrap();
        assert_eq!(fam.t_h, ts(&["customer", "lineitem", "orders", "supplier"]));
        assert_eq!(fam.common, ts(&["orders"]));
        let mut ms = fam.max_side.clone();
        ms.sort();
        assert_eq!(ms, vec![ts(&["customer"]), ts(&["lineitem", "supplier"])]);
        let mut fs = fam.from_set.clone();
        fs.sort();
        assert_eq!(fs, vec![ts(&["customer", "orders"]), ts(&["lineitem", "orders", "supplier"])]);
        assert!(fam.core.contains(&ts(&["customer", "supplier"])));
        assert!(fam.core.contains(&ts(&["customer", "lineitem"])));
        for s in [ts(&["lineitem", "supplier"]), ts(&["supplier"]), ts(&["customer"]), ts(&["lineitem"])] {
            assert!(fam.side.contains(&s));
        }
        assert!(core_is_upward_closed(&fam));
        // no singleton is core, so the shortcut never fires on this lattice
        assert_eq!((fam.lattice_probes, fam.skipped), (6, 0));
        assert_eq!(db.digest(), before);
    }

    #[test]
    fn outer_join_branch_has_no_common_table() {
        // voiding orders keeps the outer-join branch alive
        let mut h = OracleHandle::embedded(tpch::UNION_HIDDEN_SQL).unwrap();
        let mut db = tpch::union_instance();
        let fam = extract_union_family(&mut h, &mut db, DEFAULT_AUX_CAP).unwrap();
        assert!(fam.common.is_empty());
        let mut fs = fam.from_set.clone();
        fs.sort();
        assert_eq!(fs, vec![ts(&["customer"]), ts(&["lineitem", "orders", "supplier"])]);
    }

    #[test]
    fn isolation_leaves_one_branch() {
        let mut h = OracleHandle::embedded(tpch::UNION_INNER_SQL).unwrap();
        let mut db = tpch::union_instance();
        let t_h = ts(&["customer", "lineitem", "orders", "supplier"]);
        let tok = isolate_subquery(&mut db, &ts(&["customer", "orders"]), &t_h).unwrap();
        let rs = h.invoke(&db).unwrap();
        assert!(rs.rows.iter().all(|r| r[0].to_field().starts_with("Customer")));
        db.revert(tok).unwrap();
        let tok = isolate_subquery(&mut db, &t_h, &t_h).unwrap();
        assert!(db.voided().is_empty());
        db.revert(tok).unwrap();
    }

    #[test]
    fn shortcut_skips_supersets_of_core_sets() {
        let mut h = OracleHandle::embedded(tpch::UNION_HIDDEN_SQL).unwrap();
        let mut db = tpch::union_instance();
        let aux = ts(&["customer", "lineitem", "orders", "supplier"]);
        let fam = assign_tables(&mut h, &mut db, &aux, &ts(&[]), DEFAULT_AUX_CAP).unwrap();
        assert_eq!(fam.lattice_probes + fam.skipped, 14);
        assert_eq!((fam.lattice_probes, fam.skipped), (11, 3));
        assert_eq!(h.invocation_count(), 11);
        assert!(core_is_upward_closed(&fam));
    }

    #[test]
    fn cap_is_a_scope_error() {
        let mut h = OracleHandle::embedded(tpch::UNION_INNER_SQL).unwrap();
        let mut db = tpch::union_instance();
        let aux = ts(&["customer", "lineitem", "supplier"]);
        let err = assign_tables(&mut h, &mut db, &aux, &ts(&["orders"]), 2).unwrap_err();
        assert_eq!(err, UnionError::Scope(3, 2));
    }

    #[test]
    fn lattice_order_is_ascending_then_lexicographic() {
        let l = lattice(&ts(&["c", "l", "s"]));
        let names: Vec<Vec<&str>> = l.iter().map(|s| s.iter().map(String::as_str).collect()).collect();
        assert_eq!(names, vec![vec!["c"], vec!["l"], vec!["s"], vec!["c", "l"], vec!["c", "s"], vec!["l", "s"]]);
    }
}
