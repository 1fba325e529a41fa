//! The whole pipeline: branch discovery, per-branch extraction, and
//! assembly of the seed query.

use std::collections::BTreeSet;

use serde::Serialize;

use super::pred::{AtomKind, Equalities, Floating, Inequality, PredicateAtom, SValueInterval};
use super::tail::{extract_tail_clauses, Pinned, TailClauses, Unit};
use super::text::{extract_in_list, is_categorical, is_free_text, probe_text_columns, text_columns, InListOutcome, TextFindings, DEFAULT_MAX_LITERALS};
use super::union::{extract_union_family, isolate_subquery, UnionTableFamily, DEFAULT_AUX_CAP};
use super::{compute_svi_all, confirm_inequality, enumerate_inequality_candidates, extract_equalities, ColRef, Prober, XResult, XreError};
use crate::minisql::{canonical_digest, render_sql, CmpOp, Expr, FromItem, JoinKind, QueryBlock, QueryIR, TableSource};
use crate::mutator::{minimize, MinTrace};
use crate::oracle::OracleHandle;
use crate::relcore::{DatabaseState, Value};

#[derive(Clone, Debug, Serialize)]
pub struct XreConfig {
    pub aux_cap: usize,
    pub max_literals: usize,
}

impl Default for XreConfig {
    fn default() -> Self {
        XreConfig { aux_cap: DEFAULT_AUX_CAP, max_literals: DEFAULT_MAX_LITERALS }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchReport {
    pub tables: Vec<String>,
    pub minimization: MinTrace,
    pub intervals: Vec<SValueInterval>,
    pub inequalities: Vec<Inequality>,
    pub equalities: Equalities,
    pub text: TextFindings,
    pub in_lists: Vec<InListOutcome>,
    pub units: Vec<Unit>,
    pub tail: TailClauses,
    pub atoms: Vec<PredicateAtom>,
    pub sql: String,
    pub notes: Vec<String>,
    pub probes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtractionReport {
    pub family: UnionTableFamily,
    pub branches: Vec<BranchReport>,
    pub seed_sql: String,
    pub seed_digest: String,
    pub invocations: usize,
    pub notes: Vec<String>,
}

/// Column references are qualified only where the bare name is ambiguous
/// among the block's tables.
pub fn column_renderer(db: &DatabaseState, tables: &[String]) -> impl Fn(&ColRef) -> Expr {
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut dup: BTreeSet<String> = BTreeSet::new();
    for t in tables {
        if let Ok(s) = db.schema(t) {
            for c in &s.columns {
                let n = c.name.to_ascii_lowercase();
                if !seen.insert(n.clone()) {
                    dup.insert(n);
                }
            }
        }
    }
    move |c: &ColRef| if dup.contains(&c.column) { Expr::qcol(&c.table, &c.column) } else { Expr::col(&c.column) }
}

fn numeric_unit(p: &Prober, members: Vec<ColRef>, lb: &Value, ub: &Value) -> Option<Unit> {
    let dom = p.domain(&members[0]);
    let cur = p.value(&members[0]);
    let (lo, hi, g0) = (dom.grid_index(lb).ok()?, dom.grid_index(ub).ok()?, dom.grid_index(&cur).ok()?);
    if lo == hi {
        return None;
    }
    let triple = if hi - lo >= 2 {
        let mid = g0.clamp(lo + 1, hi - 1);
        Some([dom.from_grid(mid - 1), dom.from_grid(mid), dom.from_grid(mid + 1)])
    } else {
        None
    };
    let alts = match &triple {
        Some(t) => t.iter().filter(|v| **v != cur).cloned().collect(),
        None => [lo, hi].iter().filter(|g| **g != g0).map(|g| dom.from_grid(*g)).collect(),
    };
    Some(Unit { members, triple, alts, range: Some((lb.clone(), ub.clone())) })
}

fn text_unit(p: &Prober, members: Vec<ColRef>) -> Unit {
    let dom = p.domain(&members[0]);
    let cur = p.value(&members[0]);
    let triple = match &dom.enum_values {
        Some(vals) => {
            let mut sorted: Vec<Value> = vals.iter().map(|s| Value::text(s.clone())).collect();
            sorted.sort_by(|a, b| a.sort_cmp(b));
            if sorted.len() >= 3 {
                let at = sorted.iter().position(|v| *v == cur).unwrap_or(1).clamp(1, sorted.len() - 2);
                Some([sorted[at - 1].clone(), sorted[at].clone(), sorted[at + 1].clone()])
            } else {
                None
            }
        }
        None => Some([Value::text("alpha#"), Value::text("mike#"), Value::text("zulu#")]),
    };
    let alts = match (&triple, &dom.enum_values) {
        (Some(t), _) => t.iter().filter(|v| **v != cur).cloned().collect(),
        (None, Some(vals)) => vals.iter().map(|s| Value::text(s.clone())).filter(|v| *v != cur).collect(),
        (None, None) => vec![],
    };
    Unit { members, triple, alts, range: None }
}

/// Runs the per-branch steps on an isolated branch. `db` is returned at
/// the depth it had on entry.
fn extract_branch(h: &mut OracleHandle, db: &mut DatabaseState, tables: &[String], tag: &str, cfg: &XreConfig) -> XResult<BranchReport> {
    let start = h.invocation_count();
    let iso_depth = db.undo_depth();
    let mut notes = Vec::new();
    for t in tables {
        let schema = db.schema(t)?.clone();
        for row in db.rows(t)? {
            for (i, v) in row.iter().enumerate() {
                if v.is_null() {
                    let n = format!("NULLs present in {t}.{}: IS NULL conditions are not extracted", schema.columns[i].name);
                    if !notes.contains(&n) {
                        notes.push(n);
                    }
                }
            }
        }
    }

    h.set_phase(&format!("{tag}.minimize"));
    let trace = minimize(db, h, tables)?;
    let mut p = Prober::new(h, db);

    p.h.set_phase(&format!("{tag}.filters"));
    let mut svi = compute_svi_all(&mut p, tables)?;
    if let Some(c) = svi.non_monotone.first() {
        p.db.revert_to(iso_depth)?;
        return Err(XreError::NonMonotone(c.clone()));
    }

    p.h.set_phase(&format!("{tag}.inequalities"));
    let mut inequalities = Vec::new();
    for edge in enumerate_inequality_candidates(&p, &svi) {
        if let Some(ineq) = confirm_inequality(&mut p, &svi, &edge)? {
            inequalities.push(ineq);
        }
    }
    for ineq in &inequalities {
        if let AtomKind::Algebraic { x, y, .. } = &ineq.atom.kind {
            if let Some(s) = svi.intervals.get_mut(x) {
                s.ub_open = true;
                s.floating = Floating::FloatsWith(y.clone());
            }
            if let Some(s) = svi.intervals.get_mut(y) {
                s.lb_open = true;
                s.floating = Floating::FloatsWith(x.clone());
            }
        }
    }

    p.h.set_phase(&format!("{tag}.equalities"));
    let equalities = extract_equalities(&mut p, &svi)?;
    notes.extend(equalities.notes.iter().cloned());

    p.h.set_phase(&format!("{tag}.text"));
    let text = probe_text_columns(&mut p, tables)?;

    // atoms from the numeric findings
    let mut atoms: Vec<PredicateAtom> = Vec::new();
    for cls in &equalities.classes {
        atoms.extend(cls.atoms());
    }
    for ineq in &inequalities {
        atoms.push(ineq.atom.clone());
        if let (AtomKind::Algebraic { x, .. }, Some(v)) = (&ineq.atom.kind, &ineq.x_const_ub) {
            atoms.push(PredicateAtom::new(AtomKind::Arith { col: x.clone(), op: CmpOp::Le, value: v.clone() }, "filter"));
        }
        if let (AtomKind::Algebraic { y, .. }, Some(v)) = (&ineq.atom.kind, &ineq.y_const_lb) {
            atoms.push(PredicateAtom::new(AtomKind::Arith { col: y.clone(), op: CmpOp::Ge, value: v.clone() }, "filter"));
        }
    }
    for (c, v) in &equalities.constants {
        atoms.push(PredicateAtom::new(AtomKind::Arith { col: c.clone(), op: CmpOp::Eq, value: v.clone() }, "filter"));
    }
    let in_class: BTreeSet<&ColRef> = equalities.classes.iter().flat_map(|c| c.members.iter()).collect();
    let point: BTreeSet<&ColRef> = equalities.constants.iter().map(|(c, _)| c).collect();
    for s in svi.intervals.values() {
        if in_class.contains(&s.col) || point.contains(&s.col) {
            continue;
        }
        let dom = p.domain(&s.col);
        if !s.lb_open && s.lb != dom.min {
            atoms.push(PredicateAtom::new(AtomKind::Arith { col: s.col.clone(), op: CmpOp::Ge, value: s.lb.clone() }, "filter"));
        }
        if !s.ub_open && s.ub != dom.max {
            atoms.push(PredicateAtom::new(AtomKind::Arith { col: s.col.clone(), op: CmpOp::Le, value: s.ub.clone() }, "filter"));
        }
    }
    atoms.extend(text.atoms.iter().cloned());

    // units and pinned columns for the tail
    let mut units = Vec::new();
    let mut pinned = Vec::new();
    for cls in &equalities.classes {
        match numeric_unit(&p, cls.members.clone(), &cls.lb, &cls.ub) {
            Some(u) => units.push(u),
            None => pinned.extend(cls.members.iter().map(|c| Pinned { col: c.clone(), value: p.value(c) })),
        }
    }
    for (c, v) in &equalities.constants {
        pinned.push(Pinned { col: c.clone(), value: v.clone() });
    }
    for s in svi.intervals.values() {
        if in_class.contains(&s.col) || point.contains(&s.col) {
            continue;
        }
        match numeric_unit(&p, vec![s.col.clone()], &s.lb, &s.ub) {
            Some(u) => units.push(u),
            None => pinned.push(Pinned { col: s.col.clone(), value: p.value(&s.col) }),
        }
    }
    for cls in &text.classes {
        units.push(text_unit(&p, cls.clone()));
    }
    for c in &text.unfiltered {
        units.push(text_unit(&p, vec![c.clone()]));
    }
    let text_cols: Vec<ColRef> = text_columns(&p, tables, is_categorical).into_iter().chain(text_columns(&p, tables, is_free_text)).collect();
    for c in text_cols {
        if !units.iter().any(|u| u.members.contains(&c)) {
            pinned.push(Pinned { value: p.value(&c), col: c });
        }
    }
    units.sort_by(|a, b| a.key().cmp(b.key()));
    pinned.sort_by(|a, b| a.col.cmp(&b.col));

    p.h.set_phase(&format!("{tag}.tail"));
    let tail = extract_tail_clauses(&mut p, &units, &pinned, tables)?;
    notes.extend(tail.notes.iter().cloned());

    // the IN-list loop works on the unminimized branch
    db.revert_to(iso_depth)?;
    let mut in_lists = Vec::new();
    h.set_phase(tag);
    for (col, first) in &text.in_list {
        let out = extract_in_list(h, db, iso_depth, tables, col, first.clone(), cfg.max_literals)?;
        atoms.push(out.atom.clone());
        in_lists.push(out);
    }

    let col = column_renderer(db, tables);
    let block = build_block(tables, &atoms, &units, &tail, &col);
    Ok(BranchReport {
        tables: tables.to_vec(),
        minimization: trace,
        intervals: svi.intervals.into_values().collect(),
        inequalities,
        equalities,
        text,
        in_lists,
        sql: render_sql(&QueryIR::single(block)),
        units,
        tail,
        atoms,
        notes,
        probes: h.invocation_count() - start,
    })
}

fn build_block(tables: &[String], atoms: &[PredicateAtom], units: &[Unit], tail: &TailClauses, col: &dyn Fn(&ColRef) -> Expr) -> QueryBlock {
    let mut sorted = tables.to_vec();
    sorted.sort();
    QueryBlock {
        select: tail.select_items(units, col),
        from: sorted.iter().map(|t| FromItem { source: TableSource::Table(t.clone()), alias: None, join: JoinKind::Comma, on: None }).collect(),
        where_clause: Expr::and_all(atoms.iter().map(|a| a.to_expr(col)).collect()),
        group_by: tail.group_exprs(units, col),
        order_by: tail.order_items(units, col),
        limit: tail.limit,
    }
}

/// Assembles branch blocks into one query: a single block, or a UNION ALL.
pub fn assemble_seed(blocks: Vec<QueryBlock>) -> QueryIR {
    QueryIR { branches: blocks }
}

/// Extracts the seed query. `db` is left exactly as it was found.
pub fn extract_seed(h: &mut OracleHandle, db: &mut DatabaseState, cfg: &XreConfig) -> XResult<(QueryIR, ExtractionReport)> {
    let entry = db.undo_depth();
    let out = run(h, db, cfg);
    db.revert_to(entry)?;
    h.set_phase("");
    out
}

fn run(h: &mut OracleHandle, db: &mut DatabaseState, cfg: &XreConfig) -> XResult<(QueryIR, ExtractionReport)> {
    h.set_phase("tables");
    if !h.fit(db)?.is_fit() {
        return Err(XreError::Precondition("the hidden query is not FIT on the supplied instance".into()));
    }
    let family = extract_union_family(h, db, cfg.aux_cap)?;
    let mut notes = Vec::new();
    if family.from_set.len() > 1 {
        notes.push(format!("{} branches found by voiding", family.from_set.len()));
    }
    let mut branches = Vec::new();
    let mut blocks = Vec::new();
    for (i, fs) in family.from_set.iter().enumerate() {
        let tag = format!("branch{i}");
        h.set_phase(&format!("{tag}.isolate"));
        let depth = db.undo_depth();
        isolate_subquery(db, fs, &family.t_h)?;
        let tables: Vec<String> = fs.iter().cloned().collect();
        let report = extract_branch(h, db, &tables, &tag, cfg);
        db.revert_to(depth)?;
        let report = report?;
        let col = column_renderer(db, &tables);
        blocks.push(build_block(&tables, &report.atoms, &report.units, &report.tail, &col));
        branches.push(report);
    }
    let seed = assemble_seed(blocks);
    let report =
        ExtractionReport { seed_sql: render_sql(&seed), seed_digest: canonical_digest(&seed), family, branches, invocations: h.invocation_count(), notes };
    Ok((seed, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minisql::{canonicalize, parse_sql};
    use crate::tpch;

    fn seed_of(sql: &str, mut db: DatabaseState) -> (QueryIR, ExtractionReport) {
        let mut h = OracleHandle::embedded(sql).unwrap();
        let before = db.digest();
        let out = extract_seed(&mut h, &mut db, &XreConfig::default()).unwrap();
        assert_eq!(db.digest(), before);
        out
    }

    fn assert_seed(hidden: &str, db: DatabaseState, expect: &str) {
        let (seed, rep) = seed_of(hidden, db);
        let want = parse_sql(expect).unwrap();
        assert_eq!(render_sql(&canonicalize(&seed)), render_sql(&canonicalize(&want)), "notes: {:?}", rep.branches[0].notes);
    }

    #[test]
    fn q0_seed_matches_the_hidden_query() {
        assert_seed(
            tpch::Q0_SQL,
            tpch::q0_instance(),
            "SELECT c_name AS name, c_phone AS phone FROM customer, orders WHERE c_custkey = o_custkey AND c_acctbal <= 10000.00",
        );
    }

    #[test]
    fn grouped_count_with_order() {
        assert_seed(
            "SELECT o_orderpriority, COUNT(*) AS cnt FROM orders WHERE o_totalprice >= 1000 GROUP BY o_orderpriority ORDER BY cnt DESC",
            tpch::union_instance(),
            "SELECT o_orderpriority, COUNT(*) AS cnt FROM orders WHERE o_totalprice >= 1000.00 GROUP BY o_orderpriority ORDER BY cnt DESC",
        );
    }

    #[test]
    fn revenue_style_aggregate() {
        assert_seed(
            "SELECT l_orderkey, SUM(l_extendedprice * (1 - l_discount)) AS revenue, o_orderdate FROM lineitem, orders \
             WHERE l_orderkey = o_orderkey AND l_shipdate > DATE '1995-03-15' GROUP BY l_orderkey, o_orderdate ORDER BY revenue DESC LIMIT 10",
            tpch::union_instance(),
            "SELECT l_orderkey, SUM(l_extendedprice * (1 - l_discount)) AS revenue, o_orderdate FROM lineitem, orders \
             WHERE l_orderkey = o_orderkey AND l_shipdate >= DATE '1995-03-16' GROUP BY l_orderkey, o_orderdate ORDER BY revenue DESC LIMIT 10",
        );
    }

    #[test]
    fn ordered_projection_with_limit() {
        assert_seed(
            "SELECT l_orderkey, l_quantity FROM lineitem WHERE l_quantity < 30 ORDER BY l_quantity DESC, l_orderkey LIMIT 5",
            tpch::union_instance(),
            "SELECT l_orderkey, l_quantity FROM lineitem WHERE l_quantity <= 29 ORDER BY l_quantity DESC, l_orderkey LIMIT 5",
        );
    }

    #[test]
    fn union_branches_of_the_inner_variant() {
        let (seed, rep) = seed_of(tpch::UNION_INNER_SQL, tpch::union_instance());
        assert_eq!(seed.branches.len(), 2, "{}", rep.seed_sql);
        let sup = rep.branches.iter().find(|b| b.tables.contains(&"supplier".to_string())).unwrap();
        assert!(sup.sql.contains("l_shipmode IN ('AIR', 'TRUCK')"), "{}", sup.sql);
        assert!(sup.sql.contains("s_acctbal <= o_totalprice"), "{}", sup.sql);
        assert!(sup.sql.contains("GROUP BY"), "{}", sup.sql);
    }
}
