//! Fallback synthesis: enumerate rearrangements of the seed's tables,
//! predicates and grouping attributes around the last candidate's nesting
//! skeleton, and keep the first one whose result on D_I matches R_H.

use std::collections::BTreeSet;

use serde::Serialize;

use super::refine::results_match;
use super::XfeError;
use crate::minisql::{execute, render_sql, CmpOp, Expr, FromItem, JoinKind, QueryBlock, QueryIR, SelectItem, TableSource};
use crate::relcore::{DatabaseState, ResultSet, SchemaCatalog};

pub const DEFAULT_CAP: usize = 10_000;

/// Nesting shape of a candidate.
#[derive(Clone, Debug, PartialEq)]
pub enum Skeleton {
    Flat,
    /// An `IN (SELECT ..)` in the WHERE clause.
    SemiJoin,
    /// A derived table in FROM; `outer` reads from it under `alias`.
    Derived {
        outer: Box<QueryBlock>,
        inner: Box<QueryBlock>,
        alias: String,
    },
}

impl Skeleton {
    pub fn of(q: &QueryIR) -> Skeleton {
        if q.is_union() {
            return Skeleton::Flat;
        }
        let b = &q.branches[0];
        for f in &b.from {
            if let TableSource::Derived(inner) = &f.source {
                if !inner.is_union() {
                    return Skeleton::Derived {
                        outer: Box::new(b.clone()),
                        inner: Box::new(inner.branches[0].clone()),
                        alias: f.alias.clone().unwrap_or_else(|| "dt".into()),
                    };
                }
            }
        }
        let semi = b.where_clause.as_ref().is_some_and(|w| w.conjuncts().iter().any(|c| matches!(c, Expr::InSubquery { .. })));
        if semi {
            Skeleton::SemiJoin
        } else {
            Skeleton::Flat
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Skeleton::Flat => "flat",
            Skeleton::SemiJoin => "semi-join",
            Skeleton::Derived { .. } => "derived",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CombinatorialOutcome {
    pub sql: String,
    #[serde(skip)]
    pub query: QueryIR,
    pub skeleton: &'static str,
    pub tried: usize,
}

struct Search<'a> {
    db: &'a DatabaseState,
    seed: &'a QueryIR,
    r_h: &'a ResultSet,
    cap: usize,
    tried: usize,
}

impl Search<'_> {
    /// `Ok(true)` on a match; errors once the cap is spent.
    fn try_candidate(&mut self, q: &QueryIR) -> Result<bool, XfeError> {
        if self.tried >= self.cap {
            return Err(XfeError::Exhausted(self.tried));
        }
        self.tried += 1;
        Ok(match execute(q, self.db) {
            Ok(rs) => results_match(self.seed, &rs, self.r_h),
            Err(_) => false,
        })
    }
}

/// Tables owning the columns `e` references outside subqueries.
fn expr_tables(e: &Expr, cat: &SchemaCatalog, tables: &[String]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for (q, name) in e.columns() {
        match q {
            Some(q) if tables.contains(&q) => {
                out.insert(q);
            }
            _ => {
                if let Some(t) = tables.iter().find(|t| cat.table(t).is_some_and(|s| s.column_index(&name).is_some())) {
                    out.insert(t.clone());
                }
            }
        }
    }
    out
}

fn comma_from(tables: &[String]) -> Vec<FromItem> {
    tables.iter().map(|t| FromItem { source: TableSource::Table(t.clone()), alias: None, join: JoinKind::Comma, on: None }).collect()
}

/// Non-empty subsets of `0..n` by ascending size, then lexicographically.
fn subsets(n: usize, include_empty: bool) -> Vec<Vec<usize>> {
    let mut all: Vec<Vec<usize>> = (0u32..(1 << n)).map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect()).collect();
    all.retain(|s: &Vec<usize>| include_empty || !s.is_empty());
    all.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    all
}

fn semi_join(s: &mut Search, block: &QueryBlock) -> Result<Option<QueryIR>, XfeError> {
    let cat = s.db.catalog();
    let tables = block.from_tables();
    if tables.len() < 2 || tables.len() != block.from.len() || tables.len() > 12 {
        return Ok(None);
    }
    let conj: Vec<Expr> = block.where_clause.as_ref().map(|w| w.conjuncts().into_iter().cloned().collect()).unwrap_or_default();
    let owners: Vec<BTreeSet<String>> = conj.iter().map(|c| expr_tables(c, cat, &tables)).collect();
    let mut outward: BTreeSet<String> = BTreeSet::new();
    for e in block.select.iter().filter_map(|i| if let SelectItem::Expr { expr, .. } = i { Some(expr) } else { None }) {
        outward.extend(expr_tables(e, cat, &tables));
    }
    for e in block.group_by.iter().chain(block.order_by.iter().map(|o| &o.expr)) {
        outward.extend(expr_tables(e, cat, &tables));
    }
    for outer_idx in subsets(tables.len(), false) {
        if outer_idx.len() == tables.len() {
            continue;
        }
        let outer: Vec<String> = outer_idx.iter().map(|&i| tables[i].clone()).collect();
        let inner: Vec<String> = tables.iter().filter(|t| !outer.contains(t)).cloned().collect();
        if !outward.iter().all(|t| outer.contains(t)) {
            continue;
        }
        let is_outer = |set: &BTreeSet<String>| set.iter().all(|t| outer.contains(t));
        for (li, link) in conj.iter().enumerate() {
            let Expr::Cmp { op: CmpOp::Eq, left, right } = link else { continue };
            let (Expr::Column { .. }, Expr::Column { .. }) = (&**left, &**right) else { continue };
            let lt = expr_tables(left, cat, &tables);
            let rt = expr_tables(right, cat, &tables);
            let (o_col, i_col) = if is_outer(&lt) && rt.iter().all(|t| inner.contains(t)) {
                (left, right)
            } else if is_outer(&rt) && lt.iter().all(|t| inner.contains(t)) {
                (right, left)
            } else {
                continue;
            };
            let mut outer_where = Vec::new();
            let mut inner_where = Vec::new();
            for (ci, c) in conj.iter().enumerate() {
                if ci == li {
                    continue;
                }
                if is_outer(&owners[ci]) {
                    outer_where.push(c.clone());
                } else {
                    // inner-only or crossing: crossing atoms become correlated
                    inner_where.push(c.clone());
                }
            }
            let sub = QueryBlock {
                select: vec![SelectItem::Expr { expr: (**i_col).clone(), alias: None }],
                from: comma_from(&inner),
                where_clause: Expr::and_all(inner_where),
                ..Default::default()
            };
            outer_where.push(Expr::InSubquery { expr: o_col.clone(), query: Box::new(QueryIR::single(sub)), negated: false });
            let cand = QueryBlock { from: comma_from(&outer), where_clause: Expr::and_all(outer_where), ..block.clone() };
            let q = QueryIR::single(cand);
            if s.try_candidate(&q)? {
                return Ok(Some(q));
            }
        }
    }
    Ok(None)
}

fn projection_name(item: &SelectItem) -> Option<String> {
    match item {
        SelectItem::Expr { alias: Some(a), .. } => Some(a.clone()),
        SelectItem::Expr { expr: Expr::Column { name, .. }, .. } => Some(name.clone()),
        _ => None,
    }
}

fn derived(s: &mut Search, seed_block: &QueryBlock, outer: &QueryBlock, inner: &QueryBlock, alias: &str) -> Result<Option<QueryIR>, XfeError> {
    let mut pool: Vec<Expr> = Vec::new();
    for g in seed_block.group_by.iter().chain(inner.group_by.iter()) {
        if let Expr::Column { name, .. } = g {
            let bare = Expr::col(name);
            if !pool.contains(&bare) {
                pool.push(bare);
            }
        }
    }
    if pool.is_empty() || pool.len() > 10 {
        return Ok(None);
    }
    let agg_items: Vec<SelectItem> = inner.select.iter().filter(|i| matches!(i, SelectItem::Expr { expr, .. } if expr.contains_aggregate())).cloned().collect();
    for a in subsets(pool.len(), false) {
        let keys: Vec<Expr> = a.iter().map(|&i| pool[i].clone()).collect();
        let mut select: Vec<SelectItem> = keys.iter().map(|k| SelectItem::Expr { expr: k.clone(), alias: None }).collect();
        select.extend(agg_items.iter().cloned());
        let names: Vec<String> = select.iter().filter_map(projection_name).collect();
        let inner_b = QueryBlock { select, group_by: keys, ..inner.clone() };
        for b in subsets(names.len(), true) {
            let from = vec![FromItem {
                source: TableSource::Derived(Box::new(QueryIR::single(inner_b.clone()))),
                alias: Some(alias.to_string()),
                join: JoinKind::Comma,
                on: None,
            }];
            let outer_b = QueryBlock { from, group_by: b.iter().map(|&i| Expr::col(&names[i])).collect(), ..outer.clone() };
            let q = QueryIR::single(outer_b);
            if s.try_candidate(&q)? {
                return Ok(Some(q));
            }
        }
    }
    Ok(None)
}

/// Searches the skeleton's candidate space. Flat skeletons try the seed
/// itself; single-block seeds also try every semi-join split.
pub fn combinatorial_synthesis(seed: &QueryIR, skeleton: &Skeleton, r_h: &ResultSet, db: &DatabaseState, cap: usize) -> Result<CombinatorialOutcome, XfeError> {
    let mut s = Search { db, seed, r_h, cap, tried: 0 };
    let done = |q: QueryIR, s: &Search| CombinatorialOutcome { sql: render_sql(&q), query: q, skeleton: skeleton.name(), tried: s.tried };
    if s.try_candidate(seed)? {
        return Ok(done(seed.clone(), &s));
    }
    if seed.is_union() {
        return Err(XfeError::NoMatch(s.tried));
    }
    let found = match skeleton {
        Skeleton::Flat | Skeleton::SemiJoin => semi_join(&mut s, &seed.branches[0])?,
        Skeleton::Derived { outer, inner, alias } => derived(&mut s, &seed.branches[0], outer, inner, alias)?,
    };
    match found {
        Some(q) => Ok(done(q, &s)),
        None => Err(XfeError::NoMatch(s.tried)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minisql::{canonical_digest, parse_sql};
    use crate::tpch;

    #[test]
    fn subsets_ascend_by_size_then_lexicographically() {
        assert_eq!(subsets(3, false), vec![vec![0], vec![1], vec![2], vec![0, 1], vec![0, 2], vec![1, 2], vec![0, 1, 2]]);
        assert_eq!(subsets(1, true), vec![vec![], vec![0]]);
    }

    #[test]
    fn skeleton_shapes() {
        assert_eq!(Skeleton::of(&parse_sql(tpch::UNION_SEED_SQL).unwrap()), Skeleton::Flat);
        let semi = parse_sql("SELECT s_name FROM supplier WHERE s_suppkey IN (SELECT ps_suppkey FROM partsupp)").unwrap();
        assert_eq!(Skeleton::of(&semi), Skeleton::SemiJoin);
        let d = parse_sql("SELECT n, COUNT(*) FROM (SELECT c_custkey, COUNT(*) AS n FROM customer GROUP BY c_custkey) AS t GROUP BY n").unwrap();
        assert_eq!(Skeleton::of(&d).name(), "derived");
    }

    #[test]
    fn semi_join_split_recovers_an_in_subquery() {
        let db = tpch::q0_instance();
        let hidden = parse_sql("SELECT c_name FROM customer WHERE c_custkey IN (SELECT o_custkey FROM orders WHERE o_totalprice >= 1000.00)").unwrap();
        let r_h = execute(&hidden, &db).unwrap();
        let seed = parse_sql("SELECT c_name FROM customer, orders WHERE c_custkey = o_custkey AND o_totalprice >= 1000.00").unwrap();
        let out = combinatorial_synthesis(&seed, &Skeleton::SemiJoin, &r_h, &db, DEFAULT_CAP).unwrap();
        assert!(execute(&out.query, &db).unwrap().bag_eq(&r_h));
        assert!(out.tried >= 1);
    }

    #[test]
    fn cap_is_enforced() {
        let db = tpch::q0_instance();
        let seed = parse_sql("SELECT c_name FROM customer, orders WHERE c_custkey = o_custkey").unwrap();
        let r_h = ResultSet::empty(vec!["nothing".into()]);
        assert_eq!(combinatorial_synthesis(&seed, &Skeleton::SemiJoin, &r_h, &db, 1).unwrap_err(), XfeError::Exhausted(1));
        let _ = canonical_digest(&seed);
    }
}
