//! Mechanical checks of a candidate against the provable parts of the
//! seed: tables (G5, G6), join predicates (G7) and projections (G8).

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::minisql::{Expr, QueryBlock, QueryIR, SelectItem, TableSource};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub guideline: u8,
    /// Clause named in the correction prompt, e.g. "FROM clause".
    pub clause: String,
    pub detail: String,
}

fn table_counts(q: &QueryIR) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for t in q.all_tables() {
        *m.entry(t.to_ascii_lowercase()).or_insert(0) += 1;
    }
    m
}

fn visit_blocks<'a>(q: &'a QueryIR, f: &mut dyn FnMut(&'a QueryBlock)) {
    for b in &q.branches {
        f(b);
        for item in &b.from {
            if let TableSource::Derived(inner) = &item.source {
                visit_blocks(inner, f);
            }
        }
        for e in b.exprs() {
            for sub in e.subqueries() {
                visit_blocks(sub, f);
            }
        }
    }
}

/// Column-to-column comparisons anywhere in the query, as unordered pairs
/// of bare column names, tagged with where they occur.
fn join_atoms(q: &QueryIR) -> Vec<((String, String), &'static str)> {
    let mut out = Vec::new();
    visit_blocks(q, &mut |b| {
        let mut scan = |e: &Expr, clause: &'static str| {
            e.walk_shallow(&mut |x| {
                if let Expr::Cmp { left, right, .. } = x {
                    if let (Expr::Column { name: a, .. }, Expr::Column { name: c, .. }) = (&**left, &**right) {
                        let (a, c) = (a.to_ascii_lowercase(), c.to_ascii_lowercase());
                        out.push((if a <= c { (a, c) } else { (c, a) }, clause));
                    }
                }
            });
        };
        for f in &b.from {
            if let Some(on) = &f.on {
                scan(on, "FROM clause");
            }
        }
        if let Some(w) = &b.where_clause {
            scan(w, "WHERE clause");
        }
    });
    out
}

/// Output names of the first branch, `None` if it projects `*`.
pub fn output_names(q: &QueryIR) -> Option<Vec<String>> {
    q.branches[0]
        .select
        .iter()
        .map(|s| match s {
            SelectItem::Star => None,
            SelectItem::Expr { alias: Some(a), .. } => Some(a.to_ascii_lowercase()),
            SelectItem::Expr { expr: Expr::Column { name, .. }, .. } => Some(name.to_ascii_lowercase()),
            SelectItem::Expr { expr: Expr::Agg { func, .. }, .. } => Some(func.name().to_ascii_lowercase()),
            SelectItem::Expr { .. } => Some("?column?".into()),
        })
        .collect()
}

pub fn check_alignment(cand: &QueryIR, seed: &QueryIR) -> Vec<Violation> {
    let mut out = Vec::new();
    let (have, want) = (table_counts(cand), table_counts(seed));
    let foreign: Vec<&String> = have.keys().filter(|t| !want.contains_key(*t)).collect();
    if !foreign.is_empty() {
        out.push(Violation {
            guideline: 5,
            clause: "FROM clause".into(),
            detail: format!("tables not in the seed: {}", foreign.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")),
        });
    }
    for (t, n) in &want {
        let m = have.get(t).copied().unwrap_or(0);
        if (*n > 1 && m != *n) || m == 0 {
            out.push(Violation { guideline: 6, clause: "FROM clause".into(), detail: format!("{t} appears {m} times, seed has {n}") });
        }
    }
    let seed_joins: BTreeSet<(String, String)> = join_atoms(seed).into_iter().map(|(p, _)| p).collect();
    let mut reported = BTreeSet::new();
    for (pair, clause) in join_atoms(cand) {
        if !seed_joins.contains(&pair) && reported.insert(pair.clone()) {
            out.push(Violation { guideline: 7, clause: clause.into(), detail: format!("join {} ~ {} is not in the seed", pair.0, pair.1) });
        }
    }
    if let (Some(a), Some(b)) = (output_names(cand), output_names(seed)) {
        if a != b {
            out.push(Violation {
                guideline: 8,
                clause: "SELECT clause".into(),
                detail: format!("projections ({}) differ from the seed's ({})", a.join(", "), b.join(", ")),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minisql::parse_sql;
    use crate::tpch;

    fn q(s: &str) -> QueryIR {
        parse_sql(s).unwrap()
    }

    #[test]
    fn seed_aligns_with_itself_and_the_final_query() {
        let seed = q(tpch::UNION_SEED_SQL);
        assert!(check_alignment(&seed, &seed).is_empty());
        // the semi-join rewrite of l_suppkey = s_suppkey is allowed
        assert_eq!(check_alignment(&q(tpch::UNION_FINAL_SQL), &seed), vec![]);
    }

    #[test]
    fn foreign_and_dropped_tables_are_flagged() {
        let seed = q("SELECT s_name FROM supplier, partsupp, part WHERE s_suppkey = ps_suppkey AND ps_partkey = p_partkey");
        let cand = q("SELECT s_name FROM supplier, partsupp, nation WHERE s_suppkey = ps_suppkey AND s_nationkey = n_nationkey");
        let v = check_alignment(&cand, &seed);
        let ids: Vec<u8> = v.iter().map(|x| x.guideline).collect();
        assert!(ids.contains(&5) && ids.contains(&6) && ids.contains(&7), "{v:?}");
    }

    #[test]
    fn multi_instance_tables_must_be_kept() {
        let seed = q("SELECT a.o_orderkey FROM orders a, orders b WHERE a.o_custkey = b.o_custkey");
        let cand = q("SELECT o_orderkey FROM orders");
        assert!(check_alignment(&cand, &seed).iter().any(|v| v.guideline == 6));
    }

    #[test]
    fn projection_order_matters() {
        let seed = q("SELECT c_name AS name, c_phone AS phone FROM customer");
        let cand = q("SELECT c_phone AS phone, c_name AS name FROM customer");
        let v = check_alignment(&cand, &seed);
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].guideline, v[0].clause.as_str()), (8, "SELECT clause"));
    }
}
