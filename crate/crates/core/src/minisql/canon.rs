//! Canonical form for "same formulation" detection: table aliases
//! normalized, inner joins folded into WHERE, conjuncts and disjuncts
//! sorted, comparisons oriented, union branches sorted.
//!
//! The canonical form is meant for comparison and digests. Qualifiers of
//! single-instance tables are dropped, so it is not always executable.

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::ast::*;
use super::render::{render_expr, render_literal, render_sql};

type Scope = HashMap<String, Option<String>>;

pub fn canonicalize(q: &QueryIR) -> QueryIR {
    canon_query(q, &[])
}

/// Hex SHA-256 of the rendered canonical form.
pub fn canonical_digest(q: &QueryIR) -> String {
    hex::encode(Sha256::digest(render_sql(&canonicalize(q)).as_bytes()))
}

fn canon_query(q: &QueryIR, outer: &[Scope]) -> QueryIR {
    let mut branches: Vec<QueryBlock> = q.branches.iter().map(|b| canon_block(b, outer)).collect();
    if branches.len() > 1 {
        branches.sort_by_cached_key(super::render::render_block);
    }
    QueryIR { branches }
}

fn canon_block(b: &QueryBlock, outer: &[Scope]) -> QueryBlock {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for f in &b.from {
        if let TableSource::Table(t) = &f.source {
            *counts.entry(t.clone()).or_default() += 1;
        }
    }
    // alias -> canonical qualifier (None = drop qualifier)
    let mut scope: Scope = HashMap::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut derived_n = 0;
    let mut items = Vec::new();
    for f in &b.from {
        let (source, alias, key) = match &f.source {
            TableSource::Table(t) => {
                let n = seen.entry(t.clone()).or_default();
                *n += 1;
                let visible = f.alias.clone().unwrap_or_else(|| t.clone());
                if counts[t] == 1 {
                    // the bare table name maps too, so the form stays stable
                    // once the alias is dropped
                    scope.entry(t.clone()).or_insert(None);
                    scope.insert(visible, None);
                    (TableSource::Table(t.clone()), None, t.clone())
                } else {
                    let a = format!("{t}_{n}");
                    scope.insert(visible, Some(a.clone()));
                    (TableSource::Table(t.clone()), Some(a.clone()), a)
                }
            }
            TableSource::Derived(q) => {
                derived_n += 1;
                let a = format!("dt{derived_n}");
                if let Some(v) = &f.alias {
                    scope.insert(v.clone(), Some(a.clone()));
                }
                (TableSource::Derived(Box::new(canon_query(q, outer))), Some(a.clone()), a)
            }
        };
        items.push((FromItem { source, alias, join: f.join, on: f.on.clone() }, key));
    }
    let mut scopes: Vec<Scope> = vec![scope];
    scopes.extend(outer.iter().cloned());
    let fix = |e: &Expr| normalize(requalify(e.clone(), &scopes));

    let mut conjuncts: Vec<Expr> = Vec::new();
    let mut from = Vec::new();
    for (mut item, key) in items {
        match item.join {
            JoinKind::Inner => {
                if let Some(on) = item.on.take() {
                    conjuncts.push(fix(&on));
                }
                item.join = JoinKind::Comma;
            }
            JoinKind::Left => item.on = item.on.as_ref().map(fix),
            JoinKind::Comma => {}
        }
        from.push((item, key));
    }
    if let Some(w) = &b.where_clause {
        conjuncts.push(fix(w));
    }
    let has_star = b.select.iter().any(|s| matches!(s, SelectItem::Star));
    if !has_star && from.iter().all(|(f, _)| f.join == JoinKind::Comma) {
        from.sort_by(|a, b| a.1.cmp(&b.1));
    }
    if let Some((first, _)) = from.first_mut() {
        first.join = JoinKind::Comma;
    }
    let where_clause = match normalize(Expr::And(conjuncts)) {
        Expr::And(v) if v.is_empty() => None,
        e => Some(e),
    };
    let select = b
        .select
        .iter()
        .map(|s| match s {
            SelectItem::Star => SelectItem::Star,
            SelectItem::Expr { expr, alias } => {
                let expr = fix(expr);
                let alias = match (&expr, alias) {
                    (Expr::Column { name, .. }, Some(a)) if a == name => None,
                    _ => alias.clone(),
                };
                SelectItem::Expr { expr, alias }
            }
        })
        .collect();
    let mut group_by: Vec<Expr> = b.group_by.iter().map(fix).collect();
    group_by.sort_by_cached_key(render_expr);
    group_by.dedup();
    let order_by = b.order_by.iter().map(|o| OrderItem { expr: fix(&o.expr), desc: o.desc }).collect();
    QueryBlock { select, from: from.into_iter().map(|(f, _)| f).collect(), where_clause, group_by, order_by, limit: b.limit }
}

fn requalify(e: Expr, scopes: &[Scope]) -> Expr {
    let mut f = |e: Expr| match e {
        Expr::Column { qualifier: Some(q), name } => {
            let mapped = scopes.iter().find_map(|s| s.get(&q)).cloned();
            match mapped {
                Some(canon) => Expr::Column { qualifier: canon, name },
                None => Expr::Column { qualifier: Some(q), name },
            }
        }
        Expr::InSubquery { expr, query, negated } => Expr::InSubquery { expr, query: Box::new(canon_query(&query, scopes)), negated },
        Expr::Subquery(q) => Expr::Subquery(Box::new(canon_query(&q, scopes))),
        other => other,
    };
    e.map(&mut f)
}

fn normalize(e: Expr) -> Expr {
    e.map(&mut |e| match e {
        Expr::And(v) => {
            let mut flat = Vec::new();
            for x in v {
                match x {
                    Expr::And(inner) => flat.extend(inner),
                    other => flat.push(other),
                }
            }
            flat.sort_by_cached_key(render_expr);
            if flat.len() == 1 {
                flat.pop().expect("one")
            } else {
                Expr::And(flat)
            }
        }
        Expr::Or(v) => {
            let mut flat = Vec::new();
            for x in v {
                match x {
                    Expr::Or(inner) => flat.extend(inner),
                    other => flat.push(other),
                }
            }
            flat.sort_by_cached_key(render_expr);
            if flat.len() == 1 {
                flat.pop().expect("one")
            } else {
                Expr::Or(flat)
            }
        }
        Expr::Cmp { op: op @ (CmpOp::Gt | CmpOp::Ge), left, right } => Expr::Cmp { op: op.flip(), left: right, right: left },
        Expr::Cmp { op: CmpOp::Eq, left, right } => {
            if render_expr(&left) <= render_expr(&right) {
                Expr::Cmp { op: CmpOp::Eq, left, right }
            } else {
                Expr::Cmp { op: CmpOp::Eq, left: right, right: left }
            }
        }
        Expr::InList { expr, mut list, negated } => {
            list.sort_by_cached_key(render_literal);
            list.dedup();
            Expr::InList { expr, list, negated }
        }
        Expr::Not(inner) => match *inner {
            Expr::IsNull { expr, negated } => Expr::IsNull { expr, negated: !negated },
            other => Expr::Not(Box::new(other)),
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minisql::parse_sql;

    fn canon(s: &str) -> String {
        render_sql(&canonicalize(&parse_sql(s).unwrap()))
    }

    #[test]
    fn aliases_and_join_styles_coincide() {
        let a = canon("SELECT c_name FROM customer c JOIN orders o ON c.c_custkey = o.o_custkey WHERE c.c_acctbal <= 10");
        let b = canon("SELECT c_name FROM orders, customer WHERE c_acctbal <= 10 AND o_custkey = c_custkey");
        assert_eq!(a, b);
    }

    #[test]
    fn comparison_orientation() {
        assert_eq!(canon("SELECT a FROM t WHERE a > 3"), canon("SELECT a FROM t WHERE 3 < a"));
    }

    #[test]
    fn multi_instance_tables_keep_distinct_aliases() {
        let c = canon("SELECT n1.n_name FROM nation n1, nation n2 WHERE n1.n_nationkey = n2.n_regionkey");
        assert!(c.contains("nation AS nation_1"));
        assert!(c.contains("nation_2.n_regionkey"));
    }

    #[test]
    fn idempotent_on_examples() {
        for s in [
            "SELECT name, phone FROM ((SELECT c_name AS name, c_phone AS phone FROM customer c LEFT JOIN orders o ON c.c_custkey = o.o_custkey WHERE (c.c_acctbal <= 10000.00 OR o.o_orderkey IS NULL)) UNION ALL (SELECT s_name AS name, s_phone AS phone FROM supplier s WHERE s.s_suppkey IN (SELECT l_suppkey FROM lineitem l JOIN orders o ON l.l_orderkey = o.o_orderkey WHERE s.s_acctbal <= o.o_totalprice))) AS cs GROUP BY name, phone",
            "SELECT a FROM t WHERE b IN ('z', 'a', 'a') AND NOT c IS NULL",
        ] {
            let once = canonicalize(&parse_sql(s).unwrap());
            assert_eq!(canonicalize(&once), once);
            assert_eq!(parse_sql(&render_sql(&once)).unwrap(), once);
        }
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::minisql::{parse_sql, testgen};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn canonicalize_is_idempotent(q in testgen::query()) {
            let once = canonicalize(&q);
            prop_assert_eq!(canonicalize(&once), once.clone());
            prop_assert_eq!(canonical_digest(&once), canonical_digest(&q));
            let text = render_sql(&once);
            let back = parse_sql(&text).map_err(|e| TestCaseError::fail(format!("{e}: {text}")))?;
            prop_assert_eq!(canonicalize(&back), once);
        }
    }
}
