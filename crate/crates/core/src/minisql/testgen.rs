//! Random QueryIR strategies for round-trip and canonicalization properties.

use proptest::prelude::*;
use rust_decimal::Decimal;

use super::ast::*;
use crate::relcore::Value;

const COLS: [&str; 5] = ["a", "b", "c", "x", "y"];
const TABLES: [&str; 3] = ["t1", "t2", "t3"];

fn literal() -> impl Strategy<Value = Value> {
    prop_oneof![
        (-50i64..500).prop_map(Value::Int),
        (-9999i64..99999, 0u32..3).prop_map(|(m, s)| Value::Dec(Decimal::new(m, s))),
        (8000i32..12000).prop_map(Value::Date),
        prop::sample::select(vec!["AIR", "it's", "x y", ""]).prop_map(Value::text),
    ]
}

fn column() -> impl Strategy<Value = Expr> {
    (prop::option::of(prop::sample::select(TABLES.to_vec())), prop::sample::select(COLS.to_vec()))
        .prop_map(|(q, c)| Expr::Column { qualifier: q.map(str::to_string), name: c.to_string() })
}

fn scalar() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![3 => column(), 1 => literal().prop_map(Expr::Literal)];
    leaf.prop_recursive(2, 6, 2, |inner| {
        (prop::sample::select(vec![ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div]), inner.clone(), inner).prop_map(|(op, l, r)| Expr::Arith {
            op,
            left: Box::new(l),
            right: Box::new(r),
        })
    })
}

fn cmp_op() -> impl Strategy<Value = CmpOp> {
    prop::sample::select(vec![CmpOp::Eq, CmpOp::Le, CmpOp::Ge, CmpOp::Lt, CmpOp::Gt])
}

fn atom(sub: Option<BoxedStrategy<QueryIR>>) -> BoxedStrategy<Expr> {
    let base = prop_oneof![
        (cmp_op(), scalar(), scalar()).prop_map(|(op, l, r)| Expr::Cmp { op, left: Box::new(l), right: Box::new(r) }),
        (column(), prop::sample::select(vec!["%iv%", "ab%", "%z", "exact"]), any::<bool>()).prop_map(|(e, p, n)| Expr::Like {
            expr: Box::new(e),
            pattern: p.to_string(),
            negated: n
        }),
        (column(), scalar(), scalar(), any::<bool>()).prop_map(|(e, l, h, n)| Expr::Between {
            expr: Box::new(e),
            low: Box::new(l),
            high: Box::new(h),
            negated: n
        }),
        (column(), prop::collection::vec((0i64..9).prop_map(Value::Int), 1..4), any::<bool>()).prop_map(|(e, list, n)| Expr::InList {
            expr: Box::new(e),
            list,
            negated: n
        }),
        (column(), any::<bool>()).prop_map(|(e, n)| Expr::IsNull { expr: Box::new(e), negated: n }),
    ];
    match sub {
        None => base.boxed(),
        Some(q) => prop_oneof![
            4 => base,
            1 => (column(), q.clone(), any::<bool>())
                .prop_map(|(e, q, n)| Expr::InSubquery { expr: Box::new(e), query: Box::new(q), negated: n }),
            1 => (cmp_op(), column(), q).prop_map(|(op, c, q)| Expr::Cmp {
                op,
                left: Box::new(c),
                right: Box::new(Expr::Subquery(Box::new(q)))
            }),
        ]
        .boxed(),
    }
}

fn predicate(sub: Option<BoxedStrategy<QueryIR>>) -> impl Strategy<Value = Expr> {
    atom(sub).prop_recursive(2, 8, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::And),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::Or),
            inner.prop_map(|x| Expr::Not(Box::new(x))),
        ]
    })
}

fn select_item() -> impl Strategy<Value = SelectItem> {
    let agg = (prop::sample::select(vec![AggFunc::Sum, AggFunc::Count, AggFunc::Min, AggFunc::Max, AggFunc::Avg]), column()).prop_map(|(func, c)| Expr::Agg {
        func,
        arg: Some(Box::new(c)),
        distinct: false,
    });
    let expr = prop_oneof![4 => scalar(), 1 => agg, 1 => Just(Expr::Agg { func: AggFunc::Count, arg: None, distinct: false })];
    (expr, prop::option::of(prop::sample::select(vec!["v1", "v2", "total"])))
        .prop_map(|(expr, alias)| SelectItem::Expr { expr, alias: alias.map(str::to_string) })
}

fn from_list() -> impl Strategy<Value = Vec<FromItem>> {
    prop::collection::vec(
        (
            prop::sample::select(TABLES.to_vec()),
            prop::option::of(prop::sample::select(vec!["p", "q", "r"])),
            prop::sample::select(vec![JoinKind::Comma, JoinKind::Inner, JoinKind::Left]),
            column(),
            column(),
        ),
        1..4,
    )
    .prop_map(|items| {
        items
            .into_iter()
            .enumerate()
            .map(|(i, (t, alias, join, l, r))| {
                let join = if i == 0 { JoinKind::Comma } else { join };
                let on = (join != JoinKind::Comma).then(|| Expr::cmp(CmpOp::Eq, l, r));
                FromItem { source: TableSource::Table(t.to_string()), alias: alias.map(str::to_string), join, on }
            })
            .collect()
    })
}

fn block(sub: Option<BoxedStrategy<QueryIR>>, tail: bool) -> impl Strategy<Value = QueryBlock> {
    (
        prop::collection::vec(select_item(), 1..4),
        from_list(),
        prop::option::of(predicate(sub)),
        prop::collection::vec(column(), 0..3),
        prop::collection::vec((column(), any::<bool>()).prop_map(|(expr, desc)| OrderItem { expr, desc }), 0..3),
        prop::option::of(1u64..100),
    )
        .prop_map(move |(select, from, where_clause, group_by, order_by, limit)| QueryBlock {
            select,
            from,
            where_clause,
            group_by,
            order_by: if tail { order_by } else { vec![] },
            limit: if tail { limit } else { None },
        })
}

fn flat_query() -> BoxedStrategy<QueryIR> {
    block(None, true).prop_map(QueryIR::single).boxed()
}

/// Queries with up to two union branches and one level of subqueries.
pub fn query() -> impl Strategy<Value = QueryIR> {
    prop_oneof![
        block(Some(flat_query()), true).prop_map(QueryIR::single),
        prop::collection::vec(block(Some(flat_query()), false), 2..3).prop_map(|branches| QueryIR { branches }),
    ]
}
