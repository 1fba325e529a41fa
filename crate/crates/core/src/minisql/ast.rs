use serde::{Deserialize, Serialize};

use crate::relcore::Value;

/// A UNION ALL of one or more blocks. A single-block query has one branch.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueryIR {
    pub branches: Vec<QueryBlock>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueryBlock {
    pub select: Vec<SelectItem>,
    pub from: Vec<FromItem>,
    pub where_clause: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub order_by: Vec<OrderItem>,
    pub limit: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SelectItem {
    Star,
    Expr { expr: Expr, alias: Option<String> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JoinKind {
    /// First item, or a comma-separated item.
    Comma,
    Inner,
    Left,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TableSource {
    Table(String),
    Derived(Box<QueryIR>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FromItem {
    pub source: TableSource,
    pub alias: Option<String>,
    pub join: JoinKind,
    pub on: Option<Expr>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrderItem {
    pub expr: Expr,
    pub desc: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Le,
    Ge,
    Lt,
    Gt,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
        }
    }

    /// The operator with its operands swapped: `a < b` iff `b > a`.
    pub fn flip(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Ge => CmpOp::Le,
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Lt,
        }
    }

    pub fn holds(self, o: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => o == Equal,
            CmpOp::Le => o != Greater,
            CmpOp::Ge => o != Less,
            CmpOp::Lt => o == Less,
            CmpOp::Gt => o == Greater,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AggFunc {
    Sum,
    Count,
    Min,
    Max,
    Avg,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Sum => "SUM",
            AggFunc::Count => "COUNT",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
            AggFunc::Avg => "AVG",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expr {
    Column {
        qualifier: Option<String>,
        name: String,
    },
    Literal(Value),
    Arith {
        op: ArithOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    /// `arg` is `None` for `COUNT(*)`.
    Agg {
        func: AggFunc,
        arg: Option<Box<Expr>>,
        distinct: bool,
    },
    Cmp {
        op: CmpOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Not(Box<Expr>),
    Like {
        expr: Box<Expr>,
        pattern: String,
        negated: bool,
    },
    Between {
        expr: Box<Expr>,
        low: Box<Expr>,
        high: Box<Expr>,
        negated: bool,
    },
    InList {
        expr: Box<Expr>,
        list: Vec<Value>,
        negated: bool,
    },
    InSubquery {
        expr: Box<Expr>,
        query: Box<QueryIR>,
        negated: bool,
    },
    IsNull {
        expr: Box<Expr>,
        negated: bool,
    },
    Subquery(Box<QueryIR>),
}

impl Expr {
    pub fn col(name: &str) -> Expr {
        Expr::Column { qualifier: None, name: name.to_ascii_lowercase() }
    }

    pub fn qcol(q: &str, name: &str) -> Expr {
        Expr::Column { qualifier: Some(q.to_ascii_lowercase()), name: name.to_ascii_lowercase() }
    }

    pub fn lit(v: Value) -> Expr {
        Expr::Literal(v)
    }

    pub fn cmp(op: CmpOp, l: Expr, r: Expr) -> Expr {
        Expr::Cmp { op, left: Box::new(l), right: Box::new(r) }
    }

    /// Conjunction of `parts`; `None` when empty, the sole part when one.
    pub fn and_all(mut parts: Vec<Expr>) -> Option<Expr> {
        match parts.len() {
            0 => None,
            1 => parts.pop(),
            _ => Some(Expr::And(parts)),
        }
    }

    /// Top-level conjuncts of a predicate.
    pub fn conjuncts(&self) -> Vec<&Expr> {
        match self {
            Expr::And(v) => v.iter().flat_map(|e| e.conjuncts()).collect(),
            other => vec![other],
        }
    }

    pub fn contains_aggregate(&self) -> bool {
        let mut found = false;
        self.walk_shallow(&mut |e| {
            if matches!(e, Expr::Agg { .. }) {
                found = true;
            }
        });
        found
    }

    /// Visits this expression and its sub-expressions, not descending into
    /// subqueries.
    pub fn walk_shallow(&self, f: &mut dyn FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Column { .. } | Expr::Literal(_) | Expr::Subquery(_) => {}
            Expr::Arith { left, right, .. } | Expr::Cmp { left, right, .. } => {
                left.walk_shallow(f);
                right.walk_shallow(f);
            }
            Expr::Agg { arg, .. } => {
                if let Some(a) = arg {
                    a.walk_shallow(f);
                }
            }
            Expr::And(v) | Expr::Or(v) => v.iter().for_each(|e| e.walk_shallow(f)),
            Expr::Not(e) => e.walk_shallow(f),
            Expr::Like { expr, .. } | Expr::InList { expr, .. } | Expr::IsNull { expr, .. } | Expr::InSubquery { expr, .. } => expr.walk_shallow(f),
            Expr::Between { expr, low, high, .. } => {
                expr.walk_shallow(f);
                low.walk_shallow(f);
                high.walk_shallow(f);
            }
        }
    }

    /// Column references outside subqueries.
    pub fn columns(&self) -> Vec<(Option<String>, String)> {
        let mut out = Vec::new();
        self.walk_shallow(&mut |e| {
            if let Expr::Column { qualifier, name } = e {
                out.push((qualifier.clone(), name.clone()));
            }
        });
        out
    }

    /// Applies `f` bottom-up, rebuilding the tree. Subqueries are left as-is.
    pub fn map(self, f: &mut dyn FnMut(Expr) -> Expr) -> Expr {
        let b = |e: Box<Expr>, f: &mut dyn FnMut(Expr) -> Expr| Box::new(e.map(f));
        let e = match self {
            Expr::Arith { op, left, right } => Expr::Arith { op, left: b(left, f), right: b(right, f) },
            Expr::Cmp { op, left, right } => Expr::Cmp { op, left: b(left, f), right: b(right, f) },
            Expr::Agg { func, arg, distinct } => Expr::Agg { func, arg: arg.map(|a| b(a, f)), distinct },
            Expr::And(v) => Expr::And(v.into_iter().map(|e| e.map(f)).collect()),
            Expr::Or(v) => Expr::Or(v.into_iter().map(|e| e.map(f)).collect()),
            Expr::Not(e) => Expr::Not(b(e, f)),
            Expr::Like { expr, pattern, negated } => Expr::Like { expr: b(expr, f), pattern, negated },
            Expr::Between { expr, low, high, negated } => Expr::Between { expr: b(expr, f), low: b(low, f), high: b(high, f), negated },
            Expr::InList { expr, list, negated } => Expr::InList { expr: b(expr, f), list, negated },
            Expr::InSubquery { expr, query, negated } => Expr::InSubquery { expr: b(expr, f), query, negated },
            Expr::IsNull { expr, negated } => Expr::IsNull { expr: b(expr, f), negated },
            other => other,
        };
        f(e)
    }

    /// Mutable access to every directly nested subquery.
    pub fn subqueries_mut(&mut self) -> Vec<&mut QueryIR> {
        let mut out: Vec<&mut QueryIR> = Vec::new();
        match self {
            Expr::Subquery(q) => out.push(q),
            Expr::InSubquery { expr, query, .. } => {
                out.extend(expr.subqueries_mut());
                out.push(query);
            }
            Expr::Arith { left, right, .. } | Expr::Cmp { left, right, .. } => {
                out.extend(left.subqueries_mut());
                out.extend(right.subqueries_mut());
            }
            Expr::Agg { arg: Some(a), .. } => out.extend(a.subqueries_mut()),
            Expr::And(v) | Expr::Or(v) => {
                for e in v {
                    out.extend(e.subqueries_mut());
                }
            }
            Expr::Not(e) => out.extend(e.subqueries_mut()),
            Expr::Like { expr, .. } | Expr::InList { expr, .. } | Expr::IsNull { expr, .. } => out.extend(expr.subqueries_mut()),
            Expr::Between { expr, low, high, .. } => {
                out.extend(expr.subqueries_mut());
                out.extend(low.subqueries_mut());
                out.extend(high.subqueries_mut());
            }
            _ => {}
        }
        out
    }

    /// Directly nested subqueries, in source order.
    pub fn subqueries(&self) -> Vec<&QueryIR> {
        fn go<'a>(e: &'a Expr, out: &mut Vec<&'a QueryIR>) {
            match e {
                Expr::Subquery(q) => out.push(q),
                Expr::InSubquery { expr, query, .. } => {
                    go(expr, out);
                    out.push(query);
                }
                Expr::Arith { left, right, .. } | Expr::Cmp { left, right, .. } => {
                    go(left, out);
                    go(right, out);
                }
                Expr::Agg { arg: Some(a), .. } => go(a, out),
                Expr::And(v) | Expr::Or(v) => v.iter().for_each(|x| go(x, out)),
                Expr::Not(x) => go(x, out),
                Expr::Like { expr, .. } | Expr::InList { expr, .. } | Expr::IsNull { expr, .. } => go(expr, out),
                Expr::Between { expr, low, high, .. } => {
                    go(expr, out);
                    go(low, out);
                    go(high, out);
                }
                _ => {}
            }
        }
        let mut out = Vec::new();
        go(self, &mut out);
        out
    }
}

impl QueryIR {
    pub fn single(block: QueryBlock) -> QueryIR {
        QueryIR { branches: vec![block] }
    }

    pub fn is_union(&self) -> bool {
        self.branches.len() > 1
    }

    /// Deepest nesting level below this query (0 when flat).
    pub fn depth(&self) -> usize {
        self.branches.iter().map(QueryBlock::depth).max().unwrap_or(0)
    }

    /// Base table names referenced anywhere in the query, with repetition.
    pub fn all_tables(&self) -> Vec<String> {
        let mut out = Vec::new();
        for b in &self.branches {
            b.collect_tables(&mut out);
        }
        out
    }
}

impl QueryBlock {
    pub fn depth(&self) -> usize {
        let mut d = 0;
        for f in &self.from {
            if let TableSource::Derived(q) = &f.source {
                d = d.max(1 + q.depth());
            }
        }
        for e in self.exprs() {
            for q in e.subqueries() {
                d = d.max(1 + q.depth());
            }
        }
        d
    }

    /// Every top-level expression of the block (select, on, where, group,
    /// order).
    pub fn exprs(&self) -> Vec<&Expr> {
        let mut v = Vec::new();
        for s in &self.select {
            if let SelectItem::Expr { expr, .. } = s {
                v.push(expr);
            }
        }
        for f in &self.from {
            if let Some(on) = &f.on {
                v.push(on);
            }
        }
        if let Some(w) = &self.where_clause {
            v.push(w);
        }
        v.extend(self.group_by.iter());
        v.extend(self.order_by.iter().map(|o| &o.expr));
        v
    }

    pub fn collect_tables(&self, out: &mut Vec<String>) {
        for f in &self.from {
            match &f.source {
                TableSource::Table(t) => out.push(t.clone()),
                TableSource::Derived(q) => {
                    for b in &q.branches {
                        b.collect_tables(out);
                    }
                }
            }
        }
        for e in self.exprs() {
            for q in e.subqueries() {
                for b in &q.branches {
                    b.collect_tables(out);
                }
            }
        }
    }

    /// Base tables directly in this block's FROM clause.
    pub fn from_tables(&self) -> Vec<String> {
        self.from
            .iter()
            .filter_map(|f| match &f.source {
                TableSource::Table(t) => Some(t.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn has_aggregate(&self) -> bool {
        self.select.iter().any(|s| matches!(s, SelectItem::Expr { expr, .. } if expr.contains_aggregate()))
    }
}
