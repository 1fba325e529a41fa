//! Multiset executor over `DatabaseState`.
//!
//! Queries are bound against the catalog (honoring the rename overlay)
//! before any row is read, so a renamed table always fails resolution.
//! Join output is sorted by per-item row ids, which makes the row order of
//! an unordered query independent of the join order chosen.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::rc::Rc;

use rust_decimal::Decimal;

use super::ast::*;
use crate::relcore::{DatabaseState, ResultSet, Row, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("cardinality error: {0}")]
    Cardinality(String),
    #[error("invalid query: {0}")]
    Invalid(String),
}

impl ExecError {
    pub fn is_resolution(&self) -> bool {
        matches!(self, ExecError::Resolution(_))
    }
}

type XResult<T> = Result<T, ExecError>;

/// A bound block, its output headers and the scope levels of references
/// escaping it.
type Bound = (BoundBlock, Vec<String>, BTreeSet<(usize, usize)>);

#[derive(Clone, Debug, PartialEq)]
enum BExpr {
    Col { depth: usize, idx: usize },
    Lit(Value),
    Arith(ArithOp, Box<BExpr>, Box<BExpr>),
    Agg(usize),
    Cmp(CmpOp, Box<BExpr>, Box<BExpr>),
    And(Vec<BExpr>),
    Or(Vec<BExpr>),
    Not(Box<BExpr>),
    Like { expr: Box<BExpr>, parts: Vec<String>, negated: bool },
    Between { expr: Box<BExpr>, low: Box<BExpr>, high: Box<BExpr>, negated: bool },
    InList { expr: Box<BExpr>, list: Vec<Value>, negated: bool },
    InSub { expr: Box<BExpr>, sub: usize, negated: bool },
    IsNull { expr: Box<BExpr>, negated: bool },
    Scalar(usize),
}

impl BExpr {
    fn children(&self) -> Vec<&BExpr> {
        match self {
            BExpr::Arith(_, a, b) | BExpr::Cmp(_, a, b) => vec![a, b],
            BExpr::And(v) | BExpr::Or(v) => v.iter().collect(),
            BExpr::Not(e) => vec![e],
            BExpr::Like { expr, .. } | BExpr::InList { expr, .. } | BExpr::InSub { expr, .. } | BExpr::IsNull { expr, .. } => vec![expr],
            BExpr::Between { expr, low, high, .. } => vec![expr, low, high],
            _ => vec![],
        }
    }
}

#[derive(Clone, Debug)]
struct AggSpec {
    func: AggFunc,
    arg: Option<BExpr>,
    distinct: bool,
}

struct SubOut {
    rows: Vec<Row>,
    keys: HashSet<Value>,
    classes: BTreeSet<u8>,
    has_null: bool,
}

struct SubPlan {
    query: BoundQuery,
    cache: RefCell<HashMap<Vec<Value>, Rc<SubOut>>>,
}

enum Source {
    Base(String),
    Derived(BoundQuery),
}

struct BoundItem {
    source: Source,
    offset: usize,
    width: usize,
    join: JoinKind,
    on: Option<Conj>,
}

#[derive(Clone, Debug)]
struct Conj {
    expr: BExpr,
    needs: u64,
}

enum OrderKey {
    Output(usize),
    Expr(BExpr),
}

struct BoundBlock {
    items: Vec<BoundItem>,
    width: usize,
    conjuncts: Vec<Conj>,
    reorder: bool,
    select: Vec<BExpr>,
    aggregating: bool,
    group_by: Vec<BExpr>,
    aggs: Vec<AggSpec>,
    order: Vec<(OrderKey, bool)>,
    limit: Option<u64>,
    subs: Vec<SubPlan>,
}

struct BoundQuery {
    branches: Vec<BoundBlock>,
    headers: Vec<String>,
    /// References escaping this query: (depth relative to the enclosing
    /// block, column index).
    escapes: Vec<(usize, usize)>,
}

// ---------------------------------------------------------------- binding

struct ItemDesc {
    qualifier: Option<String>,
    columns: Vec<String>,
    offset: usize,
}

struct ScopeInfo {
    items: Vec<ItemDesc>,
    active: bool,
    escapes: BTreeSet<(usize, usize)>,
}

struct Binder<'a> {
    db: &'a DatabaseState,
    scopes: Vec<ScopeInfo>,
    subs: Vec<Vec<SubPlan>>,
    aggs: Vec<Vec<AggSpec>>,
}

fn like_parts(pattern: &str) -> Vec<String> {
    pattern.split('%').map(str::to_string).collect()
}

fn agg_header(e: &Expr) -> String {
    match e {
        Expr::Column { name, .. } => name.clone(),
        Expr::Agg { func, .. } => func.name().to_ascii_lowercase(),
        _ => "?column?".into(),
    }
}

impl<'a> Binder<'a> {
    fn level(&self) -> usize {
        self.scopes.len() - 1
    }

    fn resolve(&mut self, qualifier: &Option<String>, name: &str) -> XResult<(usize, usize)> {
        let cur = self.level();
        for level in (0..=cur).rev() {
            let scope = &self.scopes[level];
            if !scope.active {
                continue;
            }
            let found = match qualifier {
                Some(q) => {
                    let items: Vec<&ItemDesc> = scope.items.iter().filter(|i| i.qualifier.as_deref() == Some(q.as_str())).collect();
                    if items.len() > 1 {
                        return Err(ExecError::Resolution(format!("table reference \"{q}\" is ambiguous")));
                    }
                    match items.first() {
                        Some(item) => match item.columns.iter().position(|c| c == name) {
                            Some(j) => Some(item.offset + j),
                            None => return Err(ExecError::Resolution(format!("column {q}.{name} does not exist"))),
                        },
                        None => None,
                    }
                }
                None => {
                    let mut hits = Vec::new();
                    for item in &scope.items {
                        for (j, c) in item.columns.iter().enumerate() {
                            if c == name {
                                hits.push(item.offset + j);
                            }
                        }
                    }
                    if hits.len() > 1 {
                        return Err(ExecError::Resolution(format!("column reference \"{name}\" is ambiguous")));
                    }
                    hits.first().copied()
                }
            };
            if let Some(idx) = found {
                for k in level + 1..=cur {
                    self.scopes[k].escapes.insert((level, idx));
                }
                return Ok((cur - level, idx));
            }
        }
        let full = match qualifier {
            Some(q) => format!("{q}.{name}"),
            None => name.to_string(),
        };
        Err(ExecError::Resolution(format!("column {full} does not exist")))
    }

    fn bind_subquery(&mut self, q: &QueryIR) -> XResult<usize> {
        let bq = self.bind_query(q)?;
        let subs = self.subs.last_mut().expect("block context");
        subs.push(SubPlan { query: bq, cache: RefCell::new(HashMap::new()) });
        Ok(subs.len() - 1)
    }

    fn bind_expr(&mut self, e: &Expr, allow_agg: bool) -> XResult<BExpr> {
        Ok(match e {
            Expr::Column { qualifier, name } => {
                let (depth, idx) = self.resolve(qualifier, name)?;
                BExpr::Col { depth, idx }
            }
            Expr::Literal(v) => BExpr::Lit(v.clone()),
            Expr::Arith { op, left, right } => BExpr::Arith(*op, Box::new(self.bind_expr(left, allow_agg)?), Box::new(self.bind_expr(right, allow_agg)?)),
            Expr::Agg { func, arg, distinct } => {
                if !allow_agg {
                    return Err(ExecError::Invalid("aggregate functions are not allowed here".into()));
                }
                let arg = match arg {
                    Some(a) => Some(self.bind_expr(a, false)?),
                    None => None,
                };
                let aggs = self.aggs.last_mut().expect("block context");
                aggs.push(AggSpec { func: *func, arg, distinct: *distinct });
                BExpr::Agg(aggs.len() - 1)
            }
            Expr::Cmp { op, left, right } => BExpr::Cmp(*op, Box::new(self.bind_expr(left, allow_agg)?), Box::new(self.bind_expr(right, allow_agg)?)),
            Expr::And(v) => BExpr::And(v.iter().map(|x| self.bind_expr(x, allow_agg)).collect::<XResult<_>>()?),
            Expr::Or(v) => BExpr::Or(v.iter().map(|x| self.bind_expr(x, allow_agg)).collect::<XResult<_>>()?),
            Expr::Not(x) => BExpr::Not(Box::new(self.bind_expr(x, allow_agg)?)),
            Expr::Like { expr, pattern, negated } => {
                BExpr::Like { expr: Box::new(self.bind_expr(expr, allow_agg)?), parts: like_parts(pattern), negated: *negated }
            }
            Expr::Between { expr, low, high, negated } => BExpr::Between {
                expr: Box::new(self.bind_expr(expr, allow_agg)?),
                low: Box::new(self.bind_expr(low, allow_agg)?),
                high: Box::new(self.bind_expr(high, allow_agg)?),
                negated: *negated,
            },
            Expr::InList { expr, list, negated } => BExpr::InList { expr: Box::new(self.bind_expr(expr, allow_agg)?), list: list.clone(), negated: *negated },
            Expr::InSubquery { expr, query, negated } => {
                let bexpr = self.bind_expr(expr, allow_agg)?;
                let sub = self.bind_subquery(query)?;
                if self.subs.last().expect("ctx")[sub].query.headers.len() != 1 {
                    return Err(ExecError::Invalid("subquery has too many columns".into()));
                }
                BExpr::InSub { expr: Box::new(bexpr), sub, negated: *negated }
            }
            Expr::IsNull { expr, negated } => BExpr::IsNull { expr: Box::new(self.bind_expr(expr, allow_agg)?), negated: *negated },
            Expr::Subquery(q) => {
                let sub = self.bind_subquery(q)?;
                if self.subs.last().expect("ctx")[sub].query.headers.len() != 1 {
                    return Err(ExecError::Invalid("subquery must return only one column".into()));
                }
                BExpr::Scalar(sub)
            }
        })
    }

    fn bind_query(&mut self, q: &QueryIR) -> XResult<BoundQuery> {
        let mut branches = Vec::new();
        let mut escapes = BTreeSet::new();
        let parent = self.level();
        let mut headers = Vec::new();
        for (i, b) in q.branches.iter().enumerate() {
            let (bb, hs, esc) = self.bind_block(b)?;
            if i == 0 {
                headers = hs;
            } else if hs.len() != headers.len() {
                return Err(ExecError::Invalid("each UNION ALL branch must have the same number of columns".into()));
            }
            for (level, idx) in esc {
                escapes.insert((parent - level, idx));
            }
            branches.push(bb);
        }
        Ok(BoundQuery { branches, headers, escapes: escapes.into_iter().collect() })
    }

    fn needs(&self, e: &BExpr, items: &[ItemDesc], subs: &[SubPlan]) -> u64 {
        let item_of = |idx: usize| -> u64 {
            let pos = items.iter().rposition(|it| it.offset <= idx).unwrap_or(0);
            1u64 << pos
        };
        let mut mask = 0;
        let mut stack = vec![e];
        while let Some(x) = stack.pop() {
            match x {
                BExpr::Col { depth: 0, idx } => mask |= item_of(*idx),
                BExpr::InSub { sub, .. } | BExpr::Scalar(sub) => {
                    for (d, idx) in &subs[*sub].query.escapes {
                        if *d == 0 {
                            mask |= item_of(*idx);
                        }
                    }
                }
                _ => {}
            }
            stack.extend(x.children());
        }
        mask
    }

    /// Returns the bound block, its output headers, and the absolute
    /// scope levels of references escaping it.
    fn bind_block(&mut self, b: &QueryBlock) -> XResult<Bound> {
        if b.from.len() > 64 {
            return Err(ExecError::Invalid("too many FROM items".into()));
        }
        self.scopes.push(ScopeInfo { items: vec![], active: false, escapes: BTreeSet::new() });
        self.subs.push(Vec::new());
        self.aggs.push(Vec::new());
        let result = self.bind_block_inner(b);
        let scope = self.scopes.pop().expect("pushed");
        let subs = self.subs.pop().expect("pushed");
        let aggs = self.aggs.pop().expect("pushed");
        let (mut bb, headers) = result?;
        bb.subs = subs;
        bb.aggs = aggs;
        Ok((bb, headers, scope.escapes))
    }

    fn bind_block_inner(&mut self, b: &QueryBlock) -> XResult<(BoundBlock, Vec<String>)> {
        // FROM items: derived tables see enclosing blocks but not siblings
        let mut items = Vec::new();
        let mut descs = Vec::new();
        let mut offset = 0;
        for f in &b.from {
            let (source, columns, default_q) = match &f.source {
                TableSource::Table(t) => {
                    let (schema, _) = self.db.resolve(t).ok_or_else(|| ExecError::Resolution(format!("relation \"{t}\" does not exist")))?;
                    let cols: Vec<String> = schema.columns.iter().map(|c| c.name.to_ascii_lowercase()).collect();
                    (Source::Base(t.clone()), cols, Some(t.clone()))
                }
                TableSource::Derived(q) => {
                    let bq = self.bind_query(q)?;
                    let cols = bq.headers.clone();
                    (Source::Derived(bq), cols, None)
                }
            };
            let width = columns.len();
            descs.push(ItemDesc { qualifier: f.alias.clone().or(default_q), columns, offset });
            items.push(BoundItem { source, offset, width, join: f.join, on: None });
            offset += width;
        }
        let total = offset;
        {
            let scope = self.scopes.last_mut().expect("scope");
            scope.items = descs;
            scope.active = true;
        }

        let mut conjuncts = Vec::new();
        let mut pending_on = Vec::new();
        for (i, f) in b.from.iter().enumerate() {
            if let Some(on) = &f.on {
                let e = self.bind_expr(on, false)?;
                pending_on.push((i, e));
            }
        }
        let mut where_parts = Vec::new();
        if let Some(w) = &b.where_clause {
            for c in w.conjuncts() {
                where_parts.push(self.bind_expr(c, false)?);
            }
        }

        // grouping
        let mut group_by = Vec::new();
        for g in &b.group_by {
            match self.bind_expr(g, false) {
                Ok(e) => group_by.push(e),
                Err(err) => {
                    // fall back to an output alias
                    let alias_expr = match g {
                        Expr::Column { qualifier: None, name } => b.select.iter().find_map(|s| match s {
                            SelectItem::Expr { expr, alias: Some(a) } if a == name && !expr.contains_aggregate() => Some(expr.clone()),
                            _ => None,
                        }),
                        _ => None,
                    };
                    match alias_expr {
                        Some(e) => group_by.push(self.bind_expr(&e, false)?),
                        None => return Err(err),
                    }
                }
            }
        }
        let aggregating = !b.group_by.is_empty() || b.has_aggregate() || b.order_by.iter().any(|o| o.expr.contains_aggregate());

        let mut select = Vec::new();
        let mut headers = Vec::new();
        for s in &b.select {
            match s {
                SelectItem::Star => {
                    let scope = self.scopes.last().expect("scope");
                    for it in &scope.items {
                        for (j, c) in it.columns.iter().enumerate() {
                            select.push(BExpr::Col { depth: 0, idx: it.offset + j });
                            headers.push(c.clone());
                        }
                    }
                }
                SelectItem::Expr { expr, alias } => {
                    select.push(self.bind_expr(expr, true)?);
                    headers.push(alias.clone().unwrap_or_else(|| agg_header(expr)));
                }
            }
        }

        let mut order = Vec::new();
        for o in &b.order_by {
            let key = match &o.expr {
                Expr::Column { qualifier: None, name } if headers.iter().filter(|h| *h == name).count() == 1 => {
                    OrderKey::Output(headers.iter().position(|h| h == name).expect("counted"))
                }
                Expr::Literal(Value::Int(n)) if *n >= 1 && (*n as usize) <= headers.len() => OrderKey::Output(*n as usize - 1),
                other => OrderKey::Expr(self.bind_expr(other, true)?),
            };
            order.push((key, o.desc));
        }

        if aggregating {
            let grouped: HashSet<usize> = group_by
                .iter()
                .filter_map(|g| match g {
                    BExpr::Col { depth: 0, idx } => Some(*idx),
                    _ => None,
                })
                .collect();
            let mut exprs: Vec<&BExpr> = select.iter().collect();
            exprs.extend(order.iter().filter_map(|(k, _)| match k {
                OrderKey::Expr(e) => Some(e),
                _ => None,
            }));
            for e in exprs {
                check_grouped(e, &grouped, &group_by)?;
            }
        }

        let descs = &self.scopes.last().expect("scope").items;
        let subs = self.subs.last().expect("subs");
        let mut items = items;
        for (i, e) in pending_on {
            let needs = self.needs(&e, descs, subs);
            if items[i].join == JoinKind::Left {
                items[i].on = Some(Conj { expr: e, needs });
            } else {
                for part in split_and(e) {
                    let needs = self.needs(&part, descs, subs);
                    conjuncts.push(Conj { expr: part, needs });
                }
            }
        }
        for e in where_parts {
            let needs = self.needs(&e, descs, subs);
            conjuncts.push(Conj { expr: e, needs });
        }
        let reorder = items.iter().all(|i| i.join != JoinKind::Left);
        Ok((BoundBlock { items, width: total, conjuncts, reorder, select, aggregating, group_by, aggs: vec![], order, limit: b.limit, subs: vec![] }, headers))
    }
}

fn split_and(e: BExpr) -> Vec<BExpr> {
    match e {
        BExpr::And(v) => v.into_iter().flat_map(split_and).collect(),
        other => vec![other],
    }
}

fn check_grouped(e: &BExpr, grouped: &HashSet<usize>, group_by: &[BExpr]) -> XResult<()> {
    if group_by.iter().any(|g| g == e) {
        return Ok(());
    }
    match e {
        BExpr::Agg(_) => Ok(()),
        BExpr::Col { depth: 0, idx } if !grouped.contains(idx) => {
            Err(ExecError::Invalid("column must appear in the GROUP BY clause or be used in an aggregate function".into()))
        }
        other => {
            for c in other.children() {
                check_grouped(c, grouped, group_by)?;
            }
            Ok(())
        }
    }
}

// ---------------------------------------------------------------- evaluation

struct Ctx<'a> {
    db: &'a DatabaseState,
}

fn class(v: &Value) -> u8 {
    match v {
        Value::Null => 0,
        Value::Int(_) | Value::Dec(_) => 1,
        Value::Date(_) => 2,
        Value::Text(_) => 3,
    }
}

fn cmp_values(a: &Value, b: &Value) -> XResult<Option<Ordering>> {
    a.sql_cmp(b).map_err(ExecError::Type)
}

fn arith(op: ArithOp, a: &Value, b: &Value) -> XResult<Value> {
    if a.is_null() || b.is_null() {
        return Ok(Value::Null);
    }
    if let (Value::Int(x), Value::Int(y)) = (a, b) {
        let r = match op {
            ArithOp::Add => x.checked_add(*y),
            ArithOp::Sub => x.checked_sub(*y),
            ArithOp::Mul => x.checked_mul(*y),
            ArithOp::Div => {
                if *y == 0 {
                    return Err(ExecError::Type("division by zero".into()));
                }
                x.checked_div(*y)
            }
        };
        if let Some(r) = r {
            return Ok(Value::Int(r));
        }
    }
    let (Some(x), Some(y)) = (a.as_decimal(), b.as_decimal()) else {
        return Err(ExecError::Type(format!("operator {} does not apply to {} and {}", op.symbol(), a.type_name(), b.type_name())));
    };
    let r = match op {
        ArithOp::Add => x.checked_add(y),
        ArithOp::Sub => x.checked_sub(y),
        ArithOp::Mul => x.checked_mul(y),
        ArithOp::Div => {
            if y.is_zero() {
                return Err(ExecError::Type("division by zero".into()));
            }
            x.checked_div(y)
        }
    };
    r.map(Value::Dec).ok_or_else(|| ExecError::Type("numeric overflow".into()))
}

fn like_match(s: &str, parts: &[String]) -> bool {
    if parts.len() == 1 {
        return s == parts[0];
    }
    let first = &parts[0];
    let last = &parts[parts.len() - 1];
    if !s.starts_with(first.as_str()) || s.len() < first.len() + last.len() || !s.ends_with(last.as_str()) {
        return false;
    }
    let mut rest = &s[first.len()..s.len() - last.len()];
    for p in &parts[1..parts.len() - 1] {
        match rest.find(p.as_str()) {
            Some(i) => rest = &rest[i + p.len()..],
            None => return false,
        }
    }
    true
}

fn truth(v: Option<bool>) -> Value {
    match v {
        Some(true) => Value::Int(1),
        Some(false) => Value::Int(0),
        None => Value::Null,
    }
}

impl<'a> Ctx<'a> {
    fn sub_out(&self, plan: &SubPlan, frames: &[&[Value]]) -> XResult<Rc<SubOut>> {
        let key: Vec<Value> = plan.query.escapes.iter().map(|(d, i)| frames[*d][*i].clone()).collect();
        if let Some(hit) = plan.cache.borrow().get(&key) {
            return Ok(hit.clone());
        }
        let rs = self.run_query(&plan.query, frames)?;
        let mut keys = HashSet::new();
        let mut classes = BTreeSet::new();
        let mut has_null = false;
        for r in &rs.rows {
            let v = &r[0];
            if v.is_null() {
                has_null = true;
            } else {
                classes.insert(class(v));
                keys.insert(v.key());
            }
        }
        let out = Rc::new(SubOut { rows: rs.rows, keys, classes, has_null });
        plan.cache.borrow_mut().insert(key, out.clone());
        Ok(out)
    }

    fn pred(&self, e: &BExpr, frames: &[&[Value]], aggs: Option<&[Value]>, subs: &[SubPlan]) -> XResult<Option<bool>> {
        Ok(match e {
            BExpr::Cmp(op, l, r) => {
                let a = self.eval(l, frames, aggs, subs)?;
                let b = self.eval(r, frames, aggs, subs)?;
                cmp_values(&a, &b)?.map(|o| op.holds(o))
            }
            BExpr::And(v) => {
                let mut unknown = false;
                for x in v {
                    match self.pred(x, frames, aggs, subs)? {
                        Some(false) => return Ok(Some(false)),
                        None => unknown = true,
                        Some(true) => {}
                    }
                }
                if unknown {
                    None
                } else {
                    Some(true)
                }
            }
            BExpr::Or(v) => {
                let mut unknown = false;
                for x in v {
                    match self.pred(x, frames, aggs, subs)? {
                        Some(true) => return Ok(Some(true)),
                        None => unknown = true,
                        Some(false) => {}
                    }
                }
                if unknown {
                    None
                } else {
                    Some(false)
                }
            }
            BExpr::Not(x) => self.pred(x, frames, aggs, subs)?.map(|b| !b),
            BExpr::Like { expr, parts, negated } => match self.eval(expr, frames, aggs, subs)? {
                Value::Null => None,
                Value::Text(s) => Some(like_match(&s, parts) != *negated),
                other => return Err(ExecError::Type(format!("LIKE applied to {}", other.type_name()))),
            },
            BExpr::Between { expr, low, high, negated } => {
                let v = self.eval(expr, frames, aggs, subs)?;
                let lo = self.eval(low, frames, aggs, subs)?;
                let hi = self.eval(high, frames, aggs, subs)?;
                let a = cmp_values(&v, &lo)?.map(|o| o != Ordering::Less);
                let b = cmp_values(&v, &hi)?.map(|o| o != Ordering::Greater);
                let r = match (a, b) {
                    (Some(false), _) | (_, Some(false)) => Some(false),
                    (Some(true), Some(true)) => Some(true),
                    _ => None,
                };
                r.map(|x| x != *negated)
            }
            BExpr::InList { expr, list, negated } => {
                let v = self.eval(expr, frames, aggs, subs)?;
                if v.is_null() {
                    None
                } else {
                    let mut hit = false;
                    for l in list {
                        if cmp_values(&v, l)? == Some(Ordering::Equal) {
                            hit = true;
                            break;
                        }
                    }
                    Some(hit != *negated)
                }
            }
            BExpr::InSub { expr, sub, negated } => {
                let v = self.eval(expr, frames, aggs, subs)?;
                let out = self.sub_out(&subs[*sub], frames)?;
                if v.is_null() {
                    if out.rows.is_empty() {
                        Some(*negated)
                    } else {
                        None
                    }
                } else {
                    let hit = if out.classes.iter().all(|c| *c == class(&v)) {
                        out.keys.contains(&v.key())
                    } else {
                        let mut hit = false;
                        for r in &out.rows {
                            if cmp_values(&v, &r[0])? == Some(Ordering::Equal) {
                                hit = true;
                                break;
                            }
                        }
                        hit
                    };
                    if hit {
                        Some(!*negated)
                    } else if out.has_null {
                        None
                    } else {
                        Some(*negated)
                    }
                }
            }
            BExpr::IsNull { expr, negated } => Some(self.eval(expr, frames, aggs, subs)?.is_null() != *negated),
            other => match self.eval(other, frames, aggs, subs)? {
                Value::Null => None,
                Value::Int(i) => Some(i != 0),
                v => return Err(ExecError::Type(format!("argument of WHERE must be boolean, not {}", v.type_name()))),
            },
        })
    }

    fn eval(&self, e: &BExpr, frames: &[&[Value]], aggs: Option<&[Value]>, subs: &[SubPlan]) -> XResult<Value> {
        Ok(match e {
            BExpr::Col { depth, idx } => frames[*depth][*idx].clone(),
            BExpr::Lit(v) => v.clone(),
            BExpr::Arith(op, l, r) => arith(*op, &self.eval(l, frames, aggs, subs)?, &self.eval(r, frames, aggs, subs)?)?,
            BExpr::Agg(slot) => aggs.ok_or_else(|| ExecError::Invalid("aggregate outside grouping".into()))?[*slot].clone(),
            BExpr::Scalar(sub) => {
                let out = self.sub_out(&subs[*sub], frames)?;
                match out.rows.len() {
                    0 => Value::Null,
                    1 => out.rows[0][0].clone(),
                    _ => return Err(ExecError::Cardinality("more than one row returned by a subquery used as an expression".into())),
                }
            }
            other => truth(self.pred(other, frames, aggs, subs)?),
        })
    }

    fn aggregate(&self, spec: &AggSpec, rows: &[&Row], outer: &[&[Value]], subs: &[SubPlan]) -> XResult<Value> {
        let mut vals = Vec::with_capacity(rows.len());
        for r in rows {
            match &spec.arg {
                None => vals.push(Value::Int(1)),
                Some(a) => {
                    let mut frames: Vec<&[Value]> = Vec::with_capacity(outer.len() + 1);
                    frames.push(r.as_slice());
                    frames.extend_from_slice(outer);
                    let v = self.eval(a, &frames, None, subs)?;
                    if !v.is_null() {
                        vals.push(v);
                    }
                }
            }
        }
        if spec.distinct {
            let mut seen = HashSet::new();
            vals.retain(|v| seen.insert(v.key()));
        }
        Ok(match spec.func {
            AggFunc::Count => Value::Int(vals.len() as i64),
            AggFunc::Sum | AggFunc::Avg => {
                if vals.is_empty() {
                    return Ok(Value::Null);
                }
                let mut acc = Value::Int(0);
                for v in &vals {
                    if !v.is_numeric() {
                        return Err(ExecError::Type(format!("{}({}) is not defined", spec.func.name(), v.type_name())));
                    }
                    acc = arith(ArithOp::Add, &acc, v)?;
                }
                if spec.func == AggFunc::Avg {
                    let total = acc.as_decimal().expect("numeric");
                    Value::Dec(total.checked_div(Decimal::from(vals.len() as i64)).ok_or_else(|| ExecError::Type("numeric overflow".into()))?.normalize())
                } else {
                    acc
                }
            }
            AggFunc::Min | AggFunc::Max => {
                let mut best: Option<Value> = None;
                for v in vals {
                    best = Some(match best {
                        None => v,
                        Some(b) => {
                            let o = cmp_values(&v, &b)?.unwrap_or(Ordering::Equal);
                            let take = if spec.func == AggFunc::Min { o == Ordering::Less } else { o == Ordering::Greater };
                            if take {
                                v
                            } else {
                                b
                            }
                        }
                    });
                }
                best.unwrap_or(Value::Null)
            }
        })
    }

    fn run_query(&self, q: &BoundQuery, outer: &[&[Value]]) -> XResult<ResultSet> {
        let mut rows = Vec::new();
        let mut ordered = false;
        for b in &q.branches {
            let (r, o) = self.run_block(b, outer)?;
            ordered = o && q.branches.len() == 1;
            rows.extend(r);
        }
        Ok(ResultSet { headers: q.headers.clone(), rows, ordered })
    }

    fn apply_ready(&self, b: &BoundBlock, tuples: Vec<(Vec<u32>, Row)>, bound: u64, applied: &mut [bool], outer: &[&[Value]]) -> XResult<Vec<(Vec<u32>, Row)>> {
        let ready: Vec<usize> = (0..b.conjuncts.len()).filter(|&i| !applied[i] && b.conjuncts[i].needs & !bound == 0).collect();
        if ready.is_empty() {
            return Ok(tuples);
        }
        for &i in &ready {
            applied[i] = true;
        }
        let mut out = Vec::with_capacity(tuples.len());
        'tuple: for t in tuples {
            let mut frames: Vec<&[Value]> = Vec::with_capacity(outer.len() + 1);
            frames.push(t.1.as_slice());
            frames.extend_from_slice(outer);
            for &i in &ready {
                if self.pred(&b.conjuncts[i].expr, &frames, None, &b.subs)? != Some(true) {
                    continue 'tuple;
                }
            }
            drop(frames);
            out.push(t);
        }
        Ok(out)
    }

    /// Finds `left = right` with one side over the bound items and the
    /// other over exactly item `j`.
    fn equi_key(&self, e: &BExpr, b: &BoundBlock, bound: u64, j: usize) -> Option<(BExpr, BExpr)> {
        let BExpr::Cmp(CmpOp::Eq, l, r) = e else { return None };
        let item_mask = |x: &BExpr| -> Option<u64> {
            let mut mask = 0u64;
            let mut stack = vec![x];
            while let Some(y) = stack.pop() {
                match y {
                    BExpr::Col { depth: 0, idx } => {
                        let pos = b.items.iter().rposition(|it| it.offset <= *idx)?;
                        mask |= 1 << pos;
                    }
                    BExpr::Col { .. } | BExpr::Lit(_) | BExpr::Arith(..) => {}
                    _ => return None,
                }
                stack.extend(y.children());
            }
            Some(mask)
        };
        let (ml, mr) = (item_mask(l)?, item_mask(r)?);
        let jm = 1u64 << j;
        if ml != 0 && ml & !bound == 0 && mr == jm {
            Some(((**l).clone(), (**r).clone()))
        } else if mr != 0 && mr & !bound == 0 && ml == jm {
            Some(((**r).clone(), (**l).clone()))
        } else {
            None
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn join_step(
        &self,
        b: &BoundBlock,
        tuples: Vec<(Vec<u32>, Row)>,
        j: usize,
        right: &[Row],
        bound: u64,
        applied: &mut [bool],
        outer: &[&[Value]],
    ) -> XResult<Vec<(Vec<u32>, Row)>> {
        let item = &b.items[j];
        let left_join = item.join == JoinKind::Left;
        // choose an equality usable as a hash key
        let mut key: Option<(BExpr, BExpr, Option<usize>)> = None;
        if left_join {
            if let Some(on) = &item.on {
                for part in split_and(on.expr.clone()) {
                    if let Some((lk, rk)) = self.equi_key(&part, b, bound, j) {
                        key = Some((lk, rk, None));
                        break;
                    }
                }
            }
        } else {
            for (i, c) in b.conjuncts.iter().enumerate() {
                if applied[i] {
                    continue;
                }
                if let Some((lk, rk)) = self.equi_key(&c.expr, b, bound, j) {
                    key = Some((lk, rk, Some(i)));
                    break;
                }
            }
        }
        let place = |row: &mut Row, r: &Row| row[item.offset..item.offset + item.width].clone_from_slice(r);
        let mut scratch = vec![Value::Null; b.width];
        let mut right_keys: Vec<Value> = Vec::with_capacity(right.len());
        let mut index: Option<HashMap<Value, Vec<usize>>> = None;
        if let Some((lk, rk, _)) = &key {
            let mut classes = BTreeSet::new();
            for r in right {
                place(&mut scratch, r);
                let mut frames: Vec<&[Value]> = vec![scratch.as_slice()];
                frames.extend_from_slice(outer);
                let v = self.eval(rk, &frames, None, &b.subs)?;
                classes.insert(class(&v));
                right_keys.push(v);
            }
            let mut left_classes = BTreeSet::new();
            for t in &tuples {
                let mut frames: Vec<&[Value]> = vec![t.1.as_slice()];
                frames.extend_from_slice(outer);
                left_classes.insert(class(&self.eval(lk, &frames, None, &b.subs)?));
            }
            classes.remove(&0);
            left_classes.remove(&0);
            if classes.len() <= 1 && left_classes.len() <= 1 && (classes.is_empty() || left_classes.is_empty() || classes == left_classes) {
                let mut m: HashMap<Value, Vec<usize>> = HashMap::new();
                for (i, v) in right_keys.iter().enumerate() {
                    if !v.is_null() {
                        m.entry(v.key()).or_default().push(i);
                    }
                }
                index = Some(m);
            }
        }
        if let (Some((_, _, Some(ci))), Some(_)) = (&key, &index) {
            applied[*ci] = true;
        }
        let all: Vec<usize> = (0..right.len()).collect();
        let mut out = Vec::new();
        for (ids, row) in tuples {
            let candidates: &[usize] = match (&index, &key) {
                (Some(m), Some((lk, _, _))) => {
                    let mut frames: Vec<&[Value]> = vec![row.as_slice()];
                    frames.extend_from_slice(outer);
                    let v = self.eval(lk, &frames, None, &b.subs)?;
                    if v.is_null() {
                        &[]
                    } else {
                        m.get(&v.key()).map(|v| v.as_slice()).unwrap_or(&[])
                    }
                }
                _ => &all,
            };
            let mut matched = false;
            for &ri in candidates {
                let mut nrow = row.clone();
                place(&mut nrow, &right[ri]);
                if left_join {
                    if let Some(on) = &item.on {
                        let mut frames: Vec<&[Value]> = vec![nrow.as_slice()];
                        frames.extend_from_slice(outer);
                        if self.pred(&on.expr, &frames, None, &b.subs)? != Some(true) {
                            continue;
                        }
                    }
                }
                matched = true;
                let mut nids = ids.clone();
                nids[j] = ri as u32;
                out.push((nids, nrow));
            }
            if left_join && !matched {
                out.push((ids, row));
            }
        }
        Ok(out)
    }

    fn run_block(&self, b: &BoundBlock, outer: &[&[Value]]) -> XResult<(Vec<Row>, bool)> {
        // materialize sources
        let mut derived: Vec<Option<Vec<Row>>> = Vec::with_capacity(b.items.len());
        for it in &b.items {
            match &it.source {
                Source::Base(_) => derived.push(None),
                Source::Derived(q) => {
                    let empty: &[Value] = &[];
                    let mut frames: Vec<&[Value]> = vec![empty];
                    frames.extend_from_slice(outer);
                    derived.push(Some(self.run_query(q, &frames)?.rows));
                }
            }
        }
        let sources: Vec<&[Row]> = b
            .items
            .iter()
            .zip(&derived)
            .map(|(it, d)| match (&it.source, d) {
                (Source::Base(t), _) => self.db.resolve(t).map(|(_, r)| r).unwrap_or(&[]),
                (_, Some(rows)) => rows.as_slice(),
                _ => &[],
            })
            .collect();

        let n = b.items.len();
        let mut applied = vec![false; b.conjuncts.len()];
        let mut tuples: Vec<(Vec<u32>, Row)> = vec![(vec![u32::MAX; n], vec![Value::Null; b.width])];
        let mut bound = 0u64;
        let mut remaining: Vec<usize> = (0..n).collect();
        while !remaining.is_empty() {
            let pick = if b.reorder && bound != 0 {
                remaining
                    .iter()
                    .position(|&j| b.conjuncts.iter().enumerate().any(|(i, c)| !applied[i] && self.equi_key(&c.expr, b, bound, j).is_some()))
                    .unwrap_or(0)
            } else {
                0
            };
            let j = remaining.remove(pick);
            tuples = self.join_step(b, tuples, j, sources[j], bound, &mut applied, outer)?;
            bound |= 1 << j;
            tuples = self.apply_ready(b, tuples, bound, &mut applied, outer)?;
            if tuples.is_empty() && !b.aggregating {
                break;
            }
        }
        if !remaining.is_empty() {
            tuples.clear();
        }
        // conjuncts that reference nothing local (constant or outer-only)
        tuples = self.apply_ready(b, tuples, u64::MAX, &mut applied, outer)?;
        tuples.sort_by(|a, b| a.0.cmp(&b.0));

        let mut out: Vec<(Row, Vec<Value>)> = Vec::new();
        if b.aggregating {
            let mut groups: Vec<(Vec<Value>, Vec<&Row>)> = Vec::new();
            let mut pos: HashMap<Vec<Value>, usize> = HashMap::new();
            for (_, row) in &tuples {
                let mut frames: Vec<&[Value]> = vec![row.as_slice()];
                frames.extend_from_slice(outer);
                let mut key = Vec::with_capacity(b.group_by.len());
                for g in &b.group_by {
                    key.push(self.eval(g, &frames, None, &b.subs)?.key());
                }
                match pos.get(&key) {
                    Some(&i) => groups[i].1.push(row),
                    None => {
                        pos.insert(key.clone(), groups.len());
                        groups.push((key, vec![row]));
                    }
                }
            }
            let null_row = vec![Value::Null; b.width];
            if groups.is_empty() && b.group_by.is_empty() {
                groups.push((vec![], vec![]));
            }
            for (_, rows) in &groups {
                let mut aggs = Vec::with_capacity(b.aggs.len());
                for spec in &b.aggs {
                    aggs.push(self.aggregate(spec, rows, outer, &b.subs)?);
                }
                let first: &Row = rows.first().copied().unwrap_or(&null_row);
                let mut frames: Vec<&[Value]> = vec![first.as_slice()];
                frames.extend_from_slice(outer);
                out.push(self.project(b, &frames, Some(&aggs))?);
            }
        } else {
            for (_, row) in &tuples {
                let mut frames: Vec<&[Value]> = vec![row.as_slice()];
                frames.extend_from_slice(outer);
                out.push(self.project(b, &frames, None)?);
            }
        }
        if !b.order.is_empty() {
            out.sort_by(|x, y| {
                for (k, (_, desc)) in b.order.iter().enumerate() {
                    let o = x.1[k].sort_cmp(&y.1[k]);
                    let o = if *desc { o.reverse() } else { o };
                    if o != Ordering::Equal {
                        return o;
                    }
                }
                Ordering::Equal
            });
        }
        let mut rows: Vec<Row> = out.into_iter().map(|(r, _)| r).collect();
        if let Some(l) = b.limit {
            rows.truncate(l as usize);
        }
        Ok((rows, !b.order.is_empty()))
    }

    fn project(&self, b: &BoundBlock, frames: &[&[Value]], aggs: Option<&[Value]>) -> XResult<(Row, Vec<Value>)> {
        let mut row = Vec::with_capacity(b.select.len());
        for e in &b.select {
            row.push(self.eval(e, frames, aggs, &b.subs)?);
        }
        let mut keys = Vec::with_capacity(b.order.len());
        for (k, _) in &b.order {
            keys.push(match k {
                OrderKey::Output(i) => row[*i].clone(),
                OrderKey::Expr(e) => self.eval(e, frames, aggs, &b.subs)?,
            });
        }
        Ok((row, keys))
    }
}

/// Runs `q` on `db` with multiset semantics.
pub fn execute(q: &QueryIR, db: &DatabaseState) -> Result<ResultSet, ExecError> {
    let mut binder = Binder { db, scopes: vec![], subs: vec![], aggs: vec![] };
    // a root scope with no items keeps escape bookkeeping uniform
    binder.scopes.push(ScopeInfo { items: vec![], active: false, escapes: BTreeSet::new() });
    binder.subs.push(Vec::new());
    binder.aggs.push(Vec::new());
    let bq = binder.bind_query(q)?;
    let ctx = Ctx { db };
    let empty: &[Value] = &[];
    ctx.run_query(&bq, &[empty])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minisql::parse_sql;
    use crate::relcore::{parse_ddl, FitClass};
    use crate::tpch;
    use proptest::prelude::*;

    fn run(sql: &str, db: &DatabaseState) -> Result<ResultSet, ExecError> {
        execute(&parse_sql(sql).unwrap(), db)
    }

    fn d1_q0() -> DatabaseState {
        let mut db = tpch::q0_instance();
        db.retain_rows("customer", &[0]).unwrap();
        db.retain_rows("orders", &[0]).unwrap();
        db
    }

    #[test]
    fn q0_on_minimized_instance() {
        let rs = run(tpch::Q0_SQL, &d1_q0()).unwrap();
        assert_eq!(rs.headers, vec!["name", "phone"]);
        assert_eq!(rs.rows, vec![vec![Value::text("Customer#000023074"), Value::text("18-636-637-7498")]]);
        assert_eq!(rs.fit(), FitClass::Fit);
    }

    #[test]
    fn voided_tables_give_empty() {
        let mut db = tpch::q0_instance();
        db.void_tables(&["customer".into(), "orders".into()]).unwrap();
        assert_eq!(run(tpch::Q0_SQL, &db).unwrap().fit(), FitClass::Empty);
    }

    #[test]
    fn renamed_table_is_a_resolution_error() {
        let mut db = tpch::q0_instance();
        db.rename_table("orders", "orders_x").unwrap();
        assert!(run(tpch::Q0_SQL, &db).unwrap_err().is_resolution());
        let mut db = tpch::q0_instance();
        db.rename_table("supplier", "supplier_x").unwrap();
        assert!(run(tpch::Q0_SQL, &db).is_ok());
    }

    #[test]
    fn left_join_pads_each_unmatched_row_once() {
        let db = tpch::union_instance();
        let rs = run("SELECT c_custkey, o_orderkey FROM customer LEFT JOIN orders ON c_custkey = o_custkey", &db).unwrap();
        let padded: Vec<_> = rs.rows.iter().filter(|r| r[1].is_null()).collect();
        assert_eq!(padded, vec![&vec![Value::Int(7733), Value::Null]]);
        assert_eq!(rs.len(), 5);
        assert_eq!(rs.fit(), FitClass::Fit);
        let all_null = run("SELECT o_orderkey FROM customer LEFT JOIN orders ON c_custkey = o_custkey WHERE c_custkey = 7733", &db).unwrap();
        assert_eq!(all_null.fit(), FitClass::Unfit);
    }

    #[test]
    fn running_example_queries_agree() {
        let db = tpch::union_instance();
        let hidden = run(tpch::UNION_HIDDEN_SQL, &db).unwrap();
        let names: Vec<String> = hidden.rows.iter().map(|r| r[0].to_field()).collect();
        assert_eq!(names, vec!["Customer#000023074", "Customer#000007733", "Customer#000003310", "Supplier#000001793", "Supplier#000001794"]);
        let fin = run(tpch::UNION_FINAL_SQL, &db).unwrap();
        assert!(hidden.bag_eq(&fin));
        // the flat seed drops the customer without orders
        let seed = run(tpch::UNION_SEED_SQL, &db).unwrap();
        assert_eq!(seed.len(), 4);
    }

    #[test]
    fn grouping_is_strict() {
        let db = tpch::union_instance();
        let err = run("SELECT c_name, c_phone FROM customer GROUP BY c_name", &db).unwrap_err();
        assert!(matches!(err, ExecError::Invalid(_)));
        let ok = run("SELECT c_mktsegment, COUNT(*) FROM customer GROUP BY c_mktsegment ORDER BY c_mktsegment", &db).unwrap();
        assert_eq!(ok.len(), 4);
        assert!(ok.ordered);
    }

    #[test]
    fn whole_block_aggregate_on_empty_input() {
        let db = tpch::union_instance();
        let rs = run("SELECT COUNT(*), SUM(c_acctbal) FROM customer WHERE c_acctbal > 1000000", &db).unwrap();
        assert_eq!(rs.rows, vec![vec![Value::Int(0), Value::Null]]);
        assert_eq!(rs.fit(), FitClass::Unfit);
    }

    #[test]
    fn scalar_subquery_cardinality() {
        let db = tpch::union_instance();
        let err = run("SELECT c_name FROM customer WHERE c_acctbal > (SELECT o_totalprice FROM orders)", &db).unwrap_err();
        assert!(matches!(err, ExecError::Cardinality(_)));
        let rs = run("SELECT c_name FROM customer WHERE c_acctbal > (SELECT AVG(o_totalprice) FROM orders WHERE o_custkey = c_custkey)", &db).unwrap();
        assert_eq!(rs.rows, vec![vec![Value::text("Customer#000001201")], vec![Value::text("Customer#000003310")]]);
    }

    #[test]
    fn order_by_limit_and_arithmetic() {
        let db = tpch::union_instance();
        let rs = run("SELECT l_orderkey, l_extendedprice * (1 - l_discount) AS rev FROM lineitem ORDER BY rev DESC LIMIT 2", &db).unwrap();
        assert_eq!(rs.rows[0][0], Value::Int(2739811));
        assert_eq!(rs.rows[0][1].to_field(), "17597.3760");
        assert_eq!(rs.len(), 2);
        let err = run("SELECT c_name + 1 FROM customer", &db).unwrap_err();
        assert!(matches!(err, ExecError::Type(_)));
    }

    #[test]
    fn in_subquery_three_valued() {
        let db = tpch::union_instance();
        let rs = run("SELECT s_suppkey FROM supplier WHERE s_suppkey NOT IN (SELECT l_suppkey FROM lineitem)", &db).unwrap();
        assert_eq!(rs.rows, vec![vec![Value::Int(1797)]]);
        let rs = run("SELECT c_custkey FROM customer WHERE c_custkey NOT IN (SELECT o_orderkey FROM customer LEFT JOIN orders ON c_custkey = o_custkey)", &db)
            .unwrap();
        assert!(rs.is_empty());
    }

    // ---- naive reference evaluator over a two-table schema

    #[derive(Clone, Debug)]
    enum Atom {
        ColConst(usize, CmpOp, i64),
        ColCol(usize, CmpOp, usize),
        InList(usize, Vec<i64>),
        IsNull(usize, bool),
        Like(usize, String),
    }

    #[derive(Clone, Debug)]
    enum Pred {
        Atom(Atom),
        And(Box<Pred>, Box<Pred>),
        Or(Box<Pred>, Box<Pred>),
        Not(Box<Pred>),
    }

    #[derive(Clone, Debug)]
    struct Spec {
        left_join: bool,
        on: (usize, usize),
        pred: Option<Pred>,
        select: Vec<usize>,
        aggregate: bool,
    }

    // columns 0..3 are t1(a, b, s), 3..6 are t2(x, y, u)
    const NAMES: [&str; 6] = ["a", "b", "s", "x", "y", "u"];
    type RV = Option<Result<i64, String>>;

    fn cmp_rv(a: &RV, b: &RV) -> Option<Ordering> {
        match (a, b) {
            (Some(Ok(x)), Some(Ok(y))) => Some(x.cmp(y)),
            (Some(Err(x)), Some(Err(y))) => Some(x.cmp(y)),
            _ => None,
        }
    }

    fn holds(op: CmpOp, o: Ordering) -> bool {
        match op {
            CmpOp::Eq => o == Ordering::Equal,
            CmpOp::Lt => o == Ordering::Less,
            CmpOp::Le => o != Ordering::Greater,
            CmpOp::Gt => o == Ordering::Greater,
            CmpOp::Ge => o != Ordering::Less,
        }
    }

    fn eval_ref(p: &Pred, row: &[RV]) -> Option<bool> {
        match p {
            Pred::Atom(a) => match a {
                Atom::ColConst(c, op, k) => cmp_rv(&row[*c], &Some(Ok(*k))).map(|o| holds(*op, o)),
                Atom::ColCol(c, op, d) => cmp_rv(&row[*c], &row[*d]).map(|o| holds(*op, o)),
                Atom::InList(c, ks) => row[*c].as_ref().map(|v| ks.iter().any(|k| v == &Ok(*k))),
                Atom::IsNull(c, neg) => Some(row[*c].is_none() != *neg),
                Atom::Like(c, needle) => match &row[*c] {
                    Some(Err(s)) => Some(s.contains(needle.as_str())),
                    _ => None,
                },
            },
            Pred::And(l, r) => match (eval_ref(l, row), eval_ref(r, row)) {
                (Some(false), _) | (_, Some(false)) => Some(false),
                (Some(true), Some(true)) => Some(true),
                _ => None,
            },
            Pred::Or(l, r) => match (eval_ref(l, row), eval_ref(r, row)) {
                (Some(true), _) | (_, Some(true)) => Some(true),
                (Some(false), Some(false)) => Some(false),
                _ => None,
            },
            Pred::Not(x) => eval_ref(x, row).map(|b| !b),
        }
    }

    fn reference(spec: &Spec, t1: &[Vec<RV>], t2: &[Vec<RV>]) -> Vec<Vec<RV>> {
        let mut joined = Vec::new();
        for l in t1 {
            let mut matched = false;
            for r in t2 {
                let row: Vec<RV> = l.iter().chain(r.iter()).cloned().collect();
                if spec.left_join {
                    let ok = cmp_rv(&row[spec.on.0], &row[spec.on.1]) == Some(Ordering::Equal);
                    if !ok {
                        continue;
                    }
                    matched = true;
                }
                joined.push(row);
            }
            if spec.left_join && !matched {
                joined.push(l.iter().cloned().chain(vec![None, None, None]).collect());
            }
        }
        let kept: Vec<Vec<RV>> = joined.into_iter().filter(|r| spec.pred.as_ref().map(|p| eval_ref(p, r) == Some(true)).unwrap_or(true)).collect();
        if !spec.aggregate {
            return kept.iter().map(|r| spec.select.iter().map(|c| r[*c].clone()).collect()).collect();
        }
        let g = spec.select[0];
        let mut groups: Vec<(RV, i64, Option<i64>)> = Vec::new();
        for r in &kept {
            let b = match &r[1] {
                Some(Ok(v)) => Some(*v),
                _ => None,
            };
            match groups.iter_mut().find(|x| x.0 == r[g]) {
                Some(x) => {
                    x.1 += 1;
                    x.2 = match (x.2, b) {
                        (Some(s), Some(v)) => Some(s + v),
                        (s, None) => s,
                        (None, v) => v,
                    };
                }
                None => groups.push((r[g].clone(), 1, b)),
            }
        }
        groups.into_iter().map(|(k, n, s)| vec![k, Some(Ok(n)), s.map(Ok)]).collect()
    }

    fn to_value(v: &RV) -> Value {
        match v {
            None => Value::Null,
            Some(Ok(i)) => Value::Int(*i),
            Some(Err(s)) => Value::Text(s.clone()),
        }
    }

    fn atom_sql(a: &Atom) -> String {
        match a {
            Atom::ColConst(c, op, k) => format!("{} {} {}", NAMES[*c], op.symbol(), k),
            Atom::ColCol(c, op, d) => format!("{} {} {}", NAMES[*c], op.symbol(), NAMES[*d]),
            Atom::InList(c, ks) => {
                format!("{} IN ({})", NAMES[*c], ks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(", "))
            }
            Atom::IsNull(c, neg) => format!("{} IS {}NULL", NAMES[*c], if *neg { "NOT " } else { "" }),
            Atom::Like(c, n) => format!("{} LIKE '%{}%'", NAMES[*c], n),
        }
    }

    fn pred_sql(p: &Pred) -> String {
        match p {
            Pred::Atom(a) => atom_sql(a),
            Pred::And(l, r) => format!("({} AND {})", pred_sql(l), pred_sql(r)),
            Pred::Or(l, r) => format!("({} OR {})", pred_sql(l), pred_sql(r)),
            Pred::Not(x) => format!("NOT ({})", pred_sql(x)),
        }
    }

    fn spec_sql(s: &Spec) -> String {
        let from = if s.left_join { format!("t1 LEFT JOIN t2 ON {} = {}", NAMES[s.on.0], NAMES[s.on.1]) } else { "t1, t2".to_string() };
        let select =
            if s.aggregate { format!("{}, COUNT(*), SUM(b)", NAMES[s.select[0]]) } else { s.select.iter().map(|c| NAMES[*c]).collect::<Vec<_>>().join(", ") };
        let mut sql = format!("SELECT {select} FROM {from}");
        if let Some(p) = &s.pred {
            sql.push_str(&format!(" WHERE {}", pred_sql(p)));
        }
        if s.aggregate {
            sql.push_str(&format!(" GROUP BY {}", NAMES[s.select[0]]));
        }
        sql
    }

    fn num_col() -> impl Strategy<Value = usize> {
        prop::sample::select(vec![0usize, 1, 3, 4])
    }

    fn op() -> impl Strategy<Value = CmpOp> {
        prop::sample::select(vec![CmpOp::Eq, CmpOp::Le, CmpOp::Ge, CmpOp::Lt, CmpOp::Gt])
    }

    fn atom() -> impl Strategy<Value = Atom> {
        prop_oneof![
            (num_col(), op(), 0i64..5).prop_map(|(c, o, k)| Atom::ColConst(c, o, k)),
            (num_col(), op(), num_col()).prop_map(|(c, o, d)| Atom::ColCol(c, o, d)),
            (num_col(), prop::collection::btree_set(0i64..5, 1..4)).prop_map(|(c, ks)| Atom::InList(c, ks.into_iter().collect())),
            (0usize..6, any::<bool>()).prop_map(|(c, n)| Atom::IsNull(c, n)),
            (prop::sample::select(vec![2usize, 5]), prop::sample::select(vec!["p", "q", "pq"])).prop_map(|(c, n)| Atom::Like(c, n.into())),
        ]
    }

    fn pred() -> impl Strategy<Value = Pred> {
        atom().prop_map(Pred::Atom).prop_recursive(3, 8, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(l, r)| Pred::And(Box::new(l), Box::new(r))),
                (inner.clone(), inner.clone()).prop_map(|(l, r)| Pred::Or(Box::new(l), Box::new(r))),
                inner.prop_map(|x| Pred::Not(Box::new(x))),
            ]
        })
    }

    fn spec() -> impl Strategy<Value = Spec> {
        (
            any::<bool>(),
            (prop::sample::select(vec![0usize, 1]), prop::sample::select(vec![3usize, 4])),
            prop::option::of(pred()),
            prop::collection::vec(0usize..6, 1..4),
            any::<bool>(),
        )
            .prop_map(|(left_join, on, pred, select, aggregate)| Spec { left_join, on, pred, select, aggregate })
    }

    fn table() -> impl Strategy<Value = Vec<Vec<RV>>> {
        prop::collection::vec(
            (0i64..5, 0i64..5, prop::sample::select(vec!["p", "q", "pq", "r"])).prop_map(|(a, b, s)| vec![Some(Ok(a)), Some(Ok(b)), Some(Err(s.to_string()))]),
            0..8,
        )
    }

    fn db_of(t1: &[Vec<RV>], t2: &[Vec<RV>]) -> DatabaseState {
        let cat = parse_ddl("CREATE TABLE t1 (a INT, b INT, s TEXT); CREATE TABLE t2 (x INT, y INT, u TEXT);").unwrap();
        let mut db = DatabaseState::new(cat);
        db.load_rows("t1", t1.iter().map(|r| r.iter().map(to_value).collect()).collect()).unwrap();
        db.load_rows("t2", t2.iter().map(|r| r.iter().map(to_value).collect()).collect()).unwrap();
        db
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn executor_matches_reference(s in spec(), t1 in table(), t2 in table()) {
            let db = db_of(&t1, &t2);
            let got = run(&spec_sql(&s), &db).unwrap();
            let want: Vec<Row> = reference(&s, &t1, &t2).iter().map(|r| r.iter().map(to_value).collect()).collect();
            let want = ResultSet::new(got.headers.clone(), want);
            prop_assert!(got.bag_eq(&want), "sql {}\n got {:?}\nwant {:?}", spec_sql(&s), got.rows, want.rows);
        }
    }
}
