//! Projection, aggregation, grouping, ordering and limit, read off the
//! minimized instance by perturbing one unit at a time and by adding
//! controlled extra tuples.
//!
//! A unit is a column, or an equality class moved as one. Extra tuples
//! are made by copying the rows of just the tables holding the unit's
//! columns, with the unit changed, so exactly one new join tuple appears.

use rust_decimal::Decimal;
use serde::Serialize;

use super::{num, ColRef, Prober, XResult, XreError};
use crate::minisql::{AggFunc, ArithOp, Expr, OrderItem, SelectItem};
use crate::relcore::{ResultSet, Row, Value};

/// Rows a LIMIT probe inflates the result to.
pub const PROBE_CEILING: usize = 512;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Unit {
    pub members: Vec<ColRef>,
    /// Three ordered values the unit may take with the result staying FIT,
    /// the current value in the middle when the interval allows it.
    pub triple: Option<[Value; 3]>,
    /// Values other than the current one, for perturbation.
    pub alts: Vec<Value>,
    /// Satisfying interval for numeric units.
    pub range: Option<(Value, Value)>,
}

impl Unit {
    pub fn key(&self) -> &ColRef {
        &self.members[0]
    }

    fn tables(&self) -> Vec<String> {
        let mut t: Vec<String> = self.members.iter().map(|c| c.table.clone()).collect();
        t.sort();
        t.dedup();
        t
    }

    fn cells(&self, v: &Value) -> Vec<(ColRef, Value)> {
        self.members.iter().map(|c| (c.clone(), v.clone())).collect()
    }
}

/// A column pinned to a known value: constant filters, IN lists, LIKE
/// matches. Outputs equal to the value may be projections of it.
#[derive(Clone, Debug, Serialize)]
pub struct Pinned {
    pub col: ColRef,
    pub value: Value,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Template {
    Unit(usize),
    Scale(usize, Decimal),
    Shift(usize, Decimal),
    Bin(ArithOp, usize, usize),
    /// `a * (1 - b)`
    MulComplement(usize, usize),
    Pinned(ColRef),
    Const(Value),
}

impl Template {
    fn eval(&self, at: &dyn Fn(usize) -> Option<Decimal>) -> Option<Decimal> {
        Some(match self {
            Template::Unit(a) => at(*a)?,
            Template::Scale(a, k) => at(*a)? * k,
            Template::Shift(a, k) => at(*a)? + k,
            Template::Bin(ArithOp::Add, a, b) => at(*a)? + at(*b)?,
            Template::Bin(ArithOp::Sub, a, b) => at(*a)? - at(*b)?,
            Template::Bin(ArithOp::Mul, a, b) => at(*a)? * at(*b)?,
            Template::Bin(ArithOp::Div, a, b) => at(*a)?.checked_div(at(*b)?)?,
            Template::MulComplement(a, b) => at(*a)? * (Decimal::ONE - at(*b)?),
            Template::Pinned(_) | Template::Const(_) => return None,
        })
    }

    fn to_expr(&self, units: &[Unit], col: &dyn Fn(&ColRef) -> Expr) -> Expr {
        let u = |i: usize| col(units[i].key());
        let arith = |op, l, r| Expr::Arith { op, left: Box::new(l), right: Box::new(r) };
        match self {
            Template::Unit(a) => u(*a),
            Template::Scale(a, k) => arith(ArithOp::Mul, u(*a), Expr::lit(Value::Dec(*k))),
            Template::Shift(a, k) => arith(ArithOp::Add, u(*a), Expr::lit(Value::Dec(*k))),
            Template::Bin(op, a, b) => arith(*op, u(*a), u(*b)),
            Template::MulComplement(a, b) => arith(ArithOp::Mul, u(*a), arith(ArithOp::Sub, Expr::lit(Value::Int(1)), u(*b))),
            Template::Pinned(c) => col(c),
            Template::Const(v) => Expr::lit(v.clone()),
        }
    }

    fn units(&self) -> Vec<usize> {
        match self {
            Template::Unit(a) | Template::Scale(a, _) | Template::Shift(a, _) => vec![*a],
            Template::Bin(_, a, b) | Template::MulComplement(a, b) => vec![*a, *b],
            _ => vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum OutputKind {
    Plain(Template),
    Agg(AggFunc, Option<Template>),
}

#[derive(Clone, Debug, Serialize)]
pub struct TailClauses {
    pub headers: Vec<String>,
    pub outputs: Vec<OutputKind>,
    pub aggregated: bool,
    /// Units in GROUP BY, by index.
    pub group_units: Vec<usize>,
    /// Pinned columns in GROUP BY.
    pub group_pinned: Vec<ColRef>,
    /// Output index and descending flag, most significant first.
    pub order: Vec<(usize, bool)>,
    pub limit: Option<u64>,
    pub notes: Vec<String>,
    pub probes: usize,
}

impl TailClauses {
    pub fn select_items(&self, units: &[Unit], col: &dyn Fn(&ColRef) -> Expr) -> Vec<SelectItem> {
        self.outputs
            .iter()
            .zip(&self.headers)
            .map(|(o, h)| {
                let expr = match o {
                    OutputKind::Plain(t) => t.to_expr(units, col),
                    OutputKind::Agg(f, t) => Expr::Agg { func: *f, arg: t.as_ref().map(|t| Box::new(t.to_expr(units, col))), distinct: false },
                };
                let default = match &expr {
                    Expr::Column { name, .. } => name.clone(),
                    Expr::Agg { func, .. } => func.name().to_ascii_lowercase(),
                    _ => "?column?".into(),
                };
                let alias = if *h == default || h == "?column?" { None } else { Some(h.clone()) };
                SelectItem::Expr { expr, alias }
            })
            .collect()
    }

    pub fn group_exprs(&self, units: &[Unit], col: &dyn Fn(&ColRef) -> Expr) -> Vec<Expr> {
        let mut out: Vec<Expr> = self.group_units.iter().map(|&u| col(units[u].key())).collect();
        out.extend(self.group_pinned.iter().map(col));
        out
    }

    pub fn order_items(&self, units: &[Unit], col: &dyn Fn(&ColRef) -> Expr) -> Vec<OrderItem> {
        let items = self.select_items(units, col);
        self.order
            .iter()
            .map(|&(j, desc)| {
                let expr = match &items[j] {
                    SelectItem::Expr { alias: Some(a), .. } => Expr::col(a),
                    SelectItem::Expr { expr, .. } => expr.clone(),
                    SelectItem::Star => Expr::lit(Value::Int(j as i64 + 1)),
                };
                OrderItem { expr, desc }
            })
            .collect()
    }
}

fn same(a: &Value, b: &Value) -> bool {
    a.key() == b.key()
}

fn same_num(a: Option<Decimal>, b: &Value) -> bool {
    match (a, num(b)) {
        (Some(x), Some(y)) => x.normalize() == y.normalize(),
        _ => false,
    }
}

struct Ctx<'p, 'a> {
    p: &'p mut Prober<'a>,
    units: &'p [Unit],
    tables: &'p [String],
    probes: usize,
}

impl<'p, 'a> Ctx<'p, 'a> {
    fn observe(&mut self) -> XResult<Option<ResultSet>> {
        self.probes += 1;
        self.p.result()
    }

    fn perturb(&mut self, u: usize, v: &Value) -> XResult<Option<ResultSet>> {
        self.probes += 1;
        self.p.result_with(&self.units[u].cells(v))
    }

    /// Appends one copy of row 0 of each table of `u`, with the unit set
    /// to `v`, `times` times. Not reverted.
    fn add_tuple(&mut self, u: usize, v: &Value, times: usize) -> XResult<()> {
        self.add_tuple_with(&self.units[u].tables(), &self.units[u].cells(v), times)
    }

    fn add_tuple_with(&mut self, tables: &[String], cells: &[(ColRef, Value)], times: usize) -> XResult<()> {
        for t in tables {
            let schema = self.p.db.schema(t)?.clone();
            let mut row: Row = self.p.db.rows(t)?[0].clone();
            for (c, v) in cells {
                if c.table == *t {
                    row[schema.column_index(&c.column).expect("column")] = v.clone();
                }
            }
            self.p.db.insert_rows(t, vec![row; times])?;
        }
        Ok(())
    }

    /// Appends a copy of row 0 of every table whose join classes move to
    /// values unused elsewhere, so it joins only with itself. `salt`
    /// separates several such tuples. False when a join class has no
    /// spare value.
    fn add_independent(&mut self, cells: &[(ColRef, Value)], salt: usize) -> XResult<bool> {
        let mut all = cells.to_vec();
        for unit in self.units {
            let tables = unit.tables();
            if tables.len() < 2 || unit.members.iter().any(|m| cells.iter().any(|(c, _)| c == m)) {
                continue;
            }
            let Some(v) = spread(self.p, unit, salt + 1).get(salt).cloned() else { return Ok(false) };
            all.extend(unit.cells(&v));
        }
        let tables = self.tables.to_vec();
        self.add_tuple_with(&tables, &all, 1)?;
        Ok(true)
    }

    fn depth(&self) -> usize {
        self.p.db.undo_depth()
    }

    fn back(&mut self, d: usize) -> XResult<()> {
        Ok(self.p.db.revert_to(d)?)
    }
}

/// What each unit's perturbations did to the single output row.
struct Perturbations {
    /// `points[u]` lists (unit value, output row).
    points: Vec<Vec<(Value, Row)>>,
}

fn single_row(rs: Option<ResultSet>) -> Option<Row> {
    rs.filter(|r| r.len() == 1).map(|mut r| r.rows.remove(0))
}

fn find_template(j: usize, deps: &[usize], units: &[Unit], base_vals: &[Value], base: &Row, pert: &Perturbations) -> Option<Template> {
    let unit_num = |u: usize, v: &Value| -> Option<Decimal> {
        let _ = u;
        num(v)
    };
    // every (unit values, observed) point available for this output
    let mut points: Vec<(Vec<Option<Decimal>>, Value)> = Vec::new();
    let base_nums: Vec<Option<Decimal>> = base_vals.iter().enumerate().map(|(u, v)| unit_num(u, v)).collect();
    points.push((base_nums.clone(), base[j].clone()));
    for &u in deps {
        for (v, row) in &pert.points[u] {
            let mut at = base_nums.clone();
            at[u] = unit_num(u, v);
            points.push((at, row[j].clone()));
        }
    }
    let fits = |t: &Template| points.iter().all(|(at, obs)| same_num(t.eval(&|i| at[i]), obs));

    match deps {
        [a] => {
            let a = *a;
            // identity also covers text and dates
            if same(&base_vals[a], &base[j]) && pert.points[a].iter().all(|(v, row)| same(v, &row[j])) {
                return Some(Template::Unit(a));
            }
            let (x0, y0) = (num(&base_vals[a])?, num(&base[j])?);
            let mut cands = vec![Template::Shift(a, y0 - x0)];
            if !x0.is_zero() {
                cands.push(Template::Scale(a, (y0 / x0).normalize()));
            }
            cands.into_iter().find(|t| fits(t))
        }
        [a, b] => {
            let (a, b) = (*a, *b);
            let cands = [
                Template::Bin(ArithOp::Add, a, b),
                Template::Bin(ArithOp::Sub, a, b),
                Template::Bin(ArithOp::Sub, b, a),
                Template::Bin(ArithOp::Mul, a, b),
                Template::MulComplement(a, b),
                Template::MulComplement(b, a),
                Template::Bin(ArithOp::Div, a, b),
                Template::Bin(ArithOp::Div, b, a),
            ];
            let _ = units;
            cands.into_iter().find(|t| fits(t))
        }
        _ => None,
    }
}

/// Value of output `j` predicted for a single tuple with `u` at `v`.
fn predicted(j: usize, u: usize, v: &Value, base_vals: &[Value], base: &Row, pert: &Perturbations) -> Option<Value> {
    if same(v, &base_vals[u]) {
        return Some(base[j].clone());
    }
    pert.points[u].iter().find(|(x, _)| same(x, v)).map(|(_, r)| r[j].clone())
}

fn classify_direction(observed: &[Value], values_in_insertion_order: &[Value]) -> Option<bool> {
    // Some(false) ascending, Some(true) descending, None unordered
    let n = observed.len();
    let mut asc = values_in_insertion_order.to_vec();
    asc.sort_by(|a, b| a.sort_cmp(b));
    let mut desc = asc.clone();
    desc.reverse();
    let eq = |a: &[Value], b: &[Value]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| same(x, y));
    let unordered = &values_in_insertion_order[..n.min(values_in_insertion_order.len())];
    if eq(observed, &asc[..n]) && !eq(observed, unordered) {
        Some(false)
    } else if eq(observed, &desc[..n]) && !eq(observed, unordered) {
        Some(true)
    } else {
        None
    }
}

fn column(rs: &ResultSet, j: usize) -> Vec<Value> {
    rs.rows.iter().map(|r| r[j].clone()).collect()
}

/// Reads the tail clauses of the block on the minimized instance.
/// `units` are the perturbable units, `pinned` the columns with a fixed
/// value.
pub fn extract_tail_clauses(p: &mut Prober, units: &[Unit], pinned: &[Pinned], tables: &[String]) -> XResult<TailClauses> {
    let mut cx = Ctx { p, units, tables, probes: 0 };
    let base_rs = cx.observe()?.ok_or_else(|| XreError::Precondition("minimized instance fails to execute".into()))?;
    if base_rs.len() != 1 {
        return Err(XreError::Precondition(format!("minimized instance yields {} rows, expected 1", base_rs.len())));
    }
    let headers = base_rs.headers.clone();
    let base = base_rs.rows[0].clone();
    let k = base.len();
    let base_vals: Vec<Value> = units.iter().map(|u| cx.p.value(u.key())).collect();
    let mut notes = Vec::new();

    // projection dependencies
    let mut pert = Perturbations { points: vec![Vec::new(); units.len()] };
    let mut deps: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (u, unit) in units.iter().enumerate() {
        for v in &unit.alts {
            if let Some(row) = single_row(cx.perturb(u, v)?) {
                for j in 0..k {
                    if !same(&row[j], &base[j]) && !deps[j].contains(&u) {
                        deps[j].push(u);
                    }
                }
                pert.points[u].push((v.clone(), row));
            }
        }
    }

    // one identical extra tuple: aggregated blocks absorb it
    let t0 = deps.iter().flatten().next().map(|&u| units[u].key().table.clone()).unwrap_or_else(|| tables[0].clone());
    let d = cx.depth();
    cx.add_tuple_with(std::slice::from_ref(&t0), &[], 1)?;
    let dup = cx.observe()?;
    cx.back(d)?;
    let dup = dup.ok_or_else(|| XreError::Precondition("duplicated instance fails to execute".into()))?;
    let doubled: Vec<bool> = if dup.len() == 1 {
        (0..k)
            .map(|j| match (num(&base[j]), num(&dup.rows[0][j])) {
                (Some(a), Some(b)) => !a.is_zero() && b == a * Decimal::TWO,
                _ => false,
            })
            .collect()
    } else {
        vec![false; k]
    };

    // extra tuple with the unit changed: grouping units split the output
    let mut split = vec![false; units.len()];
    let mut merged: Vec<Vec<(Value, Row)>> = vec![Vec::new(); units.len()];
    if dup.len() == 1 {
        for (u, unit) in units.iter().enumerate() {
            for v in &unit.alts {
                let d = cx.depth();
                cx.add_tuple(u, v, 1)?;
                let rs = cx.observe()?;
                cx.back(d)?;
                match rs {
                    Some(rs) if rs.len() == 2 => split[u] = true,
                    Some(rs) if rs.len() == 1 => merged[u].push((v.clone(), rs.rows[0].clone())),
                    _ => {}
                }
            }
        }
    }

    let mut outputs = Vec::with_capacity(k);
    let mut agg_evidence = doubled.iter().any(|&b| b) || split.iter().any(|&b| b);
    let mut agg_kinds: Vec<Option<OutputKind>> = vec![None; k];
    if dup.len() == 1 {
        for j in 0..k {
            if doubled[j] || deps[j].iter().any(|&u| split[u]) || deps[j].is_empty() {
                continue;
            }
            let u = deps[j][0];
            let mut func = None;
            for f in [AggFunc::Min, AggFunc::Max, AggFunc::Avg] {
                let ok = !merged[u].is_empty()
                    && merged[u].iter().all(|(v, row)| {
                        let (Some(a), Some(b)) = (num(&base[j]), predicted(j, u, v, &base_vals, &base, &pert).and_then(|x| num(&x))) else {
                            return false;
                        };
                        let expect = match f {
                            AggFunc::Min => a.min(b),
                            AggFunc::Max => a.max(b),
                            _ => (a + b) / Decimal::TWO,
                        };
                        same_num(Some(expect), &row[j])
                    });
                if ok {
                    func = Some(f);
                    break;
                }
            }
            if let Some(f) = func {
                agg_evidence = true;
                let t = find_template(j, &deps[j], units, &base_vals, &base, &pert);
                if t.is_none() {
                    notes.push(format!("output {} aggregates an expression no template matches", headers[j]));
                }
                agg_kinds[j] = Some(OutputKind::Agg(f, t));
            }
        }
    }
    let aggregated = dup.len() == 1 && agg_evidence;
    if dup.len() != 2 && !aggregated {
        if dup.len() == 1 {
            notes.push("duplicate tuple did not add a row and nothing aggregates: treated as a LIMIT".into());
        } else {
            notes.push(format!("duplicate tuple produced {} rows", dup.len()));
        }
    }

    let pinned_for = |v: &Value| pinned.iter().find(|pc| same(&pc.value, v)).map(|pc| pc.col.clone());
    let mut group_units: Vec<usize> = Vec::new();
    let mut group_pinned: Vec<ColRef> = Vec::new();
    for j in 0..k {
        let kind = if aggregated && doubled[j] {
            if deps[j].is_empty() {
                OutputKind::Agg(AggFunc::Count, None)
            } else {
                match find_template(j, &deps[j], units, &base_vals, &base, &pert) {
                    Some(t) => OutputKind::Agg(AggFunc::Sum, Some(t)),
                    None => {
                        notes.push(format!("output {}: SUM over an unrecognized expression", headers[j]));
                        OutputKind::Agg(AggFunc::Sum, Some(Template::Unit(deps[j][0])))
                    }
                }
            }
        } else if let Some(kind) = agg_kinds[j].clone() {
            kind
        } else if deps[j].is_empty() {
            match pinned_for(&base[j]) {
                Some(c) => {
                    if aggregated && !group_pinned.contains(&c) {
                        group_pinned.push(c.clone());
                    }
                    OutputKind::Plain(Template::Pinned(c))
                }
                None => OutputKind::Plain(Template::Const(base[j].clone())),
            }
        } else {
            let t = find_template(j, &deps[j], units, &base_vals, &base, &pert).unwrap_or_else(|| {
                notes.push(format!("output {}: no template explains its dependencies", headers[j]));
                Template::Unit(deps[j][0])
            });
            if aggregated {
                for u in t.units() {
                    if !split[u] {
                        notes.push(format!("output {} is not aggregated but {} does not split groups", headers[j], units[u].key()));
                    }
                    if !group_units.contains(&u) {
                        group_units.push(u);
                    }
                }
            }
            OutputKind::Plain(t)
        };
        outputs.push(kind);
    }
    if aggregated {
        for (u, &s) in split.iter().enumerate() {
            if s && !group_units.contains(&u) {
                group_units.push(u);
            }
        }
    }

    // LIMIT: inflate past the ceiling and look for a cap
    let mut limit = None;
    let d = cx.depth();
    if !aggregated {
        cx.add_tuple_with(std::slice::from_ref(&t0), &[], PROBE_CEILING - 1)?;
        if let Some(rs) = cx.observe()? {
            if rs.len() < PROBE_CEILING {
                limit = Some(rs.len() as u64);
            }
        }
    } else if let Some(&g) = group_units.first() {
        let vals = spread(cx.p, &units[g], PROBE_CEILING - 1);
        let groups = vals.len() + 1;
        for v in &vals {
            cx.add_tuple(g, v, 1)?;
        }
        if let Some(rs) = cx.observe()? {
            if rs.len() < groups {
                limit = Some(rs.len() as u64);
            }
        }
        if groups < PROBE_CEILING {
            notes.push(format!("LIMIT probe reached only {groups} groups"));
        }
    }
    cx.back(d)?;
    let lim = limit.map(|l| l as usize).unwrap_or(usize::MAX);

    // ORDER BY
    let mut order: Vec<(usize, bool)> = Vec::new();
    for j in 0..k {
        let dir = if !aggregated {
            order_plain(&mut cx, j, &deps[j], &base_vals, &base, &pert, lim)?
        } else {
            order_grouped(&mut cx, j, &outputs[j], &deps[j], &group_units, &base_vals, &base, &pert, lim, &mut notes)?
        };
        if let Some(desc) = dir {
            order.push((j, desc));
        }
    }
    if order.len() >= 2 {
        let grouped = if aggregated { Some(group_units.as_slice()) } else { None };
        order = prioritize(&mut cx, order, &deps, grouped, &base_vals, &base, &pert, lim, &mut notes)?;
    }

    Ok(TailClauses { headers, outputs, aggregated, group_units, group_pinned, order, limit, notes, probes: cx.probes })
}

/// Up to `n` values of the unit other than its current one.
fn spread(p: &Prober, unit: &Unit, n: usize) -> Vec<Value> {
    let dom = p.domain(unit.key());
    let cur = p.value(unit.key());
    if let Some(vals) = &dom.enum_values {
        return vals.iter().map(|s| Value::Text(s.clone())).filter(|v| *v != cur).take(n).collect();
    }
    if !super::is_numeric_domain(&dom) {
        return (0..n).map(|i| Value::text(format!("{}~{i:04}", cur.to_field()))).collect();
    }
    let (Some((lo, hi)), Ok(g0)) = (&unit.range, dom.grid_index(&cur)) else { return unit.alts.clone() };
    let (Ok(rlo), Ok(rhi)) = (dom.grid_index(lo), dom.grid_index(hi)) else { return unit.alts.clone() };
    let up = (g0 + 1..=rhi).take(n);
    let down = (rlo..g0).rev();
    up.chain(down).take(n).map(|g| dom.from_grid(g)).collect()
}

#[allow(clippy::too_many_arguments)]
fn order_plain(cx: &mut Ctx, j: usize, deps: &[usize], base_vals: &[Value], base: &Row, pert: &Perturbations, lim: usize) -> XResult<Option<bool>> {
    let Some(&u) = deps.first() else { return Ok(None) };
    let Some([lo, mid, hi]) = cx.units[u].triple.clone() else { return Ok(None) };
    let expect: Option<Vec<Value>> = [&mid, &lo, &hi].iter().map(|v| predicted(j, u, v, base_vals, base, pert)).collect();
    let Some(expect) = expect else { return Ok(None) };
    let d = cx.depth();
    let held = cx.p.hold(&cx.units[u].cells(&mid))?;
    if held.is_none() {
        return Ok(None);
    }
    cx.add_tuple(u, &lo, 1)?;
    cx.add_tuple(u, &hi, 1)?;
    let rs = cx.observe()?;
    cx.back(d)?;
    let Some(rs) = rs else { return Ok(None) };
    if rs.len() != 3.min(lim) {
        return Ok(None);
    }
    Ok(classify_direction(&column(&rs, j), &expect))
}

#[allow(clippy::too_many_arguments)]
fn order_grouped(
    cx: &mut Ctx,
    j: usize,
    kind: &OutputKind,
    deps: &[usize],
    group_units: &[usize],
    base_vals: &[Value],
    base: &Row,
    pert: &Perturbations,
    lim: usize,
    notes: &mut Vec<String>,
) -> XResult<Option<bool>> {
    let Some(&g) = group_units.first() else { return Ok(None) };
    let Some([glo, gmid, ghi]) = cx.units[g].triple.clone() else { return Ok(None) };
    let d = cx.depth();
    let expect: Vec<Value>;
    match kind {
        OutputKind::Plain(_) => {
            let Some(&u) = deps.first() else { return Ok(None) };
            if u != g && !group_units.contains(&u) {
                return Ok(None);
            }
            let Some([lo, mid, hi]) = cx.units[u].triple.clone() else { return Ok(None) };
            let e: Option<Vec<Value>> = [&mid, &lo, &hi].iter().map(|v| predicted(j, u, v, base_vals, base, pert)).collect();
            let Some(e) = e else { return Ok(None) };
            expect = e;
            if cx.p.hold(&cx.units[u].cells(&mid))?.is_none() {
                return Ok(None);
            }
            cx.add_tuple(u, &lo, 1)?;
            cx.add_tuple(u, &hi, 1)?;
        }
        OutputKind::Agg(AggFunc::Count, None) => {
            // group sizes 2, 1, 3 in insertion order
            let count = |n: i64| Value::Int(n);
            expect = vec![count(2), count(1), count(3)];
            if cx.p.hold(&cx.units[g].cells(&gmid))?.is_none() {
                return Ok(None);
            }
            cx.add_tuple(g, &gmid, 1)?;
            cx.add_tuple(g, &glo, 1)?;
            cx.add_tuple(g, &ghi, 3)?;
        }
        OutputKind::Agg(_, Some(_)) => {
            let Some(&x) = deps.first() else { return Ok(None) };
            let Some([xlo, xmid, xhi]) = cx.units[x].triple.clone() else { return Ok(None) };
            if x == g {
                notes.push(format!("ordering on an aggregate of the group key {} not probed", cx.units[x].key()));
                return Ok(None);
            }
            // groups (g, x): (mid, lo), (lo, hi), (hi, mid)
            let e: Option<Vec<Value>> = [&xlo, &xhi, &xmid].iter().map(|v| predicted(j, x, v, base_vals, base, pert)).collect();
            let Some(e) = e else { return Ok(None) };
            expect = e;
            let mut cells = cx.units[g].cells(&gmid);
            cells.extend(cx.units[x].cells(&xlo));
            if cx.p.hold(&cells)?.is_none() {
                return Ok(None);
            }
            let gt = cx.units[g].tables();
            let local = cx.units[x].tables().iter().all(|t| gt.contains(t));
            for (salt, (gv, xv)) in [(&glo, &xhi), (&ghi, &xmid)].into_iter().enumerate() {
                let mut cells = cx.units[g].cells(gv);
                cells.extend(cx.units[x].cells(xv));
                if local {
                    cx.add_tuple_with(&gt, &cells, 1)?;
                } else if !cx.add_independent(&cells, salt)? {
                    cx.back(d)?;
                    return Ok(None);
                }
            }
        }
        OutputKind::Agg(_, None) => return Ok(None),
    }
    let rs = cx.observe()?;
    cx.back(d)?;
    let Some(rs) = rs else { return Ok(None) };
    if rs.len() != 3.min(lim) {
        return Ok(None);
    }
    Ok(classify_direction(&column(&rs, j), &expect))
}

/// Orders keys pairwise: two tuples whose key values disagree; the first
/// output row tells which key dominates.
#[allow(clippy::too_many_arguments)]
fn prioritize(
    cx: &mut Ctx,
    keys: Vec<(usize, bool)>,
    deps: &[Vec<usize>],
    grouped: Option<&[usize]>,
    base_vals: &[Value],
    base: &Row,
    pert: &Perturbations,
    lim: usize,
    notes: &mut Vec<String>,
) -> XResult<Vec<(usize, bool)>> {
    let mut out: Vec<(usize, bool)> = Vec::new();
    for key in keys {
        let mut pos = out.len();
        for (i, &other) in out.iter().enumerate() {
            match dominates(cx, key, other, deps, grouped, base_vals, base, pert, lim)? {
                Some(true) => {
                    pos = i;
                    break;
                }
                Some(false) => {}
                None => notes.push(format!("priority of ORDER BY outputs {} and {} undetermined", key.0, other.0)),
            }
        }
        out.insert(pos, key);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn dominates(
    cx: &mut Ctx,
    a: (usize, bool),
    b: (usize, bool),
    deps: &[Vec<usize>],
    grouped: Option<&[usize]>,
    base_vals: &[Value],
    base: &Row,
    pert: &Perturbations,
    lim: usize,
) -> XResult<Option<bool>> {
    let (Some(&ua), Some(&ub)) = (deps[a.0].first(), deps[b.0].first()) else { return Ok(None) };
    if ua == ub || lim < 2 {
        return Ok(None);
    }
    let (Some([alo, _, ahi]), Some([blo, _, bhi])) = (cx.units[ua].triple.clone(), cx.units[ub].triple.clone()) else {
        return Ok(None);
    };
    // P: a low; Q: a high. b goes against a when both keys share a
    // direction and with it otherwise, so the two priorities order P and Q
    // differently.
    let (bp, bq) = if a.1 == b.1 { (bhi, blo) } else { (blo, bhi) };
    let mut pcells = cx.units[ua].cells(&alo);
    pcells.extend(cx.units[ub].cells(&bp));
    if let Some(groups) = grouped {
        // P must land in a group of its own
        if !groups.contains(&ua) && !groups.contains(&ub) {
            let Some(&g) = groups.first() else { return Ok(None) };
            let Some(v) = cx.units[g].alts.first().cloned() else { return Ok(None) };
            pcells.extend(cx.units[g].cells(&v));
        }
    }
    let d = cx.depth();
    let mut q = cx.units[ua].cells(&ahi);
    q.extend(cx.units[ub].cells(&bq));
    if cx.p.hold(&q)?.is_none() {
        return Ok(None);
    }
    let tables = cx.units[ua].tables();
    if grouped.is_none() && tables == cx.units[ub].tables() {
        cx.add_tuple_with(&tables, &pcells, 1)?;
    } else if !cx.add_independent(&pcells, 0)? {
        cx.back(d)?;
        return Ok(None);
    }
    let rs = cx.observe()?;
    cx.back(d)?;
    let Some(rs) = rs else { return Ok(None) };
    if rs.len() != 2.min(lim) {
        return Ok(None);
    }
    let Some(first) = rs.rows.first() else { return Ok(None) };
    let Some(pa) = predicted(a.0, ua, &alo, base_vals, base, pert) else { return Ok(None) };
    let Some(qa) = predicted(a.0, ua, &ahi, base_vals, base, pert) else { return Ok(None) };
    if same(&pa, &qa) {
        return Ok(None);
    }
    let p_first = same(&first[a.0], &pa);
    // if a dominates, P comes first exactly when a ascends
    Ok(Some(p_first == !a.1))
}
