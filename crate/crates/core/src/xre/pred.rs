//! Filters and joins on ordered columns of a minimized instance: per-column
//! satisfying intervals by binary search, column-to-column inequalities
//! confirmed through floating bounds, and equality classes found by moving
//! columns in lockstep.

use std::collections::BTreeMap;

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::Serialize;

use super::{is_numeric_domain, num, ColRef, Prober, XResult, XreError};
use crate::minisql::{CmpOp, Expr};
use crate::relcore::{AttrDomain, DomainKind, Value};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Floating {
    Static,
    FloatsWith(ColRef),
}

/// The values a column can take, all else fixed, with the result staying
/// FIT. Bounds are closed and lie on the column's step grid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SValueInterval {
    pub col: ColRef,
    pub lb: Value,
    pub ub: Value,
    pub lb_open: bool,
    pub ub_open: bool,
    pub floating: Floating,
}

impl SValueInterval {
    pub fn is_point(&self) -> bool {
        self.lb == self.ub
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum AtomKind {
    Arith { col: ColRef, op: CmpOp, value: Value },
    Algebraic { x: ColRef, op: CmpOp, y: ColRef },
    Like { col: ColRef, pattern: String },
    InList { col: ColRef, literals: Vec<Value> },
}

/// One conjunct of a seed block, tagged with the step that found it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PredicateAtom {
    pub kind: AtomKind,
    pub provenance: String,
}

impl PredicateAtom {
    pub fn new(kind: AtomKind, provenance: &str) -> Self {
        PredicateAtom { kind, provenance: provenance.to_string() }
    }

    pub fn to_expr(&self, col: &dyn Fn(&ColRef) -> Expr) -> Expr {
        match &self.kind {
            AtomKind::Arith { col: c, op, value } => Expr::cmp(*op, col(c), Expr::lit(value.clone())),
            AtomKind::Algebraic { x, op, y } => Expr::cmp(*op, col(x), col(y)),
            AtomKind::Like { col: c, pattern } => Expr::Like { expr: Box::new(col(c)), pattern: pattern.clone(), negated: false },
            AtomKind::InList { col: c, literals } if literals.len() == 1 => Expr::cmp(CmpOp::Eq, col(c), Expr::lit(literals[0].clone())),
            AtomKind::InList { col: c, literals } => Expr::InList { expr: Box::new(col(c)), list: literals.clone(), negated: false },
        }
    }
}

fn grid(dom: &AttrDomain, v: &Value) -> XResult<i128> {
    Ok(dom.grid_index(v)?)
}

/// Smallest and largest grid points that keep FIT when every column of
/// `cols` is set to the same value. `g0` must be FIT.
fn search(p: &mut Prober, cols: &[ColRef], dom: &AttrDomain, lo: i128, hi: i128, g0: i128) -> XResult<(i128, i128)> {
    let probe = |p: &mut Prober, g: i128| -> XResult<bool> {
        let v = dom.from_grid(g);
        let cells: Vec<(ColRef, Value)> = cols.iter().map(|c| (c.clone(), v.clone())).collect();
        p.fit_with(&cells)
    };
    let lb = if lo == g0 || probe(p, lo)? {
        lo
    } else {
        let (mut bad, mut good) = (lo, g0);
        while good - bad > 1 {
            let mid = bad + (good - bad) / 2;
            if probe(p, mid)? {
                good = mid;
            } else {
                bad = mid;
            }
        }
        good
    };
    let ub = if hi == g0 || probe(p, hi)? {
        hi
    } else {
        let (mut good, mut bad) = (g0, hi);
        while bad - good > 1 {
            let mid = good + (bad - good) / 2;
            if probe(p, mid)? {
                good = mid;
            } else {
                bad = mid;
            }
        }
        good
    };
    Ok((lb, ub))
}

/// Probes the middle of each excluded region; a FIT there means the
/// satisfying set has a hole.
fn has_hole(p: &mut Prober, cols: &[ColRef], dom: &AttrDomain, lo: i128, hi: i128, lb: i128, ub: i128) -> XResult<bool> {
    for (a, b) in [(lo, lb - 1), (ub + 1, hi)] {
        if b - a >= 2 {
            let mid = a + (b - a) / 2;
            let v = dom.from_grid(mid);
            let cells: Vec<(ColRef, Value)> = cols.iter().map(|c| (c.clone(), v.clone())).collect();
            if p.fit_with(&cells)? {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

fn bounds_of(p: &mut Prober, col: &ColRef) -> XResult<(SValueInterval, bool)> {
    let dom = p.domain(col);
    if !is_numeric_domain(&dom) {
        return Err(XreError::Precondition(format!("{col} has no ordered numeric domain")));
    }
    let (lo, hi) = dom.grid_bounds()?;
    let g0 = grid(&dom, &p.value(col))?;
    let cols = [col.clone()];
    let (lb, ub) = search(p, &cols, &dom, lo, hi, g0)?;
    let hole = has_hole(p, &cols, &dom, lo, hi, lb, ub)?;
    let svi = SValueInterval { col: col.clone(), lb: dom.from_grid(lb), ub: dom.from_grid(ub), lb_open: false, ub_open: false, floating: Floating::Static };
    Ok((svi, hole))
}

/// Tightest step-grid interval around the current value of `col` that
/// keeps the result FIT. Probes the domain ends first, then bisects.
pub fn extract_filter_bounds(p: &mut Prober, col: &ColRef) -> XResult<SValueInterval> {
    let (svi, hole) = bounds_of(p, col)?;
    if hole {
        return Err(XreError::NonMonotone(col.clone()));
    }
    Ok(svi)
}

/// Intervals for every ordered numeric column of `tables` in the
/// minimized instance.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SviMap {
    pub intervals: BTreeMap<ColRef, SValueInterval>,
    pub non_monotone: Vec<ColRef>,
}

impl SviMap {
    pub fn get(&self, c: &ColRef) -> Option<&SValueInterval> {
        self.intervals.get(c)
    }
}

pub fn numeric_columns(p: &Prober, tables: &[String]) -> Vec<ColRef> {
    let mut out = Vec::new();
    for t in tables {
        let schema = p.db.schema(t).expect("table");
        for c in &schema.columns {
            if is_numeric_domain(&c.domain) {
                out.push(ColRef::new(t, &c.name));
            }
        }
    }
    out
}

pub fn compute_svi_all(p: &mut Prober, tables: &[String]) -> XResult<SviMap> {
    let mut map = SviMap::default();
    for col in numeric_columns(p, tables) {
        let (svi, hole) = bounds_of(p, &col)?;
        if hole {
            map.non_monotone.push(col.clone());
        }
        map.intervals.insert(col, svi);
    }
    Ok(map)
}

fn family(dom: &AttrDomain) -> u8 {
    if dom.kind == DomainKind::Date {
        1
    } else {
        0
    }
}

fn step_num(dom: &AttrDomain) -> Decimal {
    num(&dom.step()).expect("numeric step")
}

/// Candidate edges `x -> y` (read: x <= y or x < y). An edge is proposed
/// when y's lower bound sits at, or one step above, the value of x, or x's
/// upper bound sits at, or one step below, the value of y.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct IneqEdge {
    pub x: ColRef,
    pub y: ColRef,
}

pub fn enumerate_inequality_candidates(p: &Prober, svi: &SviMap) -> Vec<IneqEdge> {
    let mut edges = Vec::new();
    let cols: Vec<&SValueInterval> = svi.intervals.values().filter(|s| !s.is_point()).collect();
    for sx in &cols {
        for sy in &cols {
            if sx.col == sy.col {
                continue;
            }
            let (dx, dy) = (p.domain(&sx.col), p.domain(&sy.col));
            if family(&dx) != family(&dy) {
                continue;
            }
            let vx = num(&p.value(&sx.col)).expect("numeric");
            let vy = num(&p.value(&sy.col)).expect("numeric");
            let lby = num(&sy.lb).expect("numeric");
            let ubx = num(&sx.ub).expect("numeric");
            let y_bounded_below = sy.lb != dy.min;
            let x_bounded_above = sx.ub != dx.max;
            let by_lb = y_bounded_below && (lby == vx || lby == vx + step_num(&dy));
            let by_ub = x_bounded_above && (ubx == vy || ubx == vy - step_num(&dx));
            if by_lb || by_ub {
                edges.push(IneqEdge { x: sx.col.clone(), y: sy.col.clone() });
            }
        }
    }
    edges.sort();
    edges.dedup();
    edges
}

fn lower_bound(p: &mut Prober, col: &ColRef) -> XResult<Value> {
    let dom = p.domain(col);
    let (lo, hi) = dom.grid_bounds()?;
    let g0 = grid(&dom, &p.value(col))?;
    let (lb, _) = search(p, std::slice::from_ref(col), &dom, lo, hi.min(g0), g0)?;
    Ok(dom.from_grid(lb))
}

fn upper_bound(p: &mut Prober, col: &ColRef) -> XResult<Value> {
    let dom = p.domain(col);
    let (lo, hi) = dom.grid_bounds()?;
    let g0 = grid(&dom, &p.value(col))?;
    let (_, ub) = search(p, std::slice::from_ref(col), &dom, lo.max(g0), hi, g0)?;
    Ok(dom.from_grid(ub))
}

/// Outcome of confirming one candidate edge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Inequality {
    pub atom: PredicateAtom,
    /// A constant upper bound on x hidden behind the floating one.
    pub x_const_ub: Option<Value>,
    /// A constant lower bound on y hidden behind the floating one.
    pub y_const_lb: Option<Value>,
}

/// Moves x to its upper bound and recomputes y's lower bound. If y's bound
/// follows x the edge is real: `<=` when it lands on x, `<` when above.
pub fn confirm_inequality(p: &mut Prober, svi: &SviMap, edge: &IneqEdge) -> XResult<Option<Inequality>> {
    let (sx, sy) = match (svi.get(&edge.x), svi.get(&edge.y)) {
        (Some(a), Some(b)) => (a.clone(), b.clone()),
        _ => return Ok(None),
    };
    let Some(depth) = p.hold(&[(edge.x.clone(), sx.ub.clone())])? else { return Ok(None) };
    let lb_y = lower_bound(p, &edge.y);
    p.db.revert_to(depth)?;
    let lb_y = lb_y?;
    if lb_y == sy.lb {
        return Ok(None);
    }
    let (ux, ly) = (num(&sx.ub).expect("numeric"), num(&lb_y).expect("numeric"));
    let op = if ly == ux {
        CmpOp::Le
    } else if ly > ux {
        CmpOp::Lt
    } else {
        return Ok(None);
    };

    // look past the floating bounds for constants on the same side
    let mut x_const_ub = None;
    if let Some(depth) = p.hold(&[(edge.y.clone(), sy.ub.clone())])? {
        let ub = upper_bound(p, &edge.x);
        p.db.revert_to(depth)?;
        let ub = ub?;
        let limit = num(&sy.ub).expect("numeric") - if op == CmpOp::Lt { step_num(&p.domain(&edge.x)) } else { Decimal::ZERO };
        if num(&ub).expect("numeric") < limit {
            x_const_ub = Some(ub);
        }
    }
    let mut y_const_lb = None;
    if let Some(depth) = p.hold(&[(edge.x.clone(), sx.lb.clone())])? {
        let lb = lower_bound(p, &edge.y);
        p.db.revert_to(depth)?;
        let lb = lb?;
        let limit = num(&sx.lb).expect("numeric") + if op == CmpOp::Lt { step_num(&p.domain(&edge.y)) } else { Decimal::ZERO };
        if num(&lb).expect("numeric") > limit {
            y_const_lb = Some(lb);
        }
    }
    Ok(Some(Inequality { atom: PredicateAtom::new(AtomKind::Algebraic { x: edge.x.clone(), op, y: edge.y.clone() }, "inequality"), x_const_ub, y_const_lb }))
}

/// Columns tied by equality, with the interval they can move through
/// together.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EqualityClass {
    pub members: Vec<ColRef>,
    pub lb: Value,
    pub ub: Value,
    pub dom_min: Value,
    pub dom_max: Value,
}

impl EqualityClass {
    /// `m0 = m1 AND m1 = m2 ...` plus any bounds on the joint interval.
    pub fn atoms(&self) -> Vec<PredicateAtom> {
        let mut out: Vec<PredicateAtom> =
            self.members.windows(2).map(|w| PredicateAtom::new(AtomKind::Algebraic { x: w[0].clone(), op: CmpOp::Eq, y: w[1].clone() }, "equality")).collect();
        let first = &self.members[0];
        if self.lb == self.ub {
            out.push(PredicateAtom::new(AtomKind::Arith { col: first.clone(), op: CmpOp::Eq, value: self.lb.clone() }, "equality-filter"));
            return out;
        }
        if self.lb != self.dom_min {
            out.push(PredicateAtom::new(AtomKind::Arith { col: first.clone(), op: CmpOp::Ge, value: self.lb.clone() }, "equality-filter"));
        }
        if self.ub != self.dom_max {
            out.push(PredicateAtom::new(AtomKind::Arith { col: first.clone(), op: CmpOp::Le, value: self.ub.clone() }, "equality-filter"));
        }
        out
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Equalities {
    pub classes: Vec<EqualityClass>,
    /// Point columns in no class: each pinned by a constant.
    pub constants: Vec<(ColRef, Value)>,
    pub notes: Vec<String>,
}

pub const MAX_TIE_GROUP: usize = 8;

/// Splits `members` into classes: the smallest subsets whose joint move
/// passes `moves_together`, searched by ascending size so that unrelated
/// joins that happen to share a value stay apart. Leftovers are returned
/// separately.
pub(crate) fn find_classes(members: &[ColRef], moves_together: &mut dyn FnMut(&[ColRef]) -> XResult<bool>) -> XResult<(Vec<Vec<ColRef>>, Vec<ColRef>)> {
    let mut left: Vec<ColRef> = members.to_vec();
    let mut classes = Vec::new();
    let mut size = 2;
    while size <= left.len() {
        let mut found = None;
        for subset in subsets(left.len(), size) {
            let cols: Vec<ColRef> = subset.iter().map(|&i| left[i].clone()).collect();
            if moves_together(&cols)? {
                found = Some(cols);
                break;
            }
        }
        match found {
            Some(cols) => {
                left.retain(|c| !cols.contains(c));
                classes.push(cols);
            }
            None => size += 1,
        }
    }
    Ok((classes, left))
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn grid_of_num(dom: &AttrDomain, d: Decimal, round_up: bool) -> i128 {
    let scaled = d / step_num(dom);
    let r = if round_up { scaled.ceil() } else { scaled.floor() };
    r.to_i128().unwrap_or(if round_up { i128::MAX / 4 } else { i128::MIN / 4 })
}

/// A domain all of `cols` can take values from, with the intersection of
/// their bounds. The coarsest step wins.
pub(crate) fn common_domain(p: &Prober, cols: &[ColRef]) -> Option<(AttrDomain, i128, i128)> {
    let doms: Vec<AttrDomain> = cols.iter().map(|c| p.domain(c)).collect();
    let fam = family(&doms[0]);
    if doms.iter().any(|d| family(d) != fam || !is_numeric_domain(d)) {
        return None;
    }
    let base = doms.iter().max_by_key(|d| step_num(d)).expect("non-empty").clone();
    let lo = doms.iter().map(|d| num(&d.min).expect("numeric")).max().expect("non-empty");
    let hi = doms.iter().map(|d| num(&d.max).expect("numeric")).min().expect("non-empty");
    let (glo, ghi) = (grid_of_num(&base, lo, true), grid_of_num(&base, hi, false));
    if glo > ghi {
        return None;
    }
    Some((base, glo, ghi))
}

/// Groups point-interval columns by value and finds which of them move
/// together. A class's joint interval doubles as its filter.
pub fn extract_equalities(p: &mut Prober, svi: &SviMap) -> XResult<Equalities> {
    let mut out = Equalities::default();
    let mut groups: BTreeMap<(u8, String), Vec<ColRef>> = BTreeMap::new();
    for s in svi.intervals.values().filter(|s| s.is_point()) {
        let fam = family(&p.domain(&s.col));
        let key = num(&s.lb).expect("numeric").normalize().to_string();
        groups.entry((fam, key)).or_default().push(s.col.clone());
    }
    for (_, mut members) in groups {
        if members.len() > MAX_TIE_GROUP {
            out.notes.push(format!("{} columns share one value; only the first {MAX_TIE_GROUP} are tested for equality", members.len()));
            for c in members.split_off(MAX_TIE_GROUP) {
                let v = p.value(&c);
                out.constants.push((c, v));
            }
        }
        let (classes, left) = if members.len() >= 2 { find_classes(&members, &mut |cols| moves_jointly(p, cols))? } else { (Vec::new(), members) };
        for cols in classes {
            let (dom, lo, hi) = common_domain(p, &cols).expect("tested classes share a domain");
            let g0 = grid_of_num(&dom, num(&p.value(&cols[0])).expect("numeric"), false);
            let (lb, ub) = search(p, &cols, &dom, lo, hi, g0)?;
            out.classes.push(EqualityClass {
                members: cols,
                lb: dom.from_grid(lb),
                ub: dom.from_grid(ub),
                dom_min: dom.from_grid(lo),
                dom_max: dom.from_grid(hi),
            });
        }
        for c in left {
            let v = p.value(&c);
            out.constants.push((c, v));
        }
    }
    Ok(out)
}

/// Does moving all of `cols` one step together (either way) keep FIT?
fn moves_jointly(p: &mut Prober, cols: &[ColRef]) -> XResult<bool> {
    let Some((dom, lo, hi)) = common_domain(p, cols) else { return Ok(false) };
    let g0 = grid_of_num(&dom, num(&p.value(&cols[0])).expect("numeric"), false);
    for g in [g0 + 1, g0 - 1] {
        if g < lo || g > hi {
            continue;
        }
        let v = dom.from_grid(g);
        let cells: Vec<(ColRef, Value)> = cols.iter().map(|c| (c.clone(), v.clone())).collect();
        if p.fit_with(&cells)? {
            return Ok(true);
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mutator::minimize;
    use crate::oracle::OracleHandle;
    use crate::tpch;

    fn c(t: &str, col: &str) -> ColRef {
        ColRef::new(t, col)
    }

    #[test]
    fn q0_balance_bound_is_exact() {
        let mut db = tpch::q0_instance();
        let mut h = OracleHandle::embedded(tpch::Q0_SQL).unwrap();
        let tables = vec!["customer".to_string(), "orders".to_string()];
        let tr = minimize(&mut db, &mut h, &tables).unwrap();
        let mut p = Prober::new(&mut h, &mut db);
        let before = p.db.digest();
        let svi = extract_filter_bounds(&mut p, &c("customer", "c_acctbal")).unwrap();
        assert_eq!(svi.ub, Value::dec("10000.00").unwrap());
        assert_eq!(svi.lb, p.domain(&c("customer", "c_acctbal")).min);
        let free = extract_filter_bounds(&mut p, &c("orders", "o_totalprice")).unwrap();
        let dom = p.domain(&c("orders", "o_totalprice"));
        assert_eq!((free.lb, free.ub), (dom.min, dom.max));
        assert_eq!(p.db.digest(), before);
        db.revert_to(tr.base_depth).unwrap();
    }

    #[test]
    fn subsets_ascend_lexicographically() {
        assert_eq!(subsets(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
    }

    #[test]
    fn coincident_joins_stay_separate() {
        let cols: Vec<ColRef> = ["a", "b", "c", "d"].iter().map(|n| c("t", n)).collect();
        // ground truth: a = b and c = d
        let truth = |s: &[ColRef]| {
            let names: Vec<&str> = s.iter().map(|x| x.column.as_str()).collect();
            names == ["a", "b"] || names == ["c", "d"] || names == ["a", "b", "c", "d"]
        };
        let (classes, left) = find_classes(&cols, &mut |s| Ok(truth(s))).unwrap();
        assert_eq!(classes.len(), 2);
        assert!(left.is_empty());
        let (classes, _) = find_classes(&cols[..3], &mut |s| Ok(s.len() == 3)).unwrap();
        assert_eq!(classes, vec![cols[..3].to_vec()]);
    }
}
