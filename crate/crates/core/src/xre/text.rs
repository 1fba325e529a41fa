//! Text columns: categorical filters recovered as IN lists one literal per
//! minimization round, free-text equality joins, and `%`-infix LIKE
//! patterns recovered by shrinking the minimized value.

use serde::Serialize;

use super::pred::{find_classes, AtomKind, PredicateAtom};
use super::{ColRef, Prober, XResult, XreError};
use crate::mutator::minimize;
use crate::oracle::OracleHandle;
use crate::relcore::{DatabaseState, DomainKind, FitClass, Value};

/// A string no generated or bundled value contains.
const DISJOINT: &str = "#";

pub const DEFAULT_MAX_LITERALS: usize = 16;

pub fn text_columns(p: &Prober, tables: &[String], kind: fn(&DomainKind) -> bool) -> Vec<ColRef> {
    let mut out = Vec::new();
    for t in tables {
        for c in &p.db.schema(t).expect("table").columns {
            if kind(&c.domain.kind) {
                out.push(ColRef::new(t, &c.name));
            }
        }
    }
    out
}

pub fn is_categorical(k: &DomainKind) -> bool {
    matches!(k, DomainKind::Categorical)
}

pub fn is_free_text(k: &DomainKind) -> bool {
    matches!(k, DomainKind::FreeText)
}

/// A categorical column is filtered when some other enum value loses FIT.
pub fn categorical_filtered(p: &mut Prober, col: &ColRef) -> XResult<bool> {
    let dom = p.domain(col);
    let cur = p.value(col);
    for v in dom.enum_values.clone().unwrap_or_default() {
        let v = Value::Text(v);
        if v == cur {
            continue;
        }
        if !p.fit_with(&[(col.clone(), v)])? {
            return Ok(true);
        }
    }
    Ok(false)
}

pub fn free_text_filtered(p: &mut Prober, col: &ColRef) -> XResult<bool> {
    Ok(!p.fit_with(&[(col.clone(), Value::text(DISJOINT))])?)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct TextFindings {
    pub unfiltered: Vec<ColRef>,
    /// Categorical columns handed to the IN-list loop, with their value in
    /// the minimized instance.
    pub in_list: Vec<(ColRef, Value)>,
    /// Free-text columns joined by equality.
    pub classes: Vec<Vec<ColRef>>,
    pub atoms: Vec<PredicateAtom>,
}

/// Classifies every text column of the minimized instance.
pub fn probe_text_columns(p: &mut Prober, tables: &[String]) -> XResult<TextFindings> {
    let mut out = TextFindings::default();
    for col in text_columns(p, tables, is_categorical) {
        if categorical_filtered(p, &col)? {
            let v = p.value(&col);
            out.in_list.push((col, v));
        } else {
            out.unfiltered.push(col);
        }
    }
    let mut filtered = Vec::new();
    for col in text_columns(p, tables, is_free_text) {
        if free_text_filtered(p, &col)? {
            filtered.push(col);
        } else {
            out.unfiltered.push(col);
        }
    }
    // equal values first: they may be joins
    let mut by_value: std::collections::BTreeMap<String, Vec<ColRef>> = Default::default();
    for c in &filtered {
        by_value.entry(p.value(c).to_field()).or_default().push(c.clone());
    }
    let mut singles = Vec::new();
    for (_, members) in by_value {
        if members.len() < 2 {
            singles.extend(members);
            continue;
        }
        let (classes, left) = find_classes(&members, &mut |cols| {
            let cells: Vec<(ColRef, Value)> = cols.iter().map(|c| (c.clone(), Value::text(format!("{DISJOINT}eq")))).collect();
            p.fit_with(&cells)
        })?;
        for cls in &classes {
            for w in cls.windows(2) {
                out.atoms.push(PredicateAtom::new(AtomKind::Algebraic { x: w[0].clone(), op: crate::minisql::CmpOp::Eq, y: w[1].clone() }, "text-equality"));
            }
        }
        out.classes.extend(classes);
        singles.extend(left);
    }
    for col in singles {
        out.atoms.push(extract_like(p, &col)?);
    }
    Ok(out)
}

/// Shrinks the minimized value from both ends while FIT, then tests which
/// ends accept extra characters. No open end means plain equality.
pub fn extract_like(p: &mut Prober, col: &ColRef) -> XResult<PredicateAtom> {
    let orig: Vec<char> = p.value(col).to_field().chars().collect();
    let (mut start, mut end) = (0, orig.len());
    let text = |a: usize, b: usize| -> String { orig[a..b].iter().collect() };
    while end - start > 1 && p.fit_with(&[(col.clone(), Value::text(text(start + 1, end)))])? {
        start += 1;
    }
    while end - start > 1 && p.fit_with(&[(col.clone(), Value::text(text(start, end - 1)))])? {
        end -= 1;
    }
    let core = text(start, end);
    let pad = if core.starts_with('x') || core.ends_with('x') { 'q' } else { 'x' };
    let open_front = start > 0 || p.fit_with(&[(col.clone(), Value::text(format!("{pad}{core}")))])?;
    let open_back = end < orig.len() || p.fit_with(&[(col.clone(), Value::text(format!("{core}{pad}")))])?;
    let kind = if !open_front && !open_back {
        AtomKind::Arith { col: col.clone(), op: crate::minisql::CmpOp::Eq, value: Value::text(core) }
    } else {
        let pattern = format!("{}{}{}", if open_front { "%" } else { "" }, core, if open_back { "%" } else { "" });
        AtomKind::Like { col: col.clone(), pattern }
    };
    Ok(PredicateAtom::new(kind, "text"))
}

#[derive(Clone, Debug, Serialize)]
pub struct InListOutcome {
    pub atom: PredicateAtom,
    /// Minimizations that each contributed one literal, the first being the
    /// minimization that produced the instance the column was probed on.
    pub rounds: usize,
    /// Journal sequence number of the probe that ended the loop.
    pub terminating_seq: usize,
    pub probes: usize,
}

/// Repeatedly suppresses the rows carrying every literal found so far and
/// re-minimizes, one new literal per round, until the suppressed instance
/// is no longer FIT. `db` must be at the branch's unminimized state
/// (`iso_depth`) on entry and is returned there.
pub fn extract_in_list(
    h: &mut OracleHandle,
    db: &mut DatabaseState,
    iso_depth: usize,
    tables: &[String],
    col: &ColRef,
    first: Value,
    max_literals: usize,
) -> XResult<InListOutcome> {
    let phase = h.phase().to_string();
    let start = h.invocation_count();
    let mut literals = vec![first];
    let ci = db.schema(&col.table)?.column_index(&col.column).expect("column");
    let outcome = loop {
        db.revert_to(iso_depth)?;
        let keep: Vec<usize> = db.rows(&col.table)?.iter().enumerate().filter(|(_, r)| !literals.contains(&r[ci])).map(|(i, _)| i).collect();
        db.retain_rows(&col.table, &keep)?;
        h.set_phase(&format!("{phase}.in_list.{col}.probe{}", literals.len()));
        if h.fit(db)? != FitClass::Fit {
            break h.invocation_count() - 1;
        }
        if literals.len() >= max_literals {
            db.revert_to(iso_depth)?;
            h.set_phase(&phase);
            return Err(XreError::Budget(max_literals, col.clone()));
        }
        h.set_phase(&format!("{phase}.in_list.{col}.round{}", literals.len() + 1));
        minimize(db, h, tables)?;
        literals.push(db.rows(&col.table)?[0][ci].clone());
    };
    db.revert_to(iso_depth)?;
    h.set_phase(&phase);
    let rounds = literals.len();
    literals.sort_by(|a, b| a.sort_cmp(b));
    Ok(InListOutcome {
        atom: PredicateAtom::new(AtomKind::InList { col: col.clone(), literals }, "in-list"),
        rounds,
        terminating_seq: outcome,
        probes: h.invocation_count() - start,
    })
}
