use super::ast::*;
use crate::relcore::{format_date, Value};

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

pub fn render_literal(v: &Value) -> String {
    match v {
        Value::Null => "NULL".into(),
        Value::Int(i) => i.to_string(),
        // keep a decimal point so the literal parses back as a decimal
        Value::Dec(d) if d.scale() == 0 => format!("{d}.0"),
        Value::Dec(d) => d.to_string(),
        Value::Date(d) => format!("DATE {}", quote(&format_date(*d))),
        Value::Text(s) => quote(s),
    }
}

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Or(_) => 1,
        Expr::And(_) => 2,
        Expr::Not(_) => 3,
        Expr::Cmp { .. } | Expr::Like { .. } | Expr::Between { .. } | Expr::InList { .. } | Expr::InSubquery { .. } | Expr::IsNull { .. } => 4,
        Expr::Arith { op: ArithOp::Add | ArithOp::Sub, .. } => 5,
        Expr::Arith { .. } => 6,
        _ => 7,
    }
}

fn wrap(e: &Expr, min: u8) -> String {
    let s = render_expr(e);
    if prec(e) < min {
        format!("({s})")
    } else {
        s
    }
}

pub fn render_expr(e: &Expr) -> String {
    match e {
        Expr::Column { qualifier: Some(q), name } => format!("{q}.{name}"),
        Expr::Column { qualifier: None, name } => name.clone(),
        Expr::Literal(v) => render_literal(v),
        Expr::Arith { op, left, right } => {
            let p = prec(e);
            // left-associative: the right operand needs parentheses at equal precedence
            format!("{} {} {}", wrap(left, p), op.symbol(), wrap(right, p + 1))
        }
        Expr::Agg { func, arg: None, .. } => format!("{}(*)", func.name()),
        Expr::Agg { func, arg: Some(a), distinct } => {
            format!("{}({}{})", func.name(), if *distinct { "DISTINCT " } else { "" }, render_expr(a))
        }
        Expr::Cmp { op, left, right } => format!("{} {} {}", wrap(left, 5), op.symbol(), wrap(right, 5)),
        Expr::And(v) => v.iter().map(|x| wrap(x, 3)).collect::<Vec<_>>().join(" AND "),
        Expr::Or(v) => v.iter().map(|x| wrap(x, 2)).collect::<Vec<_>>().join(" OR "),
        Expr::Not(x) => format!("NOT {}", wrap(x, 4)),
        Expr::Like { expr, pattern, negated } => {
            format!("{}{} LIKE {}", wrap(expr, 5), if *negated { " NOT" } else { "" }, quote(pattern))
        }
        Expr::Between { expr, low, high, negated } => {
            format!("{}{} BETWEEN {} AND {}", wrap(expr, 5), if *negated { " NOT" } else { "" }, wrap(low, 5), wrap(high, 5))
        }
        Expr::InList { expr, list, negated } => {
            format!("{}{} IN ({})", wrap(expr, 5), if *negated { " NOT" } else { "" }, list.iter().map(render_literal).collect::<Vec<_>>().join(", "))
        }
        Expr::InSubquery { expr, query, negated } => {
            format!("{}{} IN ({})", wrap(expr, 5), if *negated { " NOT" } else { "" }, render_sql(query))
        }
        Expr::IsNull { expr, negated } => format!("{} IS {}NULL", wrap(expr, 5), if *negated { "NOT " } else { "" }),
        Expr::Subquery(q) => format!("({})", render_sql(q)),
    }
}

fn render_from_item(f: &FromItem) -> String {
    let src = match &f.source {
        TableSource::Table(t) => t.clone(),
        TableSource::Derived(q) => format!("({})", render_sql(q)),
    };
    match &f.alias {
        Some(a) => format!("{src} AS {a}"),
        None => src,
    }
}

pub fn render_block(b: &QueryBlock) -> String {
    let mut s = String::from("SELECT ");
    let items: Vec<String> = b
        .select
        .iter()
        .map(|i| match i {
            SelectItem::Star => "*".to_string(),
            SelectItem::Expr { expr, alias: Some(a) } => format!("{} AS {a}", render_expr(expr)),
            SelectItem::Expr { expr, alias: None } => render_expr(expr),
        })
        .collect();
    s.push_str(&items.join(", "));
    s.push_str(" FROM ");
    for (i, f) in b.from.iter().enumerate() {
        if i > 0 {
            match f.join {
                JoinKind::Comma => s.push_str(", "),
                JoinKind::Inner => s.push_str(" JOIN "),
                JoinKind::Left => s.push_str(" LEFT OUTER JOIN "),
            }
        }
        s.push_str(&render_from_item(f));
        if let Some(on) = &f.on {
            s.push_str(" ON ");
            s.push_str(&render_expr(on));
        }
    }
    if let Some(w) = &b.where_clause {
        s.push_str(" WHERE ");
        s.push_str(&render_expr(w));
    }
    if !b.group_by.is_empty() {
        s.push_str(" GROUP BY ");
        s.push_str(&b.group_by.iter().map(render_expr).collect::<Vec<_>>().join(", "));
    }
    if !b.order_by.is_empty() {
        s.push_str(" ORDER BY ");
        let items: Vec<String> = b.order_by.iter().map(|o| format!("{}{}", render_expr(&o.expr), if o.desc { " DESC" } else { "" })).collect();
        s.push_str(&items.join(", "));
    }
    if let Some(l) = b.limit {
        s.push_str(&format!(" LIMIT {l}"));
    }
    s
}

/// Deterministic single-line SQL text that parses back to `q`.
pub fn render_sql(q: &QueryIR) -> String {
    if q.branches.len() == 1 {
        return render_block(&q.branches[0]);
    }
    q.branches.iter().map(|b| format!("({})", render_block(b))).collect::<Vec<_>>().join(" UNION ALL ")
}

/// Multi-line layout for prompts and reports: top-level clauses start a
/// new line.
pub fn render_pretty(q: &QueryIR) -> String {
    const BREAKS: [&str; 6] = [" FROM ", " WHERE ", " GROUP BY ", " ORDER BY ", " LIMIT ", " UNION ALL "];
    let text = render_sql(q);
    let mut out = String::new();
    let mut depth = 0usize;
    let mut in_str = false;
    let mut i = 0;
    while i < text.len() {
        let rest = &text[i..];
        if !in_str && depth == 0 {
            if let Some(kw) = BREAKS.iter().find(|k| rest.starts_with(**k)) {
                out.push('\n');
                out.push_str(&kw[1..]);
                i += kw.len();
                continue;
            }
        }
        let ch = rest.chars().next().expect("char boundary");
        match ch {
            '\'' => in_str = !in_str,
            '(' if !in_str => depth += 1,
            ')' if !in_str => depth = depth.saturating_sub(1),
            _ => {}
        }
        out.push(ch);
        i += ch.len_utf8();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minisql::{canonicalize, parse_sql, testgen};
    use proptest::prelude::*;

    #[test]
    fn empty_where_has_no_keyword() {
        let q = parse_sql("SELECT a FROM t").unwrap();
        assert_eq!(render_sql(&q), "SELECT a FROM t");
    }

    #[test]
    fn seed_round_trips_to_its_canonical_form() {
        let seed = parse_sql(crate::tpch::UNION_SEED_SQL).unwrap();
        let back = parse_sql(&render_sql(&seed)).unwrap();
        assert_eq!(back, seed);
        assert_eq!(canonicalize(&back), canonicalize(&seed));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn parse_render_fixpoint(q in testgen::query()) {
            let text = render_sql(&q);
            let parsed = parse_sql(&text).map_err(|e| TestCaseError::fail(format!("{e}: {text}")))?;
            prop_assert_eq!(render_sql(&parsed), text.clone());
            prop_assert_eq!(parse_sql(&render_sql(&parsed)).unwrap(), parsed.clone());
            prop_assert_eq!(canonicalize(&parsed), canonicalize(&q));
        }
    }
}
