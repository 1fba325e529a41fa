use rust_decimal::Decimal;

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::{SqlError, MAX_NESTING};
use crate::relcore::{parse_date, Value};

const RESERVED: &[&str] = &[
    "select",
    "from",
    "where",
    "group",
    "by",
    "order",
    "limit",
    "union",
    "all",
    "join",
    "left",
    "right",
    "inner",
    "outer",
    "full",
    "cross",
    "on",
    "and",
    "or",
    "not",
    "in",
    "is",
    "null",
    "like",
    "between",
    "as",
    "asc",
    "desc",
    "having",
    "distinct",
    "exists",
    "case",
    "when",
    "then",
    "else",
    "end",
    "offset",
    "intersect",
    "except",
    "with",
    "using",
    "natural",
    "window",
    "over",
    "fetch",
];

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, SqlError>;

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|t| &t.tok)
    }

    fn span(&self) -> (usize, usize) {
        match self.toks.get(self.pos) {
            Some(t) => (t.start, t.end),
            None => (self.src.len(), self.src.len()),
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let (s, e) = self.span();
        let found = match self.peek() {
            Some(t) => format!("{t:?}"),
            None => "end of input".into(),
        };
        Err(SqlError::syntax(format!("{}, found {found}", msg.into()), s, e))
    }

    fn unsupported<T>(&self, what: &str) -> PResult<T> {
        let (s, e) = self.span();
        Err(SqlError::unsupported(what, s, e))
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(x)) if x == w)
    }

    fn is_word_at(&self, k: usize, w: &str) -> bool {
        matches!(self.peek_at(k), Some(Tok::Word(x)) if x == w)
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.is_word(w) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_word(&mut self, w: &str) -> PResult<()> {
        if self.eat_word(w) {
            Ok(())
        } else {
            self.err(format!("expected {}", w.to_uppercase()))
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected '{s}'"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().cloned() {
            Some(Tok::Word(w)) if !RESERVED.contains(&w.as_str()) => {
                self.pos += 1;
                Ok(w)
            }
            Some(Tok::Quoted(w)) => {
                self.pos += 1;
                Ok(w.to_ascii_lowercase())
            }
            _ => self.err("expected identifier"),
        }
    }

    fn optional_alias(&mut self) -> PResult<Option<String>> {
        if self.eat_word("as") {
            return self.ident().map(Some);
        }
        match self.peek() {
            Some(Tok::Word(w)) if !RESERVED.contains(&w.as_str()) => self.ident().map(Some),
            Some(Tok::Quoted(_)) => self.ident().map(Some),
            _ => Ok(None),
        }
    }

    // query := term (UNION ALL term)*
    fn query(&mut self) -> PResult<QueryIR> {
        let mut branches = Vec::new();
        let mut last_bare_tail;
        loop {
            if self.is_sym("(") && self.is_word_at(1, "select") || self.is_sym("(") && matches!(self.peek_at(1), Some(Tok::Sym("("))) {
                self.pos += 1;
                let inner = self.query()?;
                self.expect_sym(")")?;
                branches.extend(inner.branches);
                last_bare_tail = false;
            } else {
                let b = self.block()?;
                last_bare_tail = !b.order_by.is_empty() || b.limit.is_some();
                branches.push(b);
            }
            if self.is_word("union") {
                if last_bare_tail {
                    return self.err("ORDER BY/LIMIT in a UNION branch requires parentheses");
                }
                self.pos += 1;
                if !self.eat_word("all") {
                    return self.unsupported("UNION without ALL");
                }
                continue;
            }
            if self.is_word("intersect") || self.is_word("except") {
                return self.unsupported("INTERSECT/EXCEPT");
            }
            break;
        }
        if branches.len() > 1 && last_bare_tail {
            return self.unsupported("ORDER BY/LIMIT applied to a UNION ALL");
        }
        if branches.len() > 1 && (self.is_word("order") || self.is_word("limit")) {
            return self.unsupported("ORDER BY/LIMIT applied to a UNION ALL");
        }
        Ok(QueryIR { branches })
    }

    fn block(&mut self) -> PResult<QueryBlock> {
        if self.is_word("with") {
            return self.unsupported("WITH (common table expression)");
        }
        self.expect_word("select")?;
        if self.is_word("distinct") {
            return self.unsupported("SELECT DISTINCT");
        }
        self.eat_word("all");
        let mut b = QueryBlock::default();
        loop {
            if self.eat_sym("*") {
                b.select.push(SelectItem::Star);
            } else {
                let expr = self.expr()?;
                let alias = self.optional_alias()?;
                b.select.push(SelectItem::Expr { expr, alias });
            }
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_word("from")?;
        self.parse_from_list(&mut b)?;
        if self.eat_word("where") {
            b.where_clause = Some(self.expr()?);
        }
        if self.eat_word("group") {
            self.expect_word("by")?;
            loop {
                b.group_by.push(self.expr()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        if self.is_word("having") {
            return self.unsupported("HAVING");
        }
        if self.eat_word("order") {
            self.expect_word("by")?;
            loop {
                let expr = self.expr()?;
                let desc = if self.eat_word("desc") {
                    true
                } else {
                    self.eat_word("asc");
                    false
                };
                if self.is_word("nulls") {
                    return self.unsupported("NULLS FIRST/LAST");
                }
                b.order_by.push(OrderItem { expr, desc });
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        if self.eat_word("limit") {
            match self.peek().cloned() {
                Some(Tok::Number(n)) if !n.contains('.') => {
                    self.pos += 1;
                    b.limit = Some(n.parse().map_err(|_| SqlError::syntax("bad LIMIT", 0, 0))?);
                }
                _ => return self.err("expected non-negative integer after LIMIT"),
            }
        }
        if self.is_word("offset") || self.is_word("fetch") {
            return self.unsupported("OFFSET/FETCH");
        }
        Ok(b)
    }

    fn parse_from_item(&mut self, join: JoinKind) -> PResult<FromItem> {
        if self.eat_sym("(") {
            if !(self.is_word("select") || self.is_sym("(")) {
                return self.unsupported("parenthesized join");
            }
            let q = self.query()?;
            self.expect_sym(")")?;
            let alias = self.optional_alias()?;
            return Ok(FromItem { source: TableSource::Derived(Box::new(q)), alias, join, on: None });
        }
        if self.is_word("lateral") {
            return self.unsupported("LATERAL");
        }
        let name = self.ident()?;
        if self.is_sym("(") {
            return self.unsupported("table function");
        }
        let alias = self.optional_alias()?;
        Ok(FromItem { source: TableSource::Table(name), alias, join, on: None })
    }

    fn parse_from_list(&mut self, b: &mut QueryBlock) -> PResult<()> {
        b.from.push(self.parse_from_item(JoinKind::Comma)?);
        loop {
            if self.eat_sym(",") {
                b.from.push(self.parse_from_item(JoinKind::Comma)?);
                continue;
            }
            let kind = if self.is_word("join") {
                self.pos += 1;
                JoinKind::Inner
            } else if self.is_word("inner") {
                self.pos += 1;
                self.expect_word("join")?;
                JoinKind::Inner
            } else if self.is_word("left") {
                self.pos += 1;
                self.eat_word("outer");
                self.expect_word("join")?;
                JoinKind::Left
            } else if self.is_word("right") || self.is_word("full") {
                return self.unsupported("RIGHT/FULL OUTER JOIN");
            } else if self.is_word("cross") || self.is_word("natural") {
                return self.unsupported("CROSS/NATURAL JOIN");
            } else {
                break;
            };
            let mut item = self.parse_from_item(kind)?;
            if self.is_word("using") {
                return self.unsupported("JOIN ... USING");
            }
            self.expect_word("on")?;
            item.on = Some(self.expr()?);
            b.from.push(item);
        }
        Ok(())
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut parts = vec![self.and_expr()?];
        while self.eat_word("or") {
            parts.push(self.and_expr()?);
        }
        Ok(if parts.len() == 1 { parts.pop().expect("one") } else { Expr::Or(parts) })
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut parts = vec![self.not_expr()?];
        while self.eat_word("and") {
            parts.push(self.not_expr()?);
        }
        Ok(if parts.len() == 1 { parts.pop().expect("one") } else { Expr::And(parts) })
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.eat_word("not") {
            if self.is_word("exists") {
                return self.unsupported("NOT EXISTS");
            }
            return Ok(Expr::Not(Box::new(self.not_expr()?)));
        }
        self.predicate()
    }

    fn predicate(&mut self) -> PResult<Expr> {
        if self.is_word("exists") {
            return self.unsupported("EXISTS");
        }
        let left = self.additive()?;
        let op = match self.peek() {
            Some(Tok::Sym("=")) => Some(CmpOp::Eq),
            Some(Tok::Sym("<=")) => Some(CmpOp::Le),
            Some(Tok::Sym(">=")) => Some(CmpOp::Ge),
            Some(Tok::Sym("<")) => Some(CmpOp::Lt),
            Some(Tok::Sym(">")) => Some(CmpOp::Gt),
            Some(Tok::Sym("<>")) | Some(Tok::Sym("!=")) => return self.unsupported("<> comparison"),
            _ => None,
        };
        if let Some(op) = op {
            self.pos += 1;
            if self.is_word("any") || self.is_word("all") || self.is_word("some") {
                return self.unsupported("quantified comparison");
            }
            let right = self.additive()?;
            return Ok(Expr::cmp(op, left, right));
        }
        if self.eat_word("is") {
            let negated = self.eat_word("not");
            self.expect_word("null")?;
            return Ok(Expr::IsNull { expr: Box::new(left), negated });
        }
        let negated = if self.is_word("not") && (self.is_word_at(1, "in") || self.is_word_at(1, "like") || self.is_word_at(1, "between")) {
            self.pos += 1;
            true
        } else {
            false
        };
        if self.eat_word("in") {
            self.expect_sym("(")?;
            if self.is_word("select") || self.is_sym("(") {
                let q = self.query()?;
                self.expect_sym(")")?;
                return Ok(Expr::InSubquery { expr: Box::new(left), query: Box::new(q), negated });
            }
            let mut list = Vec::new();
            loop {
                let e = self.unary()?;
                match e {
                    Expr::Literal(v) if !v.is_null() => list.push(v),
                    _ => return self.unsupported("non-literal IN list element"),
                }
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym(")")?;
            return Ok(Expr::InList { expr: Box::new(left), list, negated });
        }
        if self.eat_word("like") {
            let (s, e) = self.span();
            match self.peek().cloned() {
                Some(Tok::Str(p)) => {
                    self.pos += 1;
                    if p.contains('_') || p.contains('\\') {
                        return Err(SqlError::unsupported("LIKE wildcard other than %", s, e));
                    }
                    return Ok(Expr::Like { expr: Box::new(left), pattern: p, negated });
                }
                _ => return self.err("expected string pattern after LIKE"),
            }
        }
        if self.is_word("ilike") || self.is_word("similar") {
            return self.unsupported("ILIKE/SIMILAR TO");
        }
        if self.eat_word("between") {
            let low = self.additive()?;
            self.expect_word("and")?;
            let high = self.additive()?;
            return Ok(Expr::Between { expr: Box::new(left), low: Box::new(low), high: Box::new(high), negated });
        }
        if negated {
            return self.err("expected IN, LIKE or BETWEEN after NOT");
        }
        Ok(left)
    }

    fn additive(&mut self) -> PResult<Expr> {
        let mut left = self.multiplicative()?;
        loop {
            let op = if self.is_sym("+") {
                ArithOp::Add
            } else if self.is_sym("-") {
                ArithOp::Sub
            } else if self.is_sym("||") {
                return self.unsupported("string concatenation");
            } else {
                break;
            };
            self.pos += 1;
            let right = self.multiplicative()?;
            left = Expr::Arith { op, left: Box::new(left), right: Box::new(right) };
        }
        Ok(left)
    }

    fn multiplicative(&mut self) -> PResult<Expr> {
        let mut left = self.unary()?;
        loop {
            let op = if self.is_sym("*") {
                ArithOp::Mul
            } else if self.is_sym("/") {
                ArithOp::Div
            } else {
                break;
            };
            self.pos += 1;
            let right = self.unary()?;
            left = Expr::Arith { op, left: Box::new(left), right: Box::new(right) };
        }
        Ok(left)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.is_sym("-") {
            if let Some(Tok::Number(n)) = self.peek_at(1).cloned() {
                self.pos += 2;
                return number_literal(&format!("-{n}")).map(Expr::Literal).ok_or_else(|| SqlError::syntax("bad number", 0, 0));
            }
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr::Arith { op: ArithOp::Sub, left: Box::new(Expr::Literal(Value::Int(0))), right: Box::new(inner) });
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        let (s, e) = self.span();
        match self.peek().cloned() {
            Some(Tok::Number(n)) => {
                self.pos += 1;
                number_literal(&n).map(Expr::Literal).ok_or_else(|| SqlError::syntax(format!("bad number {n}"), s, e))
            }
            Some(Tok::Str(v)) => {
                self.pos += 1;
                Ok(Expr::Literal(Value::Text(v)))
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                if self.is_word("select") {
                    let q = self.query()?;
                    self.expect_sym(")")?;
                    return Ok(Expr::Subquery(Box::new(q)));
                }
                if self.is_sym("(") && self.is_word_at(1, "select") {
                    // either a parenthesized union or a grouped expression
                    // that starts with a subquery operand
                    let save = self.pos;
                    if let Ok(q) = self.query() {
                        if self.eat_sym(")") {
                            return Ok(Expr::Subquery(Box::new(q)));
                        }
                    }
                    self.pos = save;
                }
                let inner = self.expr()?;
                self.expect_sym(")")?;
                Ok(inner)
            }
            Some(Tok::Word(w)) => match w.as_str() {
                "null" => {
                    self.pos += 1;
                    Ok(Expr::Literal(Value::Null))
                }
                "date" if matches!(self.peek_at(1), Some(Tok::Str(_))) => {
                    self.pos += 1;
                    let (s2, e2) = self.span();
                    let Some(Tok::Str(d)) = self.peek().cloned() else { unreachable!() };
                    self.pos += 1;
                    parse_date(&d).map(|v| Expr::Literal(Value::Date(v))).ok_or_else(|| SqlError::syntax(format!("bad date '{d}'"), s2, e2))
                }
                "interval" => self.unsupported("INTERVAL arithmetic"),
                "case" => self.unsupported("CASE expression"),
                "exists" => self.unsupported("EXISTS"),
                "sum" | "count" | "min" | "max" | "avg" if matches!(self.peek_at(1), Some(Tok::Sym("("))) => {
                    let func = match w.as_str() {
                        "sum" => AggFunc::Sum,
                        "count" => AggFunc::Count,
                        "min" => AggFunc::Min,
                        "max" => AggFunc::Max,
                        _ => AggFunc::Avg,
                    };
                    self.pos += 2;
                    if func == AggFunc::Count && self.eat_sym("*") {
                        self.expect_sym(")")?;
                        return Ok(Expr::Agg { func, arg: None, distinct: false });
                    }
                    let distinct = self.eat_word("distinct");
                    let arg = self.expr()?;
                    if arg.contains_aggregate() {
                        return Err(SqlError::unsupported("nested aggregate", s, e));
                    }
                    self.expect_sym(")")?;
                    if self.is_word("over") {
                        return self.unsupported("window function");
                    }
                    Ok(Expr::Agg { func, arg: Some(Box::new(arg)), distinct })
                }
                _ => {
                    if matches!(self.peek_at(1), Some(Tok::Sym("("))) {
                        return self.unsupported(&format!("function {w}()"));
                    }
                    self.column_ref()
                }
            },
            Some(Tok::Quoted(_)) => self.column_ref(),
            _ => self.err("expected expression"),
        }
    }

    fn column_ref(&mut self) -> PResult<Expr> {
        let first = self.ident()?;
        if self.eat_sym(".") {
            if self.is_sym("*") {
                return self.unsupported("qualified star");
            }
            let name = self.ident()?;
            return Ok(Expr::Column { qualifier: Some(first), name });
        }
        Ok(Expr::Column { qualifier: None, name: first })
    }
}

fn number_literal(n: &str) -> Option<Value> {
    if n.contains('.') {
        n.parse::<Decimal>().ok().map(Value::Dec)
    } else {
        n.parse::<i64>().ok().map(Value::Int)
    }
}

/// Parses the supported SQL subset. Constructs outside it yield
/// `SqlError::Unsupported` with their source span.
pub fn parse_sql(text: &str) -> Result<QueryIR, SqlError> {
    let toks = tokenize(text)?;
    let mut p = Parser { src: text, toks, pos: 0 };
    let q = p.query()?;
    p.eat_sym(";");
    if p.pos < p.toks.len() {
        return p.err("unexpected trailing input");
    }
    if q.depth() > MAX_NESTING {
        return Err(SqlError::unsupported(format!("nesting deeper than {MAX_NESTING} levels"), 0, text.len()));
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q0_shape() {
        let q = parse_sql("SELECT c_name AS name, c_phone as phone FROM customer, orders WHERE c_custkey = o_custkey AND c_acctbal <= 10000").unwrap();
        let b = &q.branches[0];
        assert_eq!(b.from.len(), 2);
        assert_eq!(b.select.len(), 2);
        let conj = b.where_clause.as_ref().unwrap().conjuncts();
        assert_eq!(conj.len(), 2);
        assert!(matches!(&b.select[1], SelectItem::Expr { alias: Some(a), .. } if a == "phone"));
    }

    #[test]
    fn trivial_block() {
        let q = parse_sql("SELECT a FROM t").unwrap();
        assert_eq!(q.branches.len(), 1);
        assert!(q.branches[0].where_clause.is_none());
    }

    #[test]
    fn union_inside_derived_table() {
        let q = parse_sql(
            "SELECT name, phone FROM ((SELECT c_name AS name, c_phone AS phone FROM customer c) UNION ALL \
             (SELECT s_name AS name, s_phone AS phone FROM supplier s)) AS cs GROUP BY name, phone",
        )
        .unwrap();
        let TableSource::Derived(d) = &q.branches[0].from[0].source else { panic!() };
        assert_eq!(d.branches.len(), 2);
        assert_eq!(q.branches[0].group_by.len(), 2);
    }

    #[test]
    fn unsupported_has_distinct_code() {
        let e = parse_sql("SELECT a FROM t UNION SELECT a FROM u").unwrap_err();
        assert_eq!(e.code(), "E_UNSUPPORTED");
        let e = parse_sql("SELECT a FROM t WHERE a <> 1").unwrap_err();
        assert_eq!(e.code(), "E_UNSUPPORTED");
        assert_eq!(e.span(), (24, 26));
        let e = parse_sql("SELECT a FROM WHERE").unwrap_err();
        assert_eq!(e.code(), "E_SYNTAX");
        assert!(parse_sql("SELECT a FROM t WHERE x LIKE 'a_b'").is_err());
    }

    #[test]
    fn nesting_limit() {
        let ok = "SELECT a FROM t WHERE a IN (SELECT b FROM u WHERE b IN (SELECT c FROM v))";
        assert!(parse_sql(ok).is_ok());
        let deep = "SELECT a FROM t WHERE a IN (SELECT b FROM u WHERE b IN (SELECT c FROM v WHERE c IN (SELECT d FROM w)))";
        assert_eq!(parse_sql(deep).unwrap_err().code(), "E_UNSUPPORTED");
    }

    #[test]
    fn union_order_rules() {
        assert!(parse_sql("SELECT a FROM t ORDER BY a UNION ALL SELECT a FROM u").is_err());
        assert!(parse_sql("(SELECT a FROM t ORDER BY a LIMIT 2) UNION ALL (SELECT a FROM u)").is_ok());
        assert_eq!(parse_sql("SELECT a FROM t UNION ALL SELECT a FROM u ORDER BY a").unwrap_err().code(), "E_UNSUPPORTED");
    }

    #[test]
    fn literals() {
        let q = parse_sql("SELECT a FROM t WHERE d BETWEEN DATE '1995-01-01' AND '1995-12-31' AND x >= -3 AND y IN ('AIR', 'TRUCK')").unwrap();
        let w = q.branches[0].where_clause.as_ref().unwrap();
        assert_eq!(w.conjuncts().len(), 3);
    }
}
