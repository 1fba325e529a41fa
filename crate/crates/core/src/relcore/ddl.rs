//! CREATE TABLE subset: column types, NOT NULL, PRIMARY KEY (inline or
//! table-level), FOREIGN KEY ... REFERENCES.

use super::domain::AttrDomain;
use super::schema::{ColumnSchema, ForeignKey, SchemaCatalog, TableSchema};
use super::RelError;
use crate::minisql::lexer::{tokenize, Tok, Token};

struct Cursor {
    toks: Vec<Token>,
    pos: usize,
}

impl Cursor {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    fn word(&mut self, w: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Word(x)) if x == w) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(x)) if *x == s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), RelError> {
        if self.sym(s) {
            Ok(())
        } else {
            Err(RelError::Schema(format!("expected '{s}', found {:?}", self.peek())))
        }
    }

    fn ident(&mut self) -> Result<String, RelError> {
        match self.next() {
            Some(Tok::Word(w)) | Some(Tok::Quoted(w)) => Ok(w.to_ascii_lowercase()),
            other => Err(RelError::Schema(format!("expected identifier, found {other:?}"))),
        }
    }

    fn ident_list(&mut self) -> Result<Vec<String>, RelError> {
        self.expect_sym("(")?;
        let mut v = vec![self.ident()?];
        while self.sym(",") {
            v.push(self.ident()?);
        }
        self.expect_sym(")")?;
        Ok(v)
    }
}

fn number(c: &mut Cursor) -> Result<u32, RelError> {
    match c.next() {
        Some(Tok::Number(n)) => n.parse().map_err(|_| RelError::Schema(format!("bad number {n}"))),
        other => Err(RelError::Schema(format!("expected number, found {other:?}"))),
    }
}

fn column_type(c: &mut Cursor) -> Result<(String, AttrDomain), RelError> {
    let base = c.ident()?;
    match base.as_str() {
        "int" | "integer" | "bigint" | "smallint" => Ok((base.to_uppercase(), AttrDomain::default_integer())),
        "decimal" | "numeric" => {
            let (mut p, mut s) = (15, 2);
            if c.sym("(") {
                p = number(c)?;
                s = if c.sym(",") { number(c)? } else { 0 };
                c.expect_sym(")")?;
            }
            Ok((format!("DECIMAL({p},{s})"), AttrDomain::default_decimal(s)))
        }
        "date" => Ok(("DATE".into(), AttrDomain::default_date())),
        "text" => Ok(("TEXT".into(), AttrDomain::free_text())),
        "varchar" | "char" | "character" => {
            if base == "character" {
                c.word("varying");
            }
            let mut ty = base.to_uppercase();
            if c.sym("(") {
                let n = number(c)?;
                c.expect_sym(")")?;
                ty = format!("{ty}({n})");
            }
            Ok((ty, AttrDomain::free_text()))
        }
        other => Err(RelError::Schema(format!("unsupported column type {other}"))),
    }
}

pub fn parse_ddl(src: &str) -> Result<SchemaCatalog, RelError> {
    let toks = tokenize(src).map_err(|e| RelError::Schema(e.to_string()))?;
    let mut c = Cursor { toks, pos: 0 };
    let mut tables = Vec::new();
    while c.peek().is_some() {
        if c.sym(";") {
            continue;
        }
        if !(c.word("create") && c.word("table")) {
            return Err(RelError::Schema(format!("expected CREATE TABLE, found {:?}", c.peek())));
        }
        let name = c.ident()?;
        c.expect_sym("(")?;
        let mut t = TableSchema { name, columns: vec![], primary_key: vec![], foreign_keys: vec![] };
        loop {
            if c.word("primary") {
                if !c.word("key") {
                    return Err(RelError::Schema("expected KEY".into()));
                }
                t.primary_key = c.ident_list()?;
            } else if c.word("foreign") {
                if !c.word("key") {
                    return Err(RelError::Schema("expected KEY".into()));
                }
                let columns = c.ident_list()?;
                if !c.word("references") {
                    return Err(RelError::Schema("expected REFERENCES".into()));
                }
                let ref_table = c.ident()?;
                let ref_columns = c.ident_list()?;
                t.foreign_keys.push(ForeignKey { columns, ref_table, ref_columns });
            } else {
                let cname = c.ident()?;
                let (sql_type, domain) = column_type(&mut c)?;
                let mut nullable = true;
                loop {
                    if c.word("not") {
                        if !c.word("null") {
                            return Err(RelError::Schema("expected NULL".into()));
                        }
                        nullable = false;
                    } else if c.word("null") {
                    } else if c.word("primary") {
                        c.word("key");
                        t.primary_key = vec![cname.clone()];
                        nullable = false;
                    } else if c.word("references") {
                        let ref_table = c.ident()?;
                        let ref_columns = c.ident_list()?;
                        t.foreign_keys.push(ForeignKey { columns: vec![cname.clone()], ref_table, ref_columns });
                    } else {
                        break;
                    }
                }
                t.columns.push(ColumnSchema { name: cname, sql_type, domain, nullable });
            }
            if c.sym(",") {
                continue;
            }
            c.expect_sym(")")?;
            break;
        }
        tables.push(t);
    }
    SchemaCatalog::new(tables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relcore::domain::DomainKind;

    #[test]
    fn parses_tables_and_keys() {
        let cat = parse_ddl(
            "CREATE TABLE nation (n_nationkey INTEGER PRIMARY KEY, n_name VARCHAR(25) NOT NULL);
             CREATE TABLE customer (
               c_custkey INTEGER NOT NULL,
               c_acctbal DECIMAL(15,2),
               c_nationkey INTEGER,
               PRIMARY KEY (c_custkey),
               FOREIGN KEY (c_nationkey) REFERENCES nation (n_nationkey));",
        )
        .unwrap();
        assert_eq!(cat.tables.len(), 2);
        let c = cat.table("CUSTOMER").unwrap();
        assert_eq!(c.primary_key, vec!["c_custkey"]);
        assert_eq!(c.column("c_acctbal").unwrap().domain.kind, DomainKind::Decimal { scale: 2 });
        assert_eq!(c.foreign_keys[0].ref_table, "nation");
        let back = parse_ddl(&cat.to_ddl()).unwrap();
        assert_eq!(back, cat);
    }

    #[test]
    fn dangling_foreign_key_rejected() {
        let err = parse_ddl("CREATE TABLE a (x INT REFERENCES b (y));").unwrap_err();
        assert!(err.to_string().contains("unknown table"));
    }

    #[test]
    fn duplicate_column_rejected() {
        assert!(parse_ddl("CREATE TABLE a (x INT, x INT);").is_err());
    }
}
