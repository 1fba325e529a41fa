use super::SqlError;

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    /// Identifier or keyword, lowercased unless it was double-quoted.
    Word(String),
    Quoted(String),
    Number(String),
    Str(String),
    Sym(&'static str),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub start: usize,
    pub end: usize,
}

const SYMBOLS: [&str; 16] = ["<=", ">=", "<>", "!=", "||", "(", ")", ",", ".", ";", "*", "+", "-", "/", "=", "<"];

pub fn tokenize(src: &str) -> Result<Vec<Token>, SqlError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'-' && bytes.get(i + 1) == Some(&b'-') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'$') {
                i += 1;
            }
            out.push(Token { tok: Tok::Word(src[start..i].to_ascii_lowercase()), start, end: i });
        } else if c.is_ascii_digit() {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            out.push(Token { tok: Tok::Number(src[start..i].to_string()), start, end: i });
        } else if c == b'\'' {
            let mut s = String::new();
            i += 1;
            loop {
                match bytes.get(i) {
                    None => return Err(SqlError::syntax("unterminated string literal", start, src.len())),
                    Some(b'\'') if bytes.get(i + 1) == Some(&b'\'') => {
                        s.push('\'');
                        i += 2;
                    }
                    Some(b'\'') => {
                        i += 1;
                        break;
                    }
                    Some(_) => {
                        let ch = src[i..].chars().next().expect("char boundary");
                        s.push(ch);
                        i += ch.len_utf8();
                    }
                }
            }
            out.push(Token { tok: Tok::Str(s), start, end: i });
        } else if c == b'"' {
            let close = src[i + 1..].find('"').ok_or_else(|| SqlError::syntax("unterminated quoted identifier", start, src.len()))?;
            let name = src[i + 1..i + 1 + close].to_string();
            i += close + 2;
            out.push(Token { tok: Tok::Quoted(name), start, end: i });
        } else if let Some(sym) = SYMBOLS.iter().find(|s| src[i..].starts_with(**s)) {
            i += sym.len();
            out.push(Token { tok: Tok::Sym(sym), start, end: i });
        } else if c == b'>' {
            i += 1;
            out.push(Token { tok: Tok::Sym(">"), start, end: i });
        } else {
            let ch = src[i..].chars().next().expect("char boundary");
            return Err(SqlError::syntax(format!("unexpected character '{ch}'"), start, start + ch.len_utf8()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_tokens() {
        let toks = tokenize("SELECT a, 'it''s' FROM t WHERE x <= 10.5 -- c\n").unwrap();
        let kinds: Vec<_> = toks.into_iter().map(|t| t.tok).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Word("select".into()),
                Tok::Word("a".into()),
                Tok::Sym(","),
                Tok::Str("it's".into()),
                Tok::Word("from".into()),
                Tok::Word("t".into()),
                Tok::Word("where".into()),
                Tok::Word("x".into()),
                Tok::Sym("<="),
                Tok::Number("10.5".into()),
            ]
        );
    }

    #[test]
    fn unterminated_string() {
        assert!(tokenize("'abc").is_err());
    }
}
