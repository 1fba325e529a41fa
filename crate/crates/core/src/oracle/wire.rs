//! Result CSV as exchanged with an external executable. Text values are
//! always quoted, NULL is an empty unquoted field, so the reader can
//! recover types without a schema.

use crate::relcore::{ResultSet, Value};

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

pub fn write_result_csv(rs: &ResultSet) -> String {
    let mut out = rs.headers.iter().map(|h| quote(h)).collect::<Vec<_>>().join(",");
    out.push('\n');
    for row in &rs.rows {
        let fields: Vec<String> = row
            .iter()
            .map(|v| match v {
                Value::Null => String::new(),
                Value::Text(s) => quote(s),
                // keep the decimal point so the reader does not infer an integer
                Value::Dec(d) if d.scale() == 0 => format!("{d}.0"),
                other => other.to_field(),
            })
            .collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

struct Field {
    text: String,
    quoted: bool,
}

fn split_records(src: &str) -> Result<Vec<Vec<Field>>, String> {
    let mut records = Vec::new();
    let mut record = Vec::new();
    let mut cur = Field { text: String::new(), quoted: false };
    let mut chars = src.chars().peekable();
    let mut in_quotes = false;
    let mut at_start = true;
    while let Some(c) = chars.next() {
        if in_quotes {
            if c == '"' {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    cur.text.push('"');
                } else {
                    in_quotes = false;
                }
            } else {
                cur.text.push(c);
            }
            continue;
        }
        match c {
            '"' if at_start => {
                in_quotes = true;
                cur.quoted = true;
                at_start = false;
            }
            '"' => return Err("stray quote inside unquoted field".into()),
            ',' => {
                record.push(std::mem::replace(&mut cur, Field { text: String::new(), quoted: false }));
                at_start = true;
            }
            '\r' => {}
            '\n' => {
                record.push(std::mem::replace(&mut cur, Field { text: String::new(), quoted: false }));
                records.push(std::mem::take(&mut record));
                at_start = true;
            }
            _ => {
                if cur.quoted {
                    return Err("data after closing quote".into());
                }
                cur.text.push(c);
                at_start = false;
            }
        }
    }
    if in_quotes {
        return Err("unterminated quoted field".into());
    }
    if !cur.text.is_empty() || cur.quoted || !record.is_empty() {
        record.push(cur);
        records.push(record);
    }
    Ok(records)
}

fn infer(f: Field) -> Value {
    if f.quoted {
        return Value::Text(f.text);
    }
    let s = f.text.trim();
    if s.is_empty() {
        return Value::Null;
    }
    if let Ok(i) = s.parse::<i64>() {
        return Value::Int(i);
    }
    if let Some(d) = Value::dec(s) {
        return d;
    }
    if let Some(d) = Value::date(s) {
        return d;
    }
    Value::Text(s.to_string())
}

pub fn read_result_csv(src: &str) -> Result<ResultSet, String> {
    let mut records = split_records(src)?.into_iter();
    let headers: Vec<String> = match records.next() {
        Some(h) => h.into_iter().map(|f| f.text).collect(),
        None => return Err("missing header row".into()),
    };
    let mut rows = Vec::new();
    for (n, rec) in records.enumerate() {
        if rec.len() != headers.len() {
            return Err(format!("row {n} has {} fields, header has {}", rec.len(), headers.len()));
        }
        rows.push(rec.into_iter().map(infer).collect());
    }
    Ok(ResultSet::new(headers, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn value() -> impl Strategy<Value = Value> {
        prop_oneof![
            Just(Value::Null),
            any::<i64>().prop_map(Value::Int),
            (-100000i64..100000).prop_map(|c| Value::dec(&format!("{}.{:02}", c / 100, (c % 100).abs())).unwrap()),
            (0i32..20000).prop_map(Value::Date),
            "[ -~\n]{0,8}".prop_map(Value::Text),
        ]
    }

    #[test]
    fn empty_text_and_null_differ() {
        let rs = ResultSet::new(vec!["a".into(), "b".into()], vec![vec![Value::text(""), Value::Null]]);
        let back = read_result_csv(&write_result_csv(&rs)).unwrap();
        assert_eq!(back.rows, rs.rows);
    }

    #[test]
    fn numeric_looking_text_stays_text() {
        let rs = ResultSet::new(vec!["p".into()], vec![vec![Value::text("1995-03-16")], vec![Value::text("42")]]);
        let back = read_result_csv(&write_result_csv(&rs)).unwrap();
        assert_eq!(back.rows, rs.rows);
    }

    proptest! {
        #[test]
        fn round_trip(rows in prop::collection::vec(prop::collection::vec(value(), 3), 0..6)) {
            let rs = ResultSet::new(vec!["x".into(), "y, z".into(), "w\"".into()], rows);
            let back = read_result_csv(&write_result_csv(&rs)).unwrap();
            prop_assert_eq!(back.headers, rs.headers.clone());
            prop_assert!(back.rows.iter().zip(&rs.rows).all(|(a, b)| a.iter().zip(b).all(|(x, y)| x.key() == y.key() && x.type_name() == y.type_name())));
            prop_assert_eq!(back.rows.len(), rs.rows.len());
        }
    }
}
