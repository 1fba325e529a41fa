use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::value::{Row, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FitClass {
    Fit,
    Unfit,
    Empty,
}

impl FitClass {
    pub fn is_fit(self) -> bool {
        self == FitClass::Fit
    }
}

impl std::fmt::Display for FitClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FitClass::Fit => "FIT",
            FitClass::Unfit => "UNFIT",
            FitClass::Empty => "EMPTY",
        };
        f.write_str(s)
    }
}

/// Column headers plus a multiset of rows. `ordered` marks results whose
/// row order is significant (the query carried ORDER BY).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultSet {
    pub headers: Vec<String>,
    pub rows: Vec<Row>,
    pub ordered: bool,
}

/// FIT when at least one row is free of NULLs.
pub fn classify_fit(r: &ResultSet) -> FitClass {
    if r.rows.is_empty() {
        FitClass::Empty
    } else if r.rows.iter().any(|row| row.iter().all(|v| !v.is_null())) {
        FitClass::Fit
    } else {
        FitClass::Unfit
    }
}

fn row_key(row: &Row) -> Vec<Value> {
    row.iter().map(Value::key).collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl ResultSet {
    pub fn new(headers: Vec<String>, rows: Vec<Row>) -> Self {
        ResultSet { headers, rows, ordered: false }
    }

    pub fn empty(headers: Vec<String>) -> Self {
        Self::new(headers, vec![])
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn fit(&self) -> FitClass {
        classify_fit(self)
    }

    fn sorted_rows(&self) -> Vec<Row> {
        let mut rows = self.rows.clone();
        if !self.ordered {
            rows.sort_by(|a, b| a.iter().zip(b.iter()).map(|(x, y)| x.sort_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
        }
        rows
    }

    /// RFC 4180 text with a header row; rows sorted unless order matters.
    pub fn canonical_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.headers.iter().map(|h| csv_field(h)).collect::<Vec<_>>().join(","));
        out.push('\n');
        for row in self.sorted_rows() {
            let line: Vec<String> = row
                .iter()
                .map(|v| match v {
                    Value::Null => String::new(),
                    Value::Text(s) if s.is_empty() => "\"\"".into(),
                    other => csv_field(&other.to_field()),
                })
                .collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of the canonical rows (headers excluded so that column
    /// aliasing does not perturb the digest).
    pub fn digest(&self) -> String {
        let mut body = self.canonical_csv();
        if let Some(i) = body.find('\n') {
            body.drain(..=i);
        }
        hex::encode(Sha256::digest(body.as_bytes()))
    }

    /// Bag difference in both directions: rows of `self` missing from
    /// `other`, and rows of `other` missing from `self`.
    pub fn bag_diff(&self, other: &ResultSet) -> (Vec<Row>, Vec<Row>) {
        let mut counts: HashMap<Vec<Value>, (i64, Row)> = HashMap::new();
        for r in &self.rows {
            counts.entry(row_key(r)).or_insert((0, r.clone())).0 += 1;
        }
        let mut extra = Vec::new();
        for r in &other.rows {
            match counts.get_mut(&row_key(r)) {
                Some(e) if e.0 > 0 => e.0 -= 1,
                _ => extra.push(r.clone()),
            }
        }
        let mut missing = Vec::new();
        for (_, (n, row)) in counts {
            for _ in 0..n.max(0) {
                missing.push(row.clone());
            }
        }
        missing.sort_by(|a, b| format!("{a:?}").cmp(&format!("{b:?}")));
        (missing, extra)
    }

    pub fn bag_eq(&self, other: &ResultSet) -> bool {
        if self.rows.len() != other.rows.len() {
            return false;
        }
        let (a, b) = self.bag_diff(other);
        a.is_empty() && b.is_empty()
    }

    /// Bag equality, plus row-by-row equality when `ordered` is set.
    pub fn matches(&self, other: &ResultSet, ordered: bool) -> bool {
        if ordered {
            self.rows.len() == other.rows.len() && self.rows.iter().zip(&other.rows).all(|(a, b)| row_key(a) == row_key(b))
        } else {
            self.bag_eq(other)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rs(rows: Vec<Row>) -> ResultSet {
        ResultSet::new(vec!["a".into(), "b".into()], rows)
    }

    #[test]
    fn fit_classification() {
        let r = ResultSet::new(vec!["name".into(), "phone".into()], vec![vec![Value::text("Customer#000023074"), Value::text("18-636-637-7498")]]);
        assert_eq!(classify_fit(&r), FitClass::Fit);
        assert_eq!(classify_fit(&rs(vec![])), FitClass::Empty);
        let unfit = rs(vec![vec![Value::Null, Value::Int(5)], vec![Value::Int(3), Value::Null]]);
        assert_eq!(classify_fit(&unfit), FitClass::Unfit);
    }

    #[test]
    fn digest_ignores_order_and_headers() {
        let a = rs(vec![vec![Value::Int(1), Value::Int(2)], vec![Value::Int(3), Value::Null]]);
        let mut b = rs(vec![vec![Value::Int(3), Value::Null], vec![Value::Int(1), Value::dec("2.0").unwrap()]]);
        b.headers = vec!["x".into(), "y".into()];
        assert!(a.bag_eq(&b));
        let c = rs(vec![vec![Value::Int(3), Value::Null], vec![Value::Int(1), Value::Int(2)]]);
        assert_eq!(a.digest(), c.digest());
    }

    #[test]
    fn bag_diff_counts_duplicates() {
        let a = rs(vec![vec![Value::Int(1), Value::Int(1)], vec![Value::Int(1), Value::Int(1)]]);
        let b = rs(vec![vec![Value::Int(1), Value::Int(1)]]);
        let (missing, extra) = a.bag_diff(&b);
        assert_eq!(missing.len(), 1);
        assert!(extra.is_empty());
        assert!(!a.bag_eq(&b));
    }

    #[test]
    fn empty_text_distinct_from_null() {
        let a = rs(vec![vec![Value::text(""), Value::Null]]);
        assert!(a.canonical_csv().ends_with("\"\",\n"));
    }
}
