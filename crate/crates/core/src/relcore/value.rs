use std::cmp::Ordering;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

/// A single nullable cell value.
///
/// Dates are stored as day offsets from 1970-01-01 so that ordered-domain
/// arithmetic is uniform across integers, decimals and dates.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Value {
    Null,
    Int(i64),
    Dec(Decimal),
    Date(i32),
    Text(String),
}

pub type Row = Vec<Value>;

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch")
}

/// Converts a calendar date into its day offset.
pub fn date_to_days(d: NaiveDate) -> i32 {
    (d - epoch()).num_days() as i32
}

pub fn days_to_date(days: i32) -> NaiveDate {
    epoch() + chrono::Duration::days(days as i64)
}

pub fn parse_date(s: &str) -> Option<i32> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok().map(date_to_days)
}

pub fn format_date(days: i32) -> String {
    let d = days_to_date(days);
    format!("{:04}-{:02}-{:02}", d.year(), d.month(), d.day())
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn date(s: &str) -> Option<Value> {
        parse_date(s).map(Value::Date)
    }

    pub fn dec(s: &str) -> Option<Value> {
        s.parse::<Decimal>().ok().map(Value::Dec)
    }

    pub fn text(s: impl Into<String>) -> Value {
        Value::Text(s.into())
    }

    pub fn as_decimal(&self) -> Option<Decimal> {
        match self {
            Value::Int(i) => Some(Decimal::from(*i)),
            Value::Dec(d) => Some(*d),
            _ => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Value::Int(_) | Value::Dec(_))
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Null => "null",
            Value::Int(_) => "integer",
            Value::Dec(_) => "decimal",
            Value::Date(_) => "date",
            Value::Text(_) => "text",
        }
    }

    /// SQL comparison. `None` when either side is NULL; `Err` on
    /// incomparable types. Text compared against a date is coerced.
    pub fn sql_cmp(&self, other: &Value) -> Result<Option<Ordering>, String> {
        use Value::*;
        match (self, other) {
            (Null, _) | (_, Null) => Ok(None),
            (Int(a), Int(b)) => Ok(Some(a.cmp(b))),
            (Int(_) | Dec(_), Int(_) | Dec(_)) => {
                let a = self.as_decimal().expect("numeric");
                let b = other.as_decimal().expect("numeric");
                Ok(Some(a.cmp(&b)))
            }
            (Date(a), Date(b)) => Ok(Some(a.cmp(b))),
            (Date(a), Text(s)) => parse_date(s).map(|b| Some(a.cmp(&b))).ok_or_else(|| format!("cannot compare date with '{s}'")),
            (Text(s), Date(b)) => parse_date(s).map(|a| Some(a.cmp(b))).ok_or_else(|| format!("cannot compare '{s}' with date")),
            (Text(a), Text(b)) => Ok(Some(a.cmp(b))),
            _ => Err(format!("type mismatch: {} vs {}", self.type_name(), other.type_name())),
        }
    }

    /// Hashable form where numerically equal values coincide.
    pub fn key(&self) -> Value {
        match self {
            Value::Int(i) => Value::Dec(Decimal::from(*i).normalize()),
            Value::Dec(d) => Value::Dec(d.normalize()),
            other => other.clone(),
        }
    }

    /// Total order used for sorting output rows: NULLs sort last, then by
    /// SQL order within comparable types, then by type tag.
    pub fn sort_cmp(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Null, Value::Null) => Ordering::Equal,
            (Value::Null, _) => Ordering::Greater,
            (_, Value::Null) => Ordering::Less,
            _ => match self.sql_cmp(other) {
                Ok(Some(o)) => o,
                _ => self.cmp(other),
            },
        }
    }

    /// Text form used in CSV output and journal digests. NULL is empty.
    pub fn to_field(&self) -> String {
        match self {
            Value::Null => String::new(),
            Value::Int(i) => i.to_string(),
            Value::Dec(d) => d.to_string(),
            Value::Date(d) => format_date(*d),
            Value::Text(s) => s.clone(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => write!(f, "NULL"),
            other => write!(f, "{}", other.to_field()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_cross_type_comparison() {
        let a = Value::Int(5);
        let b = Value::dec("5.00").unwrap();
        assert_eq!(a.sql_cmp(&b).unwrap(), Some(Ordering::Equal));
        assert_eq!(a.key(), b.key());
    }

    #[test]
    fn null_comparison_is_unknown() {
        assert_eq!(Value::Null.sql_cmp(&Value::Int(1)).unwrap(), None);
    }

    #[test]
    fn date_text_coercion() {
        let d = Value::date("1995-03-16").unwrap();
        let t = Value::text("1995-03-16");
        assert_eq!(d.sql_cmp(&t).unwrap(), Some(Ordering::Equal));
        assert!(Value::Int(1).sql_cmp(&Value::text("x")).is_err());
    }

    #[test]
    fn date_round_trip() {
        let d = parse_date("1995-07-02").unwrap();
        assert_eq!(format_date(d), "1995-07-02");
        assert_eq!(parse_date("1970-01-01"), Some(0));
    }
}
