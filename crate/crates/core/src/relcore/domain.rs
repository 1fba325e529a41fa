use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::value::{parse_date, Value};
use super::RelError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DomainKind {
    Integer,
    Decimal {
        scale: u32,
    },
    Date,
    /// Text drawn from a fixed ordered list of values.
    Categorical,
    /// Unbounded text. Not searchable on a step grid.
    FreeText,
}

/// Value domain of one attribute: `[min, max]` on a step grid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttrDomain {
    pub kind: DomainKind,
    pub min: Value,
    pub max: Value,
    pub enum_values: Option<Vec<String>>,
}

pub const DEFAULT_DATE_MIN: &str = "1990-01-01";
pub const DEFAULT_DATE_MAX: &str = "2030-12-31";

impl AttrDomain {
    pub fn integer(min: i64, max: i64) -> Self {
        AttrDomain { kind: DomainKind::Integer, min: Value::Int(min), max: Value::Int(max), enum_values: None }
    }

    pub fn default_integer() -> Self {
        Self::integer(i32::MIN as i64, i32::MAX as i64)
    }

    pub fn decimal(scale: u32, min: Decimal, max: Decimal) -> Self {
        let mut lo = min;
        let mut hi = max;
        lo.rescale(scale);
        hi.rescale(scale);
        AttrDomain { kind: DomainKind::Decimal { scale }, min: Value::Dec(lo), max: Value::Dec(hi), enum_values: None }
    }

    pub fn default_decimal(scale: u32) -> Self {
        let bound = Decimal::from(1_000_000_000i64);
        Self::decimal(scale, -bound, bound)
    }

    pub fn date(min: &str, max: &str) -> Result<Self, RelError> {
        let lo = parse_date(min).ok_or_else(|| RelError::Domain(format!("bad date '{min}'")))?;
        let hi = parse_date(max).ok_or_else(|| RelError::Domain(format!("bad date '{max}'")))?;
        Ok(AttrDomain { kind: DomainKind::Date, min: Value::Date(lo), max: Value::Date(hi), enum_values: None })
    }

    pub fn default_date() -> Self {
        Self::date(DEFAULT_DATE_MIN, DEFAULT_DATE_MAX).expect("valid default dates")
    }

    pub fn categorical(values: Vec<String>) -> Self {
        let min = Value::Text(values.first().cloned().unwrap_or_default());
        let max = Value::Text(values.last().cloned().unwrap_or_default());
        AttrDomain { kind: DomainKind::Categorical, min, max, enum_values: Some(values) }
    }

    pub fn free_text() -> Self {
        AttrDomain { kind: DomainKind::FreeText, min: Value::Text(String::new()), max: Value::Text("\u{7f}".into()), enum_values: None }
    }

    pub fn validate(&self) -> Result<(), RelError> {
        match (&self.kind, &self.enum_values) {
            (DomainKind::Categorical, None) => return Err(RelError::Domain("categorical domain without values".into())),
            (DomainKind::Categorical, Some(v)) if v.is_empty() => return Err(RelError::Domain("empty enum".into())),
            (DomainKind::Categorical, _) => {}
            (_, Some(_)) => return Err(RelError::Domain("enum values on a non-categorical domain".into())),
            _ => {}
        }
        if self.is_ordered() {
            let lo = self.grid_index(&self.min)?;
            let hi = self.grid_index(&self.max)?;
            if lo > hi {
                return Err(RelError::Domain(format!("min {} > max {}", self.min, self.max)));
            }
        }
        Ok(())
    }

    /// Domains that admit binary search over a step grid.
    pub fn is_ordered(&self) -> bool {
        !matches!(self.kind, DomainKind::FreeText)
    }

    pub fn is_text(&self) -> bool {
        matches!(self.kind, DomainKind::FreeText | DomainKind::Categorical)
    }

    /// Smallest representable increment.
    pub fn step(&self) -> Value {
        match self.kind {
            DomainKind::Decimal { scale } => Value::Dec(Decimal::new(1, scale)),
            _ => Value::Int(1),
        }
    }

    /// Position of `v` on the step grid.
    pub fn grid_index(&self, v: &Value) -> Result<i128, RelError> {
        let bad = || RelError::Domain(format!("value {v} does not belong to {:?}", self.kind));
        match (&self.kind, v) {
            (DomainKind::Integer, Value::Int(i)) => Ok(*i as i128),
            (DomainKind::Integer, Value::Dec(d)) if d.fract().is_zero() => Ok(d.mantissa() / 10i128.pow(d.scale())),
            (DomainKind::Decimal { scale }, Value::Int(i)) => Ok(*i as i128 * 10i128.pow(*scale)),
            (DomainKind::Decimal { scale }, Value::Dec(d)) => {
                let mut r = *d;
                r.rescale(*scale);
                if r != *d {
                    return Err(bad());
                }
                Ok(r.mantissa())
            }
            (DomainKind::Date, Value::Date(d)) => Ok(*d as i128),
            (DomainKind::Date, Value::Text(s)) => parse_date(s).map(|d| d as i128).ok_or_else(bad),
            (DomainKind::Categorical, Value::Text(s)) => {
                self.enum_values.as_ref().and_then(|vals| vals.iter().position(|x| x == s)).map(|p| p as i128).ok_or_else(bad)
            }
            _ => Err(bad()),
        }
    }

    pub fn from_grid(&self, g: i128) -> Value {
        match &self.kind {
            DomainKind::Integer => Value::Int(g as i64),
            DomainKind::Decimal { scale } => Value::Dec(Decimal::from_i128_with_scale(g, *scale)),
            DomainKind::Date => Value::Date(g as i32),
            DomainKind::Categorical => {
                let vals = self.enum_values.as_ref().expect("categorical values");
                Value::Text(vals[g.clamp(0, vals.len() as i128 - 1) as usize].clone())
            }
            DomainKind::FreeText => Value::Null,
        }
    }

    pub fn grid_bounds(&self) -> Result<(i128, i128), RelError> {
        Ok((self.grid_index(&self.min)?, self.grid_index(&self.max)?))
    }

    pub fn contains(&self, v: &Value) -> bool {
        match self.kind {
            DomainKind::FreeText => matches!(v, Value::Text(_)),
            _ => match (self.grid_index(v), self.grid_bounds()) {
                (Ok(g), Ok((lo, hi))) => lo <= g && g <= hi,
                _ => false,
            },
        }
    }

    /// Normalizes a value into this domain's representation (e.g. an
    /// integer literal stored in a decimal column gets the column scale).
    pub fn coerce(&self, v: &Value) -> Result<Value, RelError> {
        if v.is_null() {
            return Ok(Value::Null);
        }
        match self.kind {
            DomainKind::FreeText => match v {
                Value::Text(_) => Ok(v.clone()),
                other => Ok(Value::Text(other.to_field())),
            },
            _ => self.grid_index(v).map(|g| self.from_grid(g)),
        }
    }

    /// Parses a CSV field for this domain. Empty means NULL.
    pub fn parse_field(&self, raw: &str) -> Result<Value, RelError> {
        if raw.is_empty() {
            return Ok(Value::Null);
        }
        let bad = || RelError::Domain(format!("cannot parse '{raw}' as {:?}", self.kind));
        match self.kind {
            DomainKind::Integer => raw.trim().parse::<i64>().map(Value::Int).map_err(|_| bad()),
            DomainKind::Decimal { scale } => {
                let mut d: Decimal = raw.trim().parse().map_err(|_| bad())?;
                if d.scale() > scale {
                    return Err(bad());
                }
                d.rescale(scale);
                Ok(Value::Dec(d))
            }
            DomainKind::Date => parse_date(raw).map(Value::Date).ok_or_else(bad),
            DomainKind::Categorical | DomainKind::FreeText => Ok(Value::Text(raw.to_string())),
        }
    }
}

/// Midpoint of `[lo, hi]` on the domain's step grid, rounded up, so the
/// result equals `lo` only for a degenerate interval.
pub fn domain_midpoint(d: &AttrDomain, lo: &Value, hi: &Value) -> Result<Value, RelError> {
    if !d.is_ordered() {
        return Err(RelError::Domain("free text has no midpoint".into()));
    }
    let (dmin, dmax) = d.grid_bounds()?;
    let a = d.grid_index(lo)?;
    let b = d.grid_index(hi)?;
    if a > b || a < dmin || b > dmax {
        return Err(RelError::Domain(format!("[{lo}, {hi}] outside domain or inverted")));
    }
    Ok(d.from_grid(a + (b - a + 1).div_euclid(2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    #[test]
    fn decimal_midpoint() {
        let d = AttrDomain::default_decimal(2);
        let m = domain_midpoint(&d, &Value::dec("0.00").unwrap(), &Value::dec("10.00").unwrap()).unwrap();
        assert_eq!(m.to_field(), "5.00");
    }

    #[test]
    fn degenerate_interval() {
        let d = AttrDomain::default_integer();
        assert_eq!(domain_midpoint(&d, &Value::Int(7), &Value::Int(7)).unwrap(), Value::Int(7));
        assert_eq!(domain_midpoint(&d, &Value::Int(7), &Value::Int(8)).unwrap(), Value::Int(8));
        assert_eq!(domain_midpoint(&d, &Value::Int(7), &Value::Int(9)).unwrap(), Value::Int(8));
    }

    #[test]
    fn date_midpoint_matches_calendar() {
        let d = AttrDomain::default_date();
        let lo = Value::date("1995-01-01").unwrap();
        let hi = Value::date("1995-12-31").unwrap();
        let m = domain_midpoint(&d, &lo, &hi).unwrap();
        // calendar oracle: walk forward half the inclusive day span
        let start = NaiveDate::from_ymd_opt(1995, 1, 1).unwrap();
        let end = NaiveDate::from_ymd_opt(1995, 12, 31).unwrap();
        let span = (end - start).num_days();
        let expected = start + chrono::Duration::days(span / 2);
        assert_eq!(expected, NaiveDate::from_ymd_opt(1995, 7, 2).unwrap());
        assert_eq!(m.to_field(), "1995-07-02");
    }

    #[test]
    fn out_of_domain_rejected() {
        let d = AttrDomain::integer(0, 10);
        assert!(domain_midpoint(&d, &Value::Int(-1), &Value::Int(5)).is_err());
        assert!(domain_midpoint(&d, &Value::Int(6), &Value::Int(5)).is_err());
    }

    #[test]
    fn invariants_checked() {
        assert!(AttrDomain::integer(5, 1).validate().is_err());
        assert!(AttrDomain::categorical(vec![]).validate().is_err());
        assert!(AttrDomain::categorical(vec!["AIR".into()]).validate().is_ok());
        assert_eq!(AttrDomain::default_decimal(2).max.to_field(), "1000000000.00");
    }

    #[test]
    fn decimal_grid_is_exact() {
        let d = AttrDomain::default_decimal(2);
        let g = d.grid_index(&Value::dec("10000.00").unwrap()).unwrap();
        assert_eq!(g, 1_000_000);
        assert_eq!(d.from_grid(g).to_field(), "10000.00");
        assert!(d.grid_index(&Value::dec("1.005").unwrap()).is_err());
    }
}
