//! Schema-aware random instances. Keys are sequential, foreign keys draw
//! from the referenced table, and every other value mixes three sources:
//! literals mined from the query under test (nudged by one grid step either
//! way), a small pool shared by all columns of the same kind so that
//! column-to-column predicates get satisfied, and a uniform draw.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::minisql::{Expr, QueryBlock, QueryIR, TableSource};
use crate::relcore::{parse_date, AttrDomain, DatabaseState, DomainKind, RelError, Row, SchemaCatalog, TableSchema, Value};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SizeProfile {
    pub default_rows: usize,
    pub rows: BTreeMap<String, usize>,
    /// Window for dates without literals; straddles 1995 by default.
    pub date_min: String,
    pub date_max: String,
    /// Window for unconstrained integers and decimals.
    pub int_max: i64,
    pub dec_max: i64,
    /// Probability of drawing a mined literal (or its neighbor).
    pub hot_rate: f64,
    /// Probability of drawing from the shared per-kind pool.
    pub pool_rate: f64,
    pub pool_size: usize,
    /// Probability of copying an earlier same-kind value of the same row.
    pub copy_rate: f64,
}

impl Default for SizeProfile {
    fn default() -> Self {
        SizeProfile::small()
    }
}

fn rows_of(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
    pairs.iter().map(|(t, n)| (t.to_string(), *n)).collect()
}

impl SizeProfile {
    fn with_rows(rows: BTreeMap<String, usize>, default_rows: usize) -> Self {
        SizeProfile {
            default_rows,
            rows,
            date_min: "1993-01-01".into(),
            date_max: "1997-12-31".into(),
            int_max: 100,
            dec_max: 20000,
            hot_rate: 0.3,
            pool_rate: 0.35,
            pool_size: 12,
            copy_rate: 0.25,
        }
    }

    /// About a hundred rows over the bundled schema; the checker default.
    pub fn small() -> Self {
        Self::with_rows(
            rows_of(&[("region", 3), ("nation", 5), ("supplier", 8), ("customer", 12), ("part", 8), ("partsupp", 16), ("orders", 20), ("lineitem", 40)]),
            12,
        )
    }

    /// About a thousand rows over the bundled schema.
    pub fn mini_tpch() -> Self {
        Self::with_rows(
            rows_of(&[("region", 5), ("nation", 25), ("supplier", 50), ("customer", 100), ("part", 80), ("partsupp", 160), ("orders", 250), ("lineitem", 330)]),
            100,
        )
    }

    pub fn rows_for(&self, table: &str) -> usize {
        self.rows.get(table).copied().unwrap_or(self.default_rows)
    }
}

/// Constants a query compares each column against, keyed by bare column
/// name, plus the cores of its LIKE patterns.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Hints {
    pub literals: BTreeMap<String, Vec<Value>>,
    pub like_cores: BTreeMap<String, Vec<String>>,
}

fn col_name(e: &Expr) -> Option<String> {
    match e {
        Expr::Column { name, .. } => Some(name.to_ascii_lowercase()),
        _ => None,
    }
}

fn scan_block(b: &QueryBlock, h: &mut Hints) {
    for item in &b.from {
        if let TableSource::Derived(q) = &item.source {
            scan_query(q, h);
        }
    }
    for e in b.exprs() {
        e.walk_shallow(&mut |x| match x {
            Expr::Cmp { left, right, .. } => match (&**left, &**right) {
                (c, Expr::Literal(v)) | (Expr::Literal(v), c) => {
                    if let Some(n) = col_name(c) {
                        h.literals.entry(n).or_default().push(v.clone());
                    }
                }
                _ => {}
            },
            Expr::Between { expr, low, high, .. } => {
                if let Some(n) = col_name(expr) {
                    for v in [low, high] {
                        if let Expr::Literal(v) = &**v {
                            h.literals.entry(n.clone()).or_default().push(v.clone());
                        }
                    }
                }
            }
            Expr::InList { expr, list, .. } => {
                if let Some(n) = col_name(expr) {
                    h.literals.entry(n).or_default().extend(list.iter().cloned());
                }
            }
            Expr::Like { expr, pattern, .. } => {
                if let Some(n) = col_name(expr) {
                    for core in pattern.split(['%', '_']).filter(|s| !s.is_empty()) {
                        h.like_cores.entry(n.clone()).or_default().push(core.to_string());
                    }
                }
            }
            _ => {}
        });
        for q in e.subqueries() {
            scan_query(q, h);
        }
    }
}

fn scan_query(q: &QueryIR, h: &mut Hints) {
    for b in &q.branches {
        scan_block(b, h);
    }
}

impl Hints {
    pub fn from_query(q: &QueryIR) -> Hints {
        let mut h = Hints::default();
        scan_query(q, &mut h);
        for v in h.literals.values_mut() {
            v.sort();
            v.dedup();
        }
        h
    }

    pub fn merge(mut self, other: &Hints) -> Hints {
        for (k, v) in &other.literals {
            let e = self.literals.entry(k.clone()).or_default();
            e.extend(v.iter().cloned());
            e.sort();
            e.dedup();
        }
        for (k, v) in &other.like_cores {
            self.like_cores.entry(k.clone()).or_default().extend(v.iter().cloned());
        }
        self
    }
}

const WORDS: [&str; 12] = ["amber", "azure", "coral", "ivory", "khaki", "linen", "olive", "plum", "sienna", "teal", "umber", "wheat"];

/// Per-kind pools shared across columns.
struct Pools {
    ints: Vec<i64>,
    decs: Vec<i64>,
    dates: Vec<i32>,
    texts: Vec<String>,
}

struct Gen<'a> {
    rng: ChaCha8Rng,
    profile: &'a SizeProfile,
    hints: &'a Hints,
    pools: Pools,
    date_lo: i32,
    date_hi: i32,
}

impl Gen<'_> {
    /// Integer grid window for an ordered column.
    fn window(&self, d: &AttrDomain, lits: &[i128]) -> (i128, i128) {
        let (dlo, dhi) = d.grid_bounds().unwrap_or((0, 0));
        let (lo, hi) = match d.kind {
            DomainKind::Date => (self.date_lo as i128, self.date_hi as i128),
            DomainKind::Integer => (1, self.profile.int_max as i128),
            DomainKind::Decimal { scale } => (0, self.profile.dec_max as i128 * 10i128.pow(scale)),
            _ => (dlo, dhi),
        };
        let (mut lo, mut hi) = if (dhi - dlo) < (hi - lo) { (dlo, dhi) } else { (lo, hi) };
        if let (Some(a), Some(b)) = (lits.iter().min(), lits.iter().max()) {
            let half = ((b - a) / 2).max(b.abs() / 2).max(10);
            lo = lo.min(a - half);
            hi = hi.max(b + half);
        }
        (lo.max(dlo), hi.min(dhi))
    }

    fn ordered(&mut self, col: &str, d: &AttrDomain) -> Value {
        let lits: Vec<i128> =
            self.hints.literals.get(col).map(|v| v.iter().filter_map(|x| d.coerce(x).ok()).filter_map(|x| d.grid_index(&x).ok()).collect()).unwrap_or_default();
        let (dlo, dhi) = d.grid_bounds().unwrap_or((0, 0));
        let r: f64 = self.rng.gen();
        let g = if !lits.is_empty() && r < self.profile.hot_rate {
            let base = *lits.choose(&mut self.rng).expect("nonempty");
            base + self.rng.gen_range(-1..=1)
        } else if r < self.profile.hot_rate + self.profile.pool_rate && !matches!(d.kind, DomainKind::Categorical) {
            match d.kind {
                DomainKind::Date => *self.pools.dates.choose(&mut self.rng).expect("pool") as i128,
                DomainKind::Integer => *self.pools.ints.choose(&mut self.rng).expect("pool") as i128,
                DomainKind::Decimal { scale } => *self.pools.decs.choose(&mut self.rng).expect("pool") as i128 * 10i128.pow(scale),
                _ => unreachable!(),
            }
        } else {
            let (lo, hi) = self.window(d, &lits);
            self.rng.gen_range(lo..=hi.max(lo))
        };
        d.from_grid(g.clamp(dlo, dhi))
    }

    fn free_text(&mut self, col: &str) -> Value {
        let r: f64 = self.rng.gen();
        let lits: Vec<String> = self
            .hints
            .literals
            .get(col)
            .map(|v| v.iter().filter_map(|x| if let Value::Text(s) = x { Some(s.clone()) } else { None }).collect())
            .unwrap_or_default();
        let cores = self.hints.like_cores.get(col).cloned().unwrap_or_default();
        if r < self.profile.hot_rate && !(lits.is_empty() && cores.is_empty()) {
            if !cores.is_empty() && (lits.is_empty() || self.rng.gen_bool(0.5)) {
                let core = cores.choose(&mut self.rng).expect("nonempty");
                let w = WORDS.choose(&mut self.rng).expect("words");
                return Value::text(match self.rng.gen_range(0..4) {
                    0 => core.clone(),
                    1 => format!("{w} {core}"),
                    2 => format!("{core} {w}"),
                    _ => format!("{w} {core} {w}"),
                });
            }
            return Value::text(lits.choose(&mut self.rng).expect("nonempty").clone());
        }
        Value::text(self.pools.texts.choose(&mut self.rng).expect("pool").clone())
    }

    fn value(&mut self, col: &str, d: &AttrDomain) -> Value {
        match d.kind {
            DomainKind::FreeText => self.free_text(col),
            DomainKind::Categorical => {
                let lits: Vec<Value> = self.hints.literals.get(col).cloned().unwrap_or_default();
                if !lits.is_empty() && self.rng.gen_bool(self.profile.hot_rate / 2.0) {
                    return lits.choose(&mut self.rng).expect("nonempty").clone();
                }
                let vals = d.enum_values.as_ref().expect("categorical values");
                Value::text(vals.choose(&mut self.rng).expect("nonempty enum").clone())
            }
            _ => self.ordered(col, d),
        }
    }
}

/// Tables ordered so that every referenced table precedes its referrers.
fn topo_order(cat: &SchemaCatalog) -> Result<Vec<&TableSchema>, RelError> {
    let mut done: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::new();
    while out.len() < cat.tables.len() {
        let before = out.len();
        for t in &cat.tables {
            if done.contains(&t.name) {
                continue;
            }
            let ready = t.foreign_keys.iter().all(|fk| fk.ref_table.eq_ignore_ascii_case(&t.name) || done.contains(&fk.ref_table.to_ascii_lowercase()));
            if ready {
                done.insert(t.name.to_ascii_lowercase());
                out.push(t);
            }
        }
        if out.len() == before {
            return Err(RelError::Schema("foreign keys form a cycle".into()));
        }
    }
    Ok(out)
}

fn fk_source<'a>(t: &'a TableSchema, col: &str) -> Option<(&'a str, &'a str)> {
    t.foreign_keys
        .iter()
        .find_map(|fk| fk.columns.iter().position(|c| c.eq_ignore_ascii_case(col)).map(|i| (fk.ref_table.as_str(), fk.ref_columns[i].as_str())))
}

/// NULL-free instance honoring keys; deterministic in `seed`.
pub fn gen_random_db(cat: &SchemaCatalog, seed: u64, profile: &SizeProfile, hints: &Hints) -> Result<DatabaseState, RelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let date_lo = parse_date(&profile.date_min).ok_or_else(|| RelError::Domain(format!("bad date {}", profile.date_min)))?;
    let date_hi = parse_date(&profile.date_max).ok_or_else(|| RelError::Domain(format!("bad date {}", profile.date_max)))?;
    let n = profile.pool_size.max(1);
    let pools = Pools {
        ints: (0..n).map(|_| rng.gen_range(1..=profile.int_max.max(1))).collect(),
        decs: (0..n).map(|_| rng.gen_range(0..=profile.dec_max.max(0))).collect(),
        dates: (0..n).map(|_| rng.gen_range(date_lo..=date_hi)).collect(),
        texts: (0..n).map(|i| format!("{} {:03}", WORDS[i % WORDS.len()], rng.gen_range(0..1000))).collect(),
    };
    let mut g = Gen { rng, profile, hints, pools, date_lo, date_hi };
    let mut db = DatabaseState::new(cat.clone());
    let order = topo_order(cat)?;
    for t in order {
        let want = profile.rows_for(&t.name);
        let pk: Vec<usize> = t.primary_key.iter().filter_map(|k| t.column_index(k)).collect();
        let mut seen: HashSet<Vec<Value>> = HashSet::new();
        let mut rows: Vec<Row> = Vec::with_capacity(want);
        let mut attempts = 0;
        while rows.len() < want && attempts < want * 20 {
            attempts += 1;
            let mut row: Row = Vec::with_capacity(t.columns.len());
            for (ci, c) in t.columns.iter().enumerate() {
                let v = if let Some((rt, rc)) = fk_source(t, &c.name) {
                    let parent = db.schema(rt)?;
                    let pi = parent.column_index(rc).ok_or_else(|| RelError::UnknownColumn(format!("{rt}.{rc}")))?;
                    let prow = db.rows(rt)?;
                    if prow.is_empty() {
                        return Err(RelError::Schema(format!("{}.{} references empty table {rt}", t.name, c.name)));
                    }
                    prow[g.rng.gen_range(0..prow.len())][pi].clone()
                } else if pk == [ci] && matches!(c.domain.kind, DomainKind::Integer) {
                    Value::Int(rows.len() as i64 + 1)
                } else if c.domain.is_ordered() && !matches!(c.domain.kind, DomainKind::Categorical) && g.rng.gen_bool(profile.copy_rate) {
                    let same: Vec<&Value> = (0..ci)
                        .filter(|&j| {
                            t.columns[j].domain.kind == c.domain.kind
                                && fk_source(t, &t.columns[j].name).is_none()
                                && !pk.contains(&j)
                                && c.domain.contains(&row[j])
                        })
                        .map(|j| &row[j])
                        .collect();
                    match same.choose(&mut g.rng) {
                        Some(v) => (*v).clone(),
                        None => g.value(&c.name.to_ascii_lowercase(), &c.domain),
                    }
                } else {
                    g.value(&c.name.to_ascii_lowercase(), &c.domain)
                };
                row.push(v);
            }
            if pk.len() > 1 {
                // bump non-reference integer key parts until the key is fresh
                let free: Vec<usize> = pk
                    .iter()
                    .copied()
                    .filter(|&i| fk_source(t, &t.columns[i].name).is_none() && matches!(t.columns[i].domain.kind, DomainKind::Integer))
                    .collect();
                if let Some(&f) = free.first() {
                    row[f] = Value::Int(1);
                    while seen.contains(&pk.iter().map(|&i| row[i].clone()).collect::<Vec<_>>()) {
                        let Value::Int(x) = row[f] else { unreachable!() };
                        row[f] = Value::Int(x + 1);
                    }
                }
            }
            if !pk.is_empty() && !seen.insert(pk.iter().map(|&i| row[i].clone()).collect()) {
                continue;
            }
            rows.push(row);
        }
        db.load_rows(&t.name, rows)?;
    }
    Ok(db)
}

/// Every foreign-key value of `db` found among the referenced keys.
pub fn referential_violations(db: &DatabaseState) -> Vec<String> {
    let mut out = Vec::new();
    for t in &db.catalog().tables {
        for fk in &t.foreign_keys {
            let Ok(parent) = db.schema(&fk.ref_table) else {
                out.push(format!("{} references unknown {}", t.name, fk.ref_table));
                continue;
            };
            let pidx: Vec<usize> = fk.ref_columns.iter().filter_map(|c| parent.column_index(c)).collect();
            let keys: HashSet<Vec<Value>> = db.rows(&fk.ref_table).unwrap_or(&[]).iter().map(|r| pidx.iter().map(|&i| r[i].clone()).collect()).collect();
            let cidx: Vec<usize> = fk.columns.iter().filter_map(|c| t.column_index(c)).collect();
            for r in db.rows(&t.name).unwrap_or(&[]) {
                let k: Vec<Value> = cidx.iter().map(|&i| r[i].clone()).collect();
                if !keys.contains(&k) {
                    out.push(format!("{}({}) -> {}", t.name, k.iter().map(|v| v.to_field()).collect::<Vec<_>>().join(","), fk.ref_table));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minisql::parse_sql;
    use crate::oracle::OracleHandle;
    use crate::relcore::FitClass;
    use crate::tpch;

    #[test]
    fn same_seed_same_digest() {
        let cat = tpch::catalog();
        let a = gen_random_db(&cat, 42, &SizeProfile::small(), &Hints::default()).unwrap();
        let b = gen_random_db(&cat, 42, &SizeProfile::small(), &Hints::default()).unwrap();
        let c = gen_random_db(&cat, 43, &SizeProfile::small(), &Hints::default()).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn mini_tpch_keys_resolve() {
        let cat = tpch::catalog();
        for seed in 0..5 {
            let db = gen_random_db(&cat, seed, &SizeProfile::mini_tpch(), &Hints::default()).unwrap();
            assert!(referential_violations(&db).is_empty());
            assert!(db.assert_null_free().is_ok());
            assert_eq!(db.catalog().tables.len(), 8);
            assert!((900..=1000).contains(&db.total_rows()), "{}", db.total_rows());
        }
    }

    #[test]
    fn hints_collect_literals_through_nesting() {
        let q = parse_sql(tpch::UNION_HIDDEN_SQL).unwrap();
        let h = Hints::from_query(&q);
        assert_eq!(h.literals["c_acctbal"], vec![Value::Int(10000)]);
        assert_eq!(h.literals["l_shipmode"], vec![Value::text("AIR"), Value::text("TRUCK")]);
    }

    #[test]
    fn running_example_is_fit_on_most_seeds() {
        let cat = tpch::catalog();
        let mut h = OracleHandle::embedded(tpch::UNION_HIDDEN_SQL).unwrap();
        let fit = (0..100)
            .filter(|&s| {
                let db = gen_random_db(&cat, s, &SizeProfile::mini_tpch(), &Hints::default()).unwrap();
                h.fit(&db).unwrap() == FitClass::Fit
            })
            .count();
        assert!(fit >= 90, "{fit}/100");
    }
}
