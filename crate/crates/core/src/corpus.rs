//! Generated hidden queries over a catalog and a random instance: flat
//! conjunctive SPJGAOL queries, and single-level nestings (semi-join,
//! outer join, derived table) paired with their hand-flattened form.
//!
//! Every query is anchored on a row of its instance's join, so it is FIT
//! there by construction.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checker::{gen_random_db, Hints, SizeProfile};
use crate::minisql::{execute, parse_sql, render_literal, render_sql};
use crate::oracle::OracleHandle;
use crate::relcore::{DatabaseState, DomainKind, FitClass, ResultSet, SchemaCatalog, TableSchema, Value};
use crate::xre::{extract_seed, XreConfig};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Flat,
    SemiJoin,
    OuterJoin,
    /// Outer join with a filter on the preserved side's partner in ON.
    OuterJoinOnFilter,
    Derived,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorpusQuery {
    pub name: String,
    pub family: Family,
    pub sql: String,
    /// Equi-join flattening of a nested query; equal to `sql` when flat.
    pub flat_sql: String,
}

impl CorpusQuery {
    /// Discrepancy classes a flattening of this family introduces.
    pub fn classes(&self) -> Vec<&'static str> {
        match self.family {
            Family::Flat | Family::Derived => vec![],
            Family::SemiJoin => vec!["semi-join as equi-join"],
            Family::OuterJoin => vec!["outer join as equi-join"],
            Family::OuterJoinOnFilter => vec!["outer join as equi-join", "inner-block filter surfaced"],
        }
    }
}

/// Instance profile for the corpus: a few hundred rows over the schema.
pub fn corpus_profile() -> SizeProfile {
    let mut p = SizeProfile::small();
    for n in p.rows.values_mut() {
        *n *= 3;
    }
    p
}

pub fn corpus_instance(cat: &SchemaCatalog, seed: u64) -> DatabaseState {
    gen_random_db(cat, seed, &corpus_profile(), &Hints::default()).expect("bundled catalog generates")
}

/// Single-column foreign-key edges (child, child column, parent, parent column).
fn fk_edges(cat: &SchemaCatalog) -> Vec<(String, String, String, String)> {
    let mut out = Vec::new();
    for t in &cat.tables {
        for fk in &t.foreign_keys {
            if fk.columns.len() == 1 && !fk.ref_table.eq_ignore_ascii_case(&t.name) {
                out.push((t.name.clone(), fk.columns[0].clone(), fk.ref_table.to_ascii_lowercase(), fk.ref_columns[0].clone()));
            }
        }
    }
    out
}

fn is_key(t: &TableSchema, col: &str) -> bool {
    t.primary_key.iter().any(|k| k.eq_ignore_ascii_case(col)) || t.foreign_keys.iter().any(|f| f.columns.iter().any(|c| c.eq_ignore_ascii_case(col)))
}

struct Joined {
    tables: Vec<String>,
    joins: Vec<String>,
    cols: Vec<(String, String)>,
    rows: ResultSet,
}

fn join_rows(db: &DatabaseState, tables: &[String], joins: &[String]) -> Joined {
    let cat = db.catalog();
    let cols: Vec<(String, String)> =
        tables.iter().flat_map(|t| cat.table(t).expect("table").columns.iter().map(move |c| (t.clone(), c.name.clone()))).collect();
    let sel = cols.iter().map(|(t, c)| format!("{t}.{c}")).collect::<Vec<_>>().join(", ");
    let mut sql = format!("SELECT {sel} FROM {}", tables.join(", "));
    if !joins.is_empty() {
        sql.push_str(&format!(" WHERE {}", joins.join(" AND ")));
    }
    let rows = execute(&parse_sql(&sql).expect("join query parses"), db).expect("join query runs");
    Joined { tables: tables.to_vec(), joins: joins.to_vec(), cols, rows }
}

struct Builder<'a> {
    rng: ChaCha8Rng,
    db: &'a DatabaseState,
    edges: Vec<(String, String, String, String)>,
}

impl Builder<'_> {
    fn table(&self, t: &str) -> &TableSchema {
        self.db.catalog().table(t).expect("table")
    }

    /// A connected set of `k` tables with its FK join predicates.
    fn walk(&mut self, k: usize) -> (Vec<String>, Vec<String>) {
        let names = self.db.catalog().table_names();
        let mut tables = vec![names.choose(&mut self.rng).expect("tables").clone()];
        let mut joins = Vec::new();
        while tables.len() < k {
            let cands: Vec<&(String, String, String, String)> = self.edges.iter().filter(|(c, _, p, _)| tables.contains(c) != tables.contains(p)).collect();
            let Some((c, cc, p, pc)) = cands.choose(&mut self.rng).map(|e| (*e).clone()) else { break };
            tables.push(if tables.contains(&c) { p.clone() } else { c.clone() });
            joins.push(format!("{cc} = {pc}"));
        }
        (tables, joins)
    }

    /// Filter predicates on non-key columns satisfied by `anchor`.
    fn filters(&mut self, j: &Joined, anchor: usize, n: usize, only: Option<&str>) -> Vec<String> {
        let mut cands: Vec<usize> = (0..j.cols.len())
            .filter(|&i| {
                let (t, c) = &j.cols[i];
                only.is_none_or(|o| o == t) && !is_key(self.table(t), c)
            })
            .collect();
        cands.shuffle(&mut self.rng);
        let mut out = Vec::new();
        for &i in cands.iter().take(n) {
            let (t, c) = &j.cols[i];
            let dom = self.table(t).column(c).expect("column").domain.clone();
            let v = j.rows.rows[anchor][i].clone();
            let other = j.rows.rows[self.rng.gen_range(0..j.rows.len())][i].clone();
            let lit = render_literal;
            let f = match dom.kind {
                DomainKind::Integer | DomainKind::Decimal { .. } | DomainKind::Date => match self.rng.gen_range(0..4) {
                    0 => {
                        let third = j.rows.rows[self.rng.gen_range(0..j.rows.len())][i].clone();
                        let mut b = [v.clone(), other, third];
                        b.sort();
                        format!("{c} BETWEEN {} AND {}", lit(&b[0]), lit(&b[2]))
                    }
                    1 if other <= v => format!("{c} >= {}", lit(&other)),
                    1 => format!("{c} <= {}", lit(&other)),
                    2 => format!("{c} <= {}", lit(std::cmp::max(&v, &other))),
                    _ => format!("{c} >= {}", lit(std::cmp::min(&v, &other))),
                },
                DomainKind::Categorical => {
                    let mut vals = vec![v.clone()];
                    let enums = dom.enum_values.clone().unwrap_or_default();
                    for _ in 0..self.rng.gen_range(0..3) {
                        let x = Value::text(enums.choose(&mut self.rng).expect("enum").clone());
                        if !vals.contains(&x) {
                            vals.push(x);
                        }
                    }
                    if vals.len() == 1 {
                        format!("{c} = {}", lit(&v))
                    } else {
                        format!("{c} IN ({})", vals.iter().map(lit).collect::<Vec<_>>().join(", "))
                    }
                }
                DomainKind::FreeText => {
                    let s = v.to_field();
                    let word = s.split(' ').next().unwrap_or("").to_string();
                    if self.rng.gen_bool(0.5) && !word.is_empty() {
                        format!("{c} LIKE '%{word}%'")
                    } else {
                        format!("{c} = {}", lit(&v))
                    }
                }
            };
            out.push(f);
        }
        out
    }

    fn numeric(&self, t: &str, c: &str) -> bool {
        matches!(self.table(t).column(c).expect("column").domain.kind, DomainKind::Integer | DomainKind::Decimal { .. })
    }

    fn flat(&mut self, idx: usize) -> Option<CorpusQuery> {
        let k = *[1, 2, 2, 3, 3].choose(&mut self.rng).expect("sizes");
        let (tables, joins) = self.walk(k);
        let j = join_rows(self.db, &tables, &joins);
        if j.rows.is_empty() {
            return None;
        }
        let anchor = self.rng.gen_range(0..j.rows.len());
        let nf = self.rng.gen_range(0..=3);
        let mut preds = j.joins.clone();
        preds.extend(self.filters(&j, anchor, nf, None));

        let mut pick: Vec<usize> = (0..j.cols.len()).collect();
        pick.shuffle(&mut self.rng);
        let nproj = self.rng.gen_range(1..=3).min(pick.len());
        let proj: Vec<&(String, String)> = pick[..nproj].iter().map(|&i| &j.cols[i]).collect();
        let mut select: Vec<String> = proj.iter().map(|(_, c)| c.clone()).collect();
        let mut group: Vec<String> = Vec::new();
        let mut orderable: Vec<String> = select.clone();
        if self.rng.gen_bool(0.3) {
            // aggregate over an optional grouping prefix of the projection
            let ng = self.rng.gen_range(0..=select.len().min(2));
            group = select[..ng].to_vec();
            select.truncate(ng);
            orderable = select.clone();
            let nums: Vec<&(String, String)> = j.cols.iter().filter(|(t, c)| self.numeric(t, c) && !is_key(self.table(t), c)).collect();
            let agg = match (self.rng.gen_range(0..5), nums.choose(&mut self.rng)) {
                (0, Some((_, c))) => format!("SUM({c})"),
                (1, Some((_, c))) => format!("MIN({c})"),
                (2, Some((_, c))) => format!("MAX({c})"),
                (3, Some((_, c))) => format!("AVG({c})"),
                // ungrouped COUNT(*) is FIT on empty input, which no FIT probe can see through
                _ if ng == 0 => return None,
                _ => "COUNT(*)".to_string(),
            };
            select.push(format!("{agg} AS agg{idx}"));
            orderable.push(format!("agg{idx}"));
        }
        let mut sql = format!("SELECT {} FROM {}", select.join(", "), j.tables.join(", "));
        if !preds.is_empty() {
            sql.push_str(&format!(" WHERE {}", preds.join(" AND ")));
        }
        if !group.is_empty() {
            sql.push_str(&format!(" GROUP BY {}", group.join(", ")));
        }
        if self.rng.gen_bool(0.35) {
            let dir = |r: &mut ChaCha8Rng| if r.gen_bool(0.5) { " DESC" } else { "" };
            if self.rng.gen_bool(0.4) {
                // a total order on the output keeps the cut deterministic; LIMIT 1
                // would hide the group split probe
                orderable.shuffle(&mut self.rng);
                let keys: Vec<String> = orderable.iter().map(|k| format!("{k}{}", dir(&mut self.rng))).collect();
                sql.push_str(&format!(" ORDER BY {} LIMIT {}", keys.join(", "), self.rng.gen_range(2..=6)));
            } else {
                let key = orderable.choose(&mut self.rng).expect("orderable").clone();
                sql.push_str(&format!(" ORDER BY {key}{}", dir(&mut self.rng)));
            }
        }
        Some(CorpusQuery { name: format!("flat-{idx:03}"), family: Family::Flat, flat_sql: sql.clone(), sql })
    }

    fn projection(&mut self, t: &str, n: usize) -> Vec<String> {
        let mut cols: Vec<String> = self.table(t).columns.iter().map(|c| c.name.clone()).filter(|c| !is_key(self.table(t), c)).collect();
        cols.shuffle(&mut self.rng);
        cols.truncate(n.max(1));
        cols
    }

    fn nested(&mut self, idx: usize, family: Family) -> Option<CorpusQuery> {
        let (c, cc, p, pc) = self.edges.choose(&mut self.rng).expect("edges").clone();
        let j = join_rows(self.db, &[p.clone(), c.clone()], &[format!("{cc} = {pc}")]);
        if j.rows.is_empty() {
            return None;
        }
        let anchor = self.rng.gen_range(0..j.rows.len());
        let nf = self.rng.gen_range(0..=1);
        let outer_f = self.filters(&j, anchor, nf, Some(&p));
        let inner_f = self.filters(&j, anchor, 1, Some(&c));
        let np = self.rng.gen_range(1..=2);
        let pcols = self.projection(&p, np);
        let where_of = |v: &[String]| if v.is_empty() { String::new() } else { format!(" WHERE {}", v.join(" AND ")) };
        let (sql, flat) = match family {
            Family::SemiJoin => {
                let mut outer = outer_f.clone();
                outer.push(format!("{pc} IN (SELECT {cc} FROM {c}{})", where_of(&inner_f)));
                let mut flat = outer_f.clone();
                flat.push(format!("{pc} = {cc}"));
                flat.extend(inner_f.iter().cloned());
                (format!("SELECT {} FROM {p}{}", pcols.join(", "), where_of(&outer)), format!("SELECT {} FROM {p}, {c}{}", pcols.join(", "), where_of(&flat)))
            }
            Family::OuterJoin | Family::OuterJoinOnFilter => {
                let ccols = self.projection(&c, 1);
                let sel = format!("{}, {}", pcols.join(", "), ccols.join(", "));
                let on_extra = if family == Family::OuterJoinOnFilter { inner_f.clone() } else { vec![] };
                let mut on = vec![format!("{pc} = {cc}")];
                on.extend(on_extra.iter().cloned());
                let mut flat = outer_f.clone();
                flat.extend(on.iter().cloned());
                (
                    format!("SELECT {sel} FROM {p} LEFT OUTER JOIN {c} ON {}{}", on.join(" AND "), where_of(&outer_f)),
                    format!("SELECT {sel} FROM {p}, {c}{}", where_of(&flat)),
                )
            }
            Family::Derived => {
                let ccols = self.projection(&c, 1);
                let sel = format!("{}, {}", pcols.join(", "), ccols.join(", "));
                let mut outer = vec![format!("{pc} = {cc}")];
                outer.extend(inner_f.iter().cloned());
                let mut flat = outer_f.clone();
                flat.extend(outer.iter().cloned());
                (
                    format!("SELECT {sel} FROM (SELECT {pc}, {} FROM {p}{}) AS d{idx}, {c}{}", pcols.join(", "), where_of(&outer_f), where_of(&outer)),
                    format!("SELECT {sel} FROM {p}, {c}{}", where_of(&flat)),
                )
            }
            Family::Flat => unreachable!(),
        };
        let name = format!("{}-{idx:03}", serde_json::to_value(&family).expect("family").as_str().expect("str").replace('_', "-"));
        Some(CorpusQuery { name, family, sql, flat_sql: flat })
    }
}

fn is_fit(sql: &str, db: &DatabaseState) -> bool {
    parse_sql(sql).ok().and_then(|q| execute(&q, db).ok()).is_some_and(|r| r.fit() == FitClass::Fit)
}

/// `n` flat queries, deterministic in `seed`, each FIT on `db`.
pub fn flat_suite(db: &DatabaseState, n: usize, seed: u64) -> Vec<CorpusQuery> {
    let mut b = Builder { rng: ChaCha8Rng::seed_from_u64(seed), db, edges: fk_edges(db.catalog()) };
    let mut out = Vec::new();
    let mut idx = 0;
    while out.len() < n {
        if let Some(q) = b.flat(idx) {
            if is_fit(&q.sql, db) {
                out.push(q);
            }
        }
        idx += 1;
    }
    out
}

/// `n` nested queries cycling through the nesting families.
pub fn nested_suite(db: &DatabaseState, n: usize, seed: u64) -> Vec<CorpusQuery> {
    let fams = [Family::SemiJoin, Family::OuterJoin, Family::OuterJoinOnFilter, Family::Derived];
    let mut b = Builder { rng: ChaCha8Rng::seed_from_u64(seed), db, edges: fk_edges(db.catalog()) };
    let mut out = Vec::new();
    let mut idx = 0;
    while out.len() < n {
        let fam = fams[out.len() % fams.len()].clone();
        if let Some(q) = b.nested(idx, fam) {
            if is_fit(&q.sql, db) && is_fit(&q.flat_sql, db) {
                out.push(q);
            }
        }
        idx += 1;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Discrepancy {
    None,
    Known { classes: Vec<String> },
    Unclassified { detail: String },
}

/// Seed result against the truth: a difference is explained when the seed
/// reproduces the flattened query exactly.
pub fn classify(q: &CorpusQuery, r_seed: &ResultSet, r_hidden: &ResultSet, r_flat: &ResultSet) -> Discrepancy {
    if r_seed.bag_eq(r_hidden) {
        return Discrepancy::None;
    }
    if q.family != Family::Flat && r_seed.bag_eq(r_flat) {
        return Discrepancy::Known { classes: q.classes().iter().map(|s| s.to_string()).collect() };
    }
    let (missing, extra) = r_hidden.bag_diff(r_seed);
    Discrepancy::Unclassified { detail: format!("{} rows missing, {} extra vs truth", missing.len(), extra.len()) }
}

#[derive(Clone, Debug, Serialize)]
pub struct CorpusRow {
    pub name: String,
    pub family: Family,
    pub hidden_sql: String,
    /// Seed SQL, or the extraction error.
    pub seed: Result<String, String>,
    pub discrepancy: Option<Discrepancy>,
    pub invocations: usize,
    pub elapsed_ms: u128,
}

impl CorpusRow {
    /// Extracted and either exact or explained by the family's classes.
    pub fn passed(&self) -> bool {
        matches!(self.discrepancy, Some(Discrepancy::None) | Some(Discrepancy::Known { .. }))
    }
}

/// Extracts every query of `suite` with an embedded oracle over `db` and
/// classifies the seed against the truth.
pub fn run_suite(db: &mut DatabaseState, suite: &[CorpusQuery], cfg: &XreConfig) -> Vec<CorpusRow> {
    let mut rows = Vec::new();
    for q in suite {
        let start = std::time::Instant::now();
        let hidden = parse_sql(&q.sql).expect("corpus query parses");
        let mut h = OracleHandle::embedded_ir(hidden.clone());
        let (seed, discrepancy) = match extract_seed(&mut h, db, cfg) {
            Ok((seed, _)) => {
                let run = |x: &crate::minisql::QueryIR| execute(x, db).map_err(|e| e.to_string());
                let d = match (run(&seed), run(&hidden), run(&parse_sql(&q.flat_sql).expect("flat form parses"))) {
                    (Ok(s), Ok(h), Ok(f)) => classify(q, &s, &h, &f),
                    (s, _, _) => Discrepancy::Unclassified { detail: format!("seed does not run: {:?}", s.err()) },
                };
                (Ok(render_sql(&seed)), Some(d))
            }
            Err(e) => (Err(e.to_string()), None),
        };
        rows.push(CorpusRow {
            name: q.name.clone(),
            family: q.family.clone(),
            hidden_sql: q.sql.clone(),
            seed,
            discrepancy,
            invocations: h.invocation_count(),
            elapsed_ms: start.elapsed().as_millis(),
        });
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tpch;

    #[test]
    fn suites_are_deterministic_and_fit() {
        let db = corpus_instance(&tpch::catalog(), 7);
        let a = flat_suite(&db, 20, 1);
        let b = flat_suite(&db, 20, 1);
        assert_eq!(a.iter().map(|q| &q.sql).collect::<Vec<_>>(), b.iter().map(|q| &q.sql).collect::<Vec<_>>());
        for q in &a {
            assert!(is_fit(&q.sql, &db), "{}", q.sql);
        }
        let n = nested_suite(&db, 8, 1);
        assert_eq!(n.len(), 8);
        assert!(n.iter().any(|q| q.family == Family::OuterJoinOnFilter));
    }

    #[test]
    fn flattened_semi_join_explains_duplicates() {
        let db = corpus_instance(&tpch::catalog(), 7);
        let q = nested_suite(&db, 4, 3).into_iter().find(|q| q.family == Family::SemiJoin).unwrap();
        let run = |s: &str| execute(&parse_sql(s).unwrap(), &db).unwrap();
        let (h, f) = (run(&q.sql), run(&q.flat_sql));
        assert!(matches!(classify(&q, &f, &h, &f), Discrepancy::None | Discrepancy::Known { .. }));
    }
}
