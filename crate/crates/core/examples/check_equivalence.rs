//! Result-equivalence checking on generated instances. The extracted seed
//! of the union example is refuted and a replay bundle is written; the
//! final query passes all trials.
//!
//!     cargo run --release --example check_equivalence [-- OUT_DIR]

use hqe::checker::{result_equivalent, write_replay_bundle, CheckConfig, Verdict};
use hqe::minisql::parse_sql;
use hqe::oracle::OracleHandle;
use hqe::tpch;

fn main() {
    let out = std::env::args().nth(1).map(std::path::PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("hqe-counterexample"));
    let cat = tpch::catalog();
    let cfg = CheckConfig::default();
    let mut h = OracleHandle::embedded(tpch::UNION_HIDDEN_SQL).expect("hidden query parses");
    for (label, sql) in [("seed", tpch::UNION_SEED_SQL), ("final", tpch::UNION_FINAL_SQL)] {
        let q = parse_sql(sql).expect("candidate parses");
        match result_equivalent(&mut h, &q, &cat, &cfg).expect("check") {
            Verdict::Pass { trials, .. } => println!("{label}: equivalent on {trials} instances"),
            Verdict::Counterexample(c) => {
                println!("{label}: differs on trial {} (db seed {}), {} missing / {} extra rows", c.trial, c.db_seed, c.missing.len(), c.extra.len());
                write_replay_bundle(&out, &q, &cat, &c, &cfg.profile).expect("bundle");
                println!("  replay bundle in {}", out.display());
            }
        }
    }
}
