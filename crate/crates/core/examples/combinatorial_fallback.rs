//! Enumerative synthesis after the model stalls on a nested query. The
//! transcript keeps replying with the same wrong query, so the refinement
//! loop falls back after a duplicate reply.
//!
//!     cargo run --release --example combinatorial_fallback

use std::time::Instant;

use hqe::checker::{gen_random_db, Hints, SizeProfile};
use hqe::minisql::parse_sql;
use hqe::oracle::OracleHandle;
use hqe::tpch;
use hqe::xfe::client::TranscriptEntry;
use hqe::xfe::{prompt_bundle, run_xfe, MockClient, XfeConfig};
use hqe::xre::{extract_seed, XreConfig};

fn main() {
    let cat = tpch::catalog();
    for (name, hidden, seed, stall) in [
        ("semi-join", tpch::Q2_STYLE_HIDDEN_SQL, None, tpch::Q2_STYLE_STALL_SQL),
        ("derived table", tpch::Q13_STYLE_HIDDEN_SQL, Some(tpch::Q13_STYLE_SEED_SQL), tpch::Q13_STYLE_STALL_SQL),
    ] {
        let start = Instant::now();
        let mut db = gen_random_db(&cat, 1, &SizeProfile::small(), &Hints::default()).expect("instance");
        let mut h = OracleHandle::embedded(hidden).expect("hidden query parses");
        let r_h = h.invoke(&db).expect("R_H");
        let seed = match seed {
            Some(s) => parse_sql(s).expect("seed parses"),
            None => extract_seed(&mut h, &mut db, &XreConfig::default()).expect("extraction").0,
        };
        let bundle = prompt_bundle("stalled refinement", tpch::SCHEMA_DDL, &seed, &r_h, &db).expect("bundle");
        let script = (1..=2).map(|round| TranscriptEntry { round, reply_sql: stall.into() }).collect();
        let rep = run_xfe(&mut MockClient::new(script), &db, &seed, &r_h, &bundle, &XfeConfig::default()).expect("xfe");
        println!("{name}: {:?} in {:.2}s", rep.outcome, start.elapsed().as_secs_f64());
    }
}
