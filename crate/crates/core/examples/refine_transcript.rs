//! The refinement loop driven by a scripted transcript, from the seed of
//! the union example to the nested query. Prints every prompt and reply.
//!
//!     cargo run --release --example refine_transcript [-- -q]

use hqe::minisql::parse_sql;
use hqe::oracle::OracleHandle;
use hqe::tpch;
use hqe::xfe::{prompt_bundle, run_xfe, MockClient, XfeConfig};

fn main() {
    let quiet = std::env::args().any(|a| a == "-q");
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/union/transcript.jsonl");
    let mut client = MockClient::load(std::path::Path::new(path)).expect("transcript");

    let db = tpch::union_instance();
    let mut h = OracleHandle::embedded(tpch::UNION_HIDDEN_SQL).expect("hidden query parses");
    let r_h = h.invoke(&db).expect("R_H");
    let seed = parse_sql(tpch::UNION_SEED_SQL).expect("seed parses");
    let bundle = prompt_bundle(tpch::UNION_DESCRIPTION, tpch::SCHEMA_DDL, &seed, &r_h, &db).expect("bundle");
    let rep = run_xfe(&mut client, &db, &seed, &r_h, &bundle, &XfeConfig::default()).expect("refinement");

    for r in &rep.refine.rounds {
        println!("==== round {} {}", r.round, r.kind.tag());
        if !quiet {
            println!("{}\n---- reply", r.prompt);
        }
        println!("{}", r.reply.trim());
    }
    println!("==== {:?}", rep.outcome);
}
