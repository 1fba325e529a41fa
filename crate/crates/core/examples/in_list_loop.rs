//! Recovering a disjunction on a text column one literal per round.
//!
//!     cargo run --release --example in_list_loop

use hqe::checker::{gen_random_db, Hints, SizeProfile};
use hqe::oracle::OracleHandle;
use hqe::tpch;
use hqe::xre::{extract_seed, XreConfig};

fn main() {
    let sql = "SELECT l_orderkey, l_quantity FROM lineitem WHERE l_shipmode IN ('AIR', 'MAIL', 'RAIL', 'SHIP', 'TRUCK')";
    let mut db = gen_random_db(&tpch::catalog(), 2, &SizeProfile::small(), &Hints::default()).expect("instance");
    let mut h = OracleHandle::embedded(sql).expect("hidden query parses");
    let (_, rep) = extract_seed(&mut h, &mut db, &XreConfig::default()).expect("extraction");
    println!("seed: {}", rep.seed_sql);
    for o in rep.branches.iter().flat_map(|b| &b.in_lists) {
        println!("{:?}", o.atom.kind);
        println!("{} rounds, {} invocations, loop ended at probe #{}", o.rounds, o.probes, o.terminating_seq);
    }
    for r in h.journal().iter().filter(|r| r.phase.contains(".in_list.")) {
        println!("  #{:<4} {:<40} {:?}", r.seq, r.phase, r.fit);
    }
}
