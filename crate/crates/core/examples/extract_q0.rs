//! Seed extraction for the introductory customer/orders query, with the
//! oracle invocations broken down by phase.
//!
//!     cargo run --release --example extract_q0

use std::collections::BTreeMap;

use hqe::oracle::OracleHandle;
use hqe::tpch;
use hqe::xre::{extract_seed, XreConfig};

fn main() {
    let mut db = tpch::q0_instance();
    let mut h = OracleHandle::embedded(tpch::Q0_SQL).expect("hidden query parses");
    let (_, rep) = extract_seed(&mut h, &mut db, &XreConfig::default()).expect("extraction");

    println!("hidden: {}", tpch::Q0_SQL);
    println!("seed:   {}", rep.seed_sql);
    println!("T_H = {:?}", rep.family.t_h);
    for b in &rep.branches {
        println!("minimized {:?} in {} probes", b.tables, b.minimization.probes);
        for a in &b.atoms {
            println!("  atom {:?}", a.kind);
        }
    }

    let mut phases: BTreeMap<String, usize> = BTreeMap::new();
    for r in h.journal() {
        let key: Vec<&str> = r.phase.split('.').take(2).collect();
        *phases.entry(key.join(".")).or_default() += 1;
    }
    println!("{} invocations", h.invocation_count());
    for (p, n) in phases {
        println!("  {p:<28} {n}");
    }
}
