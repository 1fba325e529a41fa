//! Kill rate of every engineered mutant over a range of checker seeds.
//!
//!     cargo run --release --example checker_mutants -- 100

use hqe::checker::{mutant_corpus, result_equivalent, CheckConfig, Verdict};
use hqe::minisql::parse_sql;
use hqe::oracle::OracleHandle;
use hqe::tpch;

fn main() {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let cat = tpch::catalog();
    println!("{:<22} {:<18} {:>7} {:>9}", "mutant", "class", "killed", "max-trial");
    for m in mutant_corpus() {
        let mut h = OracleHandle::embedded(&m.original).expect("original parses");
        let q = parse_sql(&m.mutant).expect("mutant parses");
        let (mut killed, mut worst) = (0, 0);
        for seed in 0..seeds {
            let v = result_equivalent(&mut h, &q, &cat, &CheckConfig { seed, ..Default::default() }).expect("check runs");
            if let Verdict::Counterexample(c) = v {
                killed += 1;
                worst = worst.max(c.trial + 1);
            }
        }
        println!("{:<22} {:<18} {:>3}/{:<3} {:>9}", m.name, m.class, killed, seeds, worst);
    }
}
