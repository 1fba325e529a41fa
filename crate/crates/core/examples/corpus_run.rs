//! Runs XRE over a generated corpus and prints one line per query.
//!
//!     cargo run --release --example corpus_run -- flat 200
//!     cargo run --release --example corpus_run -- nested 60 -v

use hqe::corpus::{corpus_instance, flat_suite, nested_suite, run_suite};
use hqe::tpch;
use hqe::xre::XreConfig;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let kind = args.get(1).map(String::as_str).unwrap_or("flat");
    let n: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(40);
    let verbose = args.iter().any(|a| a == "-v");
    let mut db = corpus_instance(&tpch::catalog(), 7);
    let suite = if kind == "nested" { nested_suite(&db, n, 11) } else { flat_suite(&db, n, 5) };
    let start = std::time::Instant::now();
    let rows = run_suite(&mut db, &suite, &XreConfig::default());
    for r in &rows {
        let status = match (&r.seed, &r.discrepancy) {
            (Err(e), _) => format!("ERROR {e}"),
            (Ok(_), Some(d)) => format!("{} {d:?}", if r.passed() { "PASS" } else { "FAIL" }),
            (Ok(_), None) => "FAIL".into(),
        };
        println!("{:<26} {:>6}ms {status} probes={}", r.name, r.elapsed_ms, r.invocations);
        if verbose || !r.passed() {
            println!("    hidden: {}", r.hidden_sql);
            if let Ok(s) = &r.seed {
                println!("    seed:   {s}");
            }
        }
    }
    let bad = rows.iter().filter(|r| !r.passed()).count();
    println!("{} queries, {bad} failing, {:.1}s", rows.len(), start.elapsed().as_secs_f64());
}
