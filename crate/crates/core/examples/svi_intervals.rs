//! Satisfying-value intervals, algebraic inequalities and equality classes
//! on the one-row-per-table instance.
//!
//!     cargo run --release --example svi_intervals

use hqe::oracle::OracleHandle;
use hqe::tpch;
use hqe::xre::{compute_svi_all, confirm_inequality, enumerate_inequality_candidates, extract_equalities, Prober};

fn main() {
    let mut db = tpch::one_row_instance();
    let mut h = OracleHandle::embedded(tpch::UNION_HIDDEN_SQL).expect("hidden query parses");
    let tables: Vec<String> = ["lineitem", "orders", "supplier"].iter().map(|s| s.to_string()).collect();
    let mut p = Prober::new(&mut h, &mut db);

    let svi = compute_svi_all(&mut p, &tables).expect("intervals");
    for c in hqe::xre::pred::numeric_columns(&p, &tables) {
        if let Some(s) = svi.get(&c) {
            let d = p.domain(&c);
            if s.lb != d.min || s.ub != d.max {
                println!("{c:<26} [{}, {}]", s.lb, s.ub);
            }
        }
    }

    let edges = enumerate_inequality_candidates(&p, &svi);
    println!("{} inequality candidates", edges.len());
    for e in &edges {
        if let Some(i) = confirm_inequality(&mut p, &svi, e).expect("probe") {
            println!("  confirmed {:?}", i.atom.kind);
        }
    }

    let eq = extract_equalities(&mut p, &svi).expect("equalities");
    for c in &eq.classes {
        let names: Vec<String> = c.members.iter().map(|m| m.to_string()).collect();
        println!("class {}", names.join(" = "));
    }
}
