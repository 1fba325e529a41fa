//! Table lattice of a union query: T_H, the tables every branch needs,
//! the side tables and the FROM clause of each branch.
//!
//!     cargo run --release --example union_lattice

use hqe::oracle::OracleHandle;
use hqe::tpch;
use hqe::xre::extract_union_family;
use hqe::xre::union::DEFAULT_AUX_CAP;

fn show(label: &str, sql: &str) {
    let mut db = tpch::union_instance();
    let mut h = OracleHandle::embedded(sql).expect("hidden query parses");
    let fam = extract_union_family(&mut h, &mut db, DEFAULT_AUX_CAP).expect("lattice");
    println!("{label}");
    println!("  T_H      {:?}", fam.t_h);
    println!("  COMMON   {:?}", fam.common);
    println!("  MaxSide  {:?}", fam.max_side);
    println!("  FromSet  {:?}", fam.from_set);
    println!("  {} void probes, {} members by upward closure", fam.lattice_probes, fam.skipped);
}

fn main() {
    // the outer join keeps the customer branch alive when orders is voided
    show("outer-join form", tpch::UNION_HIDDEN_SQL);
    show("inner-join form", tpch::UNION_INNER_SQL);
}
