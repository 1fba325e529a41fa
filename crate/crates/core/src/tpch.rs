//! Bundled mini TPC-H schema, desk-scale instances and the running-example
//! queries used by the examples and tests.

use crate::relcore::load::parse_table_csv;
use crate::relcore::{DatabaseState, DomainSpec, SchemaCatalog};
use std::collections::BTreeMap;

pub const SCHEMA_DDL: &str = include_str!("../assets/tpch/schema.sql");
pub const DOMAINS_JSON: &str = include_str!("../assets/tpch/domains.json");

const Q0_CSV: &[(&str, &str)] =
    &[("customer", include_str!("../assets/instances/q0/customer.csv")), ("orders", include_str!("../assets/instances/q0/orders.csv"))];

const UNION_CSV: &[(&str, &str)] = &[
    ("customer", include_str!("../assets/instances/union/customer.csv")),
    ("orders", include_str!("../assets/instances/union/orders.csv")),
    ("lineitem", include_str!("../assets/instances/union/lineitem.csv")),
    ("supplier", include_str!("../assets/instances/union/supplier.csv")),
];

/// Two-table customer/orders query with a constant balance threshold.
pub const Q0_SQL: &str = "SELECT c_name AS name, c_phone as phone FROM customer, orders WHERE c_custkey = o_custkey AND c_acctbal <= 10000";

/// Union of a customer branch (outer join) and a supplier branch (semi-join),
/// grouped on top.
pub const UNION_HIDDEN_SQL: &str = "SELECT * FROM ((SELECT c_name AS name, c_phone AS phone FROM customer LEFT OUTER JOIN orders ON c_custkey = o_custkey WHERE c_acctbal <= 10000 OR o_orderkey IS NULL) UNION ALL (SELECT s_name AS name, s_phone AS phone FROM supplier WHERE s_suppkey IN (SELECT l_suppkey FROM orders, lineitem WHERE l_orderkey = o_orderkey AND s_acctbal <= o_totalprice AND l_commitdate = l_receiptdate AND l_shipmode IN ('AIR','TRUCK')))) AS people GROUP BY name, phone";

/// The same union with the customer branch as an inner join, which is the
/// form the union-table lattice of the running example is computed on.
pub const UNION_INNER_SQL: &str = "SELECT * FROM ((SELECT c_name AS name, c_phone AS phone FROM orders, customer WHERE c_custkey = o_custkey AND c_acctbal <= 10000) UNION ALL (SELECT s_name AS name, s_phone AS phone FROM supplier WHERE s_suppkey IN (SELECT l_suppkey FROM lineitem, orders WHERE l_orderkey = o_orderkey AND s_acctbal <= o_totalprice AND l_commitdate = l_receiptdate AND l_shipmode IN ('AIR','TRUCK')))) AS people GROUP BY name, phone";

/// Seed query for the running example as XRE would ideally report it.
pub const UNION_SEED_SQL: &str = "(SELECT c_name AS name, c_phone as phone FROM customer, orders WHERE c_custkey = o_custkey AND (c_acctbal <= 10000.00 OR o_orderkey IS NULL) GROUP BY c_name, c_phone) UNION ALL (SELECT s_name AS name, s_phone as phone FROM lineitem, orders, supplier WHERE l_orderkey = o_orderkey AND s_suppkey = l_suppkey AND s_acctbal <= o_totalprice AND l_commitdate = l_receiptdate AND l_shipmode IN ('AIR','TRUCK') GROUP BY s_name, s_phone)";

/// Final nested query for the running example.
pub const UNION_FINAL_SQL: &str = "SELECT name, phone FROM ((SELECT c_name AS name, c_phone AS phone FROM customer c LEFT JOIN orders o ON c.c_custkey = o.o_custkey WHERE (c.c_acctbal <= 10000.00 OR o.o_orderkey IS NULL)) UNION ALL (SELECT s_name AS name, s_phone AS phone FROM supplier s WHERE s.s_suppkey IN (SELECT l_suppkey FROM lineitem l JOIN orders o ON l.l_orderkey = o.o_orderkey WHERE s.s_acctbal <= o.o_totalprice AND l.l_commitdate = l.l_receiptdate AND l.l_shipmode IN ('AIR','TRUCK')))) as customer_supplier GROUP BY name, phone";

/// Business description of the running example (prompt slot value).
pub const UNION_DESCRIPTION: &str = "List the names and phone numbers of customers and suppliers with low balance. For customers having orders, low balance is determined by a constant threshold whereas for suppliers, the threshold is determined by any order shipped using specified transport modes. Customers having no orders are also included in this list, irrespective of their balance.";

/// Semi-join over a two-table inner block; a stalled reply keeps
/// partsupp in the outer block.
pub const Q2_STYLE_HIDDEN_SQL: &str = "SELECT s_name, s_acctbal FROM supplier, nation WHERE s_nationkey = n_nationkey AND s_suppkey IN (SELECT ps_suppkey FROM partsupp, part WHERE ps_partkey = p_partkey AND p_size >= 10)";
pub const Q2_STYLE_STALL_SQL: &str = "SELECT s_name, s_acctbal FROM supplier, nation, partsupp WHERE s_nationkey = n_nationkey AND ps_suppkey = s_suppkey AND ps_partkey IN (SELECT p_partkey FROM part WHERE p_size >= 10)";

/// Two-level aggregation whose inner block groups on an extra attribute;
/// the stalled reply drops it.
pub const Q13_STYLE_HIDDEN_SQL: &str = "SELECT c_count, COUNT(*) AS custdist FROM (SELECT c_custkey, o_orderstatus, COUNT(*) AS c_count FROM customer, orders WHERE c_custkey = o_custkey GROUP BY c_custkey, o_orderstatus) AS t GROUP BY c_count";
/// Flat seed of the two-level query as a seed extractor reports it: one
/// aggregated block over all grouping attributes.
pub const Q13_STYLE_SEED_SQL: &str =
    "SELECT COUNT(*) AS c_count, COUNT(*) AS custdist FROM customer, orders WHERE c_custkey = o_custkey GROUP BY c_custkey, o_orderstatus";
pub const Q13_STYLE_STALL_SQL: &str = "SELECT c_count, COUNT(*) AS custdist FROM (SELECT c_custkey, COUNT(*) AS c_count FROM customer, orders WHERE c_custkey = o_custkey GROUP BY c_custkey) AS t GROUP BY c_count";

pub fn domain_specs() -> BTreeMap<String, DomainSpec> {
    serde_json::from_str(DOMAINS_JSON).expect("bundled domain sidecar parses")
}

/// The bundled catalog with its domain sidecar applied.
pub fn catalog() -> SchemaCatalog {
    let mut cat = crate::relcore::parse_ddl(SCHEMA_DDL).expect("bundled schema parses");
    cat.apply_domains(&domain_specs()).expect("bundled domains apply");
    cat
}

fn load(files: &[(&str, &str)]) -> DatabaseState {
    let mut db = DatabaseState::new(catalog());
    for (t, text) in files {
        parse_table_csv(&mut db, t, text).expect("bundled csv parses");
    }
    db.assert_null_free().expect("bundled instance is NULL-free");
    db
}

/// Eight-row customer/orders instance for the single-block example.
pub fn q0_instance() -> DatabaseState {
    load(Q0_CSV)
}

/// Instance hosting the union running example.
pub fn union_instance() -> DatabaseState {
    load(UNION_CSV)
}

/// The minimized instance of the running example's supplier branch: one
/// row each of lineitem, orders and supplier, everything else empty.
pub fn one_row_instance() -> DatabaseState {
    let full = union_instance();
    let mut db = DatabaseState::new(catalog());
    for t in ["lineitem", "orders", "supplier"] {
        let row = full.rows(t).expect("bundled table")[0].clone();
        db.load_rows(t, vec![row]).expect("row fits its schema");
    }
    db
}

/// Bundled instances by name, for the CLI and examples.
pub fn instance(name: &str) -> Option<DatabaseState> {
    match name {
        "q0" => Some(q0_instance()),
        "union" => Some(union_instance()),
        "one-row" => Some(one_row_instance()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_assets_load() {
        let db = union_instance();
        assert_eq!(db.row_count("supplier"), 5);
        assert_eq!(q0_instance().total_rows(), 8);
        assert_eq!(db.catalog().tables.len(), 8);
    }

    #[test]
    fn one_row_instance_holds_the_pinned_values() {
        let db = one_row_instance();
        assert_eq!(db.total_rows(), 3);
        let o = db.schema("orders").unwrap();
        let v = &db.rows("orders").unwrap()[0];
        assert_eq!(v[o.column_index("o_totalprice").unwrap()].to_string(), "150971.81");
        assert_eq!(v[o.column_index("o_orderkey").unwrap()].to_string(), "2739811");
    }
}
