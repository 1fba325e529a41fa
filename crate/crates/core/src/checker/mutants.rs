//! Engineered single-fault mutants of corpus queries. Each must be told
//! apart from its original by the checker.

use serde::Serialize;

use crate::tpch;

#[derive(Clone, Debug, Serialize)]
pub struct Mutant {
    pub name: &'static str,
    pub class: &'static str,
    pub original: String,
    pub mutant: String,
}

const Q_AGG: &str =
    "SELECT o_orderpriority, COUNT(*) AS n, SUM(o_totalprice) AS total FROM orders WHERE o_orderdate >= DATE '1995-01-01' GROUP BY o_orderpriority";
const Q_IN: &str = "SELECT l_orderkey, l_quantity FROM lineitem WHERE l_shipmode IN ('AIR', 'MAIL', 'SHIP') AND l_quantity <= 20";
const Q_SEMI: &str =
    "SELECT s_name, s_phone FROM supplier WHERE s_suppkey IN (SELECT ps_suppkey FROM partsupp, part WHERE ps_partkey = p_partkey AND p_size <= 20)";
const Q_TOP: &str = "SELECT c_name, c_acctbal FROM customer ORDER BY c_acctbal DESC LIMIT 5";
const Q_LIKE: &str = "SELECT p_name, p_size FROM part WHERE p_name LIKE '%ivory%'";
const Q_LOJ: &str = "SELECT c_name, o_orderkey FROM customer LEFT OUTER JOIN orders ON c_custkey = o_custkey WHERE c_mktsegment = 'BUILDING'";

fn m(name: &'static str, class: &'static str, original: &str, from: &str, to: &str) -> Mutant {
    assert!(original.contains(from), "{name}: '{from}' not in original");
    Mutant { name, class, original: original.to_string(), mutant: original.replacen(from, to, 1) }
}

pub fn mutant_corpus() -> Vec<Mutant> {
    let union_sql = tpch::UNION_HIDDEN_SQL;
    let branch2 = union_sql.find(" UNION ALL ").expect("union");
    let close = union_sql.find(") AS people").expect("derived alias");
    vec![
        m("union-bound-9000", "bound shift", union_sql, "c_acctbal <= 10000", "c_acctbal <= 9000.00"),
        m("union-bound-op", "bound shift", union_sql, "c_acctbal <= 10000", "c_acctbal >= 10000"),
        Mutant {
            name: "union-drop-branch2",
            class: "dropped branch",
            original: union_sql.into(),
            mutant: format!("{}{}", &union_sql[..branch2], &union_sql[close..]),
        },
        Mutant {
            name: "union-drop-branch1",
            class: "dropped branch",
            original: union_sql.into(),
            mutant: format!("SELECT * FROM ({}{}", &union_sql[branch2 + " UNION ALL ".len()..close], &union_sql[close..]),
        },
        m("union-inner-join", "join-type swap", union_sql, "LEFT OUTER JOIN", "JOIN"),
        m("union-drop-truck", "literal removal", union_sql, "('AIR','TRUCK')", "('AIR')"),
        m("union-drop-air", "literal removal", union_sql, "('AIR','TRUCK')", "('TRUCK')"),
        m("union-drop-null-arm", "predicate removal", union_sql, " OR o_orderkey IS NULL", ""),
        m("union-alg-flip", "operator change", union_sql, "s_acctbal <= o_totalprice", "s_acctbal >= o_totalprice"),
        m("union-drop-date-eq", "predicate removal", union_sql, " AND l_commitdate = l_receiptdate", ""),
        m("q0-bound-9000", "bound shift", tpch::Q0_SQL, "10000", "9000"),
        m(
            "q0-left-join",
            "join-type swap",
            tpch::Q0_SQL,
            "FROM customer, orders WHERE c_custkey = o_custkey AND",
            "FROM customer LEFT OUTER JOIN orders ON c_custkey = o_custkey WHERE",
        ),
        m("agg-date-shift", "bound shift", Q_AGG, "1995-01-01", "1995-07-01"),
        m("agg-sum-to-max", "aggregate swap", Q_AGG, "SUM(", "MAX("),
        m("in-drop-mail", "literal removal", Q_IN, "'AIR', 'MAIL', 'SHIP'", "'AIR', 'SHIP'"),
        m("in-drop-ship", "literal removal", Q_IN, "'AIR', 'MAIL', 'SHIP'", "'AIR', 'MAIL'"),
        m("in-qty-shift", "bound shift", Q_IN, "l_quantity <= 20", "l_quantity <= 25"),
        m(
            "semi-to-equi",
            "join-type swap",
            Q_SEMI,
            "FROM supplier WHERE s_suppkey IN (SELECT ps_suppkey FROM partsupp, part WHERE ps_partkey = p_partkey AND p_size <= 20)",
            "FROM supplier, partsupp, part WHERE s_suppkey = ps_suppkey AND ps_partkey = p_partkey AND p_size <= 20",
        ),
        m("semi-size-shift", "bound shift", Q_SEMI, "p_size <= 20", "p_size <= 10"),
        m("top-limit", "limit change", Q_TOP, "LIMIT 5", "LIMIT 4"),
        m("top-order", "order change", Q_TOP, "DESC LIMIT", "LIMIT"),
        m("like-prefix", "pattern change", Q_LIKE, "'%ivory%'", "'ivory%'"),
        m("loj-inner", "join-type swap", Q_LOJ, "LEFT OUTER JOIN", "JOIN"),
        m("loj-segment", "literal change", Q_LOJ, "'BUILDING'", "'MACHINERY'"),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minisql::parse_sql;

    #[test]
    fn corpus_parses_and_differs() {
        let c = mutant_corpus();
        assert!(c.len() >= 20);
        for x in &c {
            let a = parse_sql(&x.original).unwrap_or_else(|e| panic!("{}: {e}", x.name));
            let b = parse_sql(&x.mutant).unwrap_or_else(|e| panic!("{}: {e}: {}", x.name, x.mutant));
            assert_ne!(a, b, "{}", x.name);
        }
    }
}
