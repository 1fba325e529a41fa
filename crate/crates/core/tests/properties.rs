//! Invariants over randomly drawn instances and queries.

use hqe::checker::{gen_random_db, referential_violations, result_equivalent, CheckConfig, Hints, SizeProfile, Verdict};
use hqe::corpus::{corpus_instance, flat_suite};
use hqe::minisql::{execute, parse_sql, render_sql};
use hqe::oracle::OracleHandle;
use hqe::tpch;
use hqe::xre::{extract_seed, XreConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generated_instances_respect_foreign_keys(seed in any::<u64>()) {
        let db = gen_random_db(&tpch::catalog(), seed, &SizeProfile::small(), &Hints::default()).unwrap();
        prop_assert!(referential_violations(&db).is_empty());
    }

    #[test]
    fn a_query_is_equivalent_to_itself(seed in 0u64..1000, pick in 0usize..24) {
        let m = &hqe::checker::mutant_corpus()[pick];
        let mut h = OracleHandle::embedded(&m.original).unwrap();
        let q = parse_sql(&m.original).unwrap();
        let cfg = CheckConfig { seed, trials: 5, ..Default::default() };
        let v = result_equivalent(&mut h, &q, &tpch::catalog(), &cfg).unwrap();
        prop_assert!(matches!(v, Verdict::Pass { .. }), "{v:?}");
    }

    #[test]
    fn extracted_seeds_reproduce_flat_queries(db_seed in 0u64..50, q_seed in any::<u64>()) {
        let cat = tpch::catalog();
        let base = corpus_instance(&cat, db_seed);
        let q = flat_suite(&base, 1, q_seed).remove(0);
        let mut h = OracleHandle::embedded(&q.sql).unwrap();
        let mut db = base.clone();
        let (seed, _) = extract_seed(&mut h, &mut db, &XreConfig::default()).unwrap();
        let want = execute(&parse_sql(&q.sql).unwrap(), &base).unwrap();
        prop_assert!(execute(&seed, &base).unwrap().bag_eq(&want), "{} vs {}", q.sql, render_sql(&seed));
        // extraction leaves the instance as it found it
        prop_assert_eq!(db.total_rows(), base.total_rows());
    }

    #[test]
    fn rendered_seeds_parse_back(q_seed in any::<u64>()) {
        let base = corpus_instance(&tpch::catalog(), 3);
        let q = flat_suite(&base, 1, q_seed).remove(0);
        let ir = parse_sql(&q.sql).unwrap();
        let again = parse_sql(&render_sql(&ir)).unwrap();
        prop_assert_eq!(render_sql(&ir), render_sql(&again));
    }
}
