//! The union running example through refinement, starting from a seed
//! whose customer branch keeps its join with orders.

use hqe::minisql::{canonical_digest, execute, parse_sql};
use hqe::oracle::OracleHandle;
use hqe::tpch;
use hqe::xfe::{prompt_bundle, run_xfe, MockClient, XfeConfig, XfeOutcome};
use hqe::xre::{extract_seed, XreConfig};

fn transcript() -> MockClient {
    MockClient::load(&std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/union/transcript.jsonl")).unwrap()
}

#[test]
fn scripted_transcript_reaches_the_nested_query_in_three_rounds() {
    let db = tpch::union_instance();
    let mut h = OracleHandle::embedded(tpch::UNION_HIDDEN_SQL).unwrap();
    let r_h = h.invoke(&db).unwrap();
    let seed = parse_sql(tpch::UNION_SEED_SQL).unwrap();
    let bundle = prompt_bundle(tpch::UNION_DESCRIPTION, tpch::SCHEMA_DDL, &seed, &r_h, &db).unwrap();
    assert!(bundle.r_s != bundle.r_h);
    let rep = run_xfe(&mut transcript(), &db, &seed, &r_h, &bundle, &XfeConfig::default()).unwrap();
    assert!(matches!(rep.outcome, XfeOutcome::Llm { .. }), "{:?}", rep.outcome);
    assert_eq!(rep.refine.sequence(), vec!["IP", "CCP", "RCP.v1"]);
    let q = rep.query.unwrap();
    assert_eq!(canonical_digest(&q), canonical_digest(&parse_sql(tpch::UNION_FINAL_SQL).unwrap()));
    assert!(execute(&q, &db).unwrap().bag_eq(&r_h));
    // the initial prompt carries the description and both cardinalities
    let ip = &rep.refine.rounds[0].prompt;
    assert!(ip.contains("Customers having no orders"));
    assert!(ip.contains(&r_h.len().to_string()));
    assert!(rep.refine.rounds[1].prompt.contains("Fix its SELECT clause as per Q_S"));
}

#[test]
fn extracted_seed_of_the_outer_join_form_drops_orders_from_the_customer_branch() {
    // with the customer branch as an outer join, voiding orders keeps it
    // alive, so the branch is extracted over customer alone and the final
    // query's customer/orders join is outside the seed
    let mut db = tpch::union_instance();
    let mut h = OracleHandle::embedded(tpch::UNION_HIDDEN_SQL).unwrap();
    let (seed, rep) = extract_seed(&mut h, &mut db, &XreConfig::default()).unwrap();
    assert_eq!(rep.branches.len(), 2);
    let customer = seed.branches.iter().find(|b| b.from.len() == 1).expect("single-table branch");
    assert_eq!(
        hqe::minisql::render_sql(&hqe::minisql::QueryIR::single(customer.clone())),
        "SELECT c_name AS name, c_phone AS phone FROM customer GROUP BY c_name, c_phone"
    );
    let r_h = h.invoke(&db).unwrap();
    let bundle = prompt_bundle(tpch::UNION_DESCRIPTION, tpch::SCHEMA_DDL, &seed, &r_h, &db).unwrap();
    let rep = run_xfe(&mut transcript(), &db, &seed, &r_h, &bundle, &XfeConfig::default()).unwrap();
    assert!(rep.refine.rounds.iter().skip(1).all(|r| r.kind.tag() == "CCP"));
    assert!(matches!(rep.outcome, XfeOutcome::Failure { .. }));
}

#[test]
fn inner_join_variant_extracts_to_its_flat_form() {
    let mut db = tpch::union_instance();
    let mut h = OracleHandle::embedded(tpch::UNION_INNER_SQL).unwrap();
    let (seed, rep) = extract_seed(&mut h, &mut db, &XreConfig::default()).unwrap();
    let tables: Vec<Vec<String>> = rep.family.from_set.iter().map(|s| s.iter().cloned().collect()).collect();
    assert!(tables.contains(&vec!["customer".to_string(), "orders".to_string()]));
    let r_h = h.invoke(&db).unwrap();
    assert!(execute(&seed, &db).unwrap().bag_eq(&r_h));
}
