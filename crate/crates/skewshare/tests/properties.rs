//! Property tests for the structural invariants of the decomposition,
//! the dominance relation and the data formats.

use std::collections::BTreeSet;

use proptest::prelude::*;

use skewshare::data::{parse_tsv, to_tsv, RelationInstance, Tuple};
use skewshare::decompose::{
    enumerate_combinations, tuple_matches, type_sets, DEFAULT_COMBINATION_CAP,
};
use skewshare::hh::{detect_heavy_hitters, HeavyHitterReport, HeavyHitterValue};
use skewshare::query::{Attribute, JoinQuery, RelationSchema};

fn running_example() -> JoinQuery {
    JoinQuery::parse("R(A,B); S(B,E,C); T(C,D)").unwrap()
}

/// Value pool small enough that heavy hitters and collisions happen.
fn arb_value() -> impl Strategy<Value = String> {
    (0u8..12).prop_map(|v| format!("v{v}"))
}

fn arb_tuple(arity: usize) -> impl Strategy<Value = Vec<String>> {
    proptest::collection::vec(arb_value(), arity)
}

/// A report marking a random subset of the value pool heavy per attribute.
fn arb_report(q: &JoinQuery) -> impl Strategy<Value = HeavyHitterReport> {
    let q = q.clone();
    proptest::collection::vec(
        proptest::collection::vec(0u8..12, 0..3),
        q.attributes().len(),
    )
    .prop_map(move |per_attr| {
        let mut report = HeavyHitterReport::empty(&q, 0.2);
        for (entry, values) in report.attributes.iter_mut().zip(per_attr) {
            let dedup: BTreeSet<u8> = values.into_iter().collect();
            entry.values = dedup
                .into_iter()
                .map(|v| HeavyHitterValue {
                    value: format!("v{v}"),
                    counts: vec![],
                })
                .collect();
        }
        report
    })
}

proptest! {
    /// Per relation: restricted to the relation's own attributes a tuple
    /// matches exactly one type assignment, and the number of matching
    /// combinations equals the product of the type-set sizes of the
    /// attributes the relation lacks.
    #[test]
    fn combination_matching_multiplicity(
        report in arb_report(&running_example()),
        rows in proptest::collection::vec(arb_tuple(3), 1..20),
    ) {
        let q = running_example();
        let ts = type_sets(&q, &report);
        let combos = enumerate_combinations(&ts, DEFAULT_COMBINATION_CAP).unwrap();
        let schema = &q.relations()[1]; // S(B,E,C)
        for row in &rows {
            let t = Tuple::new(row.clone());
            let matches = combos
                .iter()
                .filter(|c| tuple_matches(c, &ts, schema, &t))
                .count() as u128;
            let expected: u128 = q
                .attributes()
                .iter()
                .filter(|a| !schema.contains(a))
                .map(|a| ts.types_of(a).len() as u128)
                .product();
            prop_assert_eq!(matches, expected);
        }
    }

    /// A full attribute assignment (a joined result row) matches exactly
    /// one combination.
    #[test]
    fn full_row_matches_exactly_one_combination(
        report in arb_report(&running_example()),
        row in arb_tuple(5),
    ) {
        let q = running_example();
        let ts = type_sets(&q, &report);
        let combos = enumerate_combinations(&ts, DEFAULT_COMBINATION_CAP).unwrap();
        let full = RelationSchema::new("Full", q.attributes().to_vec()).unwrap();
        let t = Tuple::new(row);
        let matches = combos
            .iter()
            .filter(|c| tuple_matches(c, &ts, &full, &t))
            .count();
        prop_assert_eq!(matches, 1);
    }

    /// Survivors of the dominance pass form an antichain: no survivor's
    /// relation set is contained in another's.
    #[test]
    fn dominance_survivors_form_antichain(mask in 1u8..32) {
        let q = running_example();
        let eligible: BTreeSet<Attribute> = q
            .attributes()
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, a)| a.clone())
            .collect();
        let dominated = q.dominated_attributes(&eligible).unwrap();
        let survivors: Vec<&Attribute> =
            eligible.iter().filter(|a| !dominated.contains(a)).collect();
        for a in &survivors {
            for b in &survivors {
                if a != b {
                    let ra = q.relations_containing(a).unwrap();
                    let rb = q.relations_containing(b).unwrap();
                    prop_assert!(!ra.is_subset(&rb), "{a} subsumed by {b}");
                }
            }
        }
        // deterministic
        prop_assert_eq!(dominated, q.dominated_attributes(&eligible).unwrap());
    }

    /// Lowering the threshold never removes a reported value.
    #[test]
    fn detection_monotone_in_threshold(
        rows_r in proptest::collection::vec(arb_tuple(2), 1..30),
        rows_s in proptest::collection::vec(arb_tuple(2), 1..30),
        lo in 0.05f64..0.5,
        delta in 0.01f64..0.5,
    ) {
        let q = JoinQuery::parse("R(A,B); S(B,C)").unwrap();
        let db = vec![
            RelationInstance::new(
                q.relations()[0].clone(),
                rows_r.into_iter().map(Tuple::new).collect(),
            )
            .unwrap(),
            RelationInstance::new(
                q.relations()[1].clone(),
                rows_s.into_iter().map(Tuple::new).collect(),
            )
            .unwrap(),
        ];
        let hi_report = detect_heavy_hitters(&db, &q, lo + delta).unwrap();
        let lo_report = detect_heavy_hitters(&db, &q, lo).unwrap();
        for entry in &hi_report.attributes {
            for v in &entry.values {
                prop_assert!(
                    lo_report
                        .values_for(&entry.attribute)
                        .iter()
                        .any(|w| w.value == v.value),
                    "{}={} vanished when lowering the threshold",
                    entry.attribute,
                    v.value
                );
            }
        }
    }

    /// On any schema, a variable appears in a relation's cost term iff
    /// the relation lacks that attribute.
    #[test]
    fn base_expression_membership_on_random_schemas(
        masks in proptest::collection::vec(1u8..63, 2..5),
    ) {
        let pool: Vec<Attribute> =
            ["A", "B", "C", "D", "E", "F"].iter().map(|n| Attribute::from(*n)).collect();
        let relations: Vec<RelationSchema> = masks
            .iter()
            .enumerate()
            .map(|(i, mask)| {
                let attrs: Vec<Attribute> = pool
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| mask & (1 << j) != 0)
                    .map(|(_, a)| a.clone())
                    .collect();
                RelationSchema::new(format!("N{i}"), attrs).unwrap()
            })
            .collect();
        let q = JoinQuery::new(relations).unwrap();
        let expr = skewshare::cost::base_cost_expression(&q);
        for (term, schema) in expr.terms.iter().zip(q.relations()) {
            for a in q.attributes() {
                prop_assert_eq!(term.variables.contains(a), !schema.contains(a));
            }
        }
    }

    /// TSV round-trips any instance whose values avoid tabs and newlines.
    #[test]
    fn tsv_round_trip(rows in proptest::collection::vec(arb_tuple(3), 0..25)) {
        let q = running_example();
        let schema = &q.relations()[1];
        let inst = RelationInstance::new(
            schema.clone(),
            rows.into_iter().map(Tuple::new).collect(),
        )
        .unwrap();
        let parsed = parse_tsv(schema, &to_tsv(&inst), "S.tsv").unwrap();
        prop_assert_eq!(parsed, inst);
    }
}
