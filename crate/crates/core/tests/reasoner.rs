use std::collections::BTreeSet;

use ctx_core::ontology::{
    normalize, parse_ontology, realize, saturate, Ontology, OntologyError, Reasoner, SaturationConfig,
};
use ctx_testkit::el::{parse_ctx, GenParams, OOntology};
use proptest::prelude::*;

const KITCHEN: &str = include_str!("../../../fixtures/kitchen.ctx");

fn named_pairs(o: &Ontology) -> BTreeSet<(String, String)> {
    saturate(&normalize(o))
        .unwrap()
        .named_subsumptions()
        .into_iter()
        .collect()
}

#[test]
fn kitchen_fixture_counts() {
    let o = parse_ontology(KITCHEN).unwrap();
    assert_eq!(o.vocab.class_count(), 9);
    assert_eq!(o.vocab.role_count(), 3);
    assert_eq!(o.vocab.individual_count(), 4);
    assert_eq!(o.gci_count(), 6);
    assert_eq!(o.abox.len(), 5);
}

#[test]
fn kitchen_realization_matches_oracle() {
    let o = parse_ontology(KITCHEN).unwrap();
    let r = realize(&o).unwrap();
    assert_eq!(r.pairs(), parse_ctx(KITCHEN).realization());
    assert_eq!(r.types("u").unwrap(), vec!["Person", "MakingCoffee"]);
    assert_eq!(r.instances_of("MakingCoffee").unwrap(), vec!["u"]);
    assert!(r.instances_of("LocatedKitchen").unwrap().is_empty());
    assert!(r.types("v").unwrap().is_empty());
}

#[test]
fn kitchen_retraction_matches_oracle() {
    let o = parse_ontology(KITCHEN).unwrap();
    let reasoner = Reasoner::new(&o).unwrap();
    let fact = o.fact_assertion("observes", "u", "m1").unwrap();
    let reduced = o.apply_abox_delta([], [fact.clone()]).unwrap();
    let r = reasoner.realize(&reduced).unwrap();
    assert!(r.instances_of("MakingCoffee").unwrap().is_empty());

    let text = reduced.to_text();
    assert!(!text.contains("Fact: observes, u, m1"));
    assert_eq!(r.pairs(), parse_ctx(&text).realization());

    let restored = reduced.apply_abox_delta([fact], []).unwrap();
    assert_eq!(restored, o);
}

#[test]
fn abox_delta_set_semantics() {
    let o = parse_ontology(KITCHEN).unwrap();
    let present = o.type_assertion("u", "Person").unwrap();
    assert_eq!(o.apply_abox_delta([present], []).unwrap(), o);
    let absent = o.type_assertion("v", "Person").unwrap();
    assert_eq!(o.apply_abox_delta([], [absent]).unwrap(), o);
    assert!(matches!(
        o.type_assertion("nobody", "Person"),
        Err(OntologyError::UnknownName(_))
    ));
}

#[test]
fn kitchen_tbox_encoding_class_gets_making_coffee() {
    // The individual's encoding class, written out as an ordinary class.
    let src = format!(
        "{KITCHEN}\nClass: User1\nSubClassOf: User1, and(Person, some(locatedIn, Kitchen), some(observes, CoffeeMachineOn))"
    );
    let o = parse_ontology(&src).unwrap();
    let s = saturate(&normalize(&o)).unwrap();
    assert!(s.is_subsumed("User1", "MakingCoffee").unwrap());
    assert_eq!(named_pairs(&o), parse_ctx(&src).subsumptions());
}

#[test]
fn normalization_example_is_conservative() {
    let src = "Class: A\nClass: B\nClass: C\nRole: r\nSubClassOf: A, some(r, and(B, C))";
    let o = parse_ontology(src).unwrap();
    assert_eq!(named_pairs(&o), parse_ctx(src).subsumptions());
}

#[test]
fn resource_limit_surfaces_from_realize() {
    let o = parse_ontology(KITCHEN).unwrap();
    let err = Reasoner::with_config(&o, SaturationConfig { max_facts: 5 }).unwrap_err();
    assert!(matches!(err, OntologyError::ResourceLimit { limit: 5, .. }));
}

#[test]
fn random_ontologies_match_oracle() {
    for seed in 0..60 {
        let oo = OOntology::random(seed, GenParams::default());
        let o = parse_ontology(&oo.to_text()).unwrap();
        assert_eq!(named_pairs(&o), oo.subsumptions(), "seed {seed}\n{}", oo.to_text());
    }
}

#[test]
fn random_realizations_match_oracle() {
    let p = GenParams {
        max_classes: 8,
        max_roles: 3,
        max_axioms: 15,
        max_depth: 2,
        max_individuals: 4,
        max_assertions: 8,
    };
    for seed in 0..60 {
        let oo = OOntology::random(1000 + seed, p);
        let o = parse_ontology(&oo.to_text()).unwrap();
        assert_eq!(
            realize(&o).unwrap().pairs(),
            oo.realization(),
            "seed {seed}\n{}",
            oo.to_text()
        );
    }
}

fn small() -> GenParams {
    GenParams {
        max_classes: 8,
        max_roles: 3,
        max_axioms: 20,
        max_depth: 3,
        max_individuals: 3,
        max_assertions: 6,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn saturation_is_a_reflexive_fixpoint(seed in any::<u64>()) {
        let oo = OOntology::random(seed, GenParams::default());
        let o = parse_ontology(&oo.to_text()).unwrap();
        let s = saturate(&normalize(&o)).unwrap();
        prop_assert!(s.is_fixpoint());
        for (_, name) in o.vocab.classes() {
            prop_assert!(s.is_subsumed(name, name).unwrap());
            prop_assert!(s.is_subsumed(name, "Top").unwrap());
        }
    }

    #[test]
    fn subsumption_is_monotone(seed in any::<u64>(), split in 0usize..40) {
        let oo = OOntology::random(seed, GenParams::default());
        let mut smaller = oo.clone();
        smaller.gcis.truncate(split.min(oo.gcis.len()));
        let big = named_pairs(&parse_ontology(&oo.to_text()).unwrap());
        let little = named_pairs(&parse_ontology(&smaller.to_text()).unwrap());
        prop_assert!(little.is_subset(&big));
    }

    #[test]
    fn realization_is_monotone_in_the_abox(seed in any::<u64>(), keep in 0usize..6) {
        let oo = OOntology::random(seed, small());
        let mut fewer = oo.clone();
        fewer.types.truncate(keep);
        fewer.facts.truncate(keep);
        let all = realize(&parse_ontology(&oo.to_text()).unwrap()).unwrap().pairs();
        let some = realize(&parse_ontology(&fewer.to_text()).unwrap()).unwrap().pairs();
        prop_assert!(some.is_subset(&all));
    }

    #[test]
    fn parse_serialize_round_trip(seed in any::<u64>()) {
        let oo = OOntology::random(seed, small());
        let once = parse_ontology(&oo.to_text()).unwrap();
        let twice = parse_ontology(&once.to_text()).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(once.to_text(), twice.to_text());
    }

    #[test]
    fn cached_tbox_realization_equals_fresh(seed in any::<u64>(), keep in 0usize..6) {
        let oo = OOntology::random(seed, small());
        let o = parse_ontology(&oo.to_text()).unwrap();
        let mut fewer = oo.clone();
        fewer.types.truncate(keep);
        let reduced = parse_ontology(&fewer.to_text()).unwrap();
        let cached = Reasoner::new(&o).unwrap().realize(&reduced).unwrap().pairs();
        prop_assert_eq!(cached, realize(&reduced).unwrap().pairs());
    }
}

#[test]
fn fixture_round_trips() {
    let once = parse_ontology(KITCHEN).unwrap();
    assert_eq!(parse_ontology(&once.to_text()).unwrap(), once);
}
