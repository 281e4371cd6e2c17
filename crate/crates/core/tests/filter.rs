use std::collections::BTreeSet;

use ctx_core::filter::{parse_scenario, Action, CommType, RuleSet};
use ctx_testkit::filter::{decide, ORule};
use proptest::prelude::*;

const FIXTURES: [(&str, &str); 4] = [
    ("sleeping", include_str!("../../../fixtures/rules/sleeping.json")),
    (
        "coffee_precedence",
        include_str!("../../../fixtures/rules/coffee_precedence.json"),
    ),
    ("household", include_str!("../../../fixtures/rules/household.json")),
    ("kitchen", include_str!("../../../fixtures/kitchen/rules.json")),
];

fn oracle_rules(text: &str) -> Vec<ORule> {
    let v: serde_json::Value = serde_json::from_str(text).unwrap();
    v["rules"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| ORule {
            comm_type: r["comm_type"].as_str().unwrap().to_string(),
            context: r["context"].as_str().unwrap().to_string(),
            block: r["action"] == "block",
            priority: r["priority"].as_i64().unwrap(),
        })
        .collect()
}

#[test]
fn exhaustive_truth_table_matches_priority_scan() {
    let mut cases = 0;
    for (name, text) in FIXTURES {
        let rules = RuleSet::from_json(text).unwrap();
        let oracle = oracle_rules(text);
        let mut alphabet: Vec<String> = rules.contexts().into_iter().map(String::from).collect();
        alphabet.push("Unrelated".into());
        assert!(alphabet.len() <= 10, "{name}");
        for mask in 0u32..(1 << alphabet.len()) {
            let current: Vec<String> = alphabet
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, c)| c.clone())
                .collect();
            let set: BTreeSet<String> = current.iter().cloned().collect();
            for t in CommType::ALL {
                let got = rules.evaluate(&set, t);
                let want = decide(&oracle, &current, t.as_str());
                match want {
                    None => {
                        assert_eq!(got.action, Action::Allow, "{name} {t} {current:?}");
                        assert!(got.matched_rule.is_none(), "{name} {t} {current:?}");
                    }
                    Some(i) => {
                        let r = got.matched_rule.as_ref().expect("a rule matched");
                        assert_eq!(r.priority, oracle[i].priority, "{name} {t} {current:?}");
                        assert_eq!(got.action == Action::Block, oracle[i].block, "{name} {t} {current:?}");
                    }
                }
                cases += 1;
            }
        }
    }
    assert_eq!(cases, 3 * (4 + 4 + 1024 + 4));
}

#[test]
fn lower_priority_number_wins() {
    let rules = RuleSet::from_json(FIXTURES[1].1).unwrap();
    let coffee: BTreeSet<String> = ["MakingCoffee".to_string()].into();
    assert_eq!(rules.evaluate(&coffee, CommType::Call).action, Action::Allow);
    assert_eq!(rules.evaluate(&coffee, CommType::Sms).action, Action::Block);
}

#[test]
fn duplicate_priorities_are_rejected() {
    let text = r#"{"rules": [
        {"comm_type": "call", "context": "A", "action": "block", "priority": 1},
        {"comm_type": "sms", "context": "B", "action": "allow", "priority": 1}]}"#;
    assert!(RuleSet::from_json(text).is_err());
}

#[test]
fn kitchen_scenario_parses() {
    let events = parse_scenario(include_str!("../../../fixtures/kitchen/scenario.csv")).unwrap();
    let offsets: Vec<u64> = events.iter().map(|e| e.t_offset_ms).collect();
    assert_eq!(offsets, vec![0, 6000, 6500]);
    assert_eq!(events[1].comm_type, CommType::Call);
    assert!(parse_scenario("10,call,a\n5,sms,b\n").is_err());
    assert!(parse_scenario("0,fax,a\n").is_err());
}

proptest! {
    #[test]
    fn evaluate_is_pure(mask in 0u32..1024, t in 0usize..3) {
        let rules = RuleSet::from_json(FIXTURES[2].1).unwrap();
        let alphabet: Vec<&str> = rules.contexts().into_iter().collect();
        let set: BTreeSet<String> = alphabet
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, c)| c.to_string())
            .collect();
        let a = rules.evaluate(&set, CommType::ALL[t]);
        let b = rules.evaluate(&set, CommType::ALL[t]);
        prop_assert_eq!(a.matched_rule.is_none(), a.action == Action::Allow && a.explanation.contains("default"));
        prop_assert_eq!(a, b);
    }
}
