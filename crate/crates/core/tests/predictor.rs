use ctx_core::predictor::{PredictionModel, SubjectPredictor};
use ctx_testkit::ngram;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALPHABET: [&str; 5] = ["A", "B", "C", "D", "E"];

fn random_sequence(rng: &mut ChaCha8Rng, symbols: usize, len: usize) -> Vec<String> {
    (0..len)
        .map(|_| ALPHABET[rng.gen_range(0..symbols)].to_string())
        .collect()
}

#[test]
fn matches_brute_force_counter_on_100_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    for case in 0..100 {
        let symbols = rng.gen_range(1..=5);
        let len = rng.gen_range(1..=50);
        let k = rng.gen_range(1..=3);
        let seq = random_sequence(&mut rng, symbols, len);
        let model = PredictionModel::train(&seq, k).unwrap();
        let mut probes: Vec<Vec<String>> = (0..=seq.len()).map(|i| seq[..i].to_vec()).collect();
        probes.push(random_sequence(&mut rng, 5, 4));
        probes.push(vec!["Z".into()]);
        for recent in probes {
            let got = model.predict(&recent).unwrap();
            let want = ngram::distribution(&seq, &recent, k);
            assert_eq!(got, want, "case {case}: seq {seq:?} k {k} recent {recent:?}");
            let total: f64 = got.iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() <= 1e-9);
            checked += 1;
        }
    }
    assert!(checked > 100);
}

#[test]
fn hand_counted_tables() {
    let m = PredictionModel::train(&["A", "B"], 1).unwrap();
    assert_eq!(m.counts().len(), 2);
    assert_eq!(m.counts()[&Vec::<String>::new()]["A"], 1);
    assert_eq!(m.counts()[&Vec::<String>::new()]["B"], 1);
    assert_eq!(m.counts()[&vec!["A".to_string()]]["B"], 1);
    let abab = PredictionModel::train(&["A", "B", "A", "B", "A"], 2).unwrap();
    assert_eq!(abab.predict(&["B", "A"]).unwrap(), vec![("B".to_string(), 1.0)]);
}

/// Next-symbol predictions along a periodic sequence, from step `from` on.
fn periodic_hits(period: &[&str], k: usize, from: usize, len: usize) -> (usize, usize) {
    let seq: Vec<String> = (0..len).map(|i| period[i % period.len()].to_string()).collect();
    let mut model = PredictionModel::new(k).unwrap();
    let (mut hits, mut total) = (0, 0);
    for i in 0..len {
        if i >= from {
            let p = model.predict(&seq[..i]).unwrap();
            total += 1;
            if p == vec![(seq[i].clone(), 1.0)] {
                hits += 1;
            }
        }
        model.update(&seq[i], &seq[..i]);
    }
    (hits, total)
}

#[test]
fn periodic_sequences_are_learned_after_one_period() {
    for k in 1..=3 {
        for p in 1..=k {
            let period = &ALPHABET[..p];
            let (hits, total) = periodic_hits(period, k, p + 1, 40);
            assert_eq!(hits, total, "distinct period {period:?} k {k}");
        }
    }
    for period in [&["A", "A", "B"][..], &["A", "B", "A"], &["B", "B"]] {
        let k = 3;
        let (hits, total) = periodic_hits(period, k, period.len() + k, 40);
        assert_eq!(hits, total, "period {period:?}");
    }
}

#[test]
fn subject_models_are_independent() {
    let mut p = SubjectPredictor::new(2).unwrap();
    for c in ["A", "B", "A", "B"] {
        p.observe("u", c);
    }
    for c in ["X", "Y", "X"] {
        p.observe("v", c);
    }
    assert_eq!(p.predict("u").unwrap(), vec![("A".to_string(), 1.0)]);
    assert_eq!(p.predict("v").unwrap(), vec![("Y".to_string(), 1.0)]);
    assert!(p.predict("w").is_err());
}

fn symbols() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(&ALPHABET[..]), 0..50)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

proptest! {
    #[test]
    fn update_equals_retraining(seq in symbols(), x in prop::sample::select(&ALPHABET[..]), k in 1usize..=4) {
        let mut m = PredictionModel::train(&seq, k).unwrap();
        m.update(x, &seq);
        let mut longer = seq.clone();
        longer.push(x.to_string());
        prop_assert_eq!(m, PredictionModel::train(&longer, k).unwrap());
    }

    #[test]
    fn counts_are_positive_and_suffix_closed(seq in symbols(), k in 1usize..=4) {
        let m = PredictionModel::train(&seq, k).unwrap();
        for (suffix, followers) in m.counts() {
            prop_assert!(suffix.len() <= k);
            prop_assert!(followers.values().all(|&c| c >= 1));
            if !suffix.is_empty() {
                prop_assert!(m.counts().contains_key(&suffix[1..]));
            }
        }
        if !seq.is_empty() {
            prop_assert!(m.counts().contains_key(&Vec::<String>::new()));
        }
    }

    #[test]
    fn distributions_sum_to_one(seq in symbols(), recent in symbols(), k in 1usize..=3) {
        prop_assume!(!seq.is_empty());
        let m = PredictionModel::train(&seq, k).unwrap();
        let p = m.predict(&recent).unwrap();
        prop_assert!(p.iter().all(|(_, x)| *x > 0.0));
        prop_assert!((p.iter().map(|(_, x)| x).sum::<f64>() - 1.0).abs() <= 1e-9);
        for w in p.windows(2) {
            prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
        }
    }

    #[test]
    fn update_never_removes_counts(seq in symbols(), x in prop::sample::select(&ALPHABET[..])) {
        let before = PredictionModel::train(&seq, 3).unwrap();
        let mut after = before.clone();
        after.update(x, &seq);
        prop_assert_eq!(after.k(), 3);
        for (suffix, followers) in before.counts() {
            for (s, c) in followers {
                prop_assert!(after.counts()[suffix][s] >= *c);
            }
        }
    }
}
