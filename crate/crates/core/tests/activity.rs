use ctx_core::activity::{
    accuracy, extract_features, load_corpus, synthetic_windows, train, CentroidModel, FeatureVector, Window,
    SYNTHETIC_LABELS, WINDOW_LEN,
};
use proptest::prelude::*;

const WINDOWS: &str = include_str!("../../../fixtures/activity/windows.csv");
const MODEL: &str = include_str!("../../../fixtures/activity/model.json");

// Output of fixtures/activity/oracle.py on the fixture windows and model.
struct Expected {
    label: &'static str,
    features: [f64; 10],
    distances: [f64; 4],
    confidence: f64,
}

const ORACLE: [Expected; 4] = [
    Expected {
        label: "lying",
        features: [
            9.255485748846016,
            0.18369319584964272,
            1.856450981804276,
            0.063000307707978,
            0.06360115750592822,
            0.06591772769274193,
            0.04946011425495518,
            0.05217148147540396,
            0.05152183857742246,
            9.442075065534262,
        ],
        distances: [
            0.5476294661602921,
            3.9181466981711988,
            3.649888670044477,
            6.657799227729458,
        ],
        confidence: 0.8695349374582008,
    },
    Expected {
        label: "sitting",
        features: [
            0.6039109311148351,
            6.360120893959027,
            7.597465188277879,
            0.07813897141424506,
            0.08154174536124012,
            0.08059123288893044,
            0.06316351998621951,
            0.0644516549798201,
            0.06494234253866021,
            9.92726194845169,
        ],
        distances: [
            3.651061023164155,
            0.13597977507461834,
            2.782297819340023,
            6.172065581262649,
        ],
        confidence: 0.9534040985905956,
    },
    Expected {
        label: "standing",
        features: [
            0.749488958797239,
            9.535796355303088,
            0.5200378963579758,
            0.08182927004190876,
            0.07641165057356324,
            0.08572351310410517,
            0.0681276232783642,
            0.05817302533809439,
            0.0672939063944949,
            9.580060509919727,
        ],
        distances: [
            3.372485439435635,
            3.044042604872876,
            0.4772055670010539,
            5.626927511177246,
        ],
        confidence: 0.8644782918702673,
    },
    Expected {
        label: "walking",
        features: [
            0.876110321777045,
            9.650621406965726,
            1.441429205037679,
            1.0089559174956337,
            2.309153874435576,
            0.8497575483629294,
            0.8767339035592698,
            2.0408217613215367,
            0.731187183479097,
            9.849840441777795,
        ],
        distances: [
            6.580017821699956,
            6.056707505531893,
            5.548462794414396,
            0.6420373759813348,
        ],
        confidence: 0.896286671785958,
    },
];

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn fixture() -> (CentroidModel, Vec<(String, Window)>) {
    let model = CentroidModel::from_json(MODEL).unwrap();
    let windows = load_corpus(WINDOWS.as_bytes()).unwrap();
    (model, windows)
}

#[test]
fn fixture_windows_match_oracle() {
    let (model, windows) = fixture();
    assert_eq!(windows.len(), ORACLE.len());
    for ((label, w), want) in windows.iter().zip(ORACLE.iter()) {
        assert_eq!(label, want.label);
        let f = extract_features(w);
        for (i, (got, exp)) in f.0.iter().zip(want.features).enumerate() {
            assert!(close(*got, exp), "{label} feature {i}: {got} vs {exp}");
        }
        for (got, exp) in model.distances(&f).iter().zip(want.distances) {
            assert!(close(*got, exp), "{label} distance: {got} vs {exp}");
        }
        let (predicted, confidence) = model.classify(w);
        assert_eq!(predicted, want.label);
        assert!(
            close(confidence, want.confidence),
            "{label}: {confidence} vs {}",
            want.confidence
        );
    }
}

#[test]
fn held_out_accuracy() {
    let model = train(&synthetic_windows(7, 10, 640)).unwrap();
    let test = synthetic_windows(1007, 10, 640);
    let acc = accuracy(&model, &test);
    assert!(acc >= 0.95, "accuracy {acc}");
}

#[test]
fn fixture_model_is_the_trained_one() {
    let model = train(&synthetic_windows(7, 10, 640)).unwrap();
    let stored = CentroidModel::from_json(MODEL).unwrap();
    assert_eq!(model.labels, stored.labels);
    for (a, b) in model.centroids.iter().zip(&stored.centroids) {
        for (x, y) in a.iter().zip(b) {
            assert!(close(*x, *y));
        }
    }
}

#[test]
fn centroid_window_has_full_confidence() {
    let (model, _) = fixture();
    let f = FeatureVector(model.centroids[1]);
    let (label, confidence) = model.classify_features(&f);
    assert_eq!(label, model.labels[1]);
    assert_eq!(confidence, 1.0);
}

#[test]
fn equidistant_centroids_pick_smaller_label() {
    let model = CentroidModel {
        labels: vec!["a".into(), "b".into()],
        centroids: vec![[0.0; 10], [2.0; 10]],
        scales: [1.0; 10],
    };
    let (label, confidence) = model.classify_features(&FeatureVector([1.0; 10]));
    assert_eq!(label, "a");
    assert_eq!(confidence, 0.5);
}

fn trained() -> CentroidModel {
    train(&synthetic_windows(7, 4, 320)).unwrap()
}

fn scaled(w: &Window, c: f64) -> Window {
    Window::new(w.samples().iter().map(|s| s.map(|x| x * c)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn uniform_scaling_keeps_labels(c in 0.05f64..20.0, seed in 0u64..1000, pick in 0usize..16) {
        let train_set = synthetic_windows(7, 4, 320);
        let model = train(&train_set).unwrap();
        let rescaled: Vec<(String, Window)> = train_set.iter().map(|(l, w)| (l.clone(), scaled(w, c))).collect();
        let model_c = train(&rescaled).unwrap();
        let queries = synthetic_windows(seed, 1, 320);
        let (_, q) = &queries[pick % queries.len()];
        prop_assert_eq!(model.classify(q).0, model_c.classify(&scaled(q, c)).0);
    }

    #[test]
    fn sample_order_does_not_change_moments(seed in 0u64..1000, shuffle in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let windows = synthetic_windows(seed, 1, WINDOW_LEN);
        let (_, w) = &windows[(shuffle % windows.len() as u64) as usize];
        let mut samples = w.samples().to_vec();
        samples.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle));
        let a = extract_features(w);
        let b = extract_features(&Window::new(samples).unwrap());
        for i in 0..10 {
            prop_assert!((a.0[i] - b.0[i]).abs() <= 1e-9 * a.0[i].abs().max(1.0), "feature {}", i);
        }
    }

    #[test]
    fn confidence_is_bounded(samples in prop::collection::vec(prop::array::uniform3(-20.0f64..20.0), WINDOW_LEN)) {
        let model = trained();
        let w = Window::new(samples).unwrap();
        let f = extract_features(&w);
        prop_assert!(f.0.iter().all(|x| x.is_finite()));
        prop_assert!(f.0[3..9].iter().all(|x| *x >= 0.0));
        let (label, confidence) = model.classify(&w);
        prop_assert!(SYNTHETIC_LABELS.contains(&label.as_str()));
        prop_assert!((0.5..=1.0).contains(&confidence), "confidence {}", confidence);
    }
}
