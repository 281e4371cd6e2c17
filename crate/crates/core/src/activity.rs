//! Activity recognition from 3-axis accelerometer windows with a
//! nearest-centroid model.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const WINDOW_LEN: usize = 128;
pub const HOP: usize = WINDOW_LEN / 2;
pub const SAMPLE_RATE_HZ: f64 = 20.0;
pub const FEATURES: usize = 10;
pub const SCALE_FLOOR: f64 = 1e-6;

pub type Sample = [f64; 3];

#[derive(Debug, Error)]
pub enum ActivityError {
    #[error("a window needs exactly {WINDOW_LEN} samples, got {0}")]
    WindowLength(usize),
    #[error("training needs at least 2 labels with at least one window each, got {0} label(s)")]
    InsufficientData(usize),
    #[error("corpus line {line}: {detail}")]
    Corpus { line: usize, detail: String },
    #[error("invalid model: {0}")]
    Model(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Window(Vec<Sample>);

impl Window {
    pub fn new(samples: Vec<Sample>) -> Result<Self, ActivityError> {
        if samples.len() != WINDOW_LEN {
            return Err(ActivityError::WindowLength(samples.len()));
        }
        Ok(Self(samples))
    }

    pub fn samples(&self) -> &[Sample] {
        &self.0
    }
}

/// Per-axis mean, population standard deviation and mean absolute deviation,
/// then mean magnitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURES]);

pub fn extract_features(window: &Window) -> FeatureVector {
    let s = window.samples();
    let n = s.len() as f64;
    let mut f = [0.0; FEATURES];
    for axis in 0..3 {
        let mean = mean_of(s.iter().map(|x| x[axis]));
        let var = s.iter().map(|x| (x[axis] - mean).powi(2)).sum::<f64>() / n;
        let mad = s.iter().map(|x| (x[axis] - mean).abs()).sum::<f64>() / n;
        f[axis] = mean;
        f[3 + axis] = var.sqrt();
        f[6 + axis] = mad;
    }
    f[9] = mean_of(s.iter().map(|x| (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()));
    FeatureVector(f)
}

/// Mean with one correction pass, so constant inputs come out exact.
fn mean_of(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    let m = xs.clone().sum::<f64>() / n;
    m + xs.map(|x| x - m).sum::<f64>() / n
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CentroidModel {
    pub labels: Vec<String>,
    pub centroids: Vec<[f64; FEATURES]>,
    pub scales: [f64; FEATURES],
}

/// Trains on labelled windows; labels come out sorted.
pub fn train(labeled: &[(String, Window)]) -> Result<CentroidModel, ActivityError> {
    let features: Vec<(&str, FeatureVector)> = labeled.iter().map(|(l, w)| (l.as_str(), extract_features(w))).collect();
    train_features(&features)
}

pub fn train_features(labeled: &[(&str, FeatureVector)]) -> Result<CentroidModel, ActivityError> {
    let mut groups: BTreeMap<&str, Vec<&FeatureVector>> = BTreeMap::new();
    for (l, f) in labeled {
        groups.entry(l).or_default().push(f);
    }
    if groups.len() < 2 {
        return Err(ActivityError::InsufficientData(groups.len()));
    }
    let labels = groups.keys().map(|l| l.to_string()).collect();
    let centroids = groups.values().map(|fs| mean_vector(fs.iter().copied())).collect();
    let all = mean_vector(labeled.iter().map(|(_, f)| f));
    let n = labeled.len() as f64;
    let mut scales = [0.0; FEATURES];
    for (c, scale) in scales.iter_mut().enumerate() {
        let var = labeled.iter().map(|(_, f)| (f.0[c] - all[c]).powi(2)).sum::<f64>() / n;
        *scale = var.sqrt().max(SCALE_FLOOR);
    }
    Ok(CentroidModel {
        labels,
        centroids,
        scales,
    })
}

fn mean_vector<'a>(fs: impl Iterator<Item = &'a FeatureVector>) -> [f64; FEATURES] {
    let mut sum = [0.0; FEATURES];
    let mut n = 0usize;
    for f in fs {
        for (s, v) in sum.iter_mut().zip(f.0) {
            *s += v;
        }
        n += 1;
    }
    sum.map(|s| s / n as f64)
}

impl CentroidModel {
    pub fn validate(&self) -> Result<(), ActivityError> {
        if self.labels.len() < 2 {
            return Err(ActivityError::Model("fewer than 2 labels".into()));
        }
        if self.labels.len() != self.centroids.len() {
            return Err(ActivityError::Model("label and centroid counts differ".into()));
        }
        if self.scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(ActivityError::Model("scales must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ActivityError> {
        let m: Self = serde_json::from_str(text).map_err(|e| ActivityError::Model(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    /// Scale-normalized Euclidean distance to every centroid, by label index.
    pub fn distances(&self, f: &FeatureVector) -> Vec<f64> {
        self.centroids
            .iter()
            .map(|c| {
                (0..FEATURES)
                    .map(|i| ((f.0[i] - c[i]) / self.scales[i]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    pub fn classify(&self, window: &Window) -> (String, f64) {
        self.classify_features(&extract_features(window))
    }

    /// Nearest centroid, ties to the smaller label; confidence is
    /// `d2 / (d1 + d2)` over the two smallest distances.
    pub fn classify_features(&self, f: &FeatureVector) -> (String, f64) {
        let d = self.distances(f);
        let mut order: Vec<usize> = (0..d.len()).collect();
        order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then_with(|| self.labels[a].cmp(&self.labels[b])));
        let (d1, d2) = (d[order[0]], d[order[1]]);
        let confidence = if d1 + d2 == 0.0 { 0.5 } else { d2 / (d1 + d2) };
        (self.labels[order[0]].clone(), confidence)
    }
}

/// Cuts a sample stream into windows of [`WINDOW_LEN`] advancing by [`HOP`].
#[derive(Clone, Debug, Default)]
pub struct Windower {
    buf: VecDeque<Sample>,
}

impl Windower {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, sample: Sample) -> Option<Window> {
        self.buf.push_back(sample);
        if self.buf.len() < WINDOW_LEN {
            return None;
        }
        let w = Window(self.buf.iter().copied().collect());
        self.buf.drain(..HOP);
        Some(w)
    }
}

/// Splits one labelled run of samples into overlapping windows; a trailing
/// partial window is dropped.
pub fn windows_of(samples: &[Sample]) -> Vec<Window> {
    let mut w = Windower::new();
    samples.iter().filter_map(|s| w.push(*s)).collect()
}

/// Reads `label,ax,ay,az` rows. Consecutive rows with the same label form one
/// run, cut into windows with 50% overlap.
pub fn load_corpus(reader: impl Read) -> Result<Vec<(String, Window)>, ActivityError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut runs: Vec<(String, Vec<Sample>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| ActivityError::Corpus {
            line,
            detail: e.to_string(),
        })?;
        if i == 0 && rec.get(0) == Some("label") {
            continue;
        }
        if rec.len() != 4 {
            return Err(ActivityError::Corpus {
                line,
                detail: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        let mut v = [0.0; 3];
        for (a, slot) in v.iter_mut().enumerate() {
            *slot = rec[a + 1]
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| ActivityError::Corpus {
                    line,
                    detail: format!("bad number `{}`", &rec[a + 1]),
                })?;
        }
        match runs.last_mut() {
            Some((l, s)) if l == &rec[0] => s.push(v),
            _ => runs.push((rec[0].to_string(), vec![v])),
        }
    }
    Ok(runs
        .into_iter()
        .flat_map(|(l, s)| windows_of(&s).into_iter().map(move |w| (l.clone(), w)))
        .collect())
}

pub fn write_corpus(mut out: impl Write, runs: &[(String, Vec<Sample>)]) -> std::io::Result<()> {
    writeln!(out, "label,ax,ay,az")?;
    for (label, samples) in runs {
        for s in samples {
            writeln!(out, "{label},{},{},{}", s[0], s[1], s[2])?;
        }
    }
    Ok(())
}

pub const SYNTHETIC_LABELS: [&str; 4] = ["lying", "sitting", "standing", "walking"];

/// Seeded synthetic recordings: `runs_per_label` runs per activity, each
/// `run_len` samples at 20 Hz. Static postures differ in device
/// orientation, walking adds a step oscillation.
pub fn synthetic_runs(seed: u64, runs_per_label: usize, run_len: usize) -> Vec<(String, Vec<Sample>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..runs_per_label {
        for label in SYNTHETIC_LABELS {
            let (base, noise, amp): (Sample, f64, Sample) = match label {
                "standing" => ([0.4, 9.7, 0.9], 0.08, [0.0; 3]),
                "sitting" => ([0.6, 6.3, 7.4], 0.08, [0.0; 3]),
                "lying" => ([9.5, 0.7, 2.0], 0.06, [0.0; 3]),
                _ => ([0.8, 9.4, 1.6], 0.35, [1.4, 3.2, 1.1]),
            };
            let tilt = Normal::new(0.0, 0.35).expect("valid sd");
            let jitter = Normal::new(0.0, noise).expect("valid sd");
            let offset: Sample = [tilt.sample(&mut rng), tilt.sample(&mut rng), tilt.sample(&mut rng)];
            let step_hz = rng.gen_range(1.6..2.2);
            let phase = rng.gen_range(0.0..2.0 * PI);
            let samples = (0..run_len)
                .map(|t| {
                    let osc = (2.0 * PI * step_hz * t as f64 / SAMPLE_RATE_HZ + phase).sin();
                    let mut s = [0.0; 3];
                    for a in 0..3 {
                        s[a] = base[a] + offset[a] + amp[a] * osc + jitter.sample(&mut rng);
                    }
                    s
                })
                .collect();
            out.push((label.to_string(), samples));
        }
    }
    out
}

/// Windows of a synthetic corpus, ready for training or evaluation.
pub fn synthetic_windows(seed: u64, runs_per_label: usize, run_len: usize) -> Vec<(String, Window)> {
    synthetic_runs(seed, runs_per_label, run_len)
        .into_iter()
        .flat_map(|(l, s)| windows_of(&s).into_iter().map(move |w| (l.clone(), w)))
        .collect()
}

/// Fraction of windows the model labels correctly.
pub fn accuracy(model: &CentroidModel, test: &[(String, Window)]) -> f64 {
    if test.is_empty() {
        return 0.0;
    }
    let hits = test.iter().filter(|(l, w)| &model.classify(w).0 == l).count();
    hits as f64 / test.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(s: Sample) -> Window {
        Window::new(vec![s; WINDOW_LEN]).unwrap()
    }

    #[test]
    fn constant_window_features() {
        let f = extract_features(&constant([0.0, 0.0, 9.81]));
        assert_eq!(f.0, [0.0, 0.0, 9.81, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 9.81]);
    }

    #[test]
    fn alternating_window_features() {
        let w = Window::new(
            (0..WINDOW_LEN)
                .map(|i| [0.0, 0.0, if i % 2 == 0 { 1.0 } else { -1.0 }])
                .collect(),
        )
        .unwrap();
        let f = extract_features(&w).0;
        assert_eq!(f[2], 0.0);
        assert_eq!(f[5], 1.0);
        assert_eq!(f[8], 1.0);
        assert_eq!(f[9], 1.0);
    }

    #[test]
    fn window_length_is_checked() {
        assert!(matches!(
            Window::new(vec![[0.0; 3]; 5]),
            Err(ActivityError::WindowLength(5))
        ));
    }

    #[test]
    fn two_constant_labels() {
        let a = constant([0.0, 0.0, 9.81]);
        let b = constant([9.81, 0.0, 0.0]);
        let m = train(&[("a".into(), a.clone()), ("b".into(), b.clone())]).unwrap();
        assert_eq!(m.centroids[0], extract_features(&a).0);
        assert_eq!(m.centroids[1], extract_features(&b).0);
        assert_eq!(m.classify(&a), ("a".to_string(), 1.0));
        assert_eq!(m.scales[3], SCALE_FLOOR);
    }

    #[test]
    fn single_label_is_insufficient() {
        let a = constant([0.0, 0.0, 9.81]);
        assert!(matches!(
            train(&[("a".into(), a.clone()), ("a".into(), a)]),
            Err(ActivityError::InsufficientData(1))
        ));
        assert!(matches!(train(&[]), Err(ActivityError::InsufficientData(0))));
    }

    #[test]
    fn equidistant_tie_goes_to_smaller_label() {
        let m = CentroidModel {
            labels: vec!["x".into(), "y".into()],
            centroids: vec![[1.0; FEATURES], [-1.0; FEATURES]],
            scales: [1.0; FEATURES],
        };
        assert_eq!(
            m.classify_features(&FeatureVector([0.0; FEATURES])),
            ("x".to_string(), 0.5)
        );
    }

    #[test]
    fn windower_overlaps_by_half() {
        let samples: Vec<Sample> = (0..WINDOW_LEN * 2).map(|i| [i as f64, 0.0, 0.0]).collect();
        let ws = windows_of(&samples);
        assert_eq!(ws.len(), 3);
        assert_eq!(ws[1].samples()[0][0], HOP as f64);
        assert_eq!(ws[2].samples()[WINDOW_LEN - 1][0], (2 * WINDOW_LEN - 1) as f64);
    }

    #[test]
    fn corpus_round_trip() {
        let runs = synthetic_runs(1, 1, 256);
        let mut buf = Vec::new();
        write_corpus(&mut buf, &runs).unwrap();
        let windows = load_corpus(buf.as_slice()).unwrap();
        assert_eq!(windows.len(), 4 * 3);
        assert_eq!(windows[0].0, runs[0].0);
        assert_eq!(windows[0].1.samples()[0], runs[0].1[0]);
        assert!(load_corpus("label,ax,ay,az\nwalk,1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let m = train(&synthetic_windows(3, 2, 256)).unwrap();
        assert_eq!(CentroidModel::from_json(&m.to_json()).unwrap(), m);
        assert!(CentroidModel::from_json(
            r#"{"labels":["a"],"centroids":[[0,0,0,0,0,0,0,0,0,0]],"scales":[1,1,1,1,1,1,1,1,1,1]}"#
        )
        .is_err());
    }
}
