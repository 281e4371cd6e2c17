//! Next-context prediction by longest-suffix back-off over order-k counts.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub const DEFAULT_ORDER: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredictError {
    #[error("prediction model is empty")]
    EmptyModel,
    #[error("suffix order must be at least 1")]
    ZeroOrder,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionModel {
    k: usize,
    counts: BTreeMap<Vec<String>, BTreeMap<String, u64>>,
    alphabet: BTreeSet<String>,
}

impl PredictionModel {
    pub fn new(k: usize) -> Result<Self, PredictError> {
        if k == 0 {
            return Err(PredictError::ZeroOrder);
        }
        Ok(Self {
            k,
            counts: BTreeMap::new(),
            alphabet: BTreeSet::new(),
        })
    }

    pub fn train<S: AsRef<str>>(sequence: &[S], k: usize) -> Result<Self, PredictError> {
        let mut model = Self::new(k)?;
        let seq: Vec<String> = sequence.iter().map(|s| s.as_ref().to_string()).collect();
        for i in 0..seq.len() {
            model.update(&seq[i], &seq[..i]);
        }
        Ok(model)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn alphabet(&self) -> &BTreeSet<String> {
        &self.alphabet
    }

    pub fn counts(&self) -> &BTreeMap<Vec<String>, BTreeMap<String, u64>> {
        &self.counts
    }

    /// Counts `observed` as the follower of every suffix of `recent` up to
    /// length k, including the empty one.
    pub fn update<S: AsRef<str>>(&mut self, observed: &str, recent: &[S]) {
        let max = self.k.min(recent.len());
        for j in 0..=max {
            let suffix: Vec<String> = recent[recent.len() - j..]
                .iter()
                .map(|s| s.as_ref().to_string())
                .collect();
            *self
                .counts
                .entry(suffix)
                .or_default()
                .entry(observed.to_string())
                .or_insert(0) += 1;
        }
        self.alphabet.insert(observed.to_string());
    }

    /// Relative frequencies after the longest suffix of `recent` that has
    /// counts, most probable first, ties by name.
    pub fn predict<S: AsRef<str>>(&self, recent: &[S]) -> Result<Vec<(String, f64)>, PredictError> {
        if self.is_empty() {
            return Err(PredictError::EmptyModel);
        }
        let recent: Vec<String> = recent.iter().map(|s| s.as_ref().to_string()).collect();
        let max = self.k.min(recent.len());
        let followers = (0..=max)
            .rev()
            .find_map(|j| self.counts.get(&recent[recent.len() - j..]))
            .expect("non-empty model has unigram counts");
        let total: u64 = followers.values().sum();
        let mut out: Vec<(String, f64)> = followers
            .iter()
            .map(|(s, &c)| (s.clone(), c as f64 / total as f64))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(out)
    }
}

/// Per-subject models plus the recent context window each one predicts from.
#[derive(Debug, Clone)]
pub struct SubjectPredictor {
    k: usize,
    subjects: BTreeMap<String, (PredictionModel, Vec<String>)>,
}

impl SubjectPredictor {
    pub fn new(k: usize) -> Result<Self, PredictError> {
        PredictionModel::new(k)?;
        Ok(Self {
            k,
            subjects: BTreeMap::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Feeds a whole collapsed sequence for `subject`.
    pub fn train_subject<S: AsRef<str>>(&mut self, subject: &str, sequence: &[S]) {
        for s in sequence {
            self.observe(subject, s.as_ref());
        }
    }

    /// Records a live context; repeats of the latest context are not
    /// transitions and are ignored. Returns whether the model changed.
    pub fn observe(&mut self, subject: &str, context: &str) -> bool {
        let k = self.k;
        let (model, recent) = self
            .subjects
            .entry(subject.to_string())
            .or_insert_with(|| (PredictionModel::new(k).expect("k checked in new"), Vec::new()));
        if recent.last().map(String::as_str) == Some(context) {
            return false;
        }
        model.update(context, recent);
        recent.push(context.to_string());
        if recent.len() > k {
            recent.remove(0);
        }
        true
    }

    pub fn predict(&self, subject: &str) -> Result<Vec<(String, f64)>, PredictError> {
        let (model, recent) = self.subjects.get(subject).ok_or(PredictError::EmptyModel)?;
        model.predict(recent)
    }

    pub fn model(&self, subject: &str) -> Option<&PredictionModel> {
        self.subjects.get(subject).map(|(m, _)| m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(m: &PredictionModel) -> Vec<(String, String, u64)> {
        m.counts()
            .iter()
            .flat_map(|(k, v)| v.iter().map(move |(s, c)| (k.join(" "), s.clone(), *c)))
            .collect()
    }

    #[test]
    fn two_symbols_order_one() {
        let m = PredictionModel::train(&["A", "B"], 1).unwrap();
        assert_eq!(
            table(&m),
            vec![
                ("".into(), "A".into(), 1),
                ("".into(), "B".into(), 1),
                ("A".into(), "B".into(), 1)
            ]
        );
    }

    #[test]
    fn empty_sequence_gives_empty_model() {
        let m = PredictionModel::train::<&str>(&[], 3).unwrap();
        assert!(m.is_empty());
        assert_eq!(m.predict::<&str>(&[]), Err(PredictError::EmptyModel));
    }

    #[test]
    fn zero_order_is_rejected() {
        assert_eq!(PredictionModel::new(0), Err(PredictError::ZeroOrder));
    }

    #[test]
    fn alternating_sequence() {
        let m = PredictionModel::train(&["A", "B", "A", "B", "A"], 2).unwrap();
        assert_eq!(m.counts()[&vec!["A".to_string()]]["B"], 2);
        assert_eq!(m.counts()[&vec!["B".to_string()]]["A"], 2);
        assert_eq!(m.counts()[&vec!["A".to_string(), "B".to_string()]]["A"], 2);
        assert_eq!(m.counts()[&vec!["B".to_string(), "A".to_string()]]["B"], 1);
        assert_eq!(m.predict(&["B", "A"]).unwrap(), vec![("B".to_string(), 1.0)]);
    }

    #[test]
    fn ties_are_lexicographic() {
        let m = PredictionModel::train(&["A", "A", "B"], 3).unwrap();
        assert_eq!(
            m.predict(&["A"]).unwrap(),
            vec![("A".to_string(), 0.5), ("B".to_string(), 0.5)]
        );
    }

    #[test]
    fn unseen_context_backs_off_to_unigrams() {
        let m = PredictionModel::train(&["A", "B", "B"], 2).unwrap();
        let p = m.predict(&["Z"]).unwrap();
        assert_eq!(p[0].0, "B");
        assert!((p[0].1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(p[1].0, "A");
    }

    #[test]
    fn update_on_empty_model() {
        let mut m = PredictionModel::new(3).unwrap();
        m.update::<&str>("A", &[]);
        assert_eq!(table(&m), vec![("".into(), "A".into(), 1)]);
        assert_eq!(m.k(), 3);
    }

    #[test]
    fn subject_predictor_collapses_repeats() {
        let mut p = SubjectPredictor::new(2).unwrap();
        assert!(matches!(p.predict("u"), Err(PredictError::EmptyModel)));
        for c in ["Walk", "Walk", "Sit", "Walk", "Sit"] {
            p.observe("u", c);
        }
        let direct = PredictionModel::train(&["Walk", "Sit", "Walk", "Sit"], 2).unwrap();
        assert_eq!(p.model("u").unwrap(), &direct);
        assert_eq!(p.predict("u").unwrap(), vec![("Walk".to_string(), 1.0)]);
    }
}
