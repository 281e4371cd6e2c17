//! Prediction service: trains per-subject models from the history store and
//! answers `predict` requests relayed by the core.

use std::collections::BTreeSet;

use ctx_core::history::{context_sequence, HistoryRecord};
use ctx_core::predictor::{PredictError, SubjectPredictor};
use ctx_core::protocol::{Message, Prediction, Ranked};

use crate::{log_unsolicited, Incoming};

pub struct PredictorService {
    predictor: SubjectPredictor,
}

impl PredictorService {
    pub fn new(k: usize) -> Result<Self, PredictError> {
        Ok(Self {
            predictor: SubjectPredictor::new(k)?,
        })
    }

    /// Trains one model per subject from the accepted records.
    pub fn from_history(records: &[HistoryRecord], k: usize) -> Result<Self, PredictError> {
        let mut s = Self::new(k)?;
        let subjects: BTreeSet<&str> = records.iter().map(|r| r.subject.as_str()).collect();
        for subject in subjects {
            s.predictor.train_subject(subject, &context_sequence(records, subject));
        }
        Ok(s)
    }

    pub fn predictor(&self) -> &SubjectPredictor {
        &self.predictor
    }

    pub fn prediction(&self, subject: &str, corr: Option<u64>) -> Prediction {
        let (ranked, detail) = match self.predictor.predict(subject) {
            Ok(r) => (
                r.into_iter()
                    .map(|(context, probability)| Ranked { context, probability })
                    .collect(),
                None,
            ),
            Err(e) => (Vec::new(), Some(format!("{e} for subject {subject}"))),
        };
        Prediction {
            subject: subject.to_string(),
            ranked,
            corr,
            re: None,
            detail,
        }
    }

    /// Handler for [`crate::serve`].
    pub fn handle(&mut self, m: Incoming) -> Vec<Message> {
        match &m.message {
            Message::Context(c) => {
                self.predictor.observe(&c.subject, &c.context);
                Vec::new()
            }
            Message::Predict(p) => vec![Message::Prediction(self.prediction(&p.subject, p.corr))],
            _ => {
                log_unsolicited("predictor", &m);
                Vec::new()
            }
        }
    }
}
