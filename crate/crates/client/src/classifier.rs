//! Classification service: turns accelerometer windows and smart-home event
//! codes into context events.

use ctx_core::activity::{CentroidModel, Windower};
use ctx_core::mapping::ContextMap;
use ctx_core::protocol::{now_ms, ContextPayload, Message, Sensor};
use log::{debug, warn};

use crate::{log_unsolicited, Incoming};

pub const DEFAULT_ACCEL_TOPIC: &str = "sensor/accel";
pub const DEFAULT_HOME_TOPIC: &str = "sensor/home";

pub struct ClassifierService {
    model: Option<CentroidModel>,
    map: ContextMap,
    subject: String,
    accel_topic: String,
    home_topic: Option<String>,
    windower: Windower,
    warned_no_model: bool,
}

impl ClassifierService {
    /// `model` may be absent when only smart-home events are mapped.
    pub fn new(model: Option<CentroidModel>, map: ContextMap, subject: impl Into<String>) -> Self {
        Self {
            model,
            map,
            subject: subject.into(),
            accel_topic: DEFAULT_ACCEL_TOPIC.into(),
            home_topic: Some(DEFAULT_HOME_TOPIC.into()),
            windower: Windower::new(),
            warned_no_model: false,
        }
    }

    pub fn with_topics(mut self, accel: impl Into<String>, home: Option<String>) -> Self {
        self.accel_topic = accel.into();
        self.home_topic = home;
        self
    }

    pub fn subscriptions(&self) -> Vec<&str> {
        let mut s = vec![self.accel_topic.as_str()];
        s.extend(self.home_topic.as_deref());
        s
    }

    fn event(&self, context: &str, confidence: f64) -> ContextPayload {
        ContextPayload {
            subject: self.subject.clone(),
            context: context.to_string(),
            confidence,
            ts: now_ms(),
        }
    }

    /// Context events for one sensor message.
    pub fn handle_sensor(&mut self, s: &Sensor) -> Vec<ContextPayload> {
        if s.topic == self.accel_topic {
            let [ax, ay, az] = s.values[..] else {
                warn!("accelerometer sample with {} values, expected 3", s.values.len());
                return Vec::new();
            };
            let Some(window) = self.windower.push([ax, ay, az]) else {
                return Vec::new();
            };
            let Some(model) = &self.model else {
                if !self.warned_no_model {
                    warn!("accelerometer data but no model loaded; ignoring");
                    self.warned_no_model = true;
                }
                return Vec::new();
            };
            let (label, confidence) = model.classify(&window);
            match self.map.get(&label) {
                Some(e) => vec![self.event(&e.context, confidence)],
                None => {
                    debug!("label {label} has no mapping");
                    Vec::new()
                }
            }
        } else if Some(&s.topic) == self.home_topic.as_ref() {
            s.values
                .iter()
                .filter_map(|&code| match self.map.get_code(code) {
                    Some(e) => Some(self.event(&e.context, e.confidence.unwrap_or(1.0))),
                    None => {
                        debug!("event code {code} has no mapping");
                        None
                    }
                })
                .collect()
        } else {
            Vec::new()
        }
    }

    /// Handler for [`crate::serve`].
    pub fn handle(&mut self, m: Incoming) -> Vec<Message> {
        match &m.message {
            Message::Sensor(s) => self.handle_sensor(s).into_iter().map(Message::Context).collect(),
            _ => {
                log_unsolicited("classifier", &m);
                Vec::new()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ctx_core::activity::{train, Window, WINDOW_LEN};

    fn sensor(topic: &str, values: Vec<f64>) -> Sensor {
        Sensor {
            topic: topic.into(),
            source: "s".into(),
            ts: 0,
            values,
        }
    }

    #[test]
    fn home_codes_use_fixed_confidence() {
        let map = ContextMap::parse("2,LocatedKitchen,0.9\n3,ObservesCoffeeMachineOn\n").unwrap();
        let mut c = ClassifierService::new(None, map, "u");
        let out = c.handle_sensor(&sensor("sensor/home", vec![1.0, 2.0, 3.0]));
        let got: Vec<(&str, f64)> = out.iter().map(|e| (e.context.as_str(), e.confidence)).collect();
        assert_eq!(got, vec![("LocatedKitchen", 0.9), ("ObservesCoffeeMachineOn", 1.0)]);
        assert!(c.handle_sensor(&sensor("sensor/other", vec![2.0])).is_empty());
    }

    #[test]
    fn accel_emits_once_per_hop() {
        let flat = |z: f64| Window::new(vec![[0.0, 0.0, z]; WINDOW_LEN]).unwrap();
        let model = train(&[("lying".into(), flat(1.0)), ("standing".into(), flat(9.8))]).unwrap();
        let map = ContextMap::parse("standing,Standing\n").unwrap();
        let mut c = ClassifierService::new(Some(model), map, "u");
        let mut events = Vec::new();
        for _ in 0..WINDOW_LEN + 64 {
            events.extend(c.handle_sensor(&sensor("sensor/accel", vec![0.0, 0.0, 9.8])));
        }
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].context, "Standing");
        assert_eq!(events[0].confidence, 1.0);
        assert!(c.handle_sensor(&sensor("sensor/accel", vec![1.0])).is_empty());
    }
}
