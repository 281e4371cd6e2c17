use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ctx_client::{ClientError, Connection};
use ctx_core::config::CoreConfig;
use ctx_core::protocol::{
    raw_frame, ContextPayload, ErrorCode, Message, Predict, Prediction, Query, Ranked, Sensor, ServiceKind,
    TOPIC_ACCEPTED, TOPIC_DERIVED,
};
use ctx_core::registry::Registry;
use ctx_service::{run_core, CoreHandle};
use serde_json::json;

const WAIT: Duration = Duration::from_secs(5);

fn kitchen() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/kitchen.ctx")
}

fn config(dir: &Path, tweak: impl FnOnce(&mut CoreConfig)) -> CoreConfig {
    let mut cfg = CoreConfig::with_ontology(kitchen(), dir);
    cfg.bind = "127.0.0.1:0".parse().unwrap();
    cfg.tick_ms = 20;
    tweak(&mut cfg);
    cfg
}

async fn core(dir: &Path, tweak: impl FnOnce(&mut CoreConfig)) -> CoreHandle {
    run_core(config(dir, tweak)).await.unwrap()
}

async fn service(h: &CoreHandle, kind: ServiceKind, name: &str, subs: &[&str]) -> (Connection, String) {
    let mut c = Connection::connect(h.addr()).await.unwrap();
    let id = c.hello(kind, name, subs).await.unwrap();
    (c, id)
}

fn context(context: &str, confidence: f64) -> Message {
    Message::Context(ContextPayload {
        subject: "u".into(),
        context: context.into(),
        confidence,
        ts: 0,
    })
}

fn error_code(m: &Message) -> Option<ErrorCode> {
    match m {
        Message::Error(e) => Some(e.code),
        _ => None,
    }
}

#[tokio::test]
async fn registration_is_idempotent_and_gated() {
    let dir = tempfile::tempdir().unwrap();
    let h = core(dir.path(), |_| {}).await;
    let (_a, id1) = service(&h, ServiceKind::Classification, "act1", &["sensor/accel"]).await;
    let (_b, id2) = service(&h, ServiceKind::Classification, "act1", &["sensor/accel"]).await;
    assert_eq!(id1, id2);
    let reg = Registry::load(dir.path().join("services.json")).unwrap();
    assert_eq!(reg.records().len(), 1);

    let mut c = Connection::connect(h.addr()).await.unwrap();
    let reply = c.request(&Message::Query(Query::Services {})).await.unwrap();
    assert_eq!(error_code(&reply), Some(ErrorCode::UnknownSender));
    c.send_raw(raw_frame("hello", 5, json!({"kind": "unknown", "name": "x"})).as_bytes())
        .await
        .unwrap();
    let reply = c.recv_timeout(WAIT).await.unwrap();
    assert_eq!(error_code(&reply.message), Some(ErrorCode::Malformed));
    assert_eq!(reply.message.reply_to(), Some(5));
    h.shutdown().await.unwrap();
}

#[tokio::test]
async fn coffee_is_derived_and_published() {
    let dir = tempfile::tempdir().unwrap();
    let h = core(dir.path(), |_| {}).await;
    let (mut app, _) = service(&h, ServiceKind::App, "filter", &[TOPIC_DERIVED]).await;
    let (mut cls, _) = service(&h, ServiceKind::Classification, "home", &[]).await;

    let below = cls.request(&context("LocatedKitchen", 0.3)).await.unwrap();
    let Message::Ack(a) = below else { panic!("{below:?}") };
    assert_eq!(a.status.as_deref(), Some("rejected"));

    for (c, p) in [("LocatedKitchen", 0.9), ("ObservesCoffeeMachineOn", 0.8)] {
        let Message::Ack(a) = cls.request(&context(c, p)).await.unwrap() else {
            panic!()
        };
        assert_eq!(a.status.as_deref(), Some("accepted"));
    }
    let m = app.recv_timeout(WAIT).await.unwrap().message;
    let Message::ContextDerived(d) = m else { panic!("{m:?}") };
    assert_eq!(
        (d.subject.as_str(), d.context.as_str(), d.confidence),
        ("u", "MakingCoffee", 0.8)
    );
    assert_eq!(d.source, "reasoner");

    let again = cls.request(&context("ObservesCoffeeMachineOn", 0.8)).await.unwrap();
    assert!(matches!(again, Message::Ack(_)));
    assert!(matches!(
        app.recv_timeout(Duration::from_millis(200)).await,
        Err(ClientError::Timeout)
    ));

    let inst = cls
        .query(Query::Instances {
            class: "MakingCoffee".into(),
        })
        .await
        .unwrap();
    assert_eq!(inst, json!(["u"]));
    let cur = cls.query(Query::Current { subject: "u".into() }).await.unwrap();
    let names: Vec<&str> = cur
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["context"].as_str().unwrap())
        .collect();
    assert_eq!(
        names,
        vec!["LocatedKitchen", "MakingCoffee", "ObservesCoffeeMachineOn", "Person"]
    );
    let hist = cls
        .query(Query::History {
            t0: None,
            t1: None,
            subject: Some("u".into()),
            limit: Some(2),
        })
        .await
        .unwrap();
    assert_eq!(hist.as_array().unwrap().len(), 2);
    assert_eq!(hist[0]["context"], "ObservesCoffeeMachineOn");
    h.shutdown().await.unwrap();
}

#[tokio::test]
async fn expiry_publishes_cleared() {
    let dir = tempfile::tempdir().unwrap();
    let h = core(dir.path(), |c| {
        c.context_ttl_ms = 100;
        c.transient_classes = ["LocatedKitchen".to_string()].into();
    })
    .await;
    let (mut app, _) = service(&h, ServiceKind::App, "filter", &[TOPIC_DERIVED]).await;
    let (mut cls, _) = service(&h, ServiceKind::Classification, "home", &[]).await;
    cls.request(&context("LocatedKitchen", 0.9)).await.unwrap();
    cls.request(&context("ObservesCoffeeMachineOn", 0.8)).await.unwrap();
    assert!(matches!(
        app.recv_timeout(WAIT).await.unwrap().message,
        Message::ContextDerived(_)
    ));
    let m = app.recv_timeout(WAIT).await.unwrap().message;
    let Message::ContextCleared(c) = m else { panic!("{m:?}") };
    assert_eq!(c.context, "MakingCoffee");
    h.shutdown().await.unwrap();
}

#[tokio::test]
async fn sensors_reach_online_subscribers_only() {
    let dir = tempfile::tempdir().unwrap();
    let h = core(dir.path(), |_| {}).await;
    let (mut sub, _) = service(&h, ServiceKind::Classification, "act", &["sensor/accel"]).await;
    let (mut src, src_id) = service(&h, ServiceKind::Sensing, "replay", &["sensor/accel"]).await;
    let sensor = Sensor {
        topic: "sensor/accel".into(),
        source: src_id.clone(),
        ts: 1,
        values: vec![0.0, 0.0, 9.81],
    };
    src.send(&Message::Sensor(sensor.clone())).await.unwrap();
    src.send(&Message::Sensor(Sensor {
        topic: "sensor/none".into(),
        ..sensor.clone()
    }))
    .await
    .unwrap();
    let got = sub.recv_timeout(WAIT).await.unwrap().message;
    assert_eq!(got, Message::Sensor(sensor));
    // the sender is not echoed its own sensor data, and sensors get no reply
    let Message::Result(_) = src.request(&Message::Query(Query::Services {})).await.unwrap() else {
        panic!()
    };
    assert!(src.recv_timeout(Duration::from_millis(100)).await.is_err());
    let c = h.counters().await.unwrap();
    assert_eq!((c.sensor_received, c.sensor_delivered, c.sensor_dropped), (2, 1, 1));
    h.shutdown().await.unwrap();
}

#[tokio::test]
async fn accepted_contexts_are_forwarded() {
    let dir = tempfile::tempdir().unwrap();
    let h = core(dir.path(), |_| {}).await;
    let (mut pred, _) = service(&h, ServiceKind::Prediction, "p", &[TOPIC_ACCEPTED]).await;
    let (mut cls, _) = service(&h, ServiceKind::Classification, "c", &[]).await;
    cls.request(&context("LocatedKitchen", 0.9)).await.unwrap();
    cls.request(&context("LocatedKitchen", 0.1)).await.unwrap();
    let m = pred.recv_timeout(WAIT).await.unwrap().message;
    let Message::Context(c) = m else { panic!("{m:?}") };
    assert_eq!(c.context, "LocatedKitchen");
    assert!(pred.recv_timeout(Duration::from_millis(100)).await.is_err());
    h.shutdown().await.unwrap();
}

#[tokio::test]
async fn predictions_are_relayed() {
    let dir = tempfile::tempdir().unwrap();
    let h = core(dir.path(), |c| c.prediction_timeout_ms = 150).await;
    let (mut app, _) = service(&h, ServiceKind::App, "app", &[]).await;
    let none = app.predict("u").await.unwrap_err();
    assert!(matches!(
        none,
        ClientError::Refused {
            code: ErrorCode::NoPredictor,
            ..
        }
    ));

    let (mut pred, _) = service(&h, ServiceKind::Prediction, "p", &[]).await;
    let app_task = tokio::spawn(async move {
        let r = app.predict("u").await;
        (app, r)
    });
    let m = pred.recv_timeout(WAIT).await.unwrap().message;
    let Message::Predict(Predict {
        subject,
        corr: Some(corr),
    }) = m
    else {
        panic!("{m:?}")
    };
    assert_eq!(subject, "u");
    let ranked = vec![Ranked {
        context: "MakingCoffee".into(),
        probability: 1.0,
    }];
    let reply = Message::Prediction(Prediction {
        subject,
        ranked: ranked.clone(),
        corr: Some(corr),
        re: None,
        detail: None,
    });
    let Message::Ack(a) = pred.request(&reply).await.unwrap() else {
        panic!()
    };
    assert_eq!(a.status.as_deref(), Some("delivered"));
    let (mut app, r) = app_task.await.unwrap();
    assert_eq!(r.unwrap(), ranked);

    // no answer from the predictor: the requester gets TIMEOUT
    let err = app.predict("u").await.unwrap_err();
    assert!(matches!(
        err,
        ClientError::Refused {
            code: ErrorCode::Timeout,
            ..
        }
    ));

    // an empty ranking with a reason becomes NO_MODEL
    let app_task = tokio::spawn(async move { app.predict("nobody").await });
    loop {
        let m = pred.recv_timeout(WAIT).await.unwrap().message;
        if let Message::Predict(Predict {
            subject,
            corr: Some(corr),
        }) = m
        {
            if subject == "nobody" {
                let reply = Message::Prediction(Prediction {
                    subject,
                    ranked: vec![],
                    corr: Some(corr),
                    re: None,
                    detail: Some("empty model".into()),
                });
                pred.request(&reply).await.unwrap();
                break;
            }
        }
    }
    let err = app_task.await.unwrap().unwrap_err();
    assert!(matches!(
        err,
        ClientError::Refused {
            code: ErrorCode::NoModel,
            ..
        }
    ));
    h.shutdown().await.unwrap();
}

#[tokio::test]
async fn every_bad_frame_gets_one_error() {
    let dir = tempfile::tempdir().unwrap();
    let h = core(dir.path(), |_| {}).await;
    let (mut c, _) = service(&h, ServiceKind::App, "app", &[]).await;
    let bad: Vec<Vec<u8>> = vec![
        b"not json".to_vec(),
        b"[1,2]".to_vec(),
        vec![0xff, 0xfe, b'{'],
        br#"{"v":1,"type":"hello"}"#.to_vec(),
        raw_frame("bogus", 10, json!({})).into_bytes(),
        br#"{"v":2,"type":"heartbeat","msg_id":11,"ts":0,"payload":{}}"#.to_vec(),
        raw_frame(
            "context",
            12,
            json!({"subject": "u", "context": "X", "confidence": 1.5, "ts": 0}),
        )
        .into_bytes(),
        raw_frame("query", 13, json!({"query": "nope"})).into_bytes(),
        raw_frame("heartbeat", 14, json!({"extra": 1})).into_bytes(),
        raw_frame("ack", 15, json!({"re": 1})).into_bytes(),
        raw_frame("heartbeat", 3, json!({})).into_bytes(),
        vec![b'x'; 70_000],
    ];
    for b in &bad {
        c.send_raw(b).await.unwrap();
    }
    c.set_next_msg_id(100);
    let Message::Result(_) = c.request(&Message::Query(Query::Services {})).await.unwrap() else {
        panic!()
    };
    let mut errors = Vec::new();
    while let Ok(m) = c.recv_timeout(Duration::from_millis(50)).await {
        errors.push(error_code(&m.message).expect("only errors are pending"));
    }
    assert_eq!(errors.len(), bad.len(), "{errors:?}");
    assert_eq!(errors[4], ErrorCode::UnknownType);
    assert_eq!(errors[5], ErrorCode::BadVersion);
    assert_eq!(errors[7], ErrorCode::MalformedQuery);
    assert_eq!(errors[10], ErrorCode::Malformed);
    assert_eq!(errors[11], ErrorCode::FrameTooLarge);
    h.shutdown().await.unwrap();
}

#[tokio::test]
async fn registry_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let h = core(dir.path(), |_| {}).await;
    let (_a, _) = service(&h, ServiceKind::Classification, "act1", &["sensor/accel"]).await;
    let (_b, _) = service(&h, ServiceKind::Prediction, "pred", &[TOPIC_ACCEPTED]).await;
    h.shutdown().await.unwrap();
    let before = Registry::load(dir.path().join("services.json")).unwrap();

    let h = core(dir.path(), |_| {}).await;
    let mut c = Connection::connect(h.addr()).await.unwrap();
    c.hello(ServiceKind::App, "viewer", &[]).await.unwrap();
    let listed = c.query(Query::Services {}).await.unwrap();
    let statuses: Vec<(&str, &str)> = listed
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["name"].as_str().unwrap(), r["status"].as_str().unwrap()))
        .collect();
    assert_eq!(
        statuses,
        vec![("act1", "offline"), ("pred", "offline"), ("viewer", "online")]
    );
    for rec in before.records() {
        assert!(listed.as_array().unwrap().iter().any(|r| r["id"] == rec.id.as_str()));
    }
    h.shutdown().await.unwrap();
}

#[tokio::test]
async fn silent_service_goes_offline_within_budget() {
    let dir = tempfile::tempdir().unwrap();
    let (interval, misses, tick) = (100u64, 2u64, 20u64);
    let h = core(dir.path(), |c| {
        c.heartbeat_interval_ms = interval;
        c.heartbeat_misses = misses;
        c.tick_ms = tick;
    })
    .await;
    let (_silent, id) = service(&h, ServiceKind::Sensing, "quiet", &[]).await;
    let start = Instant::now();
    let (mut watcher, _) = service(&h, ServiceKind::App, "watch", &[]).await;
    let offline_after = loop {
        let list = watcher.query(Query::Services {}).await.unwrap();
        let rec = list
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["id"] == id.as_str())
            .unwrap()
            .clone();
        if rec["status"] == "offline" {
            break start.elapsed();
        }
        assert!(start.elapsed() < Duration::from_secs(5));
        tokio::time::sleep(Duration::from_millis(5)).await;
    };
    let budget = Duration::from_millis(interval * misses + tick);
    assert!(offline_after <= budget + Duration::from_millis(30), "{offline_after:?}");
    assert!(offline_after >= Duration::from_millis(interval * misses - 10));
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("services.json")).unwrap()).unwrap();
    let quiet = saved["services"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["id"] == id.as_str())
        .unwrap();
    assert_eq!(quiet["status"], "offline");
    h.shutdown().await.unwrap();
}
