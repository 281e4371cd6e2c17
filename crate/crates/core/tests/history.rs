use std::fs::OpenOptions;
use std::io::Write;

use ctx_core::history::{context_sequence, HistoryRecord, HistoryStore};
use proptest::prelude::*;

fn rec(ts: u64, subject: &str, context: &str, accepted: bool) -> HistoryRecord {
    HistoryRecord {
        ts,
        subject: subject.into(),
        context: context.into(),
        confidence: 0.75,
        source: "test".into(),
        accepted,
    }
}

#[test]
fn partial_final_line_is_dropped_on_open() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.ndjson");
    {
        let (mut h, _) = HistoryStore::open(&path).unwrap();
        h.append(rec(1, "u", "A", true)).unwrap();
        h.append(rec(2, "u", "B", true)).unwrap();
    }
    OpenOptions::new()
        .append(true)
        .open(&path)
        .unwrap()
        .write_all(br#"{"ts":3,"subj"#)
        .unwrap();
    let (mut h, report) = HistoryStore::open(&path).unwrap();
    assert_eq!(report.records, 2);
    assert_eq!(report.truncated_bytes, 13);
    h.append(rec(4, "u", "C", true)).unwrap();
    drop(h);
    let (h, report) = HistoryStore::open(&path).unwrap();
    assert_eq!(report.truncated_bytes, 0);
    let contexts: Vec<&str> = h.records().iter().map(|r| r.context.as_str()).collect();
    assert_eq!(contexts, ["A", "B", "C"]);
}

#[test]
fn corrupt_middle_line_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.ndjson");
    std::fs::write(&path, "not json\n").unwrap();
    assert!(HistoryStore::open(&path).is_err());
}

#[test]
fn empty_range_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (h, _) = HistoryStore::open(dir.path().join("h")).unwrap();
    assert!(h.query(5, 5, None, None).is_err());
}

#[test]
fn sequence_skips_rejected_and_collapses_repeats() {
    let records = vec![
        rec(3, "u", "B", true),
        rec(1, "u", "A", true),
        rec(2, "u", "A", true),
        rec(4, "u", "X", false),
        rec(5, "v", "B", true),
        rec(6, "u", "B", true),
        rec(7, "u", "A", true),
    ];
    assert_eq!(context_sequence(&records, "u"), ["A", "B", "A"]);
    assert_eq!(context_sequence(&records, "v"), ["B"]);
}

fn records() -> impl Strategy<Value = Vec<HistoryRecord>> {
    prop::collection::vec(
        (
            0u64..100,
            prop::sample::select(vec!["u", "v"]),
            prop::sample::select(vec!["A", "B", "C"]),
            any::<bool>(),
        ),
        0..30,
    )
    .prop_map(|v| v.into_iter().map(|(ts, s, c, a)| rec(ts, s, c, a)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reopen_preserves_arrival_order(rs in records()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.ndjson");
        let mut offsets = Vec::new();
        {
            let (mut h, _) = HistoryStore::open(&path).unwrap();
            for r in &rs {
                offsets.push(h.append(r.clone()).unwrap());
            }
        }
        prop_assert!(offsets.windows(2).all(|w| w[0] < w[1]));
        let (h, report) = HistoryStore::open(&path).unwrap();
        prop_assert_eq!(report.records, rs.len());
        prop_assert_eq!(h.records(), &rs[..]);
    }

    #[test]
    fn query_is_a_filter(rs in records(), t0 in 0u64..100, width in 1u64..100, subject in prop::option::of(prop::sample::select(vec!["u", "v"])), limit in prop::option::of(0usize..10)) {
        let dir = tempfile::tempdir().unwrap();
        let (mut h, _) = HistoryStore::open(dir.path().join("h")).unwrap();
        for r in &rs {
            h.append(r.clone()).unwrap();
        }
        let got: Vec<HistoryRecord> = h.query(t0, t0 + width, subject, limit).unwrap().into_iter().cloned().collect();
        let want: Vec<HistoryRecord> = rs
            .iter()
            .filter(|r| r.ts >= t0 && r.ts < t0 + width && subject.is_none_or(|s| r.subject == s))
            .take(limit.unwrap_or(usize::MAX))
            .cloned()
            .collect();
        prop_assert_eq!(got, want);
    }
}
