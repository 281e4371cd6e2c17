//! Append-only context history, one JSON object per line.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Size past which a warning is logged; the store never rotates.
pub const SIZE_WARNING_BYTES: u64 = 100 * 1024 * 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryRecord {
    /// Core ingest clock, epoch milliseconds.
    pub ts: u64,
    pub subject: String,
    pub context: String,
    pub confidence: f64,
    pub source: String,
    pub accepted: bool,
}

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("history i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("history line {line} is not a valid record: {detail}")]
    Corrupt { line: usize, detail: String },
    #[error("bad range: end {t1} is not after start {t0}")]
    BadRange { t0: u64, t1: u64 },
}

/// What opening the store found on disk.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpenReport {
    pub records: usize,
    /// Bytes of a trailing partial line that were cut off.
    pub truncated_bytes: u64,
}

#[derive(Debug)]
pub struct HistoryStore {
    path: PathBuf,
    file: File,
    len: u64,
    records: Vec<HistoryRecord>,
    size_warned: bool,
}

impl HistoryStore {
    /// Opens or creates the store. A partial final line (from a crash
    /// mid-append) is truncated away with a warning.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, OpenReport), HistoryError> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let complete = bytes.iter().rposition(|&b| b == b'\n').map(|p| p + 1).unwrap_or(0);
        let truncated_bytes = (bytes.len() - complete) as u64;
        let mut records = Vec::new();
        for (i, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
            if line.is_empty() {
                continue;
            }
            let rec: HistoryRecord = serde_json::from_slice(line).map_err(|e| HistoryError::Corrupt {
                line: i + 1,
                detail: e.to_string(),
            })?;
            records.push(rec);
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        if truncated_bytes > 0 {
            file.set_len(complete as u64)?;
            warn!(
                "{}: dropped {truncated_bytes} bytes of a partial final line; {} valid records",
                path.display(),
                records.len()
            );
        }
        let report = OpenReport {
            records: records.len(),
            truncated_bytes,
        };
        Ok((
            Self {
                path,
                file,
                len: complete as u64,
                records,
                size_warned: false,
            },
            report,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends and flushes one record; returns its byte offset.
    pub fn append(&mut self, record: HistoryRecord) -> Result<u64, HistoryError> {
        let mut line = serde_json::to_vec(&record).expect("history records always serialize");
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        let offset = self.len;
        self.len += line.len() as u64;
        self.records.push(record);
        if self.len > SIZE_WARNING_BYTES && !self.size_warned {
            self.size_warned = true;
            warn!("{} is larger than {} bytes", self.path.display(), SIZE_WARNING_BYTES);
        }
        Ok(offset)
    }

    pub fn records(&self) -> &[HistoryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records with `t0 <= ts < t1`, in arrival order, at most `limit`.
    pub fn query(
        &self,
        t0: u64,
        t1: u64,
        subject: Option<&str>,
        limit: Option<usize>,
    ) -> Result<Vec<&HistoryRecord>, HistoryError> {
        if t1 <= t0 {
            return Err(HistoryError::BadRange { t0, t1 });
        }
        Ok(self
            .records
            .iter()
            .filter(|r| r.ts >= t0 && r.ts < t1)
            .filter(|r| subject.is_none_or(|s| r.subject == s))
            .take(limit.unwrap_or(usize::MAX))
            .collect())
    }

    /// Accepted contexts of `subject` in time order, with consecutive repeats
    /// collapsed into one.
    pub fn context_sequence(&self, subject: &str) -> Vec<String> {
        context_sequence(&self.records, subject)
    }
}

pub fn context_sequence(records: &[HistoryRecord], subject: &str) -> Vec<String> {
    let mut mine: Vec<&HistoryRecord> = records.iter().filter(|r| r.accepted && r.subject == subject).collect();
    mine.sort_by_key(|r| r.ts);
    let mut out: Vec<String> = Vec::new();
    for r in mine {
        if out.last() != Some(&r.context) {
            out.push(r.context.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(ts: u64, subject: &str, context: &str, accepted: bool) -> HistoryRecord {
        HistoryRecord {
            ts,
            subject: subject.into(),
            context: context.into(),
            confidence: 0.9,
            source: "svc".into(),
            accepted,
        }
    }

    #[test]
    fn offsets_follow_line_lengths() {
        let dir = tempfile::tempdir().unwrap();
        let (mut s, report) = HistoryStore::open(dir.path().join("history.jsonl")).unwrap();
        assert_eq!(report, OpenReport::default());
        let first = rec(1, "u", "Walk", true);
        assert_eq!(s.append(first.clone()).unwrap(), 0);
        let first_len = serde_json::to_vec(&first).unwrap().len() as u64 + 1;
        assert_eq!(s.append(rec(2, "u", "Sit", true)).unwrap(), first_len);
    }

    #[test]
    fn partial_line_is_dropped_on_open() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.jsonl");
        {
            let (mut s, _) = HistoryStore::open(&path).unwrap();
            s.append(rec(1, "u", "Walk", true)).unwrap();
            s.append(rec(2, "u", "Sit", true)).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"ts\":3,\"subj").unwrap();
        drop(f);
        let (mut s, report) = HistoryStore::open(&path).unwrap();
        assert_eq!(report.records, 2);
        assert_eq!(report.truncated_bytes, 13);
        let valid_len = fs::metadata(&path).unwrap().len();
        assert_eq!(s.append(rec(4, "u", "Walk", true)).unwrap(), valid_len);
        let (s2, report) = HistoryStore::open(&path).unwrap();
        assert_eq!(report.records, 3);
        assert_eq!(s2.records()[2].ts, 4);
    }

    #[test]
    fn corrupt_complete_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.jsonl");
        fs::write(&path, "not json\n").unwrap();
        assert!(matches!(
            HistoryStore::open(&path),
            Err(HistoryError::Corrupt { line: 1, .. })
        ));
    }

    #[test]
    fn query_ranges_and_filters() {
        let dir = tempfile::tempdir().unwrap();
        let (mut s, _) = HistoryStore::open(dir.path().join("h.jsonl")).unwrap();
        for (ts, subj) in [(10, "u"), (20, "w"), (30, "u"), (40, "u")] {
            s.append(rec(ts, subj, "Walk", true)).unwrap();
        }
        assert_eq!(s.query(0, u64::MAX, None, None).unwrap().len(), 4);
        assert!(matches!(s.query(5, 5, None, None), Err(HistoryError::BadRange { .. })));
        let us: Vec<u64> = s.query(0, 100, Some("u"), None).unwrap().iter().map(|r| r.ts).collect();
        assert_eq!(us, vec![10, 30, 40]);
        let lim: Vec<u64> = s.query(10, 40, None, Some(2)).unwrap().iter().map(|r| r.ts).collect();
        assert_eq!(lim, vec![10, 20]);
    }

    #[test]
    fn sequences_collapse_repeats_and_skip_rejected() {
        let records = vec![
            rec(1, "u", "Walk", true),
            rec(2, "u", "Walk", true),
            rec(3, "w", "Lie", true),
            rec(4, "u", "Sit", true),
            rec(5, "u", "Run", false),
            rec(6, "u", "Walk", true),
        ];
        assert_eq!(context_sequence(&records, "u"), vec!["Walk", "Sit", "Walk"]);
        assert_eq!(context_sequence(&records, "w"), vec!["Lie"]);
        assert!(context_sequence(&[rec(1, "u", "Walk", false)], "u").is_empty());
        assert!(context_sequence(&records, "nobody").is_empty());
    }
}
