use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// One completed backend call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub seq: u64,
    pub backend: String,
    pub kind: String,
    pub request: Value,
    pub response: Result<Value, String>,
}

#[derive(Default)]
struct Inner {
    next_seq: u64,
    records: Vec<CallRecord>,
    sink: Option<BufWriter<File>>,
}

/// Append-only record of every request/response pair, numbered in the order
/// calls complete. Optionally mirrored to a JSONL file.
#[derive(Default)]
pub struct CallLog {
    inner: Mutex<Inner>,
}

impl CallLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_file(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let log = Self::new();
        log.inner.lock().unwrap().sink = Some(BufWriter::new(File::create(path)?));
        Ok(log)
    }

    pub(crate) fn record(
        &self,
        backend: &str,
        kind: &str,
        request: Value,
        response: Result<Value, String>,
    ) {
        let mut inner = self.inner.lock().unwrap();
        let record = CallRecord {
            seq: inner.next_seq,
            backend: backend.to_string(),
            kind: kind.to_string(),
            request,
            response,
        };
        inner.next_seq += 1;
        if let Some(sink) = inner.sink.as_mut() {
            let line = serde_json::to_string(&record).expect("records serialize");
            if let Err(err) = writeln!(sink, "{line}").and_then(|_| sink.flush()) {
                log::error!("call log write failed: {err}");
            }
        }
        inner.records.push(record);
    }

    pub fn records(&self) -> Vec<CallRecord> {
        self.inner.lock().unwrap().records.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
