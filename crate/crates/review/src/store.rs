//! Batches in memory, judgments in an append-only journal.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use toolde_core::review::{
    JudgmentExport, JudgmentRecord, JudgmentSubmission, Progress, ReviewBatch, ReviewEntry, Verdict,
};

use crate::ReviewError;

pub struct ReviewStore {
    batches: BTreeMap<String, ReviewBatch>,
    /// item id -> (batch id, position in batch)
    items: HashMap<String, (String, usize)>,
    judgments: HashMap<String, JudgmentRecord>,
    journal_path: PathBuf,
    journal: File,
}

#[derive(Debug)]
pub enum SubmitError {
    UnknownItem,
    AlreadyJudged(Box<JudgmentRecord>),
    Io(std::io::Error),
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl ReviewStore {
    /// Loads batches and replays the journal. Journal lines for unknown items
    /// are skipped; for an item judged twice the first line wins.
    pub fn open(
        batches: Vec<ReviewBatch>,
        journal_path: impl Into<PathBuf>,
    ) -> Result<Self, ReviewError> {
        let journal_path = journal_path.into();
        let mut by_id = BTreeMap::new();
        let mut items = HashMap::new();
        for batch in batches {
            batch.validate()?;
            for (pos, item) in batch.items.iter().enumerate() {
                if items
                    .insert(item.item_id.clone(), (batch.batch_id.clone(), pos))
                    .is_some()
                {
                    return Err(ReviewError::Config(format!(
                        "item `{}` appears in more than one batch",
                        item.item_id
                    )));
                }
            }
            if by_id.contains_key(&batch.batch_id) {
                return Err(ReviewError::Config(format!(
                    "batch `{}` loaded twice",
                    batch.batch_id
                )));
            }
            by_id.insert(batch.batch_id.clone(), batch);
        }

        let mut judgments = HashMap::new();
        let (records, torn) = read_journal(&journal_path)?;
        for record in records {
            match items.get(&record.item_id) {
                Some((batch, _)) if *batch == record.batch_id => {
                    judgments.entry(record.item_id.clone()).or_insert(record);
                }
                _ => log::warn!(
                    "journal entry for unknown item `{}` skipped",
                    record.item_id
                ),
            }
        }
        if torn {
            // Drop the partial line so the next append starts cleanly.
            let bytes = std::fs::read(&journal_path)?;
            let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
            let f = OpenOptions::new().write(true).open(&journal_path)?;
            f.set_len(keep as u64)?;
            f.sync_data()?;
        }
        let journal = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&journal_path)?;
        Ok(Self {
            batches: by_id,
            items,
            judgments,
            journal_path,
            journal,
        })
    }

    pub fn journal_path(&self) -> &Path {
        &self.journal_path
    }

    pub fn batches(&self) -> impl Iterator<Item = &ReviewBatch> {
        self.batches.values()
    }

    pub fn batch(&self, id: &str) -> Option<&ReviewBatch> {
        self.batches.get(id)
    }

    pub fn item(&self, id: &str) -> Option<(&ReviewBatch, &ReviewEntry)> {
        let (batch_id, pos) = self.items.get(id)?;
        let batch = &self.batches[batch_id];
        Some((batch, &batch.items[*pos]))
    }

    pub fn judgment(&self, item_id: &str) -> Option<&JudgmentRecord> {
        self.judgments.get(item_id)
    }

    pub fn verdict(&self, item_id: &str) -> Verdict {
        self.judgment(item_id)
            .map_or(Verdict::Pending, |j| j.verdict)
    }

    pub fn export(&self, batch_id: &str) -> Option<JudgmentExport> {
        let batch = self.batch(batch_id)?;
        Some(JudgmentExport::build(
            batch,
            batch
                .items
                .iter()
                .filter_map(|i| self.judgments.get(&i.item_id)),
        ))
    }

    pub fn progress(&self, batch_id: &str) -> Option<Progress> {
        self.export(batch_id).map(|e| e.progress())
    }

    /// Records a judgment durably. The journal line is synced to disk before
    /// the judgment becomes visible.
    pub fn submit(
        &mut self,
        item_id: &str,
        submission: JudgmentSubmission,
    ) -> Result<JudgmentRecord, SubmitError> {
        let Some((batch_id, _)) = self.items.get(item_id) else {
            return Err(SubmitError::UnknownItem);
        };
        if let Some(existing) = self.judgments.get(item_id) {
            return Err(SubmitError::AlreadyJudged(Box::new(existing.clone())));
        }
        let record = JudgmentRecord {
            batch_id: batch_id.clone(),
            item_id: item_id.to_string(),
            verdict: submission.verdict,
            checklist: submission.checklist,
            note: submission.note,
            annotator: submission.annotator,
            timestamp_ms: now_ms(),
        };
        let mut line = serde_json::to_string(&record).expect("judgment records serialize");
        line.push('\n');
        self.journal
            .write_all(line.as_bytes())
            .map_err(SubmitError::Io)?;
        self.journal.sync_data().map_err(SubmitError::Io)?;
        self.judgments.insert(item_id.to_string(), record.clone());
        Ok(record)
    }
}

/// Parsed records plus whether the last line was torn.
fn read_journal(path: &Path) -> Result<(Vec<JudgmentRecord>, bool), ReviewError> {
    if !path.exists() {
        return Ok((Vec::new(), false));
    }
    let lines: Vec<String> = BufReader::new(File::open(path)?)
        .lines()
        .collect::<std::io::Result<_>>()?;
    let ends_clean = std::fs::read(path)?.last().is_none_or(|b| *b == b'\n');
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(e) if i + 1 == lines.len() && !ends_clean => {
                log::warn!("ignoring torn journal tail: {e}");
                return Ok((out, true));
            }
            Err(e) => {
                return Err(ReviewError::Journal {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok((out, false))
}
