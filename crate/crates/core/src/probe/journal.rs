use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::corpus::InputFormat;
use crate::model::{LikertPrediction, Outcome};

use super::ProbeError;

/// One persisted prediction cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub subject: String,
    pub format: InputFormat,
    pub run: u32,
    pub record_id: String,
    pub outcome: Outcome,
    /// Answer-pattern matches in the completion.
    #[serde(default)]
    pub matches: u32,
    pub prompt_template: String,
    /// Raw completion text.
    pub completion: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub subject: String,
    pub format: InputFormat,
    pub run: u32,
    pub record_id: String,
}

impl JournalEntry {
    pub fn key(&self) -> CellKey {
        CellKey {
            subject: self.subject.clone(),
            format: self.format,
            run: self.run,
            record_id: self.record_id.clone(),
        }
    }

    pub fn prediction(&self) -> LikertPrediction {
        LikertPrediction {
            subject_id: self.subject.clone(),
            run_index: self.run,
            record_id: self.record_id.clone(),
            outcome: self.outcome.clone(),
        }
    }
}

/// Append-only JSON-lines journal. Appends are serialized behind a lock and
/// flushed before `append` returns.
#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    inner: Mutex<Inner>,
}

#[derive(Debug)]
struct Inner {
    file: File,
    done: HashSet<CellKey>,
    durable: bool,
}

/// Parse journal lines. A torn final line (no trailing newline) is reported as
/// the byte offset where valid content ends.
fn scan(path: &Path, bytes: &[u8]) -> Result<(Vec<JournalEntry>, Option<u64>), ProbeError> {
    let mut entries = Vec::new();
    let mut offset = 0usize;
    let ends_with_newline = bytes.last().is_none_or(|b| *b == b'\n');
    let mut lines = bytes.split_inclusive(|b| *b == b'\n').peekable();
    let mut line_no = 0;
    while let Some(raw) = lines.next() {
        line_no += 1;
        let last = lines.peek().is_none();
        let text = String::from_utf8_lossy(raw);
        if text.trim().is_empty() {
            offset += raw.len();
            continue;
        }
        match serde_json::from_str::<JournalEntry>(text.trim_end()) {
            Ok(e) => entries.push(e),
            Err(_) if last && !ends_with_newline => return Ok((entries, Some(offset as u64))),
            Err(e) => {
                return Err(ProbeError::Journal(format!(
                    "{}:{line_no}: {e}",
                    path.display()
                )))
            }
        }
        offset += raw.len();
    }
    Ok((entries, None))
}

pub fn read_journal(path: &Path) -> Result<Vec<JournalEntry>, ProbeError> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| ProbeError::Journal(format!("{}: {e}", path.display())))?;
    Ok(scan(path, &bytes)?.0)
}

impl Journal {
    /// Open or create a journal. A torn trailing line left by an interrupted
    /// write is truncated away.
    pub fn open(path: &Path) -> Result<Self, ProbeError> {
        let io_err = |e: std::io::Error| ProbeError::Journal(format!("{}: {e}", path.display()));
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(io_err)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io_err)?;
        let (entries, torn) = scan(path, &bytes)?;
        if let Some(valid) = torn {
            tracing::warn!(path = %path.display(), "dropping torn final journal line");
            file.set_len(valid).map_err(io_err)?;
            file.seek(SeekFrom::End(0)).map_err(io_err)?;
        }
        let mut done = HashSet::new();
        for e in entries {
            if !done.insert(e.key()) {
                tracing::warn!(record_id = %e.record_id, subject = %e.subject, "duplicate journal cell ignored");
            }
        }
        Ok(Journal {
            path: path.to_path_buf(),
            inner: Mutex::new(Inner {
                file,
                done,
                durable: false,
            }),
        })
    }

    /// fsync after every append.
    pub fn set_durable(&self, durable: bool) {
        self.inner.lock().expect("journal lock").durable = durable;
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, key: &CellKey) -> bool {
        self.inner.lock().expect("journal lock").done.contains(key)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("journal lock").done.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Append an entry. Returns false, writing nothing, when the cell is
    /// already journaled.
    pub fn append(&self, entry: &JournalEntry) -> Result<bool, ProbeError> {
        let mut inner = self.inner.lock().expect("journal lock");
        let key = entry.key();
        if inner.done.contains(&key) {
            return Ok(false);
        }
        let mut line = serde_json::to_string(entry).expect("journal entry serializes");
        line.push('\n');
        let io_err = |e: std::io::Error| ProbeError::Journal(format!("{}: {e}", self.path.display()));
        inner.file.write_all(line.as_bytes()).map_err(io_err)?;
        inner.file.flush().map_err(io_err)?;
        if inner.durable {
            inner.file.sync_data().map_err(io_err)?;
        }
        inner.done.insert(key);
        Ok(true)
    }

    pub fn entries(&self) -> Result<Vec<JournalEntry>, ProbeError> {
        let _guard = self.inner.lock().expect("journal lock");
        let file = File::open(&self.path)
            .map_err(|e| ProbeError::Journal(format!("{}: {e}", self.path.display())))?;
        let mut out = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| ProbeError::Journal(e.to_string()))?;
            if !line.trim().is_empty() {
                out.push(serde_json::from_str(&line).map_err(|e| ProbeError::Journal(e.to_string()))?);
            }
        }
        Ok(out)
    }
}
