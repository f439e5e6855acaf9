use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::AnnotationError;

fn store_err(path: &Path, e: impl std::fmt::Display) -> AnnotationError {
    AnnotationError::Store(format!("{}: {e}", path.display()))
}

/// Append-only JSON-lines file. Appends are flushed and fsynced before
/// returning.
#[derive(Debug)]
pub(super) struct JsonlLog {
    path: PathBuf,
    file: File,
    pub(super) lines: usize,
}

impl JsonlLog {
    /// Open or create, returning the parsed lines. A torn final line is cut.
    pub(super) fn open<T: DeserializeOwned>(path: &Path) -> Result<(Self, Vec<T>), AnnotationError> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(|e| store_err(path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| store_err(path, e))?;
        let complete = bytes.last().is_none_or(|b| *b == b'\n');
        let mut items = Vec::new();
        let mut offset = 0usize;
        let mut chunks = bytes.split_inclusive(|b| *b == b'\n').peekable();
        let mut line_no = 0;
        while let Some(raw) = chunks.next() {
            line_no += 1;
            let last = chunks.peek().is_none();
            let text = String::from_utf8_lossy(raw);
            if !text.trim().is_empty() {
                match serde_json::from_str::<T>(text.trim_end()) {
                    Ok(item) => items.push(item),
                    Err(_) if last && !complete => {
                        tracing::warn!(path = %path.display(), "dropping torn final line");
                        file.set_len(offset as u64).map_err(|e| store_err(path, e))?;
                        file.seek(SeekFrom::End(0)).map_err(|e| store_err(path, e))?;
                        break;
                    }
                    Err(e) => return Err(store_err(path, format!("line {line_no}: {e}"))),
                }
            }
            offset += raw.len();
        }
        let lines = items.len();
        Ok((
            JsonlLog {
                path: path.to_path_buf(),
                file,
                lines,
            },
            items,
        ))
    }

    pub(super) fn append<T: Serialize>(&mut self, item: &T) -> Result<(), AnnotationError> {
        let mut line = serde_json::to_string(item).expect("log item serializes");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| store_err(&self.path, e))?;
        self.lines += 1;
        Ok(())
    }

    /// Replace the file contents with `items` via a temp file and rename.
    pub(super) fn rewrite<T: Serialize>(&mut self, items: &[T]) -> Result<(), AnnotationError> {
        let tmp = self.path.with_extension("jsonl.tmp");
        {
            let mut f = File::create(&tmp).map_err(|e| store_err(&tmp, e))?;
            for item in items {
                let mut line = serde_json::to_string(item).expect("log item serializes");
                line.push('\n');
                f.write_all(line.as_bytes()).map_err(|e| store_err(&tmp, e))?;
            }
            f.sync_all().map_err(|e| store_err(&tmp, e))?;
        }
        fs::rename(&tmp, &self.path).map_err(|e| store_err(&self.path, e))?;
        self.file = OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| store_err(&self.path, e))?;
        self.lines = items.len();
        Ok(())
    }
}
