//! Record ingestion: inclusion filter, gender neutralization, leak checking
//! and the four input renderings.

mod lexicon;
mod neutralize;
mod render;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::model::{Gender, SchemaError, SdohRecord};

pub use lexicon::{MarkerHit, NeutralizationLexicon};
pub use neutralize::{leak_check, neutralize, Violation};
pub use render::{parse_rendered, render, InputFormat};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate record id `{0}`")]
    DuplicateRecordId(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("lexicon: {0}")]
    Lexicon(String),
    #[error("unknown input format `{0}`")]
    UnknownFormat(String),
    #[error("record `{record_id}` lacks the data needed for the {format} format")]
    MissingVariantData { record_id: String, format: InputFormat },
    #[error("record `{record_id}` is not neutralized: `{key}` still carries extracted text")]
    NotNeutralized { record_id: String, key: String },
    #[error("record `{record_id}`: `{token}` in `{key}` is gendered and has no lexicon replacement")]
    UnmappedGenderedTerm {
        record_id: String,
        key: String,
        token: String,
    },
    #[error("render: {0}")]
    Render(String),
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Counts reported by [`filter_records`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FilterSummary {
    pub input: usize,
    pub kept: usize,
    pub male: usize,
    pub female: usize,
    pub unknown: usize,
}

/// Minimum number of distinct SDoH categories for a record to be kept.
pub const MIN_CATEGORIES: usize = 3;

/// Keep records with at least three SDoH categories and occupation data
/// (current or last occupation).
pub fn passes_filter(record: &SdohRecord) -> bool {
    record.sdoh.categories().len() >= MIN_CATEGORIES && record.sdoh.occupation().is_some()
}

pub fn filter_records(records: Vec<SdohRecord>) -> (Vec<SdohRecord>, FilterSummary) {
    let mut summary = FilterSummary {
        input: records.len(),
        ..Default::default()
    };
    let kept: Vec<SdohRecord> = records.into_iter().filter(passes_filter).collect();
    summary.kept = kept.len();
    for r in &kept {
        match r.reference_gender() {
            Gender::Male => summary.male += 1,
            Gender::Female => summary.female += 1,
            Gender::Unknown => summary.unknown += 1,
        }
    }
    if kept.is_empty() {
        tracing::warn!(input = summary.input, "no record passed the inclusion filter");
    }
    (kept, summary)
}

/// Read a JSON-lines record file. Blank lines are skipped; record ids must be
/// unique.
pub fn read_records(path: &Path) -> Result<Vec<SdohRecord>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = SdohRecord::from_json_line(&line).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(record.record_id.clone()) {
            return Err(CorpusError::DuplicateRecordId(record.record_id));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn write_records<'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a SdohRecord>,
) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        writeln!(w, "{}", r.to_json_line()).map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}

/// A record set aside during ingestion, with the reason.
#[derive(Debug, Clone, Serialize)]
pub struct Rejected {
    pub record_id: String,
    pub reason: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    pub record: SdohRecord,
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub kept: Vec<SdohRecord>,
    pub rejected: Vec<Rejected>,
    pub summary: FilterSummary,
}

/// Filter, neutralize when the target format calls for it, and check that
/// every kept record renders in `format`. Failing records are quarantined
/// instead of aborting the batch.
pub fn ingest(
    records: Vec<SdohRecord>,
    lex: &NeutralizationLexicon,
    format: InputFormat,
) -> IngestOutcome {
    let (filtered, _) = filter_records(records);
    let mut kept = Vec::with_capacity(filtered.len());
    let mut rejected = Vec::new();
    for record in filtered {
        let prepared = if format == InputFormat::NeutralizedSdoh {
            neutralize(&record, lex)
        } else {
            Ok(record.clone())
        };
        let checked = prepared.and_then(|r| render(&r, format).map(|_| r));
        match checked {
            Ok(r) => kept.push(r),
            Err(e) => {
                let token = match &e {
                    CorpusError::UnmappedGenderedTerm { token, .. } => Some(token.clone()),
                    _ => None,
                };
                tracing::warn!(record_id = %record.record_id, "quarantined: {e}");
                rejected.push(Rejected {
                    record_id: record.record_id.clone(),
                    reason: e.to_string(),
                    token,
                    record,
                });
            }
        }
    }
    let (kept, summary) = filter_records(kept);
    IngestOutcome {
        kept,
        rejected,
        summary,
    }
}

/// Path of the quarantine file next to an output file: `<out>.rejected.jsonl`.
pub fn quarantine_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_os_string();
    s.push(".rejected.jsonl");
    PathBuf::from(s)
}

pub fn write_rejected(path: &Path, rejected: &[Rejected]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in rejected {
        let line = serde_json::to_string(r).expect("rejected entry serializes");
        writeln!(w, "{line}").map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}
