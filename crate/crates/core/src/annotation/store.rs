use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::{render, InputFormat};
use crate::model::{LikertPrediction, LikertValue, Outcome, SdohRecord};

use super::log::JsonlLog;
use super::{presentation_order, sample_subset, AnnotationError};

/// Free-form annotator tags, kept apart from responses.
pub type Demographics = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSession {
    pub annotator_id: String,
    pub assigned_records: Vec<String>,
    pub cursor: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorResponse {
    pub annotator_id: String,
    pub record_id: String,
    pub value: LikertValue,
    pub elapsed_ms: u64,
    pub submitted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SessionLine {
    annotator_id: String,
    assigned_records: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DemographicsLine {
    annotator_id: String,
    tags: Demographics,
}

/// Task handed to the UI. Carries only the neutralized rendering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum NextTask {
    Task {
        record_id: String,
        index: usize,
        total: usize,
        text: String,
    },
    Done {
        total: usize,
    },
}

#[derive(Debug, Clone, Deserialize)]
pub struct SubmitRequest {
    pub record_id: String,
    pub value: i64,
    #[serde(default)]
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitAck {
    pub record_id: String,
    pub cursor: usize,
    pub total: usize,
    /// True when this was an exact retry of a stored response.
    pub duplicate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionHandle {
    pub annotator_id: String,
    pub cursor: usize,
    pub total: usize,
    pub created: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorProgress {
    pub annotator_id: String,
    pub answered: usize,
    pub assigned: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub subset_size: usize,
    pub responses: usize,
    pub annotators: Vec<AnnotatorProgress>,
}

#[derive(Debug)]
struct SessionState {
    assigned: Vec<String>,
    responses: Vec<AnnotatorResponse>,
}

#[derive(Debug)]
struct Inner {
    sessions: BTreeMap<String, SessionState>,
    demographics: BTreeMap<String, Demographics>,
    session_log: JsonlLog,
    response_log: JsonlLog,
    demographics_log: JsonlLog,
}

/// Single-writer annotation store backed by three JSON-lines logs in one
/// directory. Every response is on disk before it is acknowledged.
#[derive(Debug)]
pub struct AnnotationStore {
    dir: PathBuf,
    seed: u64,
    subset: Vec<String>,
    payloads: BTreeMap<String, String>,
    inner: RwLock<Inner>,
}

const COMPACT_AFTER_STALE: usize = 256;

fn valid_annotator_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl AnnotationStore {
    /// Open the store in `dir`, sampling the subset from `records` (which
    /// must be neutralized) and replaying existing logs.
    pub fn open(
        dir: &Path,
        records: &[SdohRecord],
        n_per_gender: usize,
        seed: u64,
    ) -> Result<Self, AnnotationError> {
        std::fs::create_dir_all(dir).map_err(|e| AnnotationError::Store(format!("{}: {e}", dir.display())))?;
        let subset = sample_subset(records, n_per_gender, seed)?;
        let by_id: BTreeMap<&str, &SdohRecord> = records.iter().map(|r| (r.record_id.as_str(), r)).collect();
        let mut payloads = BTreeMap::new();
        for id in &subset {
            payloads.insert(id.clone(), render(by_id[id.as_str()], InputFormat::NeutralizedSdoh)?);
        }

        let (session_log, session_lines) = JsonlLog::open::<SessionLine>(&dir.join("sessions.jsonl"))?;
        let (response_log, response_lines) = JsonlLog::open::<AnnotatorResponse>(&dir.join("responses.jsonl"))?;
        let (demographics_log, demographic_lines) =
            JsonlLog::open::<DemographicsLine>(&dir.join("demographics.jsonl"))?;

        let mut sessions = BTreeMap::new();
        for line in session_lines {
            if let Some(missing) = line.assigned_records.iter().find(|id| !payloads.contains_key(*id)) {
                return Err(AnnotationError::Store(format!(
                    "session `{}` references `{missing}`, which is not in the current subset",
                    line.annotator_id
                )));
            }
            sessions.insert(
                line.annotator_id,
                SessionState {
                    assigned: line.assigned_records,
                    responses: Vec::new(),
                },
            );
        }
        for r in response_lines {
            let s = sessions
                .get_mut(&r.annotator_id)
                .ok_or_else(|| AnnotationError::Store(format!("response for unknown session `{}`", r.annotator_id)))?;
            if s.assigned.get(s.responses.len()) != Some(&r.record_id) {
                return Err(AnnotationError::Store(format!(
                    "response log out of order for `{}` at `{}`",
                    r.annotator_id, r.record_id
                )));
            }
            s.responses.push(r);
        }
        let mut demographics = BTreeMap::new();
        for d in demographic_lines {
            demographics.insert(d.annotator_id, d.tags);
        }
        let store = AnnotationStore {
            dir: dir.to_path_buf(),
            seed,
            subset,
            payloads,
            inner: RwLock::new(Inner {
                sessions,
                demographics,
                session_log,
                response_log,
                demographics_log,
            }),
        };
        store.compact_if_stale(0)?;
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn subset(&self) -> &[String] {
        &self.subset
    }

    /// Create a session, or resume it when `annotator_id` is known. Passing
    /// demographics replaces any stored for that annotator.
    pub fn open_session(
        &self,
        annotator_id: Option<&str>,
        demographics: Option<Demographics>,
    ) -> Result<SessionHandle, AnnotationError> {
        let id = match annotator_id {
            Some(id) if valid_annotator_id(id) => id.to_string(),
            Some(id) => return Err(AnnotationError::InvalidAnnotatorId(id.to_string())),
            None => format!("ann-{:032x}", rand::random::<u128>()),
        };
        let mut inner = self.inner.write().expect("store lock");
        let created = !inner.sessions.contains_key(&id);
        if created {
            let assigned = presentation_order(&self.subset, self.seed, &id);
            inner.session_log.append(&SessionLine {
                annotator_id: id.clone(),
                assigned_records: assigned.clone(),
            })?;
            inner.sessions.insert(
                id.clone(),
                SessionState {
                    assigned,
                    responses: Vec::new(),
                },
            );
        }
        if let Some(tags) = demographics {
            inner.demographics_log.append(&DemographicsLine {
                annotator_id: id.clone(),
                tags: tags.clone(),
            })?;
            inner.demographics.insert(id.clone(), tags);
        }
        let s = &inner.sessions[&id];
        let handle = SessionHandle {
            annotator_id: id.clone(),
            cursor: s.responses.len(),
            total: s.assigned.len(),
            created,
        };
        drop(inner);
        self.compact_if_stale(COMPACT_AFTER_STALE)?;
        Ok(handle)
    }

    pub fn session(&self, annotator_id: &str) -> Result<AnnotationSession, AnnotationError> {
        let inner = self.inner.read().expect("store lock");
        let s = inner
            .sessions
            .get(annotator_id)
            .ok_or_else(|| AnnotationError::UnknownSession(annotator_id.to_string()))?;
        Ok(AnnotationSession {
            annotator_id: annotator_id.to_string(),
            assigned_records: s.assigned.clone(),
            cursor: s.responses.len(),
        })
    }

    pub fn next_task(&self, annotator_id: &str) -> Result<NextTask, AnnotationError> {
        let inner = self.inner.read().expect("store lock");
        let s = inner
            .sessions
            .get(annotator_id)
            .ok_or_else(|| AnnotationError::UnknownSession(annotator_id.to_string()))?;
        let total = s.assigned.len();
        Ok(match s.assigned.get(s.responses.len()) {
            Some(id) => NextTask::Task {
                record_id: id.clone(),
                index: s.responses.len(),
                total,
                text: self.payloads[id].clone(),
            },
            None => NextTask::Done { total },
        })
    }

    pub fn submit(&self, annotator_id: &str, req: &SubmitRequest) -> Result<SubmitAck, AnnotationError> {
        self.submit_at(annotator_id, req, Utc::now())
    }

    /// [`submit`](Self::submit) with an explicit timestamp.
    pub fn submit_at(
        &self,
        annotator_id: &str,
        req: &SubmitRequest,
        at: DateTime<Utc>,
    ) -> Result<SubmitAck, AnnotationError> {
        let value = u8::try_from(req.value)
            .ok()
            .and_then(|v| LikertValue::new(v as i64).ok())
            .ok_or(AnnotationError::InvalidValue(req.value))?;
        let mut inner = self.inner.write().expect("store lock");
        let Inner {
            sessions, response_log, ..
        } = &mut *inner;
        let s = sessions
            .get_mut(annotator_id)
            .ok_or_else(|| AnnotationError::UnknownSession(annotator_id.to_string()))?;
        let total = s.assigned.len();
        if let Some(prev) = s.responses.iter().find(|r| r.record_id == req.record_id) {
            return if prev.value == value {
                Ok(SubmitAck {
                    record_id: req.record_id.clone(),
                    cursor: s.responses.len(),
                    total,
                    duplicate: true,
                })
            } else {
                Err(AnnotationError::DuplicateConflict {
                    record_id: req.record_id.clone(),
                    stored: prev.value.get(),
                    submitted: value.get(),
                })
            };
        }
        let expected = s.assigned.get(s.responses.len());
        if expected != Some(&req.record_id) {
            return Err(AnnotationError::OutOfOrderSubmission {
                expected: expected.cloned(),
                got: req.record_id.clone(),
            });
        }
        let response = AnnotatorResponse {
            annotator_id: annotator_id.to_string(),
            record_id: req.record_id.clone(),
            value,
            elapsed_ms: req.elapsed_ms,
            submitted_at: at,
        };
        response_log.append(&response)?;
        s.responses.push(response);
        Ok(SubmitAck {
            record_id: req.record_id.clone(),
            cursor: s.responses.len(),
            total,
            duplicate: false,
        })
    }

    /// All responses, by annotator then submission order.
    pub fn responses(&self) -> Vec<AnnotatorResponse> {
        let inner = self.inner.read().expect("store lock");
        inner
            .sessions
            .values()
            .flat_map(|s| s.responses.iter().cloned())
            .collect()
    }

    pub fn demographics(&self, annotator_id: &str) -> Option<Demographics> {
        self.inner.read().expect("store lock").demographics.get(annotator_id).cloned()
    }

    pub fn progress(&self) -> Progress {
        let inner = self.inner.read().expect("store lock");
        let annotators: Vec<_> = inner
            .sessions
            .iter()
            .map(|(id, s)| AnnotatorProgress {
                annotator_id: id.clone(),
                answered: s.responses.len(),
                assigned: s.assigned.len(),
            })
            .collect();
        Progress {
            subset_size: self.subset.len(),
            responses: annotators.iter().map(|a| a.answered).sum(),
            annotators,
        }
    }

    /// CSV of all responses, joined with demographics as `key=value` pairs.
    pub fn export_csv(&self) -> Result<String, AnnotationError> {
        let inner = self.inner.read().expect("store lock");
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| AnnotationError::Store(e.to_string());
        w.write_record(["annotator_id", "record_id", "value", "elapsed_ms", "submitted_at", "demographics"])
            .map_err(csv_err)?;
        for (id, s) in &inner.sessions {
            let tags = inner
                .demographics
                .get(id)
                .map(|d| d.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";"))
                .unwrap_or_default();
            for r in &s.responses {
                w.write_record([
                    r.annotator_id.as_str(),
                    &r.record_id,
                    &r.value.get().to_string(),
                    &r.elapsed_ms.to_string(),
                    &r.submitted_at.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
                    &tags,
                ])
                .map_err(csv_err)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| AnnotationError::Store(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// Rewrite the logs from live state, dropping superseded lines.
    pub fn compact(&self) -> Result<(), AnnotationError> {
        let mut inner = self.inner.write().expect("store lock");
        let sessions: Vec<SessionLine> = inner
            .sessions
            .iter()
            .map(|(id, s)| SessionLine {
                annotator_id: id.clone(),
                assigned_records: s.assigned.clone(),
            })
            .collect();
        let responses: Vec<AnnotatorResponse> =
            inner.sessions.values().flat_map(|s| s.responses.iter().cloned()).collect();
        let demographics: Vec<DemographicsLine> = inner
            .demographics
            .iter()
            .map(|(id, tags)| DemographicsLine {
                annotator_id: id.clone(),
                tags: tags.clone(),
            })
            .collect();
        inner.session_log.rewrite(&sessions)?;
        inner.response_log.rewrite(&responses)?;
        inner.demographics_log.rewrite(&demographics)?;
        Ok(())
    }

    fn compact_if_stale(&self, threshold: usize) -> Result<(), AnnotationError> {
        let stale = {
            let inner = self.inner.read().expect("store lock");
            inner.demographics_log.lines.saturating_sub(inner.demographics.len())
        };
        if stale > threshold {
            self.compact()?;
        }
        Ok(())
    }
}

/// Every stored response as a prediction of its annotator, run 1.
pub fn export_responses(store: &AnnotationStore) -> Vec<LikertPrediction> {
    store
        .responses()
        .into_iter()
        .map(|r| LikertPrediction {
            subject_id: r.annotator_id,
            run_index: 1,
            record_id: r.record_id,
            outcome: Outcome::Value(r.value),
        })
        .collect()
}
