//! Human annotation campaign: balanced subset sampling, resumable annotator
//! sessions persisted in append-only logs, and export of responses as
//! predictions.

mod log;
mod server;
mod store;

use axum::http::StatusCode;
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::corpus::CorpusError;
use crate::model::{Gender, SdohRecord};

pub use server::{annotation_router, serve_annotation};
pub use store::{
    export_responses, AnnotationSession, AnnotationStore, AnnotatorProgress, AnnotatorResponse,
    Demographics, NextTask, Progress, SessionHandle, SubmitAck, SubmitRequest,
};

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("need {needed} {gender} records, corpus has {available}")]
    InsufficientRecords {
        gender: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("invalid annotator id `{0}`")]
    InvalidAnnotatorId(String),
    #[error("expected a response for {}, got `{got}`", expected.as_deref().map(|e| format!("`{e}`")).unwrap_or_else(|| "nothing (session complete)".into()))]
    OutOfOrderSubmission { expected: Option<String>, got: String },
    #[error("`{record_id}` already answered {stored}, retry carried {submitted}")]
    DuplicateConflict {
        record_id: String,
        stored: u8,
        submitted: u8,
    },
    #[error("invalid Likert value {0}")]
    InvalidValue(i64),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("annotation store: {0}")]
    Store(String),
}

impl AnnotationError {
    pub fn status(&self) -> StatusCode {
        match self {
            AnnotationError::UnknownSession(_) => StatusCode::NOT_FOUND,
            AnnotationError::OutOfOrderSubmission { .. } | AnnotationError::DuplicateConflict { .. } => {
                StatusCode::CONFLICT
            }
            AnnotationError::InvalidAnnotatorId(_) | AnnotationError::InvalidValue(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// Draw `n_per_gender` male and `n_per_gender` female record ids. The result
/// depends only on the corpus contents and `seed`, not on record order.
pub fn sample_subset(records: &[SdohRecord], n_per_gender: usize, seed: u64) -> Result<Vec<String>, AnnotationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * n_per_gender);
    for gender in [Gender::Male, Gender::Female] {
        let mut ids: Vec<&str> = records
            .iter()
            .filter(|r| r.reference_gender() == gender)
            .map(|r| r.record_id.as_str())
            .collect();
        ids.sort_unstable();
        if ids.len() < n_per_gender {
            return Err(AnnotationError::InsufficientRecords {
                gender: gender.as_str(),
                needed: n_per_gender,
                available: ids.len(),
            });
        }
        let mut picked = index::sample(&mut rng, ids.len(), n_per_gender).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| ids[i].to_string()));
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// Presentation order for one annotator.
pub fn presentation_order(subset: &[String], seed: u64, annotator_id: &str) -> Vec<String> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(annotator_id.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    let mut order = subset.to_vec();
    order.shuffle(&mut rng);
    order
}
