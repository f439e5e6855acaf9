//! Prompt construction, endpoint client, completion parsing and resumable
//! campaigns.

mod campaign;
mod client;
mod journal;
mod parse;
mod prompt;

use crate::corpus::{CorpusError, InputFormat};

pub use campaign::{
    request_seed, run_campaign, CampaignConfig, CampaignReport, ProbeCampaign, RunOptions,
    SubjectReport,
};
pub use client::{query_subject, DecodingParams, RetryPolicy, SubjectClient, SubjectConfig};
pub use journal::{read_journal, CellKey, Journal, JournalEntry};
pub use parse::{parse_completion, parse_prediction, ParsedCompletion};
pub use prompt::{build_prompt, extract_record, PromptTemplate, DEFAULT_TEMPLATE};

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("{subject}: transport failure after {attempts} attempt(s): {message}")]
    Transport {
        subject: String,
        attempts: u32,
        message: String,
    },
    #[error("{subject}: still rate limited after {attempts} attempt(s)")]
    RateLimited { subject: String, attempts: u32 },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("{subject}: request rejected with HTTP {status}: {body}")]
    Rejected {
        subject: String,
        status: u16,
        body: String,
    },
    #[error("subject `{subject}`: environment variable {var} is not set")]
    MissingToken { subject: String, var: String },
    #[error("campaign: {0}")]
    Config(String),
    #[error("prompt: {0}")]
    Template(String),
    #[error("records missing from corpus: {}", .0.join(", "))]
    MissingRecords(Vec<String>),
    #[error("journal: {0}")]
    Journal(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

impl ProbeError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProbeError::Transport { .. } | ProbeError::RateLimited { .. })
    }
}

/// Predictions of the given format, or of every format when `None`.
pub fn predictions(entries: &[JournalEntry], format: Option<InputFormat>) -> Vec<crate::model::LikertPrediction> {
    entries
        .iter()
        .filter(|e| format.is_none_or(|f| e.format == f))
        .map(JournalEntry::prediction)
        .collect()
}
