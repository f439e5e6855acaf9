//! Synthetic corpora with planted correlations, and mock subjects that speak
//! the chat-completions wire format.

mod generate;
mod mock;

use crate::model::SchemaError;

pub use generate::{
    generate, realized_counts, write_counts, ByGender, PlantedOption, PlantedProfession,
    RealizedCount, SynthCorpus, SynthSpec,
};
pub use mock::{
    mock_router, serve_mock, spawn_mock, Answer, MockDecision, MockRule, MockRuleConfig,
    WhenClause,
};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("corpus size must be at least 1")]
    EmptyCorpus,
    #[error("invalid probability: {0}")]
    InvalidProbability(String),
    #[error("synth spec: {0}")]
    Spec(String),
    #[error("mock rule: {0}")]
    Rule(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("io: {0}")]
    Io(String),
}
