//! Domain types shared by every other module.

mod likert;
mod profession;
mod record;
mod schema;

pub use likert::{deviation, LikertPrediction, LikertValue, Outcome};
pub use profession::ProfessionGroup;
pub use record::{Gender, SdohMap, SdohRecord, SdohValue};
pub use schema::{fold, SdohCategory, SdohKey, SdohOption};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("unknown SDoH key `{0}`")]
    UnknownKey(String),
    #[error("gender may not appear as an SDoH input key (`{0}`)")]
    GenderKey(String),
    #[error("duplicate SDoH key `{0}`")]
    DuplicateKey(String),
    #[error("`{0}` is not a span-only category")]
    NotSpanCategory(&'static str),
    #[error("span key `{0}` cannot carry a Yes/No flag")]
    FlagOnSpan(String),
    #[error("empty value for `{0}`")]
    EmptyValue(String),
    #[error("Likert value {0} outside [1, 7]")]
    LikertOutOfRange(i64),
    #[error("unrecognized gender label `{0}`")]
    InvalidGender(String),
    #[error("unknown profession group `{0}`")]
    UnknownProfessionGroup(String),
    #[error("malformed record: {0}")]
    Json(String),
}
