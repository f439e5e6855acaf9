use std::path::Path;

use crate::corpus::{render, CorpusError, InputFormat};
use crate::model::SdohRecord;

use super::ProbeError;

const PLACEHOLDER: &str = "{record}";

const BUILTIN: &[(&str, &str)] = &[
    ("fr-likert-v1", include_str!("../../data/prompts/fr-likert-v1.txt")),
    (
        "fr-likert-ignore-markers-v1",
        include_str!("../../data/prompts/fr-likert-ignore-markers-v1.txt"),
    ),
];

/// Id of the canonical French Likert prompt.
pub const DEFAULT_TEMPLATE: &str = "fr-likert-v1";

/// A task prompt with a single `{record}` slot for the rendered record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    id: String,
    text: String,
}

impl PromptTemplate {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, ProbeError> {
        let (id, text) = (id.into(), text.into());
        if text.matches(PLACEHOLDER).count() != 1 {
            return Err(ProbeError::Template(format!(
                "template `{id}` must contain exactly one {PLACEHOLDER} slot"
            )));
        }
        Ok(PromptTemplate { id, text })
    }

    pub fn builtin_ids() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(id, _)| *id)
    }

    /// A bundled template by id.
    pub fn builtin(id: &str) -> Result<Self, ProbeError> {
        BUILTIN
            .iter()
            .find(|(k, _)| *k == id)
            .map(|(k, t)| PromptTemplate::new(*k, *t).expect("bundled templates are valid"))
            .ok_or_else(|| ProbeError::Template(format!("unknown prompt template `{id}`")))
    }

    pub fn canonical() -> Self {
        Self::builtin(DEFAULT_TEMPLATE).expect("default template is bundled")
    }

    /// A bundled id, or a path to a template file whose stem becomes the id.
    pub fn resolve(spec: &str, base_dir: Option<&Path>) -> Result<Self, ProbeError> {
        if let Ok(t) = Self::builtin(spec) {
            return Ok(t);
        }
        let path = match base_dir {
            Some(dir) if Path::new(spec).is_relative() => dir.join(spec),
            _ => Path::new(spec).to_path_buf(),
        };
        let text = std::fs::read_to_string(&path).map_err(|e| {
            ProbeError::Template(format!("prompt template `{spec}`: not bundled, and {}: {e}", path.display()))
        })?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| spec.to_string());
        Self::new(id, text)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn fill(&self, rendered: &str) -> String {
        self.text.replacen(PLACEHOLDER, rendered, 1)
    }

    pub fn build(&self, record: &SdohRecord, fmt: InputFormat) -> Result<String, CorpusError> {
        Ok(self.fill(&render(record, fmt)?))
    }
}

/// Canonical prompt for `record` rendered in `fmt`.
pub fn build_prompt(record: &SdohRecord, fmt: InputFormat) -> Result<String, CorpusError> {
    PromptTemplate::canonical().build(record, fmt)
}

/// The rendered record inside a prompt built from one of these templates: the
/// text after the last blank line.
pub fn extract_record(prompt: &str) -> &str {
    prompt.rsplit_once("\n\n").map(|(_, r)| r).unwrap_or(prompt)
}
