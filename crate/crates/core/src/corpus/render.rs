use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{fold, SdohCategory, SdohKey, SdohMap, SdohRecord, SdohValue};

use super::CorpusError;

/// The four ways a record can be presented to a subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    #[serde(rename = "full")]
    FullText,
    #[serde(rename = "filtered")]
    FilteredText,
    #[serde(rename = "extracted")]
    ExtractedSdoh,
    #[serde(rename = "neutralized")]
    NeutralizedSdoh,
}

impl InputFormat {
    pub const ALL: [InputFormat; 4] = [
        InputFormat::FullText,
        InputFormat::FilteredText,
        InputFormat::ExtractedSdoh,
        InputFormat::NeutralizedSdoh,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InputFormat::FullText => "full",
            InputFormat::FilteredText => "filtered",
            InputFormat::ExtractedSdoh => "extracted",
            InputFormat::NeutralizedSdoh => "neutralized",
        }
    }
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InputFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match fold(s).as_str() {
            "full" | "fulltext" | "full-text" => Ok(InputFormat::FullText),
            "filtered" | "filteredtext" | "filtered-text" => Ok(InputFormat::FilteredText),
            "extracted" | "extractedsdoh" | "extracted-sdoh" => Ok(InputFormat::ExtractedSdoh),
            "neutralized" | "neutralised" | "neutralizedsdoh" | "neutralized-sdoh" => {
                Ok(InputFormat::NeutralizedSdoh)
            }
            _ => Err(CorpusError::UnknownFormat(s.to_string())),
        }
    }
}

fn missing(record: &SdohRecord, format: InputFormat) -> CorpusError {
    CorpusError::MissingVariantData {
        record_id: record.record_id.clone(),
        format,
    }
}

/// Label/value pair as shown in the neutralized rendering. Yes/No categories
/// collapse to `Domicile: Oui` / `Domicile: Non` when the option is flagged.
fn neutral_pair(key: &SdohKey, value: &SdohValue) -> (String, String) {
    let category = key.category();
    if category.is_yes_no() && *value == SdohValue::Yes {
        if let Some(option) = key.option_value() {
            return (
                category.display_name().to_string(),
                option.display_suffix().to_string(),
            );
        }
    }
    (key.display(), value.as_text().to_string())
}

fn join_pairs(pairs: impl Iterator<Item = (String, String)>) -> String {
    pairs
        .map(|(k, v)| format!("{k}: {v};"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Render `record` in `format`. Output is a pure function of the record.
pub fn render(record: &SdohRecord, format: InputFormat) -> Result<String, CorpusError> {
    fn non_blank(t: &Option<String>) -> Option<&str> {
        t.as_deref().filter(|s| !s.trim().is_empty())
    }
    match format {
        InputFormat::FullText => non_blank(&record.raw_text)
            .map(str::to_string)
            .ok_or_else(|| missing(record, format)),
        InputFormat::FilteredText => non_blank(&record.filtered_text)
            .map(str::to_string)
            .ok_or_else(|| missing(record, format)),
        InputFormat::ExtractedSdoh => {
            if record.sdoh.is_empty() {
                return Err(missing(record, format));
            }
            Ok(join_pairs(
                record
                    .sdoh
                    .iter()
                    .map(|(k, v)| (k.display(), v.as_text().to_string())),
            ))
        }
        InputFormat::NeutralizedSdoh => {
            if record.sdoh.is_empty() {
                return Err(missing(record, format));
            }
            if let Some((k, _)) = record
                .sdoh
                .iter()
                .find(|(k, v)| !k.is_span() && matches!(v, SdohValue::Text(_)))
            {
                return Err(CorpusError::NotNeutralized {
                    record_id: record.record_id.clone(),
                    key: k.canonical(),
                });
            }
            Ok(join_pairs(record.sdoh.iter().map(|(k, v)| neutral_pair(k, v))))
        }
    }
}

/// Parse the `Key: Value;` rendering back into a map. Accepts both the
/// extracted and the neutralized layouts, including collapsed Yes/No
/// categories. Unknown labels are errors.
pub fn parse_rendered(text: &str) -> Result<SdohMap, CorpusError> {
    let mut map = SdohMap::new();
    for piece in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (label, value) = piece
            .split_once(':')
            .ok_or_else(|| CorpusError::Render(format!("missing ':' in `{piece}`")))?;
        let (label, value) = (label.trim(), value.trim());
        let key = match label.parse::<SdohKey>() {
            Ok(k) => k,
            Err(_) => {
                let folded = fold(label);
                let category = SdohCategory::ALL
                    .into_iter()
                    .filter(|c| c.is_yes_no())
                    .find(|c| fold(c.canonical_name()) == folded)
                    .ok_or_else(|| CorpusError::Render(format!("unknown label `{label}`")))?;
                let option = category
                    .options()
                    .find(|o| fold(o.canonical_suffix()) == fold(value))
                    .ok_or_else(|| {
                        CorpusError::Render(format!("`{label}` expects Oui or Non, got `{value}`"))
                    })?;
                map.insert(SdohKey::option(option), SdohValue::Yes)?;
                continue;
            }
        };
        map.insert_raw(key, value)?;
    }
    Ok(map)
}
