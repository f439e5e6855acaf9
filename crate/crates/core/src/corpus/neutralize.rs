use serde::Serialize;

use crate::model::{SdohMap, SdohRecord, SdohValue};

use super::lexicon::NeutralizationLexicon;
use super::CorpusError;

/// A gendered marker left in a record's SDoH values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Category name, e.g. `Conditions-de-vie`.
    pub field: String,
    /// Full canonical key, e.g. `Conditions-de-vie_Cohabitation`.
    pub key: String,
    pub token: String,
    pub rule: String,
}

/// Every gendered marker found in the record's SDoH values. Free-text fields
/// (`raw_text`, `filtered_text`) are not inspected: they are only ever shown in
/// the non-neutralized input formats.
pub fn leak_check(record: &SdohRecord, lex: &NeutralizationLexicon) -> Vec<Violation> {
    record
        .sdoh
        .iter()
        .flat_map(|(key, value)| {
            let text = match value {
                SdohValue::Text(t) => t.as_str(),
                _ => "",
            };
            lex.find_markers(text).into_iter().map(move |hit| Violation {
                field: key.category().canonical_name().to_string(),
                key: key.canonical(),
                token: hit.token,
                rule: hit.rule,
            })
        })
        .collect()
}

/// Neutralize a record: option keys collapse to Oui/Non, span values get
/// inclusive occupation forms. Fails when a span still carries a marker the
/// lexicon cannot rewrite.
pub fn neutralize(record: &SdohRecord, lex: &NeutralizationLexicon) -> Result<SdohRecord, CorpusError> {
    let mut sdoh = SdohMap::new();
    for (key, value) in &record.sdoh {
        let out = match value {
            SdohValue::Yes | SdohValue::No => value.clone(),
            // an extracted span on an option key means the option applies
            SdohValue::Text(_) if !key.is_span() => SdohValue::Yes,
            SdohValue::Text(t) => {
                let rewritten = lex.rewrite_span(t);
                if let Some(hit) = lex.find_markers(&rewritten).into_iter().next() {
                    return Err(CorpusError::UnmappedGenderedTerm {
                        record_id: record.record_id.clone(),
                        key: key.canonical(),
                        token: hit.token,
                    });
                }
                SdohValue::Text(rewritten)
            }
        };
        sdoh.insert(*key, out)?;
    }
    let mut out = record.clone();
    out.sdoh = sdoh;
    debug_assert!(leak_check(&out, lex).is_empty());
    Ok(out)
}
