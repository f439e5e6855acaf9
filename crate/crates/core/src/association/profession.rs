use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::model::ProfessionGroup;

use super::AssociationError;

const DEFAULT_MAPPING: &str = include_str!("../../data/professions.toml");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MappingFile {
    version: String,
    #[serde(rename = "group")]
    groups: Vec<GroupEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupEntry {
    group: String,
    forms: Vec<String>,
}

/// Result of looking up an occupation span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfessionLookup {
    Group(ProfessionGroup),
    Unmapped,
}

impl ProfessionLookup {
    pub fn group(self) -> Option<ProfessionGroup> {
        match self {
            ProfessionLookup::Group(g) => Some(g),
            ProfessionLookup::Unmapped => None,
        }
    }
}

/// Versioned occupation-form to profession-group table.
#[derive(Debug, Clone)]
pub struct ProfessionMapping {
    version: String,
    forms: BTreeMap<String, ProfessionGroup>,
    listed: BTreeMap<ProfessionGroup, Vec<String>>,
}

fn normalize(s: &str) -> String {
    s.replace('\u{2019}', "'")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches(['.', ';', ','])
        .to_lowercase()
}

impl ProfessionMapping {
    pub fn builtin() -> Self {
        Self::from_toml(DEFAULT_MAPPING).expect("bundled profession mapping is valid")
    }

    pub fn load(path: &Path) -> Result<Self, AssociationError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AssociationError::Mapping(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, AssociationError> {
        let file: MappingFile =
            toml::from_str(text).map_err(|e| AssociationError::Mapping(e.to_string()))?;
        let mut forms = BTreeMap::new();
        let mut listed: BTreeMap<ProfessionGroup, Vec<String>> = BTreeMap::new();
        for entry in file.groups {
            let group: ProfessionGroup = entry
                .group
                .parse()
                .map_err(|e| AssociationError::Mapping(format!("{e}")))?;
            listed.entry(group).or_default().extend(entry.forms.iter().cloned());
            for form in &entry.forms {
                let whole = normalize(form);
                let mut keys = vec![whole.clone()];
                if whole.contains('/') {
                    keys.extend(whole.split('/').map(|h| h.trim().to_string()));
                }
                for key in keys {
                    if let Some(prev) = forms.insert(key.clone(), group) {
                        if prev != group {
                            return Err(AssociationError::Mapping(format!(
                                "`{key}` assigned to both {prev} and {group}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(ProfessionMapping {
            version: file.version,
            forms,
            listed,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// Forms listed for `group`, as written in the mapping file.
    pub fn forms_for(&self, group: ProfessionGroup) -> &[String] {
        self.listed.get(&group).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Group for a neutralized occupation span. An exact form wins; otherwise
    /// the longest known form the span starts with ("ouvrier/ouvrière dans le
    /// textile").
    pub fn group_profession(&self, span: &str) -> ProfessionLookup {
        let s = normalize(span);
        if s.is_empty() {
            return ProfessionLookup::Unmapped;
        }
        if let Some(g) = self.forms.get(&s) {
            return ProfessionLookup::Group(*g);
        }
        self.forms
            .iter()
            .filter(|(form, _)| {
                s.starts_with(form.as_str())
                    && s[form.len()..].starts_with(|c: char| c == ' ' || c == ',')
            })
            .max_by_key(|(form, _)| form.len())
            .map(|(_, g)| ProfessionLookup::Group(*g))
            .unwrap_or(ProfessionLookup::Unmapped)
    }
}
