use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::Deserialize;

use super::CorpusError;

const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.toml");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconFile {
    version: String,
    #[serde(default)]
    drop_prefixes: Vec<String>,
    #[serde(default)]
    phrases: Vec<String>,
    #[serde(default, rename = "pattern")]
    patterns: Vec<PatternEntry>,
    #[serde(default, rename = "occupation")]
    occupations: Vec<OccupationEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatternEntry {
    name: String,
    regex: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OccupationEntry {
    inclusive: String,
    #[serde(default)]
    forms: Vec<String>,
}

/// A marker occurrence found in a piece of text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerHit {
    pub range: Range<usize>,
    pub token: String,
    pub rule: String,
}

/// Gendered markers and inclusive occupation forms for French text.
#[derive(Debug, Clone)]
pub struct NeutralizationLexicon {
    version: String,
    drop_prefixes: Vec<String>,
    /// lowercase gendered form -> inclusive form
    inclusive_occupations: BTreeMap<String, String>,
    inclusive_forms: Vec<String>,
    rules: Vec<(String, Regex)>,
    occupation_forms: Option<Regex>,
    inclusive_matcher: Option<Regex>,
}

fn alternation(mut words: Vec<String>) -> Option<Regex> {
    if words.is_empty() {
        return None;
    }
    // longest first so the leftmost-first engine prefers the longest form
    words.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()).then(a.cmp(b)));
    words.dedup();
    let body = words
        .iter()
        .map(|w| regex::escape(w))
        .collect::<Vec<_>>()
        .join("|");
    Some(
        RegexBuilder::new(&format!(r"\b(?:{body})\b"))
            .case_insensitive(true)
            .build()
            .expect("escaped alternation is a valid regex"),
    )
}

impl NeutralizationLexicon {
    /// The lexicon bundled with the crate.
    pub fn builtin() -> Self {
        Self::from_toml(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, CorpusError> {
        let file: LexiconFile =
            toml::from_str(text).map_err(|e| CorpusError::Lexicon(e.to_string()))?;

        let mut inclusive_occupations = BTreeMap::new();
        let mut inclusive_forms = Vec::new();
        for entry in &file.occupations {
            let halves: Vec<&str> = entry.inclusive.split('/').collect();
            if halves.len() != 2 || halves.iter().any(|h| h.trim().is_empty()) {
                return Err(CorpusError::Lexicon(format!(
                    "inclusive form `{}` must contain exactly one '/' between two forms",
                    entry.inclusive
                )));
            }
            inclusive_forms.push(entry.inclusive.clone());
            for form in halves.iter().map(|h| h.trim().to_string()).chain(entry.forms.clone()) {
                let key = form.to_lowercase();
                if let Some(prev) = inclusive_occupations.get(&key) {
                    if prev != &entry.inclusive {
                        return Err(CorpusError::Lexicon(format!(
                            "form `{form}` maps to both `{prev}` and `{}`",
                            entry.inclusive
                        )));
                    }
                }
                inclusive_occupations.insert(key, entry.inclusive.clone());
            }
        }

        let mut rules = Vec::new();
        if let Some(re) = alternation(file.phrases.clone()) {
            rules.push(("phrase".to_string(), re));
        }
        for p in &file.patterns {
            let re = RegexBuilder::new(&p.regex)
                .case_insensitive(true)
                .build()
                .map_err(|e| CorpusError::Lexicon(format!("pattern `{}`: {e}", p.name)))?;
            rules.push((p.name.clone(), re));
        }

        let occupation_forms = alternation(inclusive_occupations.keys().cloned().collect());
        let inclusive_matcher = alternation(inclusive_forms.clone());

        Ok(NeutralizationLexicon {
            version: file.version,
            drop_prefixes: file.drop_prefixes,
            inclusive_occupations,
            inclusive_forms,
            rules,
            occupation_forms,
            inclusive_matcher,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn inclusive_forms(&self) -> &[String] {
        &self.inclusive_forms
    }

    /// Inclusive double form for a gendered occupation form, if known.
    pub fn inclusive_for(&self, form: &str) -> Option<&str> {
        self.inclusive_occupations
            .get(&form.trim().to_lowercase())
            .map(String::as_str)
    }

    fn is_inclusive(&self, text: &str) -> Option<&str> {
        let t = text.trim().to_lowercase();
        self.inclusive_forms
            .iter()
            .find(|f| f.to_lowercase() == t)
            .map(String::as_str)
    }

    /// All non-overlapping marker hits in `text`, ignoring anything inside an
    /// inclusive double form.
    pub fn find_markers(&self, text: &str) -> Vec<MarkerHit> {
        let masked: Vec<Range<usize>> = self
            .inclusive_matcher
            .iter()
            .flat_map(|re| re.find_iter(text).map(|m| m.range()))
            .collect();
        let overlaps = |a: &Range<usize>, b: &Range<usize>| a.start < b.end && b.start < a.end;

        let mut hits: Vec<MarkerHit> = Vec::new();
        let occupation_rule = self
            .occupation_forms
            .as_ref()
            .map(|re| ("gendered-occupation", re));
        let rules = self
            .rules
            .iter()
            .map(|(n, re)| (n.as_str(), re))
            .chain(occupation_rule);
        for (name, re) in rules {
            for m in re.find_iter(text) {
                let range = m.range();
                if masked.iter().any(|r| overlaps(r, &range)) {
                    continue;
                }
                hits.push(MarkerHit {
                    range,
                    token: m.as_str().to_string(),
                    rule: name.to_string(),
                });
            }
        }
        hits.sort_by(|a, b| {
            a.range
                .start
                .cmp(&b.range.start)
                .then(b.range.end.cmp(&a.range.end))
        });
        let mut kept: Vec<MarkerHit> = Vec::new();
        for h in hits {
            if kept.last().is_some_and(|k| overlaps(&k.range, &h.range)) {
                continue;
            }
            kept.push(h);
        }
        kept
    }

    /// Rewrite an occupation-style span: drop leading qualifiers, then replace
    /// every gendered occupation form with its inclusive double form. Returns
    /// the rewritten text; residual markers are left for the caller to check.
    pub fn rewrite_span(&self, span: &str) -> String {
        let mut text = span.replace('\u{2019}', "'");
        text = text.split_whitespace().collect::<Vec<_>>().join(" ");
        let trimmed = text.trim_end_matches(['.', ';', ',', ' ']).to_string();
        let mut rest = trimmed.as_str();
        loop {
            let lower = rest.to_lowercase();
            let stripped = self.drop_prefixes.iter().find_map(|p| {
                let p = p.to_lowercase();
                if !lower.starts_with(&p) {
                    return None;
                }
                let after = &rest[p.len()..];
                if p.ends_with('-') {
                    Some(after)
                } else if after.starts_with(' ') {
                    Some(after.trim_start())
                } else {
                    None
                }
            });
            match stripped {
                Some(r) if !r.is_empty() => rest = r,
                _ => break,
            }
        }

        if let Some(inclusive) = self.inclusive_for(rest).or_else(|| self.is_inclusive(rest)) {
            return inclusive.to_string();
        }
        let Some(forms) = &self.occupation_forms else {
            return rest.to_string();
        };
        let masked: Vec<Range<usize>> = self
            .inclusive_matcher
            .iter()
            .flat_map(|re| re.find_iter(rest).map(|m| m.range()))
            .collect();
        let mut out = String::with_capacity(rest.len() + 16);
        let mut last = 0;
        for m in forms.find_iter(rest) {
            if masked.iter().any(|r| r.start < m.end() && m.start() < r.end) {
                continue;
            }
            out.push_str(&rest[last..m.start()]);
            out.push_str(self.inclusive_for(m.as_str()).unwrap_or(m.as_str()));
            last = m.end();
        }
        out.push_str(&rest[last..]);
        out
    }
}
