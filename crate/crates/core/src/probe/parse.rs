use std::sync::OnceLock;

use regex::Regex;

use crate::model::{fold, LikertValue, Outcome};

/// Parsed completion plus how many answer patterns it contained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedCompletion {
    pub outcome: Outcome,
    /// Number of `Valeur prédite` matches carrying a number. More than one
    /// means the first was taken.
    pub matches: u32,
}

fn answer_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // runs on folded text: lowercase, accents stripped
    RE.get_or_init(|| {
        Regex::new(
            r"valeur[\s*_]+predite[\s*_]*(?:[:：=]|est)?[\s*_<«]*(?:de\s+)?([+-]?\d+(?:[.,]\d+)?)",
        )
        .expect("answer regex compiles")
    })
}

pub fn parse_completion(completion: &str) -> ParsedCompletion {
    let folded = fold(completion);
    let mut caps = answer_pattern().captures_iter(&folded);
    let first = caps.next().map(|c| c[1].to_string());
    let matches = first.iter().count() as u32 + caps.count() as u32;
    let value = first
        .filter(|n| !n.contains(['.', ',']))
        .and_then(|n| n.parse::<i64>().ok())
        .and_then(|n| LikertValue::new(n).ok());
    let outcome = match value {
        Some(v) => Outcome::Value(v),
        None => Outcome::Refusal(completion.to_string()),
    };
    ParsedCompletion { outcome, matches }
}

/// First integer 1–7 after `Valeur prédite`; anything else is a refusal.
pub fn parse_prediction(completion: &str) -> Outcome {
    parse_completion(completion).outcome
}
