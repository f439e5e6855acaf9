use std::fmt;

use serde::{Deserialize, Serialize};

use super::SchemaError;

/// A 7-point gender judgment: 1 female, 4 uncertain, 7 male.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct LikertValue(u8);

impl LikertValue {
    pub const NEUTRAL: LikertValue = LikertValue(4);
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 7;

    pub fn new(value: i64) -> Result<Self, SchemaError> {
        if (Self::MIN as i64..=Self::MAX as i64).contains(&value) {
            Ok(LikertValue(value as u8))
        } else {
            Err(SchemaError::LikertOutOfRange(value))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Signed distance from the neutral value, in [-3, 3].
    pub fn deviation(self) -> i8 {
        self.0 as i8 - 4
    }

    /// The value mirrored through the neutral point (v -> 8 - v).
    pub fn reflected(self) -> Self {
        LikertValue(8 - self.0)
    }

    pub fn all() -> impl Iterator<Item = LikertValue> {
        (Self::MIN..=Self::MAX).map(LikertValue)
    }
}

impl TryFrom<i64> for LikertValue {
    type Error = SchemaError;
    fn try_from(v: i64) -> Result<Self, Self::Error> {
        LikertValue::new(v)
    }
}

impl From<LikertValue> for i64 {
    fn from(v: LikertValue) -> i64 {
        v.0 as i64
    }
}

impl fmt::Display for LikertValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn deviation(v: LikertValue) -> i8 {
    v.deviation()
}

/// Either a usable Likert value or a refusal carrying the raw completion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Value(LikertValue),
    Refusal(String),
}

impl Outcome {
    pub fn value(&self) -> Option<LikertValue> {
        match self {
            Outcome::Value(v) => Some(*v),
            Outcome::Refusal(_) => None,
        }
    }

    pub fn is_refusal(&self) -> bool {
        matches!(self, Outcome::Refusal(_))
    }
}

/// One elicited judgment from a model run or an annotator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertPrediction {
    pub subject_id: String,
    pub run_index: u32,
    pub record_id: String,
    pub outcome: Outcome,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deviation_examples() {
        assert_eq!(deviation(LikertValue::new(4).unwrap()), 0);
        assert_eq!(deviation(LikertValue::new(7).unwrap()), 3);
        assert_eq!(deviation(LikertValue::new(1).unwrap()), -3);
    }

    #[test]
    fn deviation_is_odd_symmetric() {
        for k in 0..=3 {
            let up = LikertValue::new(4 + k).unwrap();
            let down = LikertValue::new(4 - k).unwrap();
            assert_eq!(deviation(up), -deviation(down));
            assert_eq!(up.reflected(), down);
        }
    }

    #[test]
    fn range_is_enforced() {
        assert!(LikertValue::new(0).is_err());
        assert!(LikertValue::new(8).is_err());
        assert!(serde_json::from_str::<LikertValue>("9").is_err());
        assert_eq!(serde_json::from_str::<LikertValue>("5").unwrap().get(), 5);
    }
}
