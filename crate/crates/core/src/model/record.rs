use std::collections::btree_map;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::schema::{fold, SdohCategory, SdohKey, SdohOption};
use super::SchemaError;

/// Reference gender of a record. Only the scoring and sampling layers may read
/// it; see [`SdohRecord::reference_gender`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unknown => "unknown",
        }
    }
}

impl std::str::FromStr for Gender {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match fold(s).as_str() {
            "male" | "m" | "h" | "homme" | "masculin" => Ok(Gender::Male),
            "female" | "f" | "femme" | "feminin" => Ok(Gender::Female),
            "unknown" | "u" | "" | "inconnu" => Ok(Gender::Unknown),
            _ => Err(SchemaError::InvalidGender(s.to_string())),
        }
    }
}

impl<'de> Deserialize<'de> for Gender {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// A value attached to an SDoH key: a Yes/No flag, or a text span (occupation
/// names, income, or a not-yet-neutralized extraction).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SdohValue {
    Yes,
    No,
    Text(String),
}

impl SdohValue {
    fn parse_for(key: &SdohKey, raw: &str) -> Result<Self, SchemaError> {
        if raw.trim().is_empty() {
            return Err(SchemaError::EmptyValue(key.canonical()));
        }
        if key.is_span() {
            return Ok(SdohValue::Text(raw.to_string()));
        }
        Ok(match fold(raw).as_str() {
            "oui" | "yes" => SdohValue::Yes,
            "non" | "no" => SdohValue::No,
            _ => SdohValue::Text(raw.to_string()),
        })
    }

    pub fn as_text(&self) -> &str {
        match self {
            SdohValue::Yes => "Oui",
            SdohValue::No => "Non",
            SdohValue::Text(t) => t,
        }
    }
}

impl fmt::Display for SdohValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_text())
    }
}

/// Ordered SDoH key/value map; iteration follows canonical key order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct SdohMap(BTreeMap<SdohKey, SdohValue>);

impl SdohMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: SdohKey, value: SdohValue) -> Result<(), SchemaError> {
        match &value {
            SdohValue::Yes | SdohValue::No if key.is_span() => {
                return Err(SchemaError::FlagOnSpan(key.canonical()))
            }
            SdohValue::Text(t) if t.trim().is_empty() => {
                return Err(SchemaError::EmptyValue(key.canonical()))
            }
            _ => {}
        }
        self.0.insert(key, value);
        Ok(())
    }

    /// Insert a raw string, classifying it as flag or text according to the key.
    pub fn insert_raw(&mut self, key: SdohKey, raw: &str) -> Result<(), SchemaError> {
        let value = SdohValue::parse_for(&key, raw)?;
        self.0.insert(key, value);
        Ok(())
    }

    pub fn get(&self, key: &SdohKey) -> Option<&SdohValue> {
        self.0.get(key)
    }

    pub fn iter(&self) -> btree_map::Iter<'_, SdohKey, SdohValue> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Categories with at least one entry.
    pub fn categories(&self) -> BTreeSet<SdohCategory> {
        self.0.keys().map(SdohKey::category).collect()
    }

    /// True when the option is present and flagged `Oui`.
    pub fn is_flagged(&self, option: SdohOption) -> bool {
        matches!(self.0.get(&SdohKey::option(option)), Some(SdohValue::Yes))
    }

    /// Current occupation span, falling back to the last occupation.
    pub fn occupation(&self) -> Option<&str> {
        [SdohCategory::Occupation, SdohCategory::LastOccupation]
            .into_iter()
            .filter_map(|c| SdohKey::span(c).ok())
            .find_map(|k| match self.0.get(&k) {
                Some(SdohValue::Text(t)) if !t.trim().is_empty() => Some(t.as_str()),
                _ => None,
            })
    }
}

impl<'a> IntoIterator for &'a SdohMap {
    type Item = (&'a SdohKey, &'a SdohValue);
    type IntoIter = btree_map::Iter<'a, SdohKey, SdohValue>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl FromIterator<(SdohKey, SdohValue)> for SdohMap {
    fn from_iter<T: IntoIterator<Item = (SdohKey, SdohValue)>>(iter: T) -> Self {
        SdohMap(iter.into_iter().collect())
    }
}

impl Serialize for SdohMap {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(&k.canonical(), v.as_text())?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for SdohMap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct MapVisitor;

        impl<'de> Visitor<'de> for MapVisitor {
            type Value = SdohMap;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object of SDoH keys to string values")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<SdohMap, A::Error> {
                let mut out = SdohMap::new();
                while let Some((raw_key, raw_value)) = access.next_entry::<String, String>()? {
                    let key: SdohKey = raw_key.parse().map_err(de::Error::custom)?;
                    if out.0.contains_key(&key) {
                        return Err(de::Error::custom(SchemaError::DuplicateKey(raw_key)));
                    }
                    out.insert_raw(key, &raw_value).map_err(de::Error::custom)?;
                }
                Ok(out)
            }
        }

        d.deserialize_map(MapVisitor)
    }
}

/// One patient-style record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdohRecord {
    pub record_id: String,
    reference_gender: Gender,
    pub sdoh: SdohMap,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filtered_text: Option<String>,
}

impl SdohRecord {
    pub fn new(record_id: impl Into<String>, reference_gender: Gender, sdoh: SdohMap) -> Self {
        SdohRecord {
            record_id: record_id.into(),
            reference_gender,
            sdoh,
            raw_text: None,
            filtered_text: None,
        }
    }

    pub fn with_texts(mut self, raw_text: Option<String>, filtered_text: Option<String>) -> Self {
        self.raw_text = raw_text;
        self.filtered_text = filtered_text;
        self
    }

    /// Reference label. Crate-private: prompts, task payloads and mock
    /// subjects are built without access to it.
    pub(crate) fn reference_gender(&self) -> Gender {
        self.reference_gender
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serialization is infallible")
    }

    pub fn from_json_line(line: &str) -> Result<Self, SchemaError> {
        serde_json::from_str(line).map_err(|e| SchemaError::Json(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn appendix_record() -> SdohRecord {
        let mut sdoh = SdohMap::new();
        for (k, v) in [
            ("Conditions-de-vie_Cohabitation", "Oui"),
            ("Statut-matrimonial_Marie", "Oui"),
            ("Domicile_Oui", "Oui"),
            ("Descendance_Oui", "Oui"),
            ("Statut-emploi_Retraite", "Oui"),
            ("Derniere-profession", "Directeur d'usine/Directrice d'usine"),
            ("Consommation-alcool_Non", "Oui"),
        ] {
            sdoh.insert_raw(k.parse().unwrap(), v).unwrap();
        }
        SdohRecord::new("r1", Gender::Male, sdoh)
    }

    #[test]
    fn json_round_trip() {
        let r = appendix_record().with_texts(Some("Mode de vie: Marié".into()), None);
        let line = r.to_json_line();
        assert!(line.contains("\"Statut-matrimonial_Marie\":\"Oui\""));
        assert!(!line.contains("filtered_text"));
        assert_eq!(SdohRecord::from_json_line(&line).unwrap(), r);
    }

    #[test]
    fn accented_keys_accepted_on_input() {
        let line = r#"{"record_id":"x","reference_gender":"F","sdoh":{"Statut-emploi_Retraité":"oui","Dernière-profession":"infirmier/infirmière"}}"#;
        let r = SdohRecord::from_json_line(line).unwrap();
        assert_eq!(r.reference_gender(), Gender::Female);
        assert!(r.sdoh.is_flagged(SdohOption::Retired));
        assert_eq!(r.sdoh.occupation(), Some("infirmier/infirmière"));
    }

    #[test]
    fn unknown_key_is_hard_error() {
        let line = r#"{"record_id":"x","reference_gender":"male","sdoh":{"Religion":"Oui"}}"#;
        let err = SdohRecord::from_json_line(line).unwrap_err();
        assert!(err.to_string().contains("Religion"), "{err}");
    }

    #[test]
    fn gender_key_rejected() {
        let line = r#"{"record_id":"x","reference_gender":"male","sdoh":{"Genre":"Homme"}}"#;
        assert!(SdohRecord::from_json_line(line).is_err());
    }

    #[test]
    fn duplicate_after_folding_rejected() {
        let line = r#"{"record_id":"x","reference_gender":"male","sdoh":{"Statut-matrimonial_Marie":"Oui","Statut-matrimonial_Marié":"Oui"}}"#;
        assert!(SdohRecord::from_json_line(line).is_err());
    }

    #[test]
    fn flags_rejected_on_span_keys() {
        let mut m = SdohMap::new();
        let k = SdohKey::span(SdohCategory::Income).unwrap();
        assert!(m.insert(k, SdohValue::Yes).is_err());
        // a raw "Oui" on a span key is kept as text
        m.insert_raw(k, "Oui").unwrap();
        assert_eq!(m.get(&k), Some(&SdohValue::Text("Oui".into())));
    }

    #[test]
    fn occupation_falls_back_to_last_occupation() {
        let r = appendix_record();
        assert_eq!(r.sdoh.occupation(), Some("Directeur d'usine/Directrice d'usine"));
        assert_eq!(r.sdoh.categories().len(), 7);
    }
}
