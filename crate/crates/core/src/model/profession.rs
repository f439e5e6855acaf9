use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::schema::fold;
use super::SchemaError;

/// The six level-1 socio-professional categories of the French PCS-2020
/// nomenclature, plus homemakers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProfessionGroup {
    Agriculteurs,
    ArtisansMerchantsBusinessLeaders,
    CadresHigherIntellectual,
    IntermediateProfessions,
    Employees,
    Workers,
    Homemakers,
}

impl ProfessionGroup {
    pub const ALL: [ProfessionGroup; 7] = [
        ProfessionGroup::Agriculteurs,
        ProfessionGroup::ArtisansMerchantsBusinessLeaders,
        ProfessionGroup::CadresHigherIntellectual,
        ProfessionGroup::IntermediateProfessions,
        ProfessionGroup::Employees,
        ProfessionGroup::Workers,
        ProfessionGroup::Homemakers,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ProfessionGroup::Agriculteurs => "Agriculteurs",
            ProfessionGroup::ArtisansMerchantsBusinessLeaders => "Artisans/Merchants/BusinessLeaders",
            ProfessionGroup::CadresHigherIntellectual => "Cadres/HigherIntellectual",
            ProfessionGroup::IntermediateProfessions => "IntermediateProfessions",
            ProfessionGroup::Employees => "Employees",
            ProfessionGroup::Workers => "Workers",
            ProfessionGroup::Homemakers => "Homemakers",
        }
    }

    /// PCS-2020 level-1 code; homemakers sit outside the nomenclature.
    pub fn pcs_code(self) -> Option<u8> {
        match self {
            ProfessionGroup::Homemakers => None,
            other => Some(other as u8 + 1),
        }
    }
}

impl fmt::Display for ProfessionGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ProfessionGroup {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let squash = |t: &str| -> String {
            fold(t).chars().filter(|c| c.is_alphanumeric()).collect()
        };
        let wanted = squash(s);
        let aliases: [(&str, ProfessionGroup); 6] = [
            ("agriculture", ProfessionGroup::Agriculteurs),
            ("artisans", ProfessionGroup::ArtisansMerchantsBusinessLeaders),
            ("cadres", ProfessionGroup::CadresHigherIntellectual),
            ("employes", ProfessionGroup::Employees),
            ("ouvriers", ProfessionGroup::Workers),
            ("aufoyer", ProfessionGroup::Homemakers),
        ];
        ProfessionGroup::ALL
            .into_iter()
            .find(|g| squash(g.label()) == wanted || squash(&format!("{g:?}")) == wanted)
            .or_else(|| aliases.iter().find(|(a, _)| *a == wanted).map(|(_, g)| *g))
            .ok_or_else(|| SchemaError::UnknownProfessionGroup(s.to_string()))
    }
}

impl Serialize for ProfessionGroup {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for ProfessionGroup {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
