//! The SDoH schema: fourteen categories, their closed option sets, and the
//! French key spellings used on disk, in prompts and in rendered records.
//!
//! Canonical on-disk keys follow the unaccented prompt list
//! (`Statut-matrimonial_Marie`); rendered records use the accented display
//! forms (`Statut-matrimonial_Marié`). Parsing accepts either, case- and
//! accent-insensitively.

use std::fmt;
use std::str::FromStr;

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use super::SchemaError;

/// One of the fourteen SDoH categories. Declaration order is the canonical
/// render order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SdohCategory {
    LivingCondition,
    MaritalStatus,
    Housing,
    Descendants,
    EmploymentStatus,
    Occupation,
    LastOccupation,
    Tobacco,
    Alcohol,
    Drug,
    PhysicalActivity,
    Income,
    Education,
    Origin,
}

/// An enumerated option. Each option belongs to exactly one category, fixed
/// by [`SdohOption::category`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SdohOption {
    LivingAlone,
    LivingWithOthers,
    Single,
    Married,
    Divorced,
    Widowed,
    HousingYes,
    HousingNo,
    DescendantsYes,
    DescendantsNo,
    Student,
    Working,
    Retired,
    Unemployed,
    EmploymentOther,
    TobaccoCurrent,
    TobaccoNo,
    TobaccoPast,
    AlcoholCurrent,
    AlcoholNo,
    AlcoholPast,
    DrugCurrent,
    DrugNo,
    DrugPast,
    PhysicalActivityYes,
    PhysicalActivityNo,
}

struct OptionSpelling {
    option: SdohOption,
    canonical: &'static str,
    display: &'static str,
    english: &'static str,
}

const fn opt(
    option: SdohOption,
    canonical: &'static str,
    display: &'static str,
    english: &'static str,
) -> OptionSpelling {
    OptionSpelling {
        option,
        canonical,
        display,
        english,
    }
}

struct CategorySpelling {
    category: SdohCategory,
    canonical: &'static str,
    display: &'static str,
    english: &'static str,
    /// Yes/No categories render as `Domicile: Oui` rather than `Domicile_Oui: Oui`.
    yes_no: bool,
    options: &'static [OptionSpelling],
}

use SdohCategory as C;
use SdohOption as O;

static SCHEMA: [CategorySpelling; 14] = [
    CategorySpelling {
        category: C::LivingCondition,
        canonical: "Conditions-de-vie",
        display: "Conditions-de-vie",
        english: "Living condition",
        yes_no: false,
        options: &[
            opt(O::LivingAlone, "Seul", "Seul", "Alone"),
            opt(O::LivingWithOthers, "Cohabitation", "Cohabitation", "With others"),
        ],
    },
    CategorySpelling {
        category: C::MaritalStatus,
        canonical: "Statut-matrimonial",
        display: "Statut-matrimonial",
        english: "Marital status",
        yes_no: false,
        options: &[
            opt(O::Single, "Celibataire", "Célibataire", "Single"),
            opt(O::Married, "Marie", "Marié", "Married/In relationship"),
            opt(O::Divorced, "Divorce", "Divorcé", "Divorced"),
            opt(O::Widowed, "Veuf", "Veuf", "Widowed"),
        ],
    },
    CategorySpelling {
        category: C::Housing,
        canonical: "Domicile",
        display: "Domicile",
        english: "Housing",
        yes_no: true,
        options: &[
            opt(O::HousingYes, "Oui", "Oui", "Yes"),
            opt(O::HousingNo, "Non", "Non", "No"),
        ],
    },
    CategorySpelling {
        category: C::Descendants,
        canonical: "Descendance",
        display: "Descendance",
        english: "Descendant",
        yes_no: true,
        options: &[
            opt(O::DescendantsYes, "Oui", "Oui", "Yes"),
            opt(O::DescendantsNo, "Non", "Non", "No"),
        ],
    },
    CategorySpelling {
        category: C::EmploymentStatus,
        canonical: "Statut-emploi",
        display: "Statut-emploi",
        english: "Employment status",
        yes_no: false,
        options: &[
            opt(O::Student, "Etudiant", "Étudiant", "Student"),
            opt(O::Working, "Actif", "Actif", "Working"),
            opt(O::Retired, "Retraite", "Retraité", "Retired"),
            opt(O::Unemployed, "Chomage", "Chômage", "Unemployed"),
            opt(O::EmploymentOther, "Autre", "Autre", "Other"),
        ],
    },
    CategorySpelling {
        category: C::Occupation,
        canonical: "Profession",
        display: "Profession",
        english: "Occupation",
        yes_no: false,
        options: &[],
    },
    CategorySpelling {
        category: C::LastOccupation,
        canonical: "Derniere-profession",
        display: "Dernière-profession",
        english: "Last occupation",
        yes_no: false,
        options: &[],
    },
    CategorySpelling {
        category: C::Tobacco,
        canonical: "Tabagisme",
        display: "Tabagisme",
        english: "Tobacco",
        yes_no: false,
        options: &[
            opt(O::TobaccoCurrent, "Actuel", "Actuel", "Current"),
            opt(O::TobaccoNo, "Non", "Non", "No"),
            opt(O::TobaccoPast, "Passe", "Passé", "Past"),
        ],
    },
    CategorySpelling {
        category: C::Alcohol,
        canonical: "Consommation-alcool",
        display: "Consommation-alcool",
        english: "Alcohol",
        yes_no: false,
        options: &[
            opt(O::AlcoholCurrent, "Actuel", "Actuel", "Current"),
            opt(O::AlcoholNo, "Non", "Non", "No"),
            opt(O::AlcoholPast, "Passe", "Passé", "Past"),
        ],
    },
    CategorySpelling {
        category: C::Drug,
        canonical: "Consommation-drogue",
        display: "Consommation-drogue",
        english: "Drug",
        yes_no: false,
        options: &[
            opt(O::DrugCurrent, "Actuel", "Actuel", "Current"),
            opt(O::DrugNo, "Non", "Non", "No"),
            opt(O::DrugPast, "Passe", "Passé", "Past"),
        ],
    },
    CategorySpelling {
        category: C::PhysicalActivity,
        canonical: "Activite-physique",
        display: "Activité-physique",
        english: "Physical activity",
        yes_no: true,
        options: &[
            opt(O::PhysicalActivityYes, "Oui", "Oui", "Yes"),
            opt(O::PhysicalActivityNo, "Non", "Non", "No"),
        ],
    },
    CategorySpelling {
        category: C::Income,
        canonical: "Revenu",
        display: "Revenu",
        english: "Income",
        yes_no: false,
        options: &[],
    },
    CategorySpelling {
        category: C::Education,
        canonical: "Niveau-education",
        display: "Niveau-éducation",
        english: "Education",
        yes_no: false,
        options: &[],
    },
    CategorySpelling {
        category: C::Origin,
        canonical: "Origine",
        display: "Origine",
        english: "Origin",
        yes_no: false,
        options: &[],
    },
];

fn spelling(category: SdohCategory) -> &'static CategorySpelling {
    let s = &SCHEMA[category as usize];
    debug_assert_eq!(s.category, category);
    s
}

fn option_spelling(option: SdohOption) -> &'static OptionSpelling {
    SCHEMA
        .iter()
        .flat_map(|c| c.options.iter())
        .find(|o| o.option == option)
        .expect("every option is listed in the schema table")
}

impl SdohCategory {
    pub const ALL: [SdohCategory; 14] = [
        C::LivingCondition,
        C::MaritalStatus,
        C::Housing,
        C::Descendants,
        C::EmploymentStatus,
        C::Occupation,
        C::LastOccupation,
        C::Tobacco,
        C::Alcohol,
        C::Drug,
        C::PhysicalActivity,
        C::Income,
        C::Education,
        C::Origin,
    ];

    /// Categories annotated with free-text spans instead of options.
    pub fn is_span_only(self) -> bool {
        spelling(self).options.is_empty()
    }

    pub fn is_yes_no(self) -> bool {
        spelling(self).yes_no
    }

    pub fn is_occupation(self) -> bool {
        matches!(self, C::Occupation | C::LastOccupation)
    }

    pub fn options(self) -> impl Iterator<Item = SdohOption> {
        spelling(self).options.iter().map(|o| o.option)
    }

    pub fn canonical_name(self) -> &'static str {
        spelling(self).canonical
    }

    pub fn display_name(self) -> &'static str {
        spelling(self).display
    }

    pub fn english_name(self) -> &'static str {
        spelling(self).english
    }
}

impl fmt::Display for SdohCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_name())
    }
}

impl SdohOption {
    /// Every option, in render order.
    pub fn all() -> impl Iterator<Item = SdohOption> {
        SdohCategory::ALL.into_iter().flat_map(|c| c.options())
    }

    pub fn category(self) -> SdohCategory {
        use SdohOption::*;
        match self {
            LivingAlone | LivingWithOthers => C::LivingCondition,
            Single | Married | Divorced | Widowed => C::MaritalStatus,
            HousingYes | HousingNo => C::Housing,
            DescendantsYes | DescendantsNo => C::Descendants,
            Student | Working | Retired | Unemployed | EmploymentOther => C::EmploymentStatus,
            TobaccoCurrent | TobaccoNo | TobaccoPast => C::Tobacco,
            AlcoholCurrent | AlcoholNo | AlcoholPast => C::Alcohol,
            DrugCurrent | DrugNo | DrugPast => C::Drug,
            PhysicalActivityYes | PhysicalActivityNo => C::PhysicalActivity,
        }
    }

    pub fn canonical_suffix(self) -> &'static str {
        option_spelling(self).canonical
    }

    pub fn display_suffix(self) -> &'static str {
        option_spelling(self).display
    }

    pub fn english_name(self) -> &'static str {
        option_spelling(self).english
    }
}

/// A schema key: either an option of an enumerated category or a span-only
/// category. Construction guarantees the option/category pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SdohKey {
    category: SdohCategory,
    option: Option<SdohOption>,
}

impl SdohKey {
    pub fn option(option: SdohOption) -> Self {
        SdohKey {
            category: option.category(),
            option: Some(option),
        }
    }

    pub fn span(category: SdohCategory) -> Result<Self, SchemaError> {
        if category.is_span_only() {
            Ok(SdohKey {
                category,
                option: None,
            })
        } else {
            Err(SchemaError::NotSpanCategory(category.canonical_name()))
        }
    }

    pub fn category(&self) -> SdohCategory {
        self.category
    }

    pub fn option_value(&self) -> Option<SdohOption> {
        self.option
    }

    pub fn is_span(&self) -> bool {
        self.option.is_none()
    }

    /// All 31 keys in canonical order.
    pub fn all() -> impl Iterator<Item = SdohKey> {
        SdohCategory::ALL.into_iter().flat_map(|c| {
            let span = c.is_span_only().then(|| SdohKey {
                category: c,
                option: None,
            });
            span.into_iter().chain(c.options().map(SdohKey::option))
        })
    }

    /// Unaccented on-disk spelling, e.g. `Statut-matrimonial_Marie`.
    pub fn canonical(&self) -> String {
        match self.option {
            Some(o) => format!("{}_{}", self.category.canonical_name(), o.canonical_suffix()),
            None => self.category.canonical_name().to_string(),
        }
    }

    /// Accented spelling used in rendered records, e.g. `Statut-matrimonial_Marié`.
    pub fn display(&self) -> String {
        match self.option {
            Some(o) => format!("{}_{}", self.category.display_name(), o.display_suffix()),
            None => self.category.display_name().to_string(),
        }
    }

    pub fn english(&self) -> String {
        match self.option {
            Some(o) => format!("{}_{}", self.category.english_name(), o.english_name()),
            None => self.category.english_name().to_string(),
        }
    }
}

impl fmt::Display for SdohKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

/// Lowercase and strip diacritics: `Marié` and `MARIE` fold to `marie`.
pub fn fold(s: &str) -> String {
    s.trim()
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .collect()
}

const GENDER_KEYS: [&str; 4] = ["genre", "sexe", "gender", "sex"];

impl FromStr for SdohKey {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded = fold(s);
        let head = folded.split('_').next().unwrap_or_default();
        if GENDER_KEYS.contains(&head) {
            return Err(SchemaError::GenderKey(s.to_string()));
        }
        SdohKey::all()
            .find(|k| fold(&k.canonical()) == folded)
            .ok_or_else(|| SchemaError::UnknownKey(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirty_one_keys() {
        assert_eq!(SdohKey::all().count(), 31);
        let spans: Vec<_> = SdohKey::all().filter(|k| k.is_span()).collect();
        assert_eq!(spans.len(), 5);
    }

    #[test]
    fn options_belong_to_their_category() {
        for c in SdohCategory::ALL {
            for o in c.options() {
                assert_eq!(o.category(), c);
            }
        }
        // schema table is indexed by discriminant
        for (i, c) in SdohCategory::ALL.iter().enumerate() {
            assert_eq!(*c as usize, i);
        }
    }

    #[test]
    fn accent_and_case_insensitive_keys() {
        let k: SdohKey = "Statut-matrimonial_Marié".parse().unwrap();
        assert_eq!(k, SdohKey::option(SdohOption::Married));
        let k2: SdohKey = "statut-matrimonial_marie".parse().unwrap();
        assert_eq!(k, k2);
        let k3: SdohKey = "Dernière-profession".parse().unwrap();
        assert_eq!(k3.category(), SdohCategory::LastOccupation);
        assert_eq!(k3.canonical(), "Derniere-profession");
        assert_eq!(k3.display(), "Dernière-profession");
    }

    #[test]
    fn unknown_and_gender_keys_rejected() {
        assert!(matches!(
            "Statut-matrimonial_Pacse".parse::<SdohKey>(),
            Err(SchemaError::UnknownKey(_))
        ));
        assert!(matches!(
            "Genre".parse::<SdohKey>(),
            Err(SchemaError::GenderKey(_))
        ));
        assert!(matches!(
            "Sexe_Homme".parse::<SdohKey>(),
            Err(SchemaError::GenderKey(_))
        ));
    }

    #[test]
    fn span_key_requires_span_category() {
        assert!(SdohKey::span(SdohCategory::Income).is_ok());
        assert!(SdohKey::span(SdohCategory::Tobacco).is_err());
    }

    #[test]
    fn canonical_round_trip() {
        for k in SdohKey::all() {
            assert_eq!(k.canonical().parse::<SdohKey>().unwrap(), k);
            assert_eq!(k.display().parse::<SdohKey>().unwrap(), k);
        }
    }
}
