use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::association::ProfessionMapping;
use crate::model::{
    Gender, ProfessionGroup, SdohCategory, SdohKey, SdohMap, SdohOption, SdohRecord, SdohValue,
};

use super::SynthError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ByGender {
    #[serde(default)]
    pub male: f64,
    #[serde(default)]
    pub female: f64,
}

impl ByGender {
    fn get(&self, g: Gender) -> f64 {
        match g {
            Gender::Female => self.female,
            _ => self.male,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedOption {
    /// Option key, e.g. `Statut-emploi_Retraite`.
    pub key: String,
    #[serde(flatten)]
    pub p: ByGender,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedProfession {
    pub group: String,
    #[serde(flatten)]
    pub p: ByGender,
}

fn default_background() -> f64 {
    0.5
}

/// Planted-correlation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    /// Chance that a category with no planted option is present at all.
    #[serde(default = "default_background")]
    pub background_presence: f64,
    #[serde(default, rename = "option")]
    pub options: Vec<PlantedOption>,
    #[serde(default, rename = "profession")]
    pub professions: Vec<PlantedProfession>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            background_presence: default_background(),
            options: Vec::new(),
            professions: Vec::new(),
        }
    }
}

/// Spec resolved into per-category option weights and group weights.
#[derive(Debug, Clone)]
struct Resolved {
    background: f64,
    /// For each enumerated category: planted (option, P|gender) pairs.
    planted: BTreeMap<SdohCategory, Vec<(SdohOption, ByGender)>>,
    groups: [(ProfessionGroup, ByGender); 7],
}

fn check_prob(what: &str, p: f64) -> Result<(), SynthError> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(SynthError::InvalidProbability(format!("{what}: {p} is not in [0, 1]")));
    }
    Ok(())
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        toml::from_str(text).map_err(|e| SynthError::Spec(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SynthError::Spec(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    fn resolve(&self) -> Result<Resolved, SynthError> {
        check_prob("background_presence", self.background_presence)?;
        let mut planted: BTreeMap<SdohCategory, Vec<(SdohOption, ByGender)>> = BTreeMap::new();
        for o in &self.options {
            let key: SdohKey = o
                .key
                .parse()
                .map_err(|e| SynthError::Spec(format!("option `{}`: {e}", o.key)))?;
            let option = key
                .option_value()
                .ok_or_else(|| SynthError::Spec(format!("`{}` is a span key, not an option", o.key)))?;
            check_prob(&format!("{} male", o.key), o.p.male)?;
            check_prob(&format!("{} female", o.key), o.p.female)?;
            let list = planted.entry(option.category()).or_default();
            if list.iter().any(|(x, _)| *x == option) {
                return Err(SynthError::Spec(format!("option `{}` listed twice", o.key)));
            }
            list.push((option, o.p));
        }
        for (cat, list) in &planted {
            for (g, sum) in [
                ("male", list.iter().map(|(_, p)| p.male).sum::<f64>()),
                ("female", list.iter().map(|(_, p)| p.female).sum::<f64>()),
            ] {
                if sum > 1.0 + 1e-9 {
                    return Err(SynthError::InvalidProbability(format!(
                        "{cat} options sum to {sum} for {g}"
                    )));
                }
            }
        }

        let mut specified: BTreeMap<ProfessionGroup, ByGender> = BTreeMap::new();
        for p in &self.professions {
            let g: ProfessionGroup = p
                .group
                .parse()
                .map_err(|e| SynthError::Spec(format!("profession `{}`: {e}", p.group)))?;
            check_prob(&format!("{} male", p.group), p.p.male)?;
            check_prob(&format!("{} female", p.group), p.p.female)?;
            if specified.insert(g, p.p).is_some() {
                return Err(SynthError::Spec(format!("profession `{}` listed twice", p.group)));
            }
        }
        let free = ProfessionGroup::ALL.len() - specified.len();
        let mut rest = ByGender::default();
        for (label, total, slot) in [
            ("male", specified.values().map(|p| p.male).sum::<f64>(), &mut rest.male),
            ("female", specified.values().map(|p| p.female).sum::<f64>(), &mut rest.female),
        ] {
            if total > 1.0 + 1e-9 {
                return Err(SynthError::InvalidProbability(format!(
                    "profession groups sum to {total} for {label}"
                )));
            }
            if free == 0 && (1.0 - total).abs() > 1e-9 {
                return Err(SynthError::InvalidProbability(format!(
                    "profession groups sum to {total} for {label}; all groups listed so they must sum to 1"
                )));
            }
            *slot = if free == 0 { 0.0 } else { (1.0 - total).max(0.0) / free as f64 };
        }
        let groups = ProfessionGroup::ALL.map(|g| (g, specified.get(&g).copied().unwrap_or(rest)));
        Ok(Resolved {
            background: self.background_presence,
            planted,
            groups,
        })
    }
}

/// Realized counts of each condition per reference gender.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RealizedCount {
    pub condition: String,
    pub male: u64,
    pub male_total: u64,
    pub female: u64,
    pub female_total: u64,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub records: Vec<SdohRecord>,
    pub counts: Vec<RealizedCount>,
}

const INCOME: &[&str] = &["modeste", "revenus moyens", "aisé", "minima sociaux"];
const EDUCATION: &[&str] = &["baccalauréat", "CAP", "licence", "brevet des collèges", "doctorat"];
const ORIGIN: &[&str] = &["France", "Portugal", "Maroc", "Italie", "Algérie"];

/// Gendered extracted span for an option, as it would appear before
/// neutralization.
fn option_span(option: SdohOption, g: Gender) -> &'static str {
    let f = g == Gender::Female;
    use SdohOption::*;
    match option {
        LivingAlone => if f { "vit seule" } else { "vit seul" },
        LivingWithOthers => if f { "vit avec son mari" } else { "vit avec sa femme" },
        Single => "Célibataire",
        Married => if f { "Mariée" } else { "Marié" },
        Divorced => if f { "Divorcée" } else { "Divorcé" },
        Widowed => if f { "Veuve" } else { "Veuf" },
        Retired => if f { "Retraitée" } else { "Retraité" },
        Student => if f { "Étudiante" } else { "Étudiant" },
        Working => if f { "Active" } else { "Actif" },
        Unemployed => "Au chômage",
        _ => "Oui",
    }
}

fn sentence(option: SdohOption, g: Gender) -> String {
    let (pron, e) = if g == Gender::Female { ("Elle", "e") } else { ("Il", "") };
    use SdohOption::*;
    match option {
        LivingAlone => format!("{pron} vit seul{e}."),
        LivingWithOthers => {
            let partner = if g == Gender::Female { "son mari" } else { "sa femme" };
            format!("{pron} vit avec {partner}.")
        }
        Single => format!("{pron} est célibataire."),
        Married => format!("{pron} est marié{e}."),
        Divorced => format!("{pron} est divorcé{e}."),
        Widowed => {
            let w = if g == Gender::Female { "veuve" } else { "veuf" };
            format!("{pron} est {w}.")
        }
        HousingYes => "Aide à domicile en place.".into(),
        HousingNo => "Pas d'aide à domicile.".into(),
        DescendantsYes => format!("{pron} a des enfants."),
        DescendantsNo => format!("{pron} n'a pas d'enfant."),
        Student => format!("{pron} est étudiant{e}."),
        Working => format!("{pron} travaille."),
        Retired => format!("{pron} est retraité{e}."),
        Unemployed => format!("{pron} est au chômage."),
        EmploymentOther => format!("{pron} est en arrêt longue durée."),
        TobaccoCurrent => "Tabagisme actif.".into(),
        TobaccoNo => "Pas de tabac.".into(),
        TobaccoPast => "Tabagisme sevré.".into(),
        AlcoholCurrent => "Consommation d'alcool quotidienne.".into(),
        AlcoholNo => "Pas d'alcool.".into(),
        AlcoholPast => "Ancienne consommation d'alcool.".into(),
        DrugCurrent => "Consommation de cannabis.".into(),
        DrugNo => "Pas de drogue.".into(),
        DrugPast => "Ancienne consommation de drogues.".into(),
        PhysicalActivityYes => "Activité physique régulière.".into(),
        PhysicalActivityNo => "Sédentaire.".into(),
    }
}

fn gendered_half(form: &str, g: Gender) -> &str {
    match form.split_once('/') {
        Some((m, f)) => if g == Gender::Female { f } else { m },
        None => form,
    }
}

fn pick_weighted<T: Copy>(rng: &mut ChaCha8Rng, items: &[(T, f64)]) -> Option<T> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (item, w) in items {
        acc += w;
        if u < acc {
            return Some(*item);
        }
    }
    None
}

/// Sample `n` records from `spec`. Genders alternate male/female, so the
/// corpus is balanced. Every record carries an occupation and at least three
/// categories.
pub fn generate(spec: &SynthSpec, n: usize, seed: u64) -> Result<SynthCorpus, SynthError> {
    if n == 0 {
        return Err(SynthError::EmptyCorpus);
    }
    let resolved = spec.resolve()?;
    let mapping = ProfessionMapping::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n.to_string().len().max(4);
    let mut records = Vec::with_capacity(n);

    for i in 0..n {
        let g = if i % 2 == 0 { Gender::Male } else { Gender::Female };
        let mut sdoh = SdohMap::new();
        let mut prose = Vec::new();
        let age: u32 = rng.random_range(25..=90);
        prose.push(if g == Gender::Female {
            format!("Patiente de {age} ans.")
        } else {
            format!("Patient de {age} ans.")
        });

        let mut present: Vec<SdohCategory> = Vec::new();
        for cat in SdohCategory::ALL {
            if cat.is_occupation() {
                continue;
            }
            if cat.is_span_only() {
                if rng.random_bool(resolved.background) {
                    let pool = match cat {
                        SdohCategory::Income => INCOME,
                        SdohCategory::Education => EDUCATION,
                        _ => ORIGIN,
                    };
                    let v = *pool.choose(&mut rng).expect("non-empty pool");
                    sdoh.insert(SdohKey::span(cat)?, SdohValue::Text(v.to_string()))?;
                    prose.push(format!("{}: {v}.", cat.display_name().replace('-', " ")));
                    present.push(cat);
                }
                continue;
            }
            let planted = resolved.planted.get(&cat);
            let weights: Vec<(SdohOption, f64)> = planted
                .map(|l| l.iter().map(|(o, p)| (*o, p.get(g))).collect())
                .unwrap_or_default();
            let mut chosen = pick_weighted(&mut rng, &weights);
            if chosen.is_none() && rng.random_bool(resolved.background) {
                let free: Vec<SdohOption> = cat
                    .options()
                    .filter(|o| !weights.iter().any(|(p, _)| p == o))
                    .collect();
                chosen = free.choose(&mut rng).copied();
            }
            if let Some(option) = chosen {
                sdoh.insert_raw(SdohKey::option(option), option_span(option, g))?;
                prose.push(sentence(option, g));
                present.push(cat);
            }
        }

        let group_weights: Vec<(ProfessionGroup, f64)> =
            resolved.groups.iter().map(|(grp, p)| (*grp, p.get(g))).collect();
        // rounding can leave the cumulative sum a hair under 1
        let group = pick_weighted(&mut rng, &group_weights)
            .or_else(|| group_weights.iter().rev().find(|(_, w)| *w > 0.0).map(|(grp, _)| *grp))
            .unwrap_or(ProfessionGroup::Homemakers);
        let forms = mapping.forms_for(group);
        let form = forms.choose(&mut rng).ok_or_else(|| {
            SynthError::Spec(format!("profession mapping lists no form for {group}"))
        })?;
        let job = gendered_half(form, g);
        let retired = sdoh.get(&SdohKey::option(SdohOption::Retired)).is_some();
        let (occ_cat, lead) = if retired {
            (SdohCategory::LastOccupation, format!("Ancien{} {job}.", if g == Gender::Female { "ne" } else { "" }))
        } else {
            (SdohCategory::Occupation, format!("Profession : {job}."))
        };
        sdoh.insert(SdohKey::span(occ_cat)?, SdohValue::Text(job.to_string()))?;
        prose.push(lead);

        // fill up to three categories with unplanted background categories
        let mut fillers: Vec<SdohCategory> = SdohCategory::ALL
            .into_iter()
            .filter(|c| !c.is_occupation() && !c.is_span_only())
            .filter(|c| !present.contains(c) && !resolved.planted.contains_key(c))
            .collect();
        while present.len() + 1 < crate::corpus::MIN_CATEGORIES && !fillers.is_empty() {
            let idx = rng.random_range(0..fillers.len());
            let cat = fillers.remove(idx);
            let options: Vec<SdohOption> = cat.options().collect();
            let option = *options.choose(&mut rng).expect("enumerated category has options");
            sdoh.insert_raw(SdohKey::option(option), option_span(option, g))?;
            prose.push(sentence(option, g));
            present.push(cat);
        }

        let raw = prose.join(" ");
        let filtered = prose[1..].join(" ");
        records.push(
            SdohRecord::new(format!("syn-{i:0width$}"), g, sdoh).with_texts(Some(raw), Some(filtered)),
        );
    }

    let counts = realized_counts(&records, &mapping);
    Ok(SynthCorpus { records, counts })
}

/// Per-gender presence counts of every option and profession group.
pub fn realized_counts(records: &[SdohRecord], mapping: &ProfessionMapping) -> Vec<RealizedCount> {
    let mut out = Vec::new();
    let totals = |g: Gender| records.iter().filter(|r| r.reference_gender() == g).count() as u64;
    let (mt, ft) = (totals(Gender::Male), totals(Gender::Female));
    let count = |pred: &dyn Fn(&SdohRecord) -> bool, g: Gender| {
        records
            .iter()
            .filter(|r| r.reference_gender() == g && pred(r))
            .count() as u64
    };
    for option in SdohOption::all() {
        let has = |r: &SdohRecord| r.sdoh.get(&SdohKey::option(option)).is_some_and(|v| *v != SdohValue::No);
        out.push(RealizedCount {
            condition: SdohKey::option(option).display(),
            male: count(&has, Gender::Male),
            male_total: mt,
            female: count(&has, Gender::Female),
            female_total: ft,
        });
    }
    for group in ProfessionGroup::ALL {
        let has = |r: &SdohRecord| {
            r.sdoh
                .occupation()
                .and_then(|o| mapping.group_profession(o).group())
                == Some(group)
        };
        out.push(RealizedCount {
            condition: group.label().to_string(),
            male: count(&has, Gender::Male),
            male_total: mt,
            female: count(&has, Gender::Female),
            female_total: ft,
        });
    }
    out
}

pub fn write_counts<W: io::Write>(w: W, counts: &[RealizedCount]) -> Result<(), SynthError> {
    let mut out = csv::Writer::from_writer(w);
    for c in counts {
        out.serialize(c).map_err(|e| SynthError::Io(e.to_string()))?;
    }
    out.flush().map_err(|e| SynthError::Io(e.to_string()))
}
