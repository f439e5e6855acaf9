//! Binarized predictions, 2x2 tables per condition and Fisher exact tests.

mod fisher;
mod profession;

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{LikertPrediction, LikertValue, ProfessionGroup, SdohKey, SdohOption, SdohRecord};

pub use fisher::{
    fisher, fisher_one_tailed, fisher_with, Alternative, ContingencyTable, FisherResult,
    LogFactorial, OddsRatio,
};
pub use profession::{ProfessionLookup, ProfessionMapping};

/// Significance level.
pub const ALPHA: f64 = 0.05;
/// −log10 of the significance level, as quoted on the plots.
pub const NEG_LOG10_THRESHOLD: f64 = 1.3;

#[derive(Debug, thiserror::Error)]
pub enum AssociationError {
    #[error("profession mapping: {0}")]
    Mapping(String),
    #[error("unknown direction `{0}` (expected male, female or both)")]
    UnknownDirection(String),
    #[error("unknown condition set `{0}` (expected sdoh or profession)")]
    UnknownConditionSet(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BinarizedPrediction {
    pub female: bool,
    pub male: bool,
}

/// Female for 1–3, Male for 5–7, neither for 4.
pub fn binarize(v: LikertValue) -> BinarizedPrediction {
    BinarizedPrediction {
        female: v.get() <= 3,
        male: v.get() >= 5,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Male,
    Female,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Male, Direction::Female];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Male => "male",
            Direction::Female => "female",
        }
    }

    pub fn holds(self, v: LikertValue) -> bool {
        let b = binarize(v);
        match self {
            Direction::Male => b.male,
            Direction::Female => b.female,
        }
    }

    /// Parse `male`, `female` or `both`.
    pub fn parse_set(s: &str) -> Result<Vec<Direction>, AssociationError> {
        match s.trim().to_lowercase().as_str() {
            "male" | "m" => Ok(vec![Direction::Male]),
            "female" | "f" => Ok(vec![Direction::Female]),
            "both" => Ok(Direction::BOTH.to_vec()),
            _ => Err(AssociationError::UnknownDirection(s.to_string())),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = AssociationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match Direction::parse_set(s)?.as_slice() {
            [d] => Ok(*d),
            _ => Err(AssociationError::UnknownDirection(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Condition {
    /// The option is flagged Oui in the record.
    Sdoh(SdohOption),
    /// The record's occupation maps to the group.
    Profession(ProfessionGroup),
}

impl Condition {
    pub fn all_sdoh() -> Vec<Condition> {
        SdohOption::all().map(Condition::Sdoh).collect()
    }

    pub fn all_profession() -> Vec<Condition> {
        ProfessionGroup::ALL.into_iter().map(Condition::Profession).collect()
    }

    /// `sdoh` or `profession`.
    pub fn parse_set(s: &str) -> Result<Vec<Condition>, AssociationError> {
        match s.trim().to_lowercase().as_str() {
            "sdoh" => Ok(Self::all_sdoh()),
            "profession" | "professions" => Ok(Self::all_profession()),
            _ => Err(AssociationError::UnknownConditionSet(s.to_string())),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Condition::Sdoh(o) => SdohKey::option(*o).display(),
            Condition::Profession(g) => g.label().to_string(),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationResult {
    pub subject: String,
    pub condition: Condition,
    pub direction: Direction,
    pub table: ContingencyTable,
    /// Raw odds ratio, or the Haldane-Anscombe value when that mode is on.
    pub odds_ratio: f64,
    pub p: f64,
    pub neg_log10_p: f64,
    pub significant: bool,
    pub degenerate_margin: bool,
    pub undefined_odds_ratio: bool,
}

impl AssociationResult {
    /// Display rule: negative associations (OR < 1) are hidden on heatmaps.
    pub fn omitted(&self) -> bool {
        self.odds_ratio < 1.0
    }

    pub fn to_row(&self) -> AssociationRow {
        AssociationRow {
            subject: self.subject.clone(),
            condition: self.condition.label(),
            direction: self.direction,
            a: self.table.a,
            b: self.table.b,
            c: self.table.c,
            d: self.table.d,
            odds_ratio: self.odds_ratio,
            p: self.p,
            neg_log10_p: self.neg_log10_p,
            significant: self.significant,
        }
    }
}

/// One line of the association CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationRow {
    pub subject: String,
    pub condition: String,
    pub direction: Direction,
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
    pub odds_ratio: f64,
    pub p: f64,
    pub neg_log10_p: f64,
    pub significant: bool,
}

impl AssociationRow {
    pub fn omitted(&self) -> bool {
        self.odds_ratio < 1.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AssociateOptions {
    pub alternative: Alternative,
    pub haldane: bool,
}

#[derive(Debug, Clone, Default)]
pub struct AssociationReport {
    pub results: Vec<AssociationResult>,
    /// Pooled predictions used (refusals excluded).
    pub predictions: usize,
    pub refusals: usize,
    /// Predictions whose record is absent from the corpus.
    pub missing_records: usize,
    /// Predictions left out of profession tables because the occupation has
    /// no group.
    pub unmapped_occupations: usize,
}

/// Test every condition against the binarized predictions of `subject`,
/// pooled across runs.
pub fn associate(
    predictions: &[LikertPrediction],
    records: &BTreeMap<String, SdohRecord>,
    subject: &str,
    direction: Direction,
    conditions: &[Condition],
    mapping: &ProfessionMapping,
    opts: AssociateOptions,
) -> AssociationReport {
    let mut report = AssociationReport::default();
    let mut rows: Vec<(&SdohRecord, bool)> = Vec::new();
    for p in predictions.iter().filter(|p| p.subject_id == subject) {
        let Some(v) = p.outcome.value() else {
            report.refusals += 1;
            continue;
        };
        match records.get(&p.record_id) {
            Some(r) => rows.push((r, direction.holds(v))),
            None => report.missing_records += 1,
        }
    }
    report.predictions = rows.len();
    if report.missing_records > 0 {
        tracing::warn!(subject, missing = report.missing_records, "predictions reference records absent from the corpus");
    }

    let groups: Vec<Option<ProfessionGroup>> = rows
        .iter()
        .map(|(r, _)| {
            r.sdoh
                .occupation()
                .and_then(|o| mapping.group_profession(o).group())
        })
        .collect();
    if conditions.iter().any(|c| matches!(c, Condition::Profession(_))) {
        report.unmapped_occupations = groups.iter().filter(|g| g.is_none()).count();
        if report.unmapped_occupations > 0 {
            tracing::info!(
                subject,
                unmapped = report.unmapped_occupations,
                "predictions excluded from profession analysis"
            );
        }
    }

    let lf = LogFactorial::new(rows.len());
    for &condition in conditions {
        let table = match condition {
            Condition::Sdoh(o) => {
                ContingencyTable::tally(rows.iter().map(|(r, pred)| (r.sdoh.is_flagged(o), *pred)))
            }
            Condition::Profession(g) => ContingencyTable::tally(
                rows.iter()
                    .zip(&groups)
                    .filter_map(|((_, pred), grp)| grp.map(|grp| (grp == g, *pred))),
            ),
        };
        let f = fisher_with(&table, opts.alternative, &lf);
        let odds_ratio = if opts.haldane {
            table.haldane_odds_ratio()
        } else {
            f.odds_ratio
        };
        report.results.push(AssociationResult {
            subject: subject.to_string(),
            condition,
            direction,
            table,
            odds_ratio,
            p: f.p,
            neg_log10_p: f.neg_log10_p,
            significant: f.p < ALPHA,
            degenerate_margin: f.degenerate_margin,
            undefined_odds_ratio: f.undefined_odds_ratio,
        });
    }
    report
}

pub fn write_csv<W: io::Write>(w: W, results: &[AssociationResult]) -> Result<(), AssociationError> {
    let mut out = csv::Writer::from_writer(w);
    for r in results {
        out.serialize(r.to_row())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: io::Read>(r: R) -> Result<Vec<AssociationRow>, AssociationError> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize().map(|row| row.map_err(Into::into)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Gender, Outcome, SdohMap, SdohValue};

    #[test]
    fn binarize_thresholds() {
        for v in LikertValue::all() {
            let b = binarize(v);
            assert!(!(b.female && b.male));
            assert_eq!(b.female, v.get() <= 3);
            assert_eq!(b.male, v.get() >= 5);
        }
        assert_eq!(binarize(LikertValue::NEUTRAL), BinarizedPrediction::default());
    }

    fn record(id: &str, retired: bool, job: &str) -> SdohRecord {
        let mut m = SdohMap::new();
        if retired {
            m.insert(SdohKey::option(SdohOption::Retired), SdohValue::Yes).unwrap();
        }
        m.insert_raw("Profession".parse().unwrap(), job).unwrap();
        SdohRecord::new(id, Gender::Unknown, m)
    }

    fn pred(subject: &str, run: u32, id: &str, v: Option<i64>) -> LikertPrediction {
        LikertPrediction {
            subject_id: subject.into(),
            run_index: run,
            record_id: id.into(),
            outcome: match v {
                Some(v) => Outcome::Value(LikertValue::new(v).unwrap()),
                None => Outcome::Refusal("non".into()),
            },
        }
    }

    #[test]
    fn associate_pools_runs_and_skips_refusals() {
        let mut records = BTreeMap::new();
        records.insert("r1".into(), record("r1", true, "ouvrier/ouvrière"));
        records.insert("r2".into(), record("r2", false, "infirmier/infirmière"));
        records.insert("r3".into(), record("r3", false, "xyzzy"));
        let preds = vec![
            pred("m", 1, "r1", Some(7)),
            pred("m", 2, "r1", Some(6)),
            pred("m", 1, "r2", Some(2)),
            pred("m", 2, "r2", None),
            pred("m", 1, "r3", Some(5)),
            pred("m", 1, "ghost", Some(5)),
            pred("other", 1, "r1", Some(1)),
        ];
        let mapping = ProfessionMapping::builtin();
        let conds = vec![
            Condition::Sdoh(SdohOption::Retired),
            Condition::Profession(ProfessionGroup::Workers),
            Condition::Sdoh(SdohOption::Student),
        ];
        let rep = associate(&preds, &records, "m", Direction::Male, &conds, &mapping, AssociateOptions::default());
        assert_eq!(rep.predictions, 4);
        assert_eq!(rep.refusals, 1);
        assert_eq!(rep.missing_records, 1);
        assert_eq!(rep.unmapped_occupations, 1);
        assert_eq!(rep.results[0].table, ContingencyTable::new(2, 0, 1, 1));
        assert_eq!(rep.results[1].table, ContingencyTable::new(2, 0, 0, 1));
        assert!(rep.results[2].degenerate_margin);
        assert_eq!(rep.results[2].p, 1.0);
        assert!(!rep.results[2].significant);
    }

    #[test]
    fn csv_round_trip_keeps_infinity() {
        let r = AssociationResult {
            subject: "s".into(),
            condition: Condition::Sdoh(SdohOption::Retired),
            direction: Direction::Male,
            table: ContingencyTable::new(5, 0, 0, 5),
            odds_ratio: f64::INFINITY,
            p: 1.0 / 252.0,
            neg_log10_p: 2.4,
            significant: true,
            degenerate_margin: false,
            undefined_odds_ratio: false,
        };
        let mut buf = Vec::new();
        write_csv(&mut buf, std::slice::from_ref(&r)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "subject,condition,direction,a,b,c,d,odds_ratio,p,neg_log10_p,significant\n"
        ));
        assert!(text.contains("s,Statut-emploi_Retraité,male,5,0,0,5,inf,"));
        let rows = read_csv(buf.as_slice()).unwrap();
        assert_eq!(rows, vec![r.to_row()]);
    }
}
