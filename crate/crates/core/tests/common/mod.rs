//! Shared oracles, fixtures and end-to-end drivers for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use sdoh_probe::association::{
    associate, binarize, fisher, fisher_one_tailed, AssociateOptions, Alternative, Condition, ContingencyTable,
    Direction, ProfessionMapping,
};
use sdoh_probe::corpus::{ingest, leak_check, read_records, InputFormat, NeutralizationLexicon};
use sdoh_probe::metrics::{bias_score, campaign_scores, Grouping, Tagged};
use sdoh_probe::model::{LikertValue, Outcome, ProfessionGroup, SdohRecord};
use sdoh_probe::probe::{
    parse_prediction, predictions, request_seed, run_campaign, CampaignConfig, CellKey, Journal, ProbeCampaign,
    RunOptions,
};
use sdoh_probe::synth::{generate, spawn_mock, MockDecision, MockRule, SynthSpec};

pub type Check = Result<String, String>;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn lv(v: u8) -> LikertValue {
    LikertValue::new(v as i64).unwrap()
}

// ---------------------------------------------------------------- Fisher oracle

pub fn binom(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r.checked_mul((n - i) as u128).expect("oracle overflow") / (i + 1) as u128;
    }
    r
}

/// Hypergeometric weights C(r1, x)·C(r2, k−x) over the support of the table's
/// margins, with the total C(n, k).
fn weights(t: &ContingencyTable) -> (u64, Vec<(u64, u128)>, u128) {
    let (r1, r2, k) = (t.a + t.b, t.c + t.d, t.a + t.c);
    let lo = k.saturating_sub(r2);
    let hi = k.min(r1);
    let ws = (lo..=hi).map(|x| (x, binom(r1, x) * binom(r2, k - x))).collect();
    (t.a, ws, binom(r1 + r2, k))
}

/// P(X ≥ a) by enumeration, as an exact ratio converted once.
pub fn oracle_greater(t: &ContingencyTable) -> f64 {
    let (a, ws, total) = weights(t);
    let num: u128 = ws.iter().filter(|(x, _)| *x >= a).map(|(_, w)| w).sum();
    num as f64 / total as f64
}

/// Sum of all tables no more likely than the observed one.
pub fn oracle_two_sided(t: &ContingencyTable) -> f64 {
    let (a, ws, total) = weights(t);
    let observed = ws.iter().find(|(x, _)| *x == a).map(|(_, w)| *w).unwrap_or(0);
    // same 1e-7 relative tolerance the implementation documents
    let num: u128 = ws
        .iter()
        .filter(|(_, w)| (*w as f64) <= observed as f64 * (1.0 + 1e-7))
        .map(|(_, w)| w)
        .sum();
    (num as f64 / total as f64).min(1.0)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else {
        (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
    }
}

pub fn all_tables(max_n: u64) -> impl Iterator<Item = ContingencyTable> {
    (0..=max_n).flat_map(move |a| {
        (0..=max_n - a).flat_map(move |b| {
            (0..=max_n - a - b).flat_map(move |c| {
                (0..=max_n - a - b - c).map(move |d| ContingencyTable::new(a, b, c, d))
            })
        })
    })
}

pub fn check_fisher_oracle() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut count = 0usize;
    for t in all_tables(30) {
        count += 1;
        let got = fisher_one_tailed(&t).p;
        let want = oracle_greater(&t);
        let e = rel_err(got, want);
        worst = worst.max(e);
        if e > 1e-9 {
            return Err(format!("{t:?}: p = {got:e}, oracle {want:e}, rel err {e:e}"));
        }
    }
    let elapsed = start.elapsed();
    if elapsed.as_secs() >= 60 {
        return Err(format!("sweep took {elapsed:?}"));
    }
    Ok(format!("{count} tables with n <= 30, max rel err {worst:.2e}, {:.2}s", elapsed.as_secs_f64()))
}

pub fn check_spot_values() -> Check {
    let t = ContingencyTable::new(5, 0, 0, 5);
    let r = fisher_one_tailed(&t);
    if r.p != 1.0 / 252.0 {
        return Err(format!("(5,0,0,5): p = {:e}, want 1/252", r.p));
    }
    if oracle_greater(&t) != 1.0 / 252.0 {
        return Err("oracle disagrees on 1/252".into());
    }
    let r = fisher_one_tailed(&ContingencyTable::new(8, 2, 1, 9));
    if r.odds_ratio != 36.0 {
        return Err(format!("(8,2,1,9): OR = {}, want 36", r.odds_ratio));
    }
    let t = ContingencyTable::new(5, 5, 5, 5);
    let r = fisher_one_tailed(&t);
    let want = oracle_greater(&t);
    if r.odds_ratio != 1.0 || r.p <= 0.05 || rel_err(r.p, want) > 1e-12 {
        return Err(format!("(5,5,5,5): OR = {}, p = {}, oracle {want}", r.odds_ratio, r.p));
    }
    Ok(format!("1/252 exact, OR 36, (5,5,5,5) p = {:.6} (oracle {want:.6})", r.p))
}

// ---------------------------------------------------------------- bias score

pub fn check_bias_identities() -> Check {
    let score = |vs: &[u8]| bias_score(&vs.iter().map(|&v| lv(v)).collect::<Vec<_>>()).unwrap();
    let cases: [(&[u8], f64); 4] = [(&[4, 4, 4, 4], 0.0), (&[7; 5], 3.0), (&[1; 5], -3.0), (&[2, 6, 6], 2.0)];
    for (vs, want) in cases {
        let got = score(vs);
        if got != want {
            return Err(format!("{vs:?}: {got}, want {want}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for i in 0..1000 {
        let n = rng.random_range(1..=200);
        let vs: Vec<LikertValue> = (0..n).map(|_| lv(rng.random_range(1..=7))).collect();
        let reflected: Vec<LikertValue> = vs.iter().map(|v| v.reflected()).collect();
        let (s, r) = (bias_score(&vs).unwrap(), bias_score(&reflected).unwrap());
        if s != -r {
            return Err(format!("set {i}: score {s}, reflected {r}"));
        }
    }
    Ok("all-4s 0, all-7s +3, all-1s -3, [2,6,6] +2, reflection on 1000 random sets".into())
}

pub fn check_binarization() -> Check {
    for v in 1..=7u8 {
        let b = binarize(lv(v));
        let want = (v <= 3, v >= 5);
        if (b.female, b.male) != want {
            return Err(format!("{v}: female {}, male {}", b.female, b.male));
        }
        if Direction::Male.holds(lv(v)) != want.1 || Direction::Female.holds(lv(v)) != want.0 {
            return Err(format!("{v}: direction mismatch"));
        }
    }
    Ok("1-3 female, 4 neither, 5-7 male".into())
}

// ---------------------------------------------------------------- parser

#[derive(Debug, Deserialize)]
pub struct CompletionFixture {
    pub kind: String,
    pub text: String,
    pub expected: Option<u8>,
}

pub fn load_completions() -> Vec<CompletionFixture> {
    std::fs::read_to_string(fixture("completions.jsonl"))
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

pub fn check_parser_corpus() -> Check {
    let fixtures = load_completions();
    if fixtures.len() < 30 {
        return Err(format!("only {} fixtures", fixtures.len()));
    }
    let mut wrong = Vec::new();
    for f in &fixtures {
        let got = match parse_prediction(&f.text) {
            Outcome::Value(v) => Some(v.get()),
            Outcome::Refusal(_) => None,
        };
        if got != f.expected {
            wrong.push(format!("{:?} -> {got:?}, want {:?}", f.text, f.expected));
        }
    }
    if !wrong.is_empty() {
        return Err(wrong.join("; "));
    }
    let kinds: BTreeSet<&str> = fixtures.iter().map(|f| f.kind.as_str()).collect();
    Ok(format!("{} fixtures ({}), 0 misclassified", fixtures.len(), kinds.into_iter().collect::<Vec<_>>().join(", ")))
}

// ---------------------------------------------------------------- neutralization

pub fn check_leak_fixture() -> Check {
    let records = read_records(&fixture("leak_corpus.jsonl")).map_err(|e| e.to_string())?;
    if records.len() != 50 {
        return Err(format!("fixture has {} records", records.len()));
    }
    let expected: BTreeSet<String> = std::fs::read_to_string(fixture("leak_expected_quarantine.txt"))
        .unwrap()
        .lines()
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    let lex = NeutralizationLexicon::builtin();
    let out = ingest(records, &lex, InputFormat::NeutralizedSdoh);
    let violations: usize = out.kept.iter().map(|r| leak_check(r, &lex).len()).sum();
    let quarantined: BTreeSet<String> = out.rejected.iter().map(|r| r.record_id.clone()).collect();
    if violations != 0 {
        return Err(format!("{violations} residual violations"));
    }
    if quarantined != expected {
        return Err(format!("quarantined {quarantined:?}, expected {expected:?}"));
    }
    if out.kept.len() + out.rejected.len() != 50 {
        return Err(format!("{} kept + {} rejected != 50", out.kept.len(), out.rejected.len()));
    }
    Ok(format!("{} kept with 0 violations, {} quarantined as expected", out.kept.len(), out.rejected.len()))
}

// ---------------------------------------------------------------- planted pipeline

pub const PLANTED_SPEC: &str = r#"
background_presence = 0.5

[[profession]]
group = "Workers"
male = 0.9
female = 0.1
"#;

pub const WORKERS_RULE: &str = r#"
seed = 11

[default]
uniform = [1, 7]

[[when]]
profession_group = "Workers"
value = 7
"#;

pub const PLANTED_N: usize = 958;
pub const PLANTED_SEED: u64 = 958;

/// Synthesize and neutralize a corpus.
pub fn neutral_corpus(spec: &str, n: usize, seed: u64) -> BTreeMap<String, SdohRecord> {
    let synth = generate(&SynthSpec::from_toml(spec).unwrap(), n, seed).unwrap();
    let out = ingest(synth.records, &NeutralizationLexicon::builtin(), InputFormat::NeutralizedSdoh);
    assert!(out.rejected.is_empty(), "synthetic records quarantined: {:?}", out.rejected);
    out.kept.into_iter().map(|r| (r.record_id.clone(), r)).collect()
}

pub fn campaign_toml(base_url: &str, subjects: &[&str], runs: u32, seed: u64) -> String {
    let mut s = format!(
        "name = \"test\"\nruns = {runs}\nseed = {seed}\nmax_in_flight = 32\nper_subject_in_flight = 16\n\
         [retry]\nmax_attempts = 3\nbase_delay_ms = 5\nmax_delay_ms = 20\n"
    );
    for name in subjects {
        s.push_str(&format!(
            "[[subjects]]\nname = \"{name}\"\nbase_url = \"{base_url}\"\nmodel = \"mock\"\n"
        ));
    }
    s
}

pub struct PlantedOutcome {
    pub pipeline_table: ContingencyTable,
    pub direct_table: ContingencyTable,
    pub pipeline_p: f64,
    pub direct_p: f64,
    pub pipeline_or: f64,
    pub neg_log10_p: f64,
    pub pipeline_score: Option<f64>,
    pub direct_score: f64,
    pub journal_entries: usize,
    pub expected_entries: usize,
    pub elapsed_s: f64,
}

pub fn run_planted(runs: u32) -> PlantedOutcome {
    let start = Instant::now();
    let corpus = neutral_corpus(PLANTED_SPEC, PLANTED_N, PLANTED_SEED);
    let rule = MockRule::from_toml(WORKERS_RULE).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let (addr, _server) = rt.block_on(spawn_mock(rule.clone())).unwrap();
    let config = CampaignConfig::from_toml(&campaign_toml(&format!("http://{addr}/v1"), &["mock"], runs, 42)).unwrap();
    let campaign = ProbeCampaign::resolve(config, &corpus, None).unwrap();
    let expected_entries = campaign.cell_count();
    let journal = Arc::new(Journal::open(&dir.path().join("journal.jsonl")).unwrap());
    rt.block_on(run_campaign(campaign.clone(), &corpus, journal.clone(), RunOptions::default()))
        .unwrap();
    let entries = journal.entries().unwrap();
    let preds = predictions(&entries, Some(InputFormat::NeutralizedSdoh));

    let mapping = ProfessionMapping::builtin();
    let workers = [Condition::Profession(ProfessionGroup::Workers)];
    let report = associate(&preds, &corpus, "mock", Direction::Male, &workers, &mapping, AssociateOptions::default());
    let res = &report.results[0];
    let scores = campaign_scores(
        preds.iter().map(|prediction| Tagged { format: "neutralized", prediction }),
        Grouping::Subject,
    );

    // direct tabulation of the rule on the corpus table
    let mut values = Vec::new();
    let mut pairs = Vec::new();
    for run in 1..=runs {
        for (id, record) in &corpus {
            let seed = request_seed(campaign.seed, "mock", InputFormat::NeutralizedSdoh, run, id);
            let MockDecision::Value(v) = rule.decide(&record.sdoh, seed) else {
                panic!("rule has no refusals")
            };
            let group = record.sdoh.occupation().and_then(|o| mapping.group_profession(o).group());
            if let Some(g) = group {
                pairs.push((g == ProfessionGroup::Workers, v >= 5));
            }
            values.push(lv(v));
        }
    }
    let direct_table = ContingencyTable::tally(pairs);
    let direct = fisher(&direct_table, Alternative::Greater);
    PlantedOutcome {
        pipeline_table: res.table,
        direct_table,
        pipeline_p: res.p,
        direct_p: direct.p,
        pipeline_or: res.odds_ratio,
        neg_log10_p: res.neg_log10_p,
        pipeline_score: scores.pooled[0].score,
        direct_score: bias_score(&values).unwrap(),
        journal_entries: entries.len(),
        expected_entries,
        elapsed_s: start.elapsed().as_secs_f64(),
    }
}

pub fn check_planted_recovery() -> Check {
    let o = run_planted(3);
    if o.journal_entries != o.expected_entries {
        return Err(format!("{} journal entries, expected {}", o.journal_entries, o.expected_entries));
    }
    if o.pipeline_table != o.direct_table || o.pipeline_p != o.direct_p {
        return Err(format!(
            "pipeline {:?} p {:e} != direct {:?} p {:e}",
            o.pipeline_table, o.pipeline_p, o.direct_table, o.direct_p
        ));
    }
    if o.pipeline_score != Some(o.direct_score) {
        return Err(format!("score {:?} != direct {}", o.pipeline_score, o.direct_score));
    }
    if !(o.pipeline_or > 1.0 && o.neg_log10_p > 1.3) {
        return Err(format!("Workers-male OR {}, -log10 p {}", o.pipeline_or, o.neg_log10_p));
    }
    if o.elapsed_s > 300.0 {
        return Err(format!("took {:.1}s", o.elapsed_s));
    }
    Ok(format!(
        "n = {PLANTED_N}, table {:?}, OR {:.2}, -log10 p {:.1}, score {:+.4}; equals direct tabulation; {:.1}s",
        o.pipeline_table,
        o.pipeline_or,
        o.neg_log10_p,
        o.direct_score,
        o.elapsed_s
    ))
}

// ---------------------------------------------------------------- resumability

pub fn check_resumability() -> Check {
    let corpus = neutral_corpus(PLANTED_SPEC, 40, 3);
    let rule = MockRule::from_toml(WORKERS_RULE).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("journal.jsonl");
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let (addr, _server) = rt.block_on(spawn_mock(rule)).unwrap();
    let toml = campaign_toml(&format!("http://{addr}"), &["subject-a", "subject-b"], 3, 5);
    let campaign = ProbeCampaign::resolve(CampaignConfig::from_toml(&toml).unwrap(), &corpus, None).unwrap();
    let total = campaign.cell_count();
    let expected = 2 * 3 * corpus.len();
    if total != expected {
        return Err(format!("cell count {total}, expected {expected}"));
    }
    let half = total / 2;
    {
        let journal = Arc::new(Journal::open(&path).unwrap());
        let opts = RunOptions { stop_after: Some(half) };
        let r = rt.block_on(run_campaign(campaign.clone(), &corpus, journal.clone(), opts)).unwrap();
        if !r.stopped_early || journal.len() != half {
            return Err(format!("interrupted run journaled {} of {total}", journal.len()));
        }
    }
    let journal = Arc::new(Journal::open(&path).unwrap());
    let r = rt.block_on(run_campaign(campaign, &corpus, journal, RunOptions::default())).unwrap();
    let resumed: usize = r.subjects.iter().map(|s| s.resumed).sum();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let keys: BTreeSet<CellKey> = lines
        .iter()
        .map(|l| serde_json::from_str::<sdoh_probe::probe::JournalEntry>(l).unwrap().key())
        .collect();
    if lines.len() != expected || keys.len() != expected {
        return Err(format!("{} lines, {} distinct cells, expected {expected}", lines.len(), keys.len()));
    }
    if resumed != half {
        return Err(format!("resume reported {resumed} journaled cells, expected {half}"));
    }
    Ok(format!("stopped at {half}/{expected}, resumed to {expected} entries, 0 duplicates"))
}

// ---------------------------------------------------------------- determinism

pub fn probe_bin() -> &'static str {
    env!("CARGO_BIN_EXE_probe")
}

pub fn probe(dir: &Path, args: &[&str]) -> std::process::Output {
    let out = Command::new(probe_bin())
        .current_dir(dir)
        .args(args)
        .args(["--log-level", "warn"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "probe {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Full CLI pipeline in `dir` against a mock at `base_url`. Returns the bytes
/// of the score and association CSVs.
pub fn cli_pipeline(dir: &Path, base_url: &str) -> (Vec<u8>, Vec<u8>) {
    std::fs::write(dir.join("spec.toml"), PLANTED_SPEC).unwrap();
    std::fs::write(dir.join("campaign.toml"), campaign_toml(base_url, &["mock-a", "mock-b"], 2, 77)).unwrap();
    probe(dir, &["synth", "--spec", "spec.toml", "--n", "120", "--seed", "5", "--out", "corpus.jsonl"]);
    probe(dir, &["ingest", "--in", "corpus.jsonl", "--out", "neutral.jsonl"]);
    probe(dir, &["run", "--campaign", "campaign.toml", "--corpus", "neutral.jsonl", "--out", "journal.jsonl"]);
    probe(dir, &["score", "--journal", "journal.jsonl", "--out", "scores.csv"]);
    probe(
        dir,
        &[
            "associate", "--journal", "journal.jsonl", "--corpus", "neutral.jsonl", "--direction", "both",
            "--conditions", "profession", "--out", "assoc.csv",
        ],
    );
    (std::fs::read(dir.join("scores.csv")).unwrap(), std::fs::read(dir.join("assoc.csv")).unwrap())
}

pub fn check_determinism() -> Check {
    let rule = MockRule::from_toml(WORKERS_RULE).unwrap();
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let (addr, _server) = rt.block_on(spawn_mock(rule)).unwrap();
    let url = format!("http://{addr}/v1");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = cli_pipeline(a.path(), &url);
    let second = cli_pipeline(b.path(), &url);
    if first.0 != second.0 {
        return Err("score CSVs differ".into());
    }
    if first.1 != second.1 {
        return Err("association CSVs differ".into());
    }
    Ok(format!(
        "two CLI runs: scores.csv ({} bytes) and assoc.csv ({} bytes) identical",
        first.0.len(),
        first.1.len()
    ))
}
