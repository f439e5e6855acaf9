use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::Semaphore;
use tokio::task::JoinSet;

use crate::corpus::InputFormat;
use crate::model::SdohRecord;

use super::client::{DecodingParams, RetryPolicy, SubjectClient, SubjectConfig};
use super::journal::{CellKey, Journal, JournalEntry};
use super::parse::parse_completion;
use super::prompt::{PromptTemplate, DEFAULT_TEMPLATE};
use super::ProbeError;

fn default_runs() -> u32 {
    3
}
fn default_template() -> String {
    DEFAULT_TEMPLATE.to_string()
}
fn default_formats() -> Vec<InputFormat> {
    vec![InputFormat::NeutralizedSdoh]
}
fn default_in_flight() -> usize {
    8
}
fn default_per_subject() -> usize {
    4
}
fn default_failure_budget() -> u32 {
    10
}

/// Campaign file as written by users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub name: String,
    #[serde(default = "default_runs")]
    pub runs: u32,
    /// Bundled template id or path to a template file.
    #[serde(default = "default_template")]
    pub prompt_template: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<InputFormat>,
    /// Record ids to probe; every corpus record when absent.
    #[serde(default)]
    pub records: Option<Vec<String>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_per_subject")]
    pub per_subject_in_flight: usize,
    /// Consecutive failed cells before a subject is abandoned.
    #[serde(default = "default_failure_budget")]
    pub failure_budget: u32,
    #[serde(default)]
    pub decoding: DecodingParams,
    #[serde(default)]
    pub retry: RetryPolicy,
    pub subjects: Vec<SubjectConfig>,
}

impl CampaignConfig {
    pub fn from_toml(text: &str) -> Result<Self, ProbeError> {
        toml::from_str(text).map_err(|e| ProbeError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ProbeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProbeError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

/// A validated campaign ready to run.
#[derive(Debug, Clone)]
pub struct ProbeCampaign {
    pub name: String,
    pub subjects: Vec<SubjectConfig>,
    pub records: Vec<String>,
    pub formats: Vec<InputFormat>,
    pub runs: u32,
    pub template: PromptTemplate,
    pub decoding: DecodingParams,
    pub retry: RetryPolicy,
    pub seed: u64,
    pub max_in_flight: usize,
    pub per_subject_in_flight: usize,
    pub failure_budget: u32,
}

impl ProbeCampaign {
    /// Resolve the template and record list against a corpus.
    pub fn resolve(
        config: CampaignConfig,
        corpus: &BTreeMap<String, SdohRecord>,
        base_dir: Option<&Path>,
    ) -> Result<Self, ProbeError> {
        if config.runs == 0 {
            return Err(ProbeError::Config("runs must be at least 1".into()));
        }
        if config.subjects.is_empty() {
            return Err(ProbeError::Config("campaign has no subjects".into()));
        }
        if config.formats.is_empty() {
            return Err(ProbeError::Config("campaign has no input formats".into()));
        }
        let mut names = std::collections::HashSet::new();
        for s in &config.subjects {
            if !names.insert(&s.name) {
                return Err(ProbeError::Config(format!("duplicate subject name `{}`", s.name)));
            }
        }
        config.decoding.validate()?;
        if config.retry.max_attempts == 0 {
            return Err(ProbeError::Config("retry.max_attempts must be at least 1".into()));
        }
        let records = match config.records {
            Some(ids) => ids,
            None => corpus.keys().cloned().collect(),
        };
        if records.is_empty() {
            return Err(ProbeError::Config("campaign has no records".into()));
        }
        let missing: Vec<&String> = records.iter().filter(|id| !corpus.contains_key(*id)).collect();
        if !missing.is_empty() {
            return Err(ProbeError::MissingRecords(
                missing.iter().take(5).map(|s| s.to_string()).collect(),
            ));
        }
        Ok(ProbeCampaign {
            name: config.name,
            subjects: config.subjects,
            records,
            formats: config.formats,
            runs: config.runs,
            template: PromptTemplate::resolve(&config.prompt_template, base_dir)?,
            decoding: config.decoding,
            retry: config.retry,
            seed: config.seed,
            max_in_flight: config.max_in_flight.max(1),
            per_subject_in_flight: config.per_subject_in_flight.max(1),
            failure_budget: config.failure_budget.max(1),
        })
    }

    pub fn cell_count(&self) -> usize {
        self.subjects.len() * self.formats.len() * self.runs as usize * self.records.len()
    }
}

/// Per-request seed, stable across orderings and resumptions.
pub fn request_seed(campaign_seed: u64, subject: &str, format: InputFormat, run: u32, record_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(campaign_seed.to_le_bytes());
    for part in [subject, format.as_str(), &run.to_string(), record_id] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes) >> 1
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stop issuing new cells after this many have been attempted in this
    /// invocation.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SubjectReport {
    pub subject: String,
    /// Cells journaled by this invocation.
    pub completed: usize,
    /// Cells found already journaled.
    pub resumed: usize,
    pub refusals: usize,
    pub failures: usize,
    pub aborted: bool,
    /// Refusals over all journaled cells of the subject.
    pub refusal_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CampaignReport {
    pub subjects: Vec<SubjectReport>,
    pub expected_cells: usize,
    pub journaled_cells: usize,
    pub stopped_early: bool,
}

struct Shared {
    campaign: ProbeCampaign,
    prompts: HashMap<(InputFormat, String), Arc<str>>,
    journal: Arc<Journal>,
    global: Arc<Semaphore>,
    new_cells: AtomicUsize,
    stop_after: Option<usize>,
    stopped: AtomicBool,
}

#[derive(Default)]
struct SubjectState {
    completed: AtomicUsize,
    refusals: AtomicUsize,
    failures: AtomicUsize,
    consecutive_failures: AtomicU32,
    aborted: AtomicBool,
}

/// Run every (subject, format, run, record) cell not yet in the journal.
pub async fn run_campaign(
    campaign: ProbeCampaign,
    corpus: &BTreeMap<String, SdohRecord>,
    journal: Arc<Journal>,
    opts: RunOptions,
) -> Result<CampaignReport, ProbeError> {
    let mut prompts = HashMap::new();
    for &format in &campaign.formats {
        for id in &campaign.records {
            let record = corpus
                .get(id)
                .ok_or_else(|| ProbeError::MissingRecords(vec![id.clone()]))?;
            let prompt = campaign.template.build(record, format)?;
            prompts.insert((format, id.clone()), Arc::from(prompt));
        }
    }
    let clients: Vec<Arc<SubjectClient>> = campaign
        .subjects
        .iter()
        .map(|s| SubjectClient::new(s.clone(), campaign.retry).map(Arc::new))
        .collect::<Result<_, _>>()?;

    let shared = Arc::new(Shared {
        global: Arc::new(Semaphore::new(campaign.max_in_flight)),
        campaign,
        prompts,
        journal: journal.clone(),
        new_cells: AtomicUsize::new(0),
        stop_after: opts.stop_after,
        stopped: AtomicBool::new(false),
    });

    let mut subject_tasks = JoinSet::new();
    for client in clients {
        let shared = shared.clone();
        subject_tasks.spawn(async move { run_subject(shared, client).await });
    }
    let mut states = Vec::new();
    while let Some(res) = subject_tasks.join_next().await {
        states.push(res.map_err(|e| ProbeError::Journal(format!("subject task failed: {e}")))??);
    }
    states.sort_by(|a, b| a.0.cmp(&b.0));

    let all_entries = journal.entries()?;
    let c = &shared.campaign;
    let mut report = CampaignReport {
        expected_cells: c.cell_count(),
        stopped_early: shared.stopped.load(Ordering::SeqCst),
        ..Default::default()
    };
    for (name, resumed, state) in states {
        let mine: Vec<&JournalEntry> = all_entries
            .iter()
            .filter(|e| e.subject == name && c.formats.contains(&e.format) && e.run <= c.runs)
            .collect();
        let refused = mine.iter().filter(|e| e.outcome.is_refusal()).count();
        report.journaled_cells += mine.len();
        let sr = SubjectReport {
            subject: name,
            completed: state.completed.load(Ordering::SeqCst),
            resumed,
            refusals: state.refusals.load(Ordering::SeqCst),
            failures: state.failures.load(Ordering::SeqCst),
            aborted: state.aborted.load(Ordering::SeqCst),
            refusal_rate: if mine.is_empty() { 0.0 } else { refused as f64 / mine.len() as f64 },
        };
        tracing::info!(
            subject = %sr.subject,
            completed = sr.completed,
            resumed = sr.resumed,
            refusal_rate = sr.refusal_rate,
            aborted = sr.aborted,
            "subject finished"
        );
        report.subjects.push(sr);
    }
    Ok(report)
}

async fn run_subject(
    shared: Arc<Shared>,
    client: Arc<SubjectClient>,
) -> Result<(String, usize, Arc<SubjectState>), ProbeError> {
    let c = &shared.campaign;
    let name = client.subject().name.clone();
    let state = Arc::new(SubjectState::default());
    let local = Arc::new(Semaphore::new(c.per_subject_in_flight));
    let mut resumed = 0;
    let mut tasks: JoinSet<Result<(), ProbeError>> = JoinSet::new();

    'cells: for run in 1..=c.runs {
        for &format in &c.formats {
            for record_id in &c.records {
                let key = CellKey {
                    subject: name.clone(),
                    format,
                    run,
                    record_id: record_id.clone(),
                };
                if shared.journal.contains(&key) {
                    resumed += 1;
                    continue;
                }
                let local_permit = local.clone().acquire_owned().await.expect("semaphore open");
                let global_permit = shared.global.clone().acquire_owned().await.expect("semaphore open");
                if state.aborted.load(Ordering::SeqCst) || shared.stopped.load(Ordering::SeqCst) {
                    break 'cells;
                }
                if let Some(limit) = shared.stop_after {
                    // reserve a slot so concurrent cells cannot overshoot the limit
                    if shared.new_cells.fetch_add(1, Ordering::SeqCst) >= limit {
                        shared.stopped.store(true, Ordering::SeqCst);
                        break 'cells;
                    }
                }
                while let Some(done) = tasks.try_join_next() {
                    done.map_err(|e| ProbeError::Journal(format!("cell task failed: {e}")))??;
                }
                let shared = shared.clone();
                let client = client.clone();
                let state = state.clone();
                tasks.spawn(async move {
                    let _permits = (local_permit, global_permit);
                    run_cell(&shared, &client, &state, key).await
                });
            }
        }
    }
    while let Some(done) = tasks.join_next().await {
        done.map_err(|e| ProbeError::Journal(format!("cell task failed: {e}")))??;
    }
    Ok((name, resumed, state))
}

async fn run_cell(
    shared: &Shared,
    client: &SubjectClient,
    state: &SubjectState,
    key: CellKey,
) -> Result<(), ProbeError> {
    let c = &shared.campaign;
    let prompt = shared.prompts[&(key.format, key.record_id.clone())].clone();
    let seed = request_seed(c.seed, &key.subject, key.format, key.run, &key.record_id);
    match client.complete(&prompt, &c.decoding, Some(seed)).await {
        Ok(completion) => {
            let parsed = parse_completion(&completion);
            if parsed.matches > 1 {
                tracing::debug!(record_id = %key.record_id, matches = parsed.matches, "ambiguous completion, first match used");
            }
            let refusal = parsed.outcome.is_refusal();
            let entry = JournalEntry {
                subject: key.subject,
                format: key.format,
                run: key.run,
                record_id: key.record_id,
                outcome: parsed.outcome,
                matches: parsed.matches,
                prompt_template: c.template.id().to_string(),
                completion,
            };
            if shared.journal.append(&entry)? {
                state.completed.fetch_add(1, Ordering::SeqCst);
                if refusal {
                    state.refusals.fetch_add(1, Ordering::SeqCst);
                }
            }
            state.consecutive_failures.store(0, Ordering::SeqCst);
        }
        Err(e) => {
            state.failures.fetch_add(1, Ordering::SeqCst);
            let streak = state.consecutive_failures.fetch_add(1, Ordering::SeqCst) + 1;
            tracing::warn!(subject = %key.subject, record_id = %key.record_id, run = key.run, "cell failed: {e}");
            if streak >= c.failure_budget && !state.aborted.swap(true, Ordering::SeqCst) {
                tracing::error!(subject = %key.subject, streak, "failure budget exhausted, abandoning subject");
            }
        }
    }
    Ok(())
}
