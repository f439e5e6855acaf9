use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use sdoh_probe::annotation::{serve_annotation, AnnotationStore};
use sdoh_probe::association::{
    associate, read_csv as read_assoc_csv, write_csv as write_assoc_csv, Alternative, AssociateOptions, Condition,
    Direction, ProfessionMapping,
};
use sdoh_probe::corpus::{
    ingest, quarantine_path, read_records, write_records, write_rejected, InputFormat, NeutralizationLexicon,
};
use sdoh_probe::metrics::{
    campaign_scores, distributions_from_runs, read_runs_csv, read_scores_csv, write_runs_csv, write_scores_csv,
    Grouping, Tagged,
};
use sdoh_probe::model::SdohRecord;
use sdoh_probe::probe::{predictions, read_journal, run_campaign, CampaignConfig, Journal, ProbeCampaign, RunOptions};
use sdoh_probe::report::{distribution_chart, heatmap, score_chart, ChartStyle, Figure, HeatmapStyle, InfiniteDisplay};
use sdoh_probe::synth::{generate, serve_mock, write_counts, MockRule, SynthSpec};

/// Gender-stereotype probing of language models on social determinants of
/// health.
#[derive(Debug, Parser)]
#[command(name = "probe", version)]
struct Cli {
    /// Log level filter (error, warn, info, debug, trace) or a full filter
    /// directive.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter, neutralize and validate an annotated corpus.
    Ingest(IngestArgs),
    /// Generate a synthetic corpus with planted correlations.
    Synth(SynthArgs),
    /// Serve a rule-based mock subject over the chat-completions protocol.
    Mock(MockArgs),
    /// Run a probing campaign, resuming from the journal.
    Run(RunArgs),
    /// Compute bias scores from a journal.
    Score(ScoreArgs),
    /// Run Fisher association tests from a journal.
    Associate(AssociateArgs),
    /// Render figures from score and association tables.
    Report(ReportArgs),
    /// Serve the human annotation campaign.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Neutralization lexicon; the bundled one when omitted.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "neutralized")]
    format: InputFormat,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MockArgs {
    #[arg(long)]
    rule: PathBuf,
    #[arg(long)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    campaign: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Journal file; existing entries are skipped.
    #[arg(long)]
    out: PathBuf,
    /// Stop after this many new cells.
    #[arg(long)]
    stop_after: Option<usize>,
    /// fsync the journal after every entry.
    #[arg(long)]
    durable: bool,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    journal: PathBuf,
    /// `subject` or `subject,format`.
    #[arg(long, default_value = "subject")]
    by: Grouping,
    /// Only use predictions elicited on this input format.
    #[arg(long)]
    format: Option<InputFormat>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AssociateArgs {
    #[arg(long)]
    journal: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// male, female or both.
    #[arg(long, default_value = "male")]
    direction: String,
    /// sdoh or profession.
    #[arg(long, default_value = "sdoh")]
    conditions: String,
    /// Input format to analyse; required when the journal holds several.
    #[arg(long)]
    format: Option<InputFormat>,
    /// Occupation-to-group mapping; the bundled one when omitted.
    #[arg(long)]
    mapping: Option<PathBuf>,
    /// Report Haldane-Anscombe corrected odds ratios.
    #[arg(long)]
    haldane: bool,
    #[arg(long)]
    two_sided: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    assoc: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Print odds ratios below 1 instead of leaving the cell blank.
    #[arg(long)]
    keep_below_one: bool,
    /// Print the Haldane-corrected value in place of the infinity sign.
    #[arg(long)]
    haldane_display: bool,
    /// -log10 p at which heatmap color saturates.
    #[arg(long, default_value_t = 10.0)]
    intensity_ceiling: f64,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Neutralized corpus, as written by `probe ingest`.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    subset_seed: u64,
    #[arg(long)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, default_value_t = 50)]
    per_gender: usize,
    /// Directory holding the session and response logs.
    #[arg(long, default_value = "annotation-store")]
    store: PathBuf,
    /// Built annotation UI to serve at `/`.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

/// Failure not caused by the user's inputs.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Internal(String);

fn internal(e: impl std::fmt::Display) -> anyhow::Error {
    Internal(e.to_string()).into()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| internal(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| internal(format!("{}: {e}", path.display())))
}

fn sibling_runs_path(scores: &Path) -> PathBuf {
    scores.with_extension("runs.csv")
}

fn corpus_map(path: &Path) -> Result<BTreeMap<String, SdohRecord>> {
    Ok(read_records(path)?
        .into_iter()
        .map(|r| (r.record_id.clone(), r))
        .collect())
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(internal)
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let lex = match &a.lexicon {
        Some(p) => NeutralizationLexicon::load(p)?,
        None => NeutralizationLexicon::builtin(),
    };
    let records = read_records(&a.input)?;
    let total = records.len();
    let outcome = ingest(records, &lex, a.format);
    write_records(&a.out, &outcome.kept).map_err(internal)?;
    let quarantine = quarantine_path(&a.out);
    write_rejected(&quarantine, &outcome.rejected).map_err(internal)?;
    println!(
        "read {total} records, kept {}, quarantined {} ({}), lexicon {}",
        outcome.kept.len(),
        outcome.rejected.len(),
        quarantine.display(),
        lex.version()
    );
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSpec::load(&a.spec)?;
    let corpus = generate(&spec, a.n, a.seed)?;
    write_records(&a.out, &corpus.records).map_err(internal)?;
    let counts_path = a.out.with_extension("counts.csv");
    let mut w = create(&counts_path)?;
    write_counts(&mut w, &corpus.counts).map_err(internal)?;
    w.flush().map_err(internal)?;
    println!(
        "wrote {} records to {} and realized counts to {}",
        corpus.records.len(),
        a.out.display(),
        counts_path.display()
    );
    Ok(())
}

fn cmd_mock(a: MockArgs) -> Result<()> {
    let rule = MockRule::load(&a.rule)?;
    runtime()?.block_on(async {
        let listener = tokio::net::TcpListener::bind(SocketAddr::new(a.host, a.port))
            .await
            .with_context(|| format!("cannot bind {}:{}", a.host, a.port))?;
        let addr = listener.local_addr().map_err(internal)?;
        println!("mock subject listening on http://{addr}/v1/chat/completions");
        std::io::stdout().flush().ok();
        serve_mock(rule, listener).await.map_err(internal)
    })
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let corpus = corpus_map(&a.corpus)?;
    let config = CampaignConfig::load(&a.campaign)?;
    let campaign = ProbeCampaign::resolve(config, &corpus, a.campaign.parent())?;
    let expected = campaign.cell_count();
    let journal = Arc::new(Journal::open(&a.out)?);
    journal.set_durable(a.durable);
    let opts = RunOptions {
        stop_after: a.stop_after,
    };
    let report = runtime()?.block_on(run_campaign(campaign, &corpus, journal, opts))?;
    for s in &report.subjects {
        println!(
            "{}: {} new, {} resumed, {} refusals ({:.1}%), {} failures{}",
            s.subject,
            s.completed,
            s.resumed,
            s.refusals,
            100.0 * s.refusal_rate,
            s.failures,
            if s.aborted { ", aborted" } else { "" }
        );
    }
    println!("{} of {expected} cells journaled", report.journaled_cells);
    if report.journaled_cells < report.expected_cells && !report.stopped_early {
        bail!(
            "campaign incomplete: {} of {} cells journaled; rerun to resume",
            report.journaled_cells,
            report.expected_cells
        );
    }
    Ok(())
}

fn cmd_score(a: ScoreArgs) -> Result<()> {
    let entries = read_journal(&a.journal)?;
    let entries: Vec<_> = entries
        .into_iter()
        .filter(|e| a.format.is_none_or(|f| e.format == f))
        .collect();
    let preds: Vec<_> = entries.iter().map(|e| (e.format.as_str(), e.prediction())).collect();
    let scores = campaign_scores(
        preds.iter().map(|(format, prediction)| Tagged { format, prediction }),
        a.by,
    );
    let mut w = create(&a.out)?;
    write_scores_csv(&mut w, &scores.pooled).map_err(internal)?;
    w.flush().map_err(internal)?;
    let runs_path = sibling_runs_path(&a.out);
    let mut w = create(&runs_path)?;
    write_runs_csv(&mut w, &scores.runs).map_err(internal)?;
    w.flush().map_err(internal)?;
    for s in &scores.pooled {
        let score = s.score.map(|v| format!("{v:+.3}")).unwrap_or_else(|| "n/a".into());
        println!("{} [{}]: score {score} (n = {}, refusals = {})", s.subject, s.format, s.n, s.refusals);
    }
    Ok(())
}

fn cmd_associate(a: AssociateArgs) -> Result<()> {
    let directions = Direction::parse_set(&a.direction)?;
    let conditions: Vec<Condition> = Condition::parse_set(&a.conditions)?;
    let mapping = match &a.mapping {
        Some(p) => ProfessionMapping::load(p)?,
        None => ProfessionMapping::builtin(),
    };
    let corpus = corpus_map(&a.corpus)?;
    let entries = read_journal(&a.journal)?;
    let formats: BTreeSet<InputFormat> = entries.iter().map(|e| e.format).collect();
    let format = match a.format {
        Some(f) => f,
        None if formats.len() <= 1 => formats.first().copied().unwrap_or(InputFormat::NeutralizedSdoh),
        None => bail!(
            "journal holds several input formats ({}); choose one with --format",
            formats.iter().map(|f| f.as_str()).collect::<Vec<_>>().join(", ")
        ),
    };
    let preds = predictions(&entries, Some(format));
    if preds.is_empty() {
        bail!("no {format} predictions in {}", a.journal.display());
    }
    let subjects: BTreeSet<&str> = preds.iter().map(|p| p.subject_id.as_str()).collect();
    let opts = AssociateOptions {
        alternative: if a.two_sided {
            Alternative::TwoSided
        } else {
            Alternative::Greater
        },
        haldane: a.haldane,
    };
    let mut results = Vec::new();
    for subject in &subjects {
        for &direction in &directions {
            let report = associate(&preds, &corpus, subject, direction, &conditions, &mapping, opts);
            if report.missing_records > 0 {
                bail!(
                    "{} predictions of `{subject}` reference records missing from {}",
                    report.missing_records,
                    a.corpus.display()
                );
            }
            let significant = report.results.iter().filter(|r| r.significant).count();
            println!(
                "{subject} [{direction}]: {} predictions, {} refusals, {significant} significant of {}",
                report.predictions,
                report.refusals,
                report.results.len()
            );
            results.extend(report.results);
        }
    }
    let mut w = create(&a.out)?;
    write_assoc_csv(&mut w, &results).map_err(internal)?;
    w.flush().map_err(internal)?;
    Ok(())
}

fn write_figure(dir: &Path, stem: &str, fig: &Figure) -> Result<()> {
    for (ext, body) in [("svg", &fig.svg), ("csv", &fig.csv)] {
        let path = dir.join(format!("{stem}.{ext}"));
        fs::write(&path, body).map_err(|e| internal(format!("{}: {e}", path.display())))?;
    }
    println!("wrote {}", dir.join(format!("{stem}.svg")).display());
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    if a.scores.is_none() && a.assoc.is_none() {
        bail!("nothing to report: pass --scores and/or --assoc");
    }
    if !(a.intensity_ceiling > 0.0) {
        bail!("--intensity-ceiling must be positive");
    }
    fs::create_dir_all(&a.out_dir).map_err(|e| internal(format!("{}: {e}", a.out_dir.display())))?;
    if let Some(path) = &a.scores {
        let file = File::open(path).with_context(|| path.display().to_string())?;
        let scores = read_scores_csv(file)?;
        write_figure(&a.out_dir, "scores", &score_chart(&scores, &ChartStyle::default())?)?;
        let runs_path = sibling_runs_path(path);
        if runs_path.exists() {
            let runs = read_runs_csv(File::open(&runs_path).with_context(|| runs_path.display().to_string())?)?;
            let dists = distributions_from_runs(&runs);
            if !dists.is_empty() {
                write_figure(&a.out_dir, "distribution", &distribution_chart(&dists, &ChartStyle::default())?)?;
            }
        }
    }
    if let Some(path) = &a.assoc {
        let file = File::open(path).with_context(|| path.display().to_string())?;
        let rows = read_assoc_csv(file)?;
        let style = HeatmapStyle {
            omit_below_one: !a.keep_below_one,
            intensity_ceiling: a.intensity_ceiling,
            infinite: if a.haldane_display {
                InfiniteDisplay::Haldane
            } else {
                InfiniteDisplay::Symbol
            },
            ..HeatmapStyle::default()
        };
        for direction in Direction::BOTH {
            let subset: Vec<_> = rows.iter().filter(|r| r.direction == direction).cloned().collect();
            if subset.is_empty() {
                continue;
            }
            let style = HeatmapStyle {
                title: Some(format!("Associations with {direction} predictions")),
                ..style.clone()
            };
            write_figure(&a.out_dir, &format!("assoc-{direction}"), &heatmap(&subset, &style)?)?;
        }
    }
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let records = read_records(&a.corpus)?;
    let store = AnnotationStore::open(&a.store, &records, a.per_gender, a.subset_seed)
        .map_err(|e| anyhow!("{e}; serve expects a neutralized corpus written by `probe ingest`"))?;
    let addr = SocketAddr::new(a.host, a.port);
    runtime()?.block_on(serve_annotation(Arc::new(store), a.ui_dir, addr))
        .with_context(|| format!("cannot serve on {addr}"))
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Mock(a) => cmd_mock(a),
        Command::Run(a) => cmd_run(a),
        Command::Score(a) => cmd_score(a),
        Command::Associate(a) => cmd_associate(a),
        Command::Report(a) => cmd_report(a),
        Command::Serve(a) => cmd_serve(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let filter = EnvFilter::try_new(&cli.log_level).unwrap_or_else(|_| EnvFilter::new("info"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
    match std::panic::catch_unwind(|| dispatch(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Internal>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
        Err(_) => ExitCode::from(2),
    }
}
