// SPDX-License-Identifier: Apache-2.0

//! `bpfdiff`: context extraction, test generation, fuzzing, execution,
//! differential detection and reporting for eBPF runtimes.
//!
//! Exit codes: 0 success, 1 findings present (`diff --fail-on-diff`),
//! 2 provider or transport failure, 3 usage or input error.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use bpfdiff_core::context::{
    extract_all, load_bug_reports, read_context_dir, read_tree, write_context_dir, ContextError, ExtractInputs,
};
use bpfdiff_core::corpus::Corpus;
use bpfdiff_core::fuzz::{fuzz, fuzz_for, DEFAULT_MAX_LEN};
use bpfdiff_core::generation::{run_ablation, AblationConfig, AblationId, CampaignInputs, Guidelines};
use bpfdiff_core::harness::{find_differentials, read_records, run_matrix, write_records, DiffReport};
use bpfdiff_core::llm::scripted::{ScriptedModel, SCRIPTED_ENDPOINT, SCRIPTED_MODEL};
use bpfdiff_core::llm::{
    ClientConfig, HttpResponse, LlmClient, ProviderError, ProviderMode, Transport, UreqTransport, API_KEY_ENV,
    DEFAULT_ENDPOINT, DEFAULT_MAX_IN_FLIGHT,
};
use bpfdiff_core::metrics::{build_report, write_report_bundle};
use bpfdiff_core::runtime::Runtime;
use bpfdiff_core::util::{to_json_pretty, write_atomic};

use config::{resolve_api_key, CampaignFile};

const EXIT_FINDINGS: u8 = 1;
const EXIT_PROVIDER: u8 = 2;
const EXIT_INPUT: u8 = 3;

const DEFAULT_LLM_TIMEOUT_MS: u64 = 120_000;
const DEFAULT_RUN_TIMEOUT_MS: u64 = 5_000;

#[derive(Parser)]
#[command(name = "bpfdiff", version, about = "Differential testing of eBPF runtimes")]
struct Cli {
    /// Campaign file (TOML) supplying defaults for every subcommand.
    #[arg(long, global = true)]
    campaign: Option<PathBuf>,
    /// More log output; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build per-instruction context bundles from the ISA document, source
    /// trees, bug reports and the human corpus.
    Extract(ExtractArgs),
    /// Generate a test corpus for one ablation configuration.
    Generate(GenerateArgs),
    /// Write a grammar-based random test corpus.
    Fuzz(FuzzArgs),
    /// Execute a corpus on two or more runtimes.
    Run(RunArgs),
    /// Find differentiating tests in run records.
    Diff(DiffArgs),
    /// Compute metrics and write report files.
    Report(ReportArgs),
}

#[derive(Args, Default)]
struct LlmArgs {
    /// live, record or replay.
    #[arg(long)]
    provider_mode: Option<String>,
    /// Directory of recorded completions.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Chat-completions base URL, or `scripted` for the built-in rule-based model.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    max_in_flight: Option<usize>,
}

#[derive(Args)]
struct ExtractArgs {
    /// ISA document (Markdown).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Implementation source tree as `<id>=<path>`; repeatable.
    #[arg(long = "tree")]
    trees: Vec<String>,
    /// Bug reports, a JSON array of {title, body}.
    #[arg(long)]
    bugs: Option<PathBuf>,
    /// Human-written test corpus directory.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value = "context")]
    out: PathBuf,
    #[command(flatten)]
    llm: LlmArgs,
}

#[derive(Args)]
struct GenerateArgs {
    /// Ablation configuration id.
    #[arg(long)]
    config: String,
    #[arg(long, default_value = "context")]
    context: PathBuf,
    /// Human corpus used for example tests.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    guidelines: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    descriptions_per_prompt: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    llm: LlmArgs,
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of tests.
    #[arg(long, conflicts_with = "duration")]
    count: Option<usize>,
    /// Time budget in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Maximum instructions before the final exit.
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// `<id>=builtin:<profile>` or `<id>=plugin:<path>`; repeatable.
    #[arg(long = "runtime")]
    runtimes: Vec<String>,
    /// Per-test wall-clock limit for plugin runtimes.
    #[arg(long)]
    timeout_ms: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Records file (JSON lines); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiffArgs {
    #[arg(long)]
    records: PathBuf,
    /// Findings file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 1 when any valid differentiating test is found.
    #[arg(long)]
    fail_on_diff: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    records: PathBuf,
    /// Findings from `diff`; recomputed from the records when absent.
    #[arg(long)]
    findings: Option<PathBuf>,
    /// The corpus the records were produced from.
    #[arg(long)]
    corpus: PathBuf,
    /// `campaign.json` from `generate`, to label the report.
    #[arg(long = "campaign-stats")]
    campaign_stats: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// A failure with its exit status.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

type CmdResult = Result<u8, Failure>;

fn input<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure {
        code: EXIT_INPUT,
        error: e.into(),
    }
}

fn provider<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure {
        code: EXIT_PROVIDER,
        error: e.into(),
    }
}

fn context_failure(e: ContextError) -> Failure {
    match e {
        ContextError::Provider(_) => provider(e),
        other => input(other),
    }
}

/// Stands in for the network in replay mode; never reached unless a
/// fixture lookup somehow falls through.
struct Offline;

impl Transport for Offline {
    fn post(&self, url: &str, _api_key: Option<&str>, _body: &str) -> Result<HttpResponse, ProviderError> {
        Err(ProviderError::Transport(format!("network disabled in replay mode ({url})")))
    }
}

fn build_client(args: &LlmArgs, file: &CampaignFile) -> Result<(LlmClient, String), Failure> {
    let section = &file.llm;
    let mode: ProviderMode = args
        .provider_mode
        .as_deref()
        .or(section.mode.as_deref())
        .unwrap_or("replay")
        .parse()
        .map_err(|e: String| input(anyhow!(e)))?;
    let endpoint = args
        .endpoint
        .clone()
        .or_else(|| section.endpoint.clone())
        .unwrap_or_else(|| DEFAULT_ENDPOINT.to_string());
    let scripted = endpoint == SCRIPTED_ENDPOINT;
    let model = args
        .model
        .clone()
        .or_else(|| section.model.clone())
        .unwrap_or_else(|| if scripted { SCRIPTED_MODEL } else { "gpt-4" }.to_string());
    let fixtures = args
        .fixtures
        .clone()
        .or_else(|| section.fixtures.clone())
        .unwrap_or_else(|| PathBuf::from("llm-fixtures"));
    let api_key = match &section.api_key {
        Some(reference) => resolve_api_key(reference).map_err(input)?,
        None => std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
    };
    if mode != ProviderMode::Replay && !scripted && api_key.is_none() {
        return Err(provider(anyhow!(
            "{mode:?} mode needs an API key: export {API_KEY_ENV} (or use --provider-mode replay)"
        )));
    }
    let transport: Arc<dyn Transport> = match (mode, scripted) {
        (ProviderMode::Replay, _) => Arc::new(Offline),
        (_, true) => Arc::new(ScriptedModel),
        (_, false) => Arc::new(UreqTransport::new(Duration::from_millis(
            section.timeout_ms.unwrap_or(DEFAULT_LLM_TIMEOUT_MS),
        ))),
    };
    let mut config = ClientConfig::replay(fixtures);
    config.mode = mode;
    config.endpoint = endpoint;
    config.api_key = api_key;
    config.max_in_flight = args
        .max_in_flight
        .or(section.max_in_flight)
        .unwrap_or(DEFAULT_MAX_IN_FLIGHT);
    log::info!("provider mode {mode:?}, model {model}, fixtures {}", config.fixtures.display());
    Ok((LlmClient::new(config, transport), model))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(input)
}

fn required(value: Option<PathBuf>, flag: &str) -> Result<PathBuf, Failure> {
    value.ok_or_else(|| input(anyhow!("--{flag} is required (or set it in the campaign file)")))
}

fn load_corpus(dir: &Path) -> Result<Corpus, Failure> {
    Corpus::load_dir(dir).map_err(input)
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => write_atomic(p, text.as_bytes())
            .with_context(|| format!("writing {}", p.display()))
            .map_err(input),
        None => io::stdout().write_all(text.as_bytes()).map_err(input),
    }
}

fn cmd_extract(args: ExtractArgs, file: &CampaignFile) -> CmdResult {
    let sec = &file.extract;
    let spec_path = required(args.spec.or_else(|| sec.spec.clone()), "spec")?;
    let spec = read_text(&spec_path)?;
    let mut tree_specs: BTreeMap<String, PathBuf> = sec.trees.clone();
    for t in &args.trees {
        let (id, path) = t
            .split_once('=')
            .filter(|(id, p)| !id.is_empty() && !p.is_empty())
            .ok_or_else(|| input(anyhow!("--tree `{t}` must look like <id>=<path>")))?;
        tree_specs.insert(id.to_string(), PathBuf::from(path));
    }
    let trees = tree_specs
        .iter()
        .map(|(id, path)| read_tree(id, path))
        .collect::<Result<Vec<_>, _>>()
        .map_err(input)?;
    let bugs = match args.bugs.or_else(|| sec.bugs.clone()) {
        Some(p) => load_bug_reports(&p).map_err(input)?,
        None => Vec::new(),
    };
    let corpus = match args.corpus.or_else(|| sec.corpus.clone()) {
        Some(p) => load_corpus(&p)?,
        None => Corpus::default(),
    };
    let (llm, model) = build_client(&args.llm, file)?;
    let inputs = ExtractInputs {
        spec: &spec,
        trees: &trees,
        bug_reports: &bugs,
        corpus: &corpus,
    };
    let extraction = extract_all(&inputs, &llm, &model).map_err(context_failure)?;
    write_context_dir(&args.out, &extraction).map_err(input)?;
    eprintln!(
        "extracted {} bundles into {}",
        extraction.bundles.len(),
        args.out.display()
    );
    Ok(0)
}

fn cmd_generate(args: GenerateArgs, file: &CampaignFile) -> CmdResult {
    let sec = &file.generate;
    let id: AblationId = args.config.parse().map_err(input)?;
    let extraction = read_context_dir(&args.context).map_err(input)?;
    let spec = match args.spec.or_else(|| sec.spec.clone()).or_else(|| file.extract.spec.clone()) {
        Some(p) => read_text(&p)?,
        None => String::new(),
    };
    let corpus = match args.corpus.or_else(|| sec.corpus.clone()).or_else(|| file.extract.corpus.clone()) {
        Some(p) => load_corpus(&p)?,
        None => Corpus::default(),
    };
    let guidelines = match args.guidelines.or_else(|| sec.guidelines.clone()) {
        Some(p) => Some(Guidelines::parse(&read_text(&p)?)),
        None => None,
    };
    let mut config = AblationConfig::new(id);
    if let Some(n) = args.descriptions_per_prompt.or(sec.descriptions_per_prompt) {
        config = config.with_descriptions_per_prompt(n);
    }
    let (llm, model) = build_client(&args.llm, file)?;
    let inputs = CampaignInputs {
        spec: &spec,
        corpus: &corpus,
        guidelines: guidelines.as_ref(),
        seed: args.seed.or(sec.seed).unwrap_or(0),
    };
    let campaign = run_ablation(&config, &extraction.bundles, &inputs, &llm, &model);
    campaign.corpus.write_dir(&args.out).map_err(input)?;
    let stats_path = args.out.join("campaign.json");
    write_atomic(&stats_path, to_json_pretty(&campaign.stats).as_bytes()).map_err(input)?;
    let s = &campaign.stats;
    eprintln!(
        "{}: {} tests accepted, {} rejected, written to {}",
        id.id(),
        s.accepted,
        s.rejected,
        args.out.display()
    );
    for gap in &s.missing_context {
        log::warn!("{}: {}", gap.mnemonic, gap.reason);
    }
    if !s.provider_errors.is_empty() {
        for e in &s.provider_errors {
            eprintln!("provider error for {}: {}", e.mnemonic, e.reason);
        }
        return Err(provider(anyhow!("{} provider errors", s.provider_errors.len())));
    }
    Ok(0)
}

fn cmd_fuzz(args: FuzzArgs) -> CmdResult {
    let corpus = match (args.count, args.duration) {
        (Some(n), _) => fuzz(args.seed, n, args.max_len),
        (None, Some(secs)) if secs.is_finite() && secs >= 0.0 => {
            fuzz_for(args.seed, Duration::from_secs_f64(secs), args.max_len)
        }
        (None, Some(_)) => return Err(input(anyhow!("--duration must be a non-negative number of seconds"))),
        (None, None) => return Err(input(anyhow!("one of --count or --duration is required"))),
    };
    corpus.write_dir(&args.out).map_err(input)?;
    eprintln!("wrote {} fuzzed tests to {}", corpus.len(), args.out.display());
    Ok(0)
}

fn cmd_run(args: RunArgs, file: &CampaignFile) -> CmdResult {
    let sec = &file.run;
    let timeout = args.timeout_ms.or(sec.timeout_ms).unwrap_or(DEFAULT_RUN_TIMEOUT_MS);
    let specs: Vec<String> = if args.runtimes.is_empty() {
        sec.runtimes.iter().map(|(id, t)| format!("{id}={t}")).collect()
    } else {
        args.runtimes.clone()
    };
    let runtimes = specs
        .iter()
        .map(|s| Runtime::parse_spec(s, timeout))
        .collect::<Result<Vec<_>, _>>()
        .map_err(input)?;
    let jobs = args
        .jobs
        .or(sec.jobs)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let corpus = load_corpus(&args.corpus)?;
    let records = run_matrix(&corpus, &runtimes, jobs).map_err(input)?;
    let mut buf = Vec::new();
    write_records(&mut buf, &records).map_err(input)?;
    write_out(args.out.as_deref(), &String::from_utf8(buf).expect("JSON is UTF-8"))?;
    eprintln!("{} records from {} tests on {} runtimes", records.len(), corpus.len(), runtimes.len());
    Ok(0)
}

fn load_records(path: &Path) -> Result<Vec<bpfdiff_core::harness::RunRecord>, Failure> {
    let f = fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(input)?;
    read_records(BufReader::new(f)).map_err(input)
}

fn cmd_diff(args: DiffArgs) -> CmdResult {
    let records = load_records(&args.records)?;
    let report = find_differentials(&records);
    write_out(args.out.as_deref(), &to_json_pretty(&report))?;
    eprintln!(
        "{} differentiating tests ({} more involve a crash, {} skipped)",
        report.total(),
        report.findings.len() - report.total(),
        report.skipped_tests.len()
    );
    Ok(if args.fail_on_diff && report.total() > 0 {
        EXIT_FINDINGS
    } else {
        0
    })
}

/// Report labels taken from a campaign stats file.
fn campaign_labels(path: &Path) -> Result<BTreeMap<String, String>, Failure> {
    let v: serde_json::Value = serde_json::from_str(&read_text(path)?)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(input)?;
    let mut labels = BTreeMap::new();
    for key in ["config", "model", "seed", "prompt_version", "descriptions_per_prompt", "rejected"] {
        if let Some(x) = v.get(key) {
            let text = x.as_str().map(String::from).unwrap_or_else(|| x.to_string());
            labels.insert(key.to_string(), text);
        }
    }
    Ok(labels)
}

fn cmd_report(args: ReportArgs) -> CmdResult {
    let records = load_records(&args.records)?;
    let findings: DiffReport = match &args.findings {
        Some(p) => serde_json::from_str(&read_text(p)?)
            .with_context(|| format!("parsing {}", p.display()))
            .map_err(input)?,
        None => find_differentials(&records),
    };
    let corpus = load_corpus(&args.corpus)?;
    let labels = match &args.campaign_stats {
        Some(p) => campaign_labels(p)?,
        None => BTreeMap::new(),
    };
    let report = build_report(&corpus, &records, &findings, labels).map_err(input)?;
    write_report_bundle(&args.out, &corpus, &records, &report).map_err(input)?;
    eprintln!(
        "validity {:.1}% ({}/{}), {} differentiating tests; report in {}",
        report.validity.percent,
        report.validity.valid,
        report.validity.tests,
        report.differentials.total,
        args.out.display()
    );
    Ok(0)
}

fn dispatch(cli: Cli) -> CmdResult {
    let file = match &cli.campaign {
        Some(p) => CampaignFile::load(p).map_err(input)?,
        None => CampaignFile::default(),
    };
    match cli.command {
        Command::Extract(a) => cmd_extract(a, &file),
        Command::Generate(a) => cmd_generate(a, &file),
        Command::Fuzz(a) => cmd_fuzz(a),
        Command::Run(a) => cmd_run(a, &file),
        Command::Diff(a) => cmd_diff(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
