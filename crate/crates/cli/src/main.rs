use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use stance_core::backend::{
    prompt_hash, ApiStyle, BackendConfig, Cache, Client, MockScript, MockTransport,
};
use stance_core::corpus::{
    builtin_exemplars, load_dataset, read_exemplars, select_exemplars, DatasetConfig, Exemplar,
    StanceRecord,
};
use stance_core::evaluator::{build_reports, emit_matrix, read_results, EvalError, EvalRow};
use stance_core::orchestrator::{run_experiment, AbortReason, ChainStatus};
use stance_core::parser::StanceVocab;
use stance_core::pipeline::{
    config_hash, export_prompts, score_all, write_jsonl, RunMeta, TranscriptLine,
};
use stance_core::prompting::{PromptScheme, StagePlan, TemplateSet};
use stance_core::quality::{analyze, TreeParams};

const EXIT_CONFIG: u8 = 2;
const EXIT_UNAVAILABLE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "stance",
    version,
    about = "Zero-shot stance classification with LLM backends"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one (dataset, model, scheme) experiment.
    Run(RunArgs),
    /// Aggregate results files into reports and per-dataset matrices.
    Eval(EvalArgs),
    /// Output-quality analysis over results files.
    Analyze(AnalyzeArgs),
    /// Write rendered context-analyze prompts as JSONL for fine-tuning.
    ExportPrompts(ExportArgs),
}

#[derive(Args)]
struct DatasetArgs {
    /// Dataset JSONL with id, statement, target and label fields.
    #[arg(long)]
    dataset: PathBuf,
    /// Dataset config: a JSON file or a built-in name such as SemEval2016.
    #[arg(long)]
    dataset_config: String,
    /// Directory with manifest.json and per-scheme templates.
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long)]
    scheme: PromptScheme,
    /// Base URL of a chat/completions server.
    #[arg(long, required_unless_present = "mock")]
    endpoint: Option<String>,
    #[arg(long)]
    model: String,
    #[arg(long, default_value = "chat")]
    api_style: ApiStyle,
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scripted offline backend instead of an endpoint.
    #[arg(long, conflicts_with = "endpoint")]
    mock: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    max_tokens: u32,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 120)]
    timeout: u64,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    /// First retry delay in milliseconds.
    #[arg(long, default_value_t = 1000)]
    backoff_ms: u64,
    /// Keyword vocabulary JSON for the output parser.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Few-shot exemplar JSONL; overrides the config's exemplar file.
    #[arg(long)]
    exemplars: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    exemplars_k: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(required = true)]
    results: Vec<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(required = true)]
    results: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    max_depth: usize,
    #[arg(long, default_value_t = 1)]
    min_samples_leaf: usize,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long)]
    out: PathBuf,
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Unavailable(usize),
}

impl Failure {
    fn config(e: impl Into<anyhow::Error>) -> Self {
        Self::Config(e.into())
    }

    fn runtime(e: impl Into<anyhow::Error>) -> Self {
        Self::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::ExportPrompts(a) => cmd_export(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
        Err(Failure::Unavailable(n)) => {
            eprintln!("backend unavailable for all {n} records");
            ExitCode::from(EXIT_UNAVAILABLE)
        }
    }
}

fn load_config(name_or_path: &str) -> anyhow::Result<DatasetConfig> {
    let path = Path::new(name_or_path);
    if path.is_file() {
        return DatasetConfig::from_file(path).with_context(|| format!("reading {name_or_path}"));
    }
    DatasetConfig::builtin(name_or_path).ok_or_else(|| {
        anyhow!(
            "{name_or_path} is neither a file nor a built-in config ({})",
            DatasetConfig::BUILTIN_NAMES.join(", ")
        )
    })
}

fn load_templates(dir: Option<&Path>) -> anyhow::Result<TemplateSet> {
    match dir {
        Some(d) => {
            TemplateSet::from_dir(d).with_context(|| format!("templates in {}", d.display()))
        }
        None => Ok(TemplateSet::builtin()),
    }
}

struct Inputs {
    config: DatasetConfig,
    records: Vec<StanceRecord>,
    templates: TemplateSet,
    dataset_digest: String,
}

fn load_inputs(data: &DatasetArgs) -> anyhow::Result<Inputs> {
    let config = load_config(&data.dataset_config)?;
    let raw = fs::read_to_string(&data.dataset)
        .with_context(|| format!("reading dataset {}", data.dataset.display()))?;
    let records = load_dataset(&data.dataset, &config)
        .with_context(|| format!("loading dataset {}", data.dataset.display()))?;
    if records.is_empty() {
        bail!("dataset {} has no records", data.dataset.display());
    }
    let templates = load_templates(data.templates.as_deref())?;
    Ok(Inputs {
        config,
        records,
        templates,
        dataset_digest: prompt_hash(&raw),
    })
}

fn few_shot_exemplars(args: &RunArgs, inputs: &Inputs) -> anyhow::Result<Vec<Exemplar>> {
    if let Some(path) = &args.exemplars {
        let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let all = read_exemplars(BufReader::new(file), &inputs.config)?;
        if args.exemplars_k == 0 || all.len() < args.exemplars_k {
            bail!(
                "need {} exemplars, {} has {}",
                args.exemplars_k,
                path.display(),
                all.len()
            );
        }
        return Ok(all.into_iter().take(args.exemplars_k).collect());
    }
    if inputs.config.exemplar_file.is_none() {
        if let Some(all) = builtin_exemplars(&inputs.config.name) {
            if args.exemplars_k >= 1 && all.len() >= args.exemplars_k {
                return Ok(all.into_iter().take(args.exemplars_k).collect());
            }
        }
    }
    Ok(select_exemplars(
        &inputs.config,
        args.exemplars_k,
        args.seed,
        &inputs.records,
    )?)
}

fn build_client(
    args: &RunArgs,
    records: &[StanceRecord],
    cfg: &DatasetConfig,
) -> anyhow::Result<(Client, serde_json::Value)> {
    let endpoint = match (&args.endpoint, &args.mock) {
        (Some(e), None) => e.clone(),
        (None, Some(_)) => "mock://".to_string(),
        _ => bail!("exactly one of --endpoint and --mock is required"),
    };
    if args.parallel == 0 {
        bail!("--parallel must be at least 1");
    }
    let backend = BackendConfig {
        api_style: args.api_style,
        max_tokens: args.max_tokens,
        timeout_secs: args.timeout,
        max_retries: args.max_retries,
        parallelism: args.parallel,
        backoff_base_ms: args.backoff_ms,
        ..BackendConfig::new(endpoint, args.model.clone())
    };
    let (client, mock_digest) = match &args.mock {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading mock script {}", path.display()))?;
            let script = MockScript::from_json(&text).map_err(|e| anyhow!("mock script: {e}"))?;
            let golds: HashMap<String, String> = records
                .iter()
                .map(|r| {
                    (
                        r.id.clone(),
                        cfg.stance_word_for(&r.raw_label, r.canonical_gold),
                    )
                })
                .collect();
            let transport = Arc::new(MockTransport::from_script(script, golds));
            (
                Client::new(backend.clone(), transport),
                Some(prompt_hash(&text)),
            )
        }
        None => (Client::http(backend.clone()), None),
    };
    let client = match &args.cache_dir {
        Some(dir) => client.with_cache(Cache::on_disk(dir)),
        None => client,
    };
    // parallelism, timeouts and retry pacing cannot change outputs, so they
    // stay out of the identity
    let identity = json!({
        "endpoint": backend.endpoint_url,
        "model": backend.model_name,
        "api_style": backend.api_style,
        "max_tokens": backend.max_tokens,
        "mock_script": mock_digest,
    });
    Ok((client, identity))
}

fn plan_digest(plan: &StagePlan) -> String {
    let texts: Vec<String> = plan.stages.iter().map(|s| s.template.source()).collect();
    prompt_hash(&texts.join("\u{0}"))
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    // everything that can be misconfigured is checked before any output exists
    let inputs = load_inputs(&args.data).map_err(Failure::config)?;
    let vocab = match &args.vocab {
        Some(p) => StanceVocab::from_file(p)
            .with_context(|| format!("vocabulary {}", p.display()))
            .map_err(Failure::config)?,
        None => StanceVocab::default(),
    };
    let exemplars = if args.scheme == PromptScheme::FewShot {
        Some(few_shot_exemplars(&args, &inputs).map_err(Failure::config)?)
    } else {
        None
    };
    let plan = inputs
        .templates
        .build_plan(args.scheme, &inputs.config, exemplars.as_deref())
        .map_err(Failure::config)?;
    let (client, backend_identity) =
        build_client(&args, &inputs.records, &inputs.config).map_err(Failure::config)?;

    let identity = json!({
        "dataset_config": inputs.config,
        "dataset_sha256": inputs.dataset_digest,
        "scheme": args.scheme,
        "templates_sha256": plan_digest(&plan),
        "vocab": serde_json::from_str::<serde_json::Value>(&vocab.to_json()).expect("vocab json"),
        "backend": backend_identity,
        "seed": args.seed,
    });
    let meta = RunMeta {
        dataset: inputs.config.name.clone(),
        model: args.model.clone(),
        config_hash: config_hash(&identity),
        seed: args.seed,
    };

    let transcripts = run_experiment(&inputs.records, &plan, &client);
    let rows = score_all(&inputs.records, &transcripts, &vocab, &meta);
    let lines: Vec<TranscriptLine> = transcripts
        .iter()
        .map(|t| TranscriptLine::new(t, &meta))
        .collect();

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))
        .map_err(Failure::runtime)?;
    write_jsonl(&args.out_dir.join("transcripts.jsonl"), &lines).map_err(Failure::runtime)?;
    write_jsonl(&args.out_dir.join("results.jsonl"), &rows).map_err(Failure::runtime)?;
    let completed = transcripts.iter().filter(|t| t.is_complete()).count();
    let run_info = json!({
        "config": identity,
        "config_hash": meta.config_hash,
        "seed": meta.seed,
        "records": inputs.records.len(),
        "completed": completed,
        "aborted": inputs.records.len() - completed,
    });
    write_json(&args.out_dir.join("run.json"), &run_info).map_err(Failure::runtime)?;

    let unavailable = transcripts
        .iter()
        .filter(|t| {
            matches!(
                t.status,
                ChainStatus::Aborted {
                    reason: AbortReason::BackendUnavailable,
                    ..
                }
            )
        })
        .count();
    eprintln!(
        "{} records, {completed} complete, {} requests sent",
        inputs.records.len(),
        client.requests_sent()
    );
    if unavailable == transcripts.len() {
        return Err(Failure::Unavailable(unavailable));
    }
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn read_all_results(paths: &[PathBuf]) -> Result<Vec<EvalRow>, Failure> {
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(read_results(p).map_err(Failure::config)?);
    }
    if rows.is_empty() {
        return Err(Failure::config(EvalError::EmptyEvaluation));
    }
    Ok(rows)
}

/// Distinct (config_hash, seed) pairs behind a set of rows.
fn provenance(rows: &[EvalRow]) -> serde_json::Value {
    let pairs: BTreeSet<(&str, u64)> = rows
        .iter()
        .map(|r| (r.config_hash.as_str(), r.seed))
        .collect();
    pairs
        .into_iter()
        .map(|(h, s)| json!({"config_hash": h, "seed": s}))
        .collect()
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    let rows = read_all_results(&args.results)?;
    let reports = build_reports(&rows).map_err(Failure::config)?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))
        .map_err(Failure::runtime)?;
    let body = json!({ "provenance": provenance(&rows), "reports": reports });
    write_json(&args.out_dir.join("report.json"), &body).map_err(Failure::runtime)?;
    emit_matrix(&reports, &args.out_dir).map_err(Failure::runtime)?;
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let rows = read_all_results(&args.results)?;
    let params = TreeParams {
        max_depth: args.max_depth,
        min_samples_leaf: args.min_samples_leaf,
    };
    let analysis = analyze(&rows, args.seed, params).map_err(Failure::config)?;
    let mut body = serde_json::to_value(&analysis).map_err(Failure::runtime)?;
    body["provenance"] = provenance(&rows);
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(Failure::runtime)?;
    }
    write_json(&args.out, &body).map_err(Failure::runtime)
}

fn cmd_export(args: ExportArgs) -> Result<(), Failure> {
    let inputs = load_inputs(&args.data).map_err(Failure::config)?;
    let plan = inputs
        .templates
        .build_plan(PromptScheme::ContextAnalyze, &inputs.config, None)
        .map_err(Failure::config)?;
    let lines = export_prompts(&inputs.records, &inputs.config, &plan).map_err(Failure::config)?;
    write_jsonl(&args.out, &lines).map_err(Failure::runtime)
}
