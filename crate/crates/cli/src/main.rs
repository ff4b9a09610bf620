//! `medorch` command line: ask, eval, report, mock-serve.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use base64::Engine;
use clap::{Args, Parser, Subcommand};
use medorch_core::eval::{format_table, read_log, write_summary, EvalReport, ResultRecord};
use medorch_core::mock::{case_study_fixture, serve, Script};
use medorch_core::{load_dataset, run_eval, Error, EvalConfig, ImageData, RunConfig, StrategyKind, VqaItem};

#[derive(Parser)]
#[command(name = "medorch", version, about = "Mediator-guided multi-agent medical VQA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one question with the configured strategy.
    Ask(AskArgs),
    /// Evaluate a strategy over a JSONL dataset.
    Eval(EvalArgs),
    /// Recompute summaries from result logs.
    Report(ReportArgs),
    /// Serve scripted agents over HTTP.
    MockServe(MockServeArgs),
}

#[derive(Args)]
struct AskArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured strategy (medorch, judgment, voting, single:<id>).
    #[arg(long)]
    strategy: Option<String>,
    /// Dataset holding the item; use with --item.
    #[arg(long, requires = "item")]
    dataset: Option<PathBuf>,
    #[arg(long, requires = "dataset")]
    item: Option<String>,
    /// Id for an inline item.
    #[arg(long, default_value = "inline", conflicts_with = "dataset")]
    id: String,
    #[arg(long, conflicts_with = "dataset")]
    question: Option<String>,
    /// Option text, repeated in label order (A, B, ...).
    #[arg(long = "option", conflicts_with = "dataset")]
    options: Vec<String>,
    #[arg(long, conflicts_with_all = ["dataset", "image_base64"])]
    image: Option<PathBuf>,
    /// Raw base64 or a data URL.
    #[arg(long, conflicts_with = "dataset")]
    image_base64: Option<String>,
    /// Where to write the transcript (default: <output_dir>/transcripts/<id>.json).
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Directory image paths resolve against (default: the dataset's directory).
    #[arg(long)]
    image_root: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<String>,
    /// Evaluate only the first N items.
    #[arg(long)]
    limit: Option<usize>,
    /// Skip items already in the result log.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Output directory (default: <output_dir>/<dataset>/<strategy>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Result logs (results.jsonl or the run directories holding them).
    #[arg(required = true)]
    logs: Vec<PathBuf>,
    /// Single-agent result logs for the max/min gap.
    #[arg(long = "single")]
    singles: Vec<PathBuf>,
    /// Also write summary.json and summary.txt next to each log.
    #[arg(long)]
    write: bool,
}

#[derive(Args)]
struct MockServeArgs {
    /// JSON array of scripts.
    #[arg(long)]
    scripts: Option<PathBuf>,
    /// Serve the worked-example agents (expert1-3, mediator, judge).
    #[arg(long)]
    case_study: bool,
    #[arg(long, default_value = "127.0.0.1:8000")]
    bind: String,
    /// Dump the request log as JSONL here on shutdown.
    #[arg(long)]
    request_log: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let result = runtime.block_on(async {
        match cli.command {
            Command::Ask(a) => ask(a).await,
            Command::Eval(a) => eval(a).await,
            Command::Report(a) => report(a),
            Command::MockServe(a) => mock_serve(a).await,
        }
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e.chain().any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_config));
            ExitCode::from(if config { 2 } else { 1 })
        }
    }
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

fn parse_strategy(s: Option<&str>) -> anyhow::Result<Option<StrategyKind>> {
    Ok(s.map(str::parse).transpose()?)
}

fn decode_image(arg: &str) -> anyhow::Result<ImageData> {
    let (media_type, data) = match arg.strip_prefix("data:").and_then(|r| r.split_once(";base64,")) {
        Some((mt, data)) => (mt.to_string(), data),
        None => ("image/png".to_string(), arg),
    };
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(data.trim())
        .map_err(|e| config_error(format!("--image-base64 is not valid base64: {e}")))?;
    Ok(ImageData::new(media_type, bytes))
}

fn ask_item(a: &AskArgs) -> anyhow::Result<VqaItem> {
    if let (Some(path), Some(id)) = (&a.dataset, &a.item) {
        let ds = load_dataset(path, None)?;
        return ds
            .get(id)
            .cloned()
            .ok_or_else(|| config_error(format!("no item `{id}` in {}", path.display())));
    }
    let question = a.question.as_deref().ok_or_else(|| config_error("give --dataset/--item or --question"))?;
    if a.options.len() < 2 {
        return Err(config_error("an inline question needs at least two --option values"));
    }
    let mut item = VqaItem::new(&a.id, question, a.options.iter().cloned())?;
    if let Some(path) = &a.image {
        let bytes = std::fs::read(path).with_context(|| format!("reading image {}", path.display()))?;
        item = item.with_image(ImageData::new(ImageData::media_type_for(path), bytes));
    } else if let Some(b64) = &a.image_base64 {
        item = item.with_image(decode_image(b64)?);
    }
    Ok(item)
}

async fn ask(a: AskArgs) -> anyhow::Result<ExitCode> {
    let cfg = RunConfig::load(&a.config)?;
    let strategy = cfg.build_strategy(parse_strategy(a.strategy.as_deref())?)?;
    let item = ask_item(&a)?;
    let transcript = strategy.decide(&item).await?;

    let path = a
        .transcript
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("transcripts").join(format!("{}.json", item.id)));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&path, serde_json::to_string_pretty(&transcript)? + "\n")?;

    let mut out = std::io::stdout().lock();
    let code = match &transcript.verdict {
        Some(v) => {
            writeln!(out, "label      {}", v.label)?;
            writeln!(out, "option     {}", v.option_text)?;
            writeln!(out, "rationale  {}", v.rationale.trim())?;
            ExitCode::SUCCESS
        }
        None => {
            let reason = transcript.failure.as_deref().unwrap_or("no verdict");
            writeln!(out, "failed     {reason}")?;
            ExitCode::from(1)
        }
    };
    for d in &transcript.degradations {
        writeln!(out, "degraded   {d}")?;
    }
    writeln!(out, "transcript {}", path.display())?;
    Ok(code)
}

async fn eval(a: EvalArgs) -> anyhow::Result<ExitCode> {
    let cfg = RunConfig::load(&a.config)?;
    let strategy = cfg.build_strategy(parse_strategy(a.strategy.as_deref())?)?;
    let dataset = load_dataset(&a.dataset, a.image_root.as_deref())?;
    let out = a.out.unwrap_or_else(|| cfg.output_dir.join(&dataset.name).join(strategy.kind().to_string()));
    let eval_cfg = EvalConfig {
        parallelism: a.parallelism.unwrap_or(cfg.parallelism),
        resume: a.resume || cfg.resume,
        out_dir: out.clone(),
        limit: a.limit,
    };
    let report = run_eval(&strategy, &dataset, &eval_cfg).await?;
    print!("{}", report.to_text());
    println!("\nresults    {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn log_path(p: &Path) -> PathBuf {
    if p.is_dir() { p.join(medorch_core::eval::RESULTS_FILE) } else { p.to_path_buf() }
}

/// Report recomputed from a log, one record per item (first occurrence).
fn report_from_log(path: &Path) -> anyhow::Result<EvalReport> {
    let records = read_log(path).with_context(|| format!("reading {}", path.display()))?;
    let mut seen = BTreeSet::new();
    let kept: Vec<&ResultRecord> = records.iter().filter(|r| seen.insert(r.item_id.clone())).collect();
    let (strategy, dataset) = match kept.first() {
        Some(r) => (r.strategy.clone(), r.dataset.clone()),
        None => ("unknown".to_string(), "unknown".to_string()),
    };
    Ok(EvalReport::from_records(strategy, dataset, kept))
}

fn report(a: ReportArgs) -> anyhow::Result<ExitCode> {
    let mut singles: Vec<EvalReport> = Vec::new();
    let mut complete = true;
    for p in &a.singles {
        let path = log_path(p);
        if !path.exists() {
            eprintln!("warning: single-agent log {} not found; gap section omitted", path.display());
            complete = false;
            continue;
        }
        singles.push(report_from_log(&path)?);
    }

    let mut reports = Vec::new();
    for p in &a.logs {
        let path = log_path(p);
        if !path.exists() {
            bail!("result log {} not found", path.display());
        }
        let mut r = report_from_log(&path)?;
        if complete && !singles.is_empty() {
            let accs: BTreeMap<String, f64> = singles
                .iter()
                .filter(|s| s.dataset == r.dataset)
                .map(|s| (s.strategy.trim_start_matches("single:").to_string(), s.accuracy))
                .collect();
            if accs.is_empty() {
                eprintln!("warning: no single-agent log covers dataset {}; gap section omitted", r.dataset);
            } else {
                r = r.with_singles(accs);
            }
        }
        if a.write {
            let dir = path.parent().ok_or_else(|| anyhow!("log path has no directory"))?;
            write_summary(&r, dir)?;
        }
        reports.push(r);
    }

    for r in &reports {
        println!("{}", r.to_text());
    }
    let mut table: Vec<EvalReport> = singles;
    table.extend(reports.iter().cloned());
    if table.len() > 1 {
        print!("{}", format_table(&table));
    }
    Ok(ExitCode::SUCCESS)
}

async fn mock_serve(a: MockServeArgs) -> anyhow::Result<ExitCode> {
    let mut scripts: Vec<Script> = Vec::new();
    if let Some(path) = &a.scripts {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let parsed: Vec<Script> = serde_json::from_str(&text)
            .map_err(|e| config_error(format!("invalid scripts file {}: {e}", path.display())))?;
        scripts.extend(parsed);
    }
    if a.case_study {
        scripts.extend(case_study_fixture().all_scripts());
    }
    if scripts.is_empty() {
        return Err(config_error("nothing to serve: give --scripts and/or --case-study"));
    }
    let ids: Vec<String> = scripts.iter().map(|s| s.agent_id.clone()).collect();
    let server = serve(scripts, &a.bind).await?;
    println!("listening on {}", server.url());
    for id in &ids {
        println!("  {id:<12} {}", server.base_url(id));
    }
    std::io::stdout().flush()?;

    tokio::signal::ctrl_c().await?;
    let log = server.request_log();
    server.shutdown().await;
    if let Some(path) = &a.request_log {
        std::fs::write(path, log.to_jsonl())?;
        eprintln!("wrote {} request(s) to {}", log.len(), path.display());
    }
    Ok(ExitCode::SUCCESS)
}
