//! Thin command-line wrapper over the library: `run`, `chance`, `report`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use reflection_bench::agents::remote::RemoteEndpoint;
use reflection_bench::analysis::ChancePolicy;
use reflection_bench::config::{Difficulty, Strategy, TaskId};
use reflection_bench::runner::{
    cmd_chance, cmd_report, cmd_run, AgentSpec, EmbedderSpec, ParamOverride, RunSpec,
};

#[derive(Parser)]
#[command(
    name = "reflection-bench",
    about = "Drive chat agents through seven cognitive-test environments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run sessions and write transcripts plus a suite report.
    Run(RunArgs),
    /// Estimate a chance-level threshold by Monte Carlo simulation.
    Chance(ChanceArgs),
    /// Recompute a report from a directory of transcripts via replay.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Comma-separated tasks (wpt,wcst,oddball,nback,dcigt,prlt,mbt) or `all`.
    #[arg(long, default_value = "all")]
    tasks: String,
    /// `baseline:<random|wsls|all_no|oracle|constant:TOKEN>`, `remote`, or `human`.
    #[arg(long, default_value = "baseline:random")]
    agent: String,
    /// Prompting strategy: free, direct, or cot.
    #[arg(long, default_value = "free")]
    strategy: String,
    /// Parameter preset: easy, hard, or custom.
    #[arg(long, default_value = "easy")]
    difficulty: String,
    /// Override a parameter: `key=value` or `task.key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Sessions per task (default: 2, oddball 3).
    #[arg(long)]
    sessions: Option<usize>,
    /// Master seed; every session derives its own stream from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for transcripts and reports.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Maximum concurrent sessions.
    #[arg(long)]
    parallel: Option<usize>,
    /// Simulations per chance threshold computed with the run (0 disables).
    #[arg(long)]
    chance_sims: Option<usize>,
    /// Chat-completions base URL for the remote agent.
    #[arg(long, default_value = "https://api.openai.com/v1")]
    endpoint: String,
    /// Model name for the remote agent.
    #[arg(long)]
    model: Option<String>,
    /// Requests per minute allowed against the remote endpoint.
    #[arg(long)]
    rpm: Option<f64>,
    /// Oddball corpus file (JSONL); defaults to the built-in ten items.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Canonical surprise sentence for oddball scoring.
    #[arg(long)]
    standard_sentence: Option<String>,
    /// Oddball embedder: `hash` or `remote:<model>`.
    #[arg(long)]
    embedder: Option<String>,
    /// Embeddings base URL when `--embedder remote:<model>` is used.
    #[arg(long)]
    embed_url: Option<String>,
    /// JSON config file; flags take precedence over its fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ChanceArgs {
    /// Task to simulate (oddball and mbt are not chance-estimated).
    #[arg(long)]
    task: String,
    /// Random policy: uniform, random-dimension, wsls, or oracle.
    #[arg(long, default_value = "uniform")]
    policy: String,
    /// Parameter preset: easy, hard, or custom.
    #[arg(long, default_value = "easy")]
    difficulty: String,
    /// Override a parameter: `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Number of simulated sessions.
    #[arg(long, default_value_t = 1_000_000)]
    sims: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Directory to persist the estimate into (optional).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding `*.jsonl` transcripts (and optional chance files).
    #[arg(long)]
    dir: PathBuf,
    /// Where to write report.json / report.csv (defaults to --dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Oddball corpus used when replaying oddball transcripts.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Embedder for oddball rescoring: `hash` or `remote:<model>`.
    #[arg(long)]
    embedder: Option<String>,
    /// Embeddings base URL when `--embedder remote:<model>` is used.
    #[arg(long)]
    embed_url: Option<String>,
}

/// Optional config file mirroring the run flags; any present field supplies
/// a default that explicit flags override.
#[derive(Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    tasks: Option<String>,
    agent: Option<String>,
    strategy: Option<String>,
    difficulty: Option<String>,
    set: Option<Vec<String>>,
    sessions: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    parallel: Option<usize>,
    chance_sims: Option<usize>,
    endpoint: Option<String>,
    model: Option<String>,
    rpm: Option<f64>,
    corpus: Option<PathBuf>,
    standard_sentence: Option<String>,
    embedder: Option<String>,
    embed_url: Option<String>,
}

fn usage_error(message: String) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(2)
}

fn parse_tasks(raw: &str) -> Result<Vec<TaskId>, String> {
    if raw.trim().eq_ignore_ascii_case("all") {
        return Ok(TaskId::ALL.to_vec());
    }
    raw.split(',')
        .map(|part| part.trim().parse::<TaskId>().map_err(|e| e.to_string()))
        .collect()
}

fn parse_agent(
    raw: &str,
    endpoint: &str,
    model: Option<&str>,
    rpm: Option<f64>,
) -> Result<AgentSpec, String> {
    if raw.eq_ignore_ascii_case("human") {
        return Ok(AgentSpec::Human);
    }
    if let Some(kind) = raw.strip_prefix("baseline:") {
        return kind.parse().map(AgentSpec::Baseline).map_err(|e| e.to_string());
    }
    if raw.eq_ignore_ascii_case("remote") || raw.starts_with("remote:") {
        let model = raw
            .strip_prefix("remote:")
            .filter(|m| !m.is_empty())
            .map(str::to_string)
            .or_else(|| model.map(str::to_string))
            .ok_or("remote agent needs --model or `remote:<model>`")?;
        let mut ep = RemoteEndpoint::new(endpoint, model);
        if let Some(rpm) = rpm {
            ep.requests_per_minute = rpm;
        }
        return Ok(AgentSpec::Remote(ep));
    }
    Err(format!("unknown agent `{raw}`; expected baseline:<kind>, remote, or human"))
}

fn parse_embedder(raw: Option<&str>, embed_url: Option<&str>, chat_endpoint: &str) -> Result<EmbedderSpec, String> {
    match raw {
        None | Some("hash") => Ok(EmbedderSpec::Hash),
        Some(other) => match other.strip_prefix("remote:") {
            Some(model) if !model.is_empty() => Ok(EmbedderSpec::Remote {
                base_url: embed_url.unwrap_or(chat_endpoint).to_string(),
                model: model.to_string(),
            }),
            _ => Err(format!("unknown embedder `{other}`; expected `hash` or `remote:<model>`")),
        },
    }
}

fn parse_overrides(raw: &[String]) -> Result<Vec<ParamOverride>, String> {
    raw.iter().map(|s| s.parse::<ParamOverride>().map_err(|e| e.to_string())).collect()
}

fn run_command(args: RunArgs) -> ExitCode {
    let file: FileConfig = match &args.config {
        Some(path) => match std::fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|text| serde_json::from_str(&text).map_err(|e| e.to_string()))
        {
            Ok(config) => config,
            Err(e) => return usage_error(format!("config file {}: {e}", path.display())),
        },
        None => FileConfig::default(),
    };

    // Flags override file fields; file fields override built-in defaults.
    // Clap defaults make flag-vs-file precedence explicit only for fields
    // where the flag was left at its default, so compare against those.
    let tasks_raw = if args.tasks == "all" { file.tasks.unwrap_or(args.tasks) } else { args.tasks };
    let agent_raw =
        if args.agent == "baseline:random" { file.agent.unwrap_or(args.agent) } else { args.agent };
    let strategy_raw =
        if args.strategy == "free" { file.strategy.unwrap_or(args.strategy) } else { args.strategy };
    let difficulty_raw = if args.difficulty == "easy" {
        file.difficulty.unwrap_or(args.difficulty)
    } else {
        args.difficulty
    };
    let endpoint = if args.endpoint == "https://api.openai.com/v1" {
        file.endpoint.unwrap_or(args.endpoint)
    } else {
        args.endpoint
    };
    let out = if args.out == PathBuf::from("runs") { file.out.unwrap_or(args.out) } else { args.out };
    let model = args.model.or(file.model);
    let rpm = args.rpm.or(file.rpm);
    let mut set = args.set;
    if set.is_empty() {
        set = file.set.unwrap_or_default();
    }

    let tasks = match parse_tasks(&tasks_raw) {
        Ok(tasks) => tasks,
        Err(e) => return usage_error(e),
    };
    let agent = match parse_agent(&agent_raw, &endpoint, model.as_deref(), rpm) {
        Ok(agent) => agent,
        Err(e) => return usage_error(e),
    };
    let strategy: Strategy = match strategy_raw.parse() {
        Ok(s) => s,
        Err(e) => return usage_error(e.to_string()),
    };
    let difficulty: Difficulty = match difficulty_raw.parse() {
        Ok(d) => d,
        Err(e) => return usage_error(e.to_string()),
    };
    let overrides = match parse_overrides(&set) {
        Ok(o) => o,
        Err(e) => return usage_error(e),
    };
    let embedder = match parse_embedder(
        args.embedder.or(file.embedder).as_deref(),
        args.embed_url.or(file.embed_url).as_deref(),
        &endpoint,
    ) {
        Ok(e) => e,
        Err(e) => return usage_error(e),
    };

    let mut spec = RunSpec::new(tasks, agent, out);
    spec.strategy = strategy;
    spec.difficulty = difficulty;
    spec.overrides = overrides;
    spec.sessions = args.sessions.or(file.sessions);
    spec.seed = args.seed.or(file.seed).unwrap_or(42);
    spec.parallel = args.parallel.or(file.parallel).unwrap_or(1);
    spec.chance_sims = args.chance_sims.or(file.chance_sims).unwrap_or(10_000);
    spec.corpus = args.corpus.or(file.corpus);
    spec.standard_sentence = args.standard_sentence.or(file.standard_sentence);
    spec.embedder = embedder;

    match cmd_run(&spec) {
        Ok(summary) => {
            for section in &summary.report.sections {
                println!("[{}]", section.difficulty);
                for (task, mean) in &section.task_means {
                    println!("  {task}: {mean:.2}");
                }
                if let Some(overall) = section.overall {
                    let partial = if section.overall_partial { " (partial)" } else { "" };
                    println!("  overall (six tasks, mbt excluded): {overall:.2}{partial}");
                }
                if let Some(anticipation) = section.mbt_anticipation {
                    println!("  mbt anticipation (reported separately): {anticipation:.2}");
                }
            }
            println!(
                "{} session(s) complete, {} aborted; outputs in {}",
                summary.completed_sessions,
                summary.aborted_sessions,
                summary.out_dir.display()
            );
            if summary.aborted_sessions > 0 {
                eprintln!("error: {} session(s) aborted on transport failure", summary.aborted_sessions);
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn chance_command(args: ChanceArgs) -> ExitCode {
    let task: TaskId = match args.task.parse() {
        Ok(t) => t,
        Err(e) => return usage_error(e.to_string()),
    };
    let policy: ChancePolicy = match args.policy.parse() {
        Ok(p) => p,
        Err(e) => return usage_error(e.to_string()),
    };
    let difficulty: Difficulty = match args.difficulty.parse() {
        Ok(d) => d,
        Err(e) => return usage_error(e.to_string()),
    };
    let overrides = match parse_overrides(&args.set) {
        Ok(o) => o,
        Err(e) => return usage_error(e),
    };
    match cmd_chance(task, policy, difficulty, &overrides, args.sims, args.seed, args.out.as_deref()) {
        Ok((estimate, path)) => {
            println!(
                "task={} policy={} difficulty={} sims={} mean={:.4} p95={:.4} seed={}",
                estimate.task_id,
                estimate.policy,
                estimate.difficulty,
                estimate.n_sims,
                estimate.mean,
                estimate.p95,
                estimate.seed
            );
            if let Some(path) = path {
                println!("written to {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn report_command(args: ReportArgs) -> ExitCode {
    let embedder = match parse_embedder(args.embedder.as_deref(), args.embed_url.as_deref(), "") {
        Ok(e) => e,
        Err(e) => return usage_error(e),
    };
    let out = args.out.clone().unwrap_or_else(|| args.dir.clone());
    match cmd_report(&args.dir, Some(&out), args.corpus.as_deref(), &embedder) {
        Ok(report) => {
            let mismatches: Vec<String> = report
                .sections
                .iter()
                .flat_map(|s| s.rows.iter())
                .filter(|r| r.replay_matches == Some(false))
                .map(|r| r.file.clone())
                .collect();
            println!("report written to {}", out.display());
            if mismatches.is_empty() {
                println!("all stored scores agree with replay");
                ExitCode::SUCCESS
            } else {
                for file in &mismatches {
                    eprintln!("warning: {file}: stored score disagrees with replay");
                }
                ExitCode::from(4)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => run_command(args),
        Command::Chance(args) => chance_command(args),
        Command::Report(args) => report_command(args),
    }
}
