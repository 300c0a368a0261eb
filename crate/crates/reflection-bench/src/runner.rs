//! Run orchestration: execute sessions, persist transcripts, estimate chance
//! thresholds, and assemble suite reports. The CLI binary is a thin wrapper
//! over `cmd_run`, `cmd_chance`, and `cmd_report`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::agents::{build_baseline, Agent, BaselineKind, HumanAgent, RateLimiter, RemoteAgent, RemoteEndpoint};
use crate::analysis::{aggregate, estimate_chance, ChanceEstimate, ChancePolicy, SessionRow, SuiteReport};
use crate::config::{Difficulty, Strategy, TaskConfig, TaskId};
use crate::envs::{build_env, oddball, SessionContext};
use crate::error::{AgentError, AnalysisError, ConfigError, ReplayError};
use crate::rng::Seeder;
use crate::session::{
    read_transcript, replay_full, run_session, save_transcript, transcript_filename,
    SessionStatus, TaskScore, TranscriptFileError,
};

#[derive(Debug, Clone)]
pub enum AgentSpec {
    Baseline(BaselineKind),
    Remote(RemoteEndpoint),
    Human,
}

impl AgentSpec {
    pub fn label(&self) -> String {
        match self {
            AgentSpec::Baseline(kind) => format!("baseline:{kind}"),
            AgentSpec::Remote(endpoint) => format!("remote:{}", endpoint.model),
            AgentSpec::Human => "human".to_string(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub enum EmbedderSpec {
    /// Deterministic offline token-hash embedder.
    #[default]
    Hash,
    /// Remote embeddings endpoint; key from `REFLECTION_API_KEY`.
    Remote { base_url: String, model: String },
}

/// A `key=value` parameter override, optionally scoped to one task with
/// `task.key=value`. The key `trials` adjusts the trial count, `sessions`
/// the session count; other keys land in the task's parameter map.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamOverride {
    pub task: Option<TaskId>,
    pub key: String,
    pub value: f64,
}

impl std::str::FromStr for ParamOverride {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lhs, rhs) = s.split_once('=').ok_or_else(|| {
            ConfigError::UnknownStrategy(format!("override `{s}` is not key=value"))
        })?;
        let value: f64 = rhs.trim().parse().map_err(|_| ConfigError::UnknownStrategy(
            format!("override `{s}` has a non-numeric value"),
        ))?;
        let (task, key) = match lhs.trim().split_once('.') {
            Some((task, key)) => (Some(task.parse::<TaskId>()?), key),
            None => (None, lhs.trim()),
        };
        Ok(ParamOverride { task, key: key.to_string(), value })
    }
}

/// Parameter keys each task understands, beyond `trials` and `sessions`.
fn valid_keys(task: TaskId) -> &'static [&'static str] {
    match task {
        TaskId::Wpt => &["p"],
        TaskId::Wcst => &["x", "legacy_desk"],
        TaskId::Oddball => &[],
        TaskId::Nback => &["n", "match_count", "score_na_trials", "fresh_sequence"],
        TaskId::Dcigt => &["p_a", "p_b", "p_c", "p_d", "short_weight"],
        TaskId::Prlt => &["p"],
        TaskId::Mbt => &["n"],
    }
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub tasks: Vec<TaskId>,
    pub agent: AgentSpec,
    pub strategy: Strategy,
    pub difficulty: Difficulty,
    pub overrides: Vec<ParamOverride>,
    /// Sessions per task; default 2, oddball 3, human always 1.
    pub sessions: Option<usize>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub parallel: usize,
    /// Simulations per chance estimate computed alongside the run; 0 skips
    /// chance estimation entirely.
    pub chance_sims: usize,
    pub corpus: Option<PathBuf>,
    pub standard_sentence: Option<String>,
    pub embedder: EmbedderSpec,
}

impl RunSpec {
    pub fn new(tasks: Vec<TaskId>, agent: AgentSpec, out_dir: PathBuf) -> Self {
        RunSpec {
            tasks,
            agent,
            strategy: Strategy::Free,
            difficulty: Difficulty::Easy,
            overrides: Vec::new(),
            sessions: None,
            seed: 42,
            out_dir,
            parallel: 1,
            chance_sims: 10_000,
            corpus: None,
            standard_sentence: None,
            embedder: EmbedderSpec::Hash,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    TranscriptFile(#[from] TranscriptFileError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Embed(#[from] crate::error::EmbedError),
    #[error("no transcripts found in {0}")]
    EmptyDirectory(PathBuf),
}

impl RunError {
    /// Exit code contract: 2 usage (handled by the CLI parser), 3 transport
    /// exhaustion / missing credentials, 4 validation.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Agent(_) => 3,
            RunError::Io(_) => 1,
            _ => 4,
        }
    }
}

#[derive(Debug)]
pub struct RunSummary {
    pub report: SuiteReport,
    pub completed_sessions: usize,
    pub aborted_sessions: usize,
    pub out_dir: PathBuf,
}

fn build_context(
    corpus: Option<&Path>,
    embedder: &EmbedderSpec,
) -> Result<SessionContext, RunError> {
    let corpus_items = match corpus {
        Some(path) => Arc::new(oddball::load_corpus(path)?),
        None => Arc::new(oddball::builtin_corpus()),
    };
    let embedder: Arc<dyn crate::embed::Embedder> = match embedder {
        EmbedderSpec::Hash => Arc::new(crate::embed::HashEmbedder::default()),
        EmbedderSpec::Remote { base_url, model } => {
            Arc::new(crate::embed::RemoteEmbedder::from_env(base_url.clone(), model.clone())?)
        }
    };
    Ok(SessionContext { corpus: corpus_items, embedder })
}

fn resolve_configs(spec: &RunSpec) -> Result<Vec<TaskConfig>, ConfigError> {
    let mut configs = Vec::new();
    for &task in &spec.tasks {
        let mut config = TaskConfig::preset(task, spec.difficulty, spec.seed);
        if let Some(sessions) = spec.sessions {
            config.sessions = sessions;
        }
        if let Some(sentence) = &spec.standard_sentence {
            if task == TaskId::Oddball {
                config.standard_sentence = Some(sentence.clone());
            }
        }
        for o in &spec.overrides {
            let applies = match o.task {
                Some(t) => t == task,
                None => {
                    valid_keys(task).contains(&o.key.as_str())
                        || o.key == "trials"
                        || o.key == "sessions"
                }
            };
            if !applies {
                continue;
            }
            match o.key.as_str() {
                "trials" => config.trials = o.value as usize,
                "sessions" => config.sessions = o.value as usize,
                key => {
                    if o.task.is_some() && !valid_keys(task).contains(&key) {
                        return Err(ConfigError::InvalidParameter {
                            task,
                            name: key.to_string(),
                            value: o.value,
                            reason: "unknown parameter for this task".into(),
                        });
                    }
                    config.set_param(key, o.value);
                }
            }
        }
        config.validate()?;
        configs.push(config);
    }
    Ok(configs)
}

struct SessionJob {
    config: TaskConfig,
    session_id: String,
    session_seed: u64,
}

fn session_jobs(spec: &RunSpec, configs: &[TaskConfig]) -> Vec<SessionJob> {
    let seeder = Seeder::new(spec.seed);
    let mut jobs = Vec::new();
    for config in configs {
        // A human plays one session, sequentially; everything else follows
        // the configured session count.
        let sessions = if matches!(spec.agent, AgentSpec::Human) {
            1
        } else {
            config.sessions.max(1)
        };
        for index in 0..sessions {
            let session_id = format!("{:02}", index + 1);
            let label = format!("{}/{}/{}", config.task_id, spec.strategy, session_id);
            jobs.push(SessionJob {
                config: config.clone(),
                session_id,
                session_seed: seeder.derive(&label),
            });
        }
    }
    jobs
}

/// Execute one session end to end: build the environment and agent, run the
/// trial loop, persist the transcript, and verify it replays.
fn run_one(
    spec: &RunSpec,
    ctx: &SessionContext,
    limiter: &Arc<RateLimiter>,
    job: &SessionJob,
) -> Result<SessionRow, RunError> {
    let mut env = build_env(&job.config, job.session_seed, ctx)?;
    let mut agent: Box<dyn Agent> = match &spec.agent {
        AgentSpec::Baseline(kind) => build_baseline(kind, &job.config, job.session_seed)?,
        AgentSpec::Remote(endpoint) => {
            Box::new(RemoteAgent::new(endpoint.clone(), limiter.clone())?)
        }
        AgentSpec::Human => Box::new(HumanAgent::stdio()),
    };

    let task = job.config.task_id;
    let file = transcript_filename(task, spec.strategy, &job.session_id);
    let path = spec.out_dir.join(&file);
    let score_embedder =
        (task == TaskId::Oddball).then(|| ctx.embedder.id().to_string());

    match run_session(env.as_mut(), agent.as_mut(), spec.strategy, &job.session_id) {
        Ok(outcome) => {
            save_transcript(
                &path,
                &outcome.transcript,
                SessionStatus::Complete,
                Some(&outcome.score),
                score_embedder.as_deref(),
            )?;
            // Round-trip check: the persisted transcript must replay to the
            // stored score.
            let stored = read_transcript(&path)?;
            let replay_matches = match replay_full(&stored.transcript, ctx) {
                Ok((score, _)) => Some(score == outcome.score),
                Err(err) => {
                    log::error!("replay of fresh transcript {file} failed: {err}");
                    Some(false)
                }
            };
            Ok(SessionRow {
                task,
                strategy: spec.strategy,
                difficulty: job.config.difficulty,
                session_id: job.session_id.clone(),
                seed: job.session_seed,
                status: SessionStatus::Complete,
                score: Some(outcome.score.score),
                details: outcome.score.details.clone(),
                replay_matches,
                file,
                behavior: Some(outcome.behavior),
            })
        }
        Err(abort) => {
            log::error!("session {} aborted: {}", job.session_id, abort.source);
            save_transcript(&path, &abort.partial, SessionStatus::Aborted, None, None)?;
            Ok(SessionRow {
                task,
                strategy: spec.strategy,
                difficulty: job.config.difficulty,
                session_id: job.session_id.clone(),
                seed: job.session_seed,
                status: SessionStatus::Aborted,
                score: None,
                details: Default::default(),
                replay_matches: None,
                file,
                behavior: None,
            })
        }
    }
}

fn chance_policies(task: TaskId) -> Vec<ChancePolicy> {
    match task {
        TaskId::Wcst => vec![ChancePolicy::Uniform, ChancePolicy::RandomDimension],
        TaskId::Wpt | TaskId::Nback | TaskId::Dcigt | TaskId::Prlt => vec![ChancePolicy::Uniform],
        TaskId::Oddball | TaskId::Mbt => Vec::new(),
    }
}

pub fn chance_filename(task: TaskId, policy: &str, difficulty: Difficulty) -> String {
    format!("chance_{task}_{policy}_{difficulty}.json")
}

fn persist_chance(dir: &Path, estimate: &ChanceEstimate) -> std::io::Result<PathBuf> {
    let path = dir.join(chance_filename(
        estimate.task_id,
        &estimate.policy,
        estimate.difficulty,
    ));
    let mut text = serde_json::to_string_pretty(estimate)?;
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}

/// Run every configured session, write transcripts, chance estimates, and
/// the suite report under `spec.out_dir`.
pub fn cmd_run(spec: &RunSpec) -> Result<RunSummary, RunError> {
    let ctx = build_context(spec.corpus.as_deref(), &spec.embedder)?;
    let configs = resolve_configs(spec)?;
    std::fs::create_dir_all(&spec.out_dir)?;

    // Fail fast on missing credentials before any session starts.
    if let AgentSpec::Remote(endpoint) = &spec.agent {
        if std::env::var(&endpoint.api_key_env).is_err() {
            return Err(RunError::Agent(AgentError::MissingApiKey(endpoint.api_key_env.clone())));
        }
    }

    let limiter = Arc::new(RateLimiter::new(match &spec.agent {
        AgentSpec::Remote(endpoint) => endpoint.requests_per_minute,
        _ => 0.0,
    }));

    let jobs = session_jobs(spec, &configs);
    let parallel = if matches!(spec.agent, AgentSpec::Human) { 1 } else { spec.parallel.max(1) };

    let rows: Vec<Result<SessionRow, RunError>> = if parallel <= 1 {
        jobs.iter().map(|job| run_one(spec, &ctx, &limiter, job)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .expect("thread pool");
        pool.install(|| {
            jobs.par_iter().map(|job| run_one(spec, &ctx, &limiter, job)).collect()
        })
    };
    let rows: Vec<SessionRow> = rows.into_iter().collect::<Result<_, _>>()?;

    let mut estimates = Vec::new();
    if spec.chance_sims > 0 {
        for config in &configs {
            for policy in chance_policies(config.task_id) {
                let estimate = estimate_chance(config, policy, spec.chance_sims, spec.seed)?;
                persist_chance(&spec.out_dir, &estimate)?;
                estimates.push(estimate);
            }
        }
    }

    let completed = rows.iter().filter(|r| r.status == SessionStatus::Complete).count();
    let aborted = rows.len() - completed;
    let report = aggregate(rows, estimates);
    report.write_to(&spec.out_dir)?;

    Ok(RunSummary {
        report,
        completed_sessions: completed,
        aborted_sessions: aborted,
        out_dir: spec.out_dir.clone(),
    })
}

/// Estimate one chance threshold and persist it next to the transcripts.
pub fn cmd_chance(
    task: TaskId,
    policy: ChancePolicy,
    difficulty: Difficulty,
    overrides: &[ParamOverride],
    n_sims: usize,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<(ChanceEstimate, Option<PathBuf>), RunError> {
    let mut config = TaskConfig::preset(task, difficulty, seed);
    for o in overrides {
        if o.task.is_some() && o.task != Some(task) {
            continue;
        }
        match o.key.as_str() {
            "trials" => config.trials = o.value as usize,
            "sessions" => config.sessions = o.value as usize,
            key => config.set_param(key, o.value),
        }
    }
    config.validate()?;
    let estimate = estimate_chance(&config, policy, n_sims, seed)?;
    let path = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(persist_chance(dir, &estimate)?)
        }
        None => None,
    };
    Ok((estimate, path))
}

/// Rebuild a suite report from a directory of transcripts: every stored
/// score is recomputed via replay and disagreements are flagged.
pub fn cmd_report(
    dir: &Path,
    out_dir: Option<&Path>,
    corpus: Option<&Path>,
    embedder: &EmbedderSpec,
) -> Result<SuiteReport, RunError> {
    let ctx = build_context(corpus, embedder)?;

    let mut transcript_paths = Vec::new();
    let mut chance_paths = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("").to_string();
        if name.ends_with(".jsonl") {
            transcript_paths.push(path);
        } else if name.starts_with("chance_") && name.ends_with(".json") {
            chance_paths.push(path);
        }
    }
    transcript_paths.sort();
    chance_paths.sort();
    if transcript_paths.is_empty() {
        return Err(RunError::EmptyDirectory(dir.to_path_buf()));
    }

    let mut rows = Vec::new();
    for path in &transcript_paths {
        let stored = read_transcript(path)?;
        let file = path.file_name().and_then(|n| n.to_str()).unwrap_or("").to_string();
        let transcript = &stored.transcript;

        if stored.status == SessionStatus::Aborted {
            rows.push(SessionRow {
                task: transcript.task_id,
                strategy: transcript.strategy,
                difficulty: transcript.config_snapshot.difficulty,
                session_id: transcript.session_id.clone(),
                seed: transcript.seed,
                status: SessionStatus::Aborted,
                score: None,
                details: Default::default(),
                replay_matches: None,
                file,
                behavior: None,
            });
            continue;
        }

        // Oddball sessions scored under a different embedder cannot be
        // recomputed here; keep the stored score, unchecked.
        let foreign_embedder = transcript.task_id == TaskId::Oddball
            && stored.score_embedder.as_deref() != Some(ctx.embedder.id());
        let (score, details, replay_matches, behavior) = if foreign_embedder {
            let stored_score = stored.score.as_ref();
            (
                stored_score.map(|s| s.score),
                stored_score.map(|s| s.details.clone()).unwrap_or_default(),
                None,
                None,
            )
        } else {
            match replay_full(transcript, &ctx) {
                Ok((score, behavior)) => {
                    let matches = stored
                        .score
                        .as_ref()
                        .map(|s| s.score == score.score && s.details == score.details);
                    (Some(score.score), score.details, matches, Some(behavior))
                }
                Err(err) => {
                    log::warn!("{file}: replay failed: {err}");
                    let stored_score: Option<&TaskScore> = stored.score.as_ref();
                    (
                        stored_score.map(|s| s.score),
                        stored_score.map(|s| s.details.clone()).unwrap_or_default(),
                        Some(false),
                        None,
                    )
                }
            }
        };

        rows.push(SessionRow {
            task: transcript.task_id,
            strategy: transcript.strategy,
            difficulty: transcript.config_snapshot.difficulty,
            session_id: transcript.session_id.clone(),
            seed: transcript.seed,
            status: SessionStatus::Complete,
            score,
            details,
            replay_matches,
            file,
            behavior,
        });
    }

    let mut estimates = Vec::new();
    for path in &chance_paths {
        let text = std::fs::read_to_string(path)?;
        match serde_json::from_str::<ChanceEstimate>(&text) {
            Ok(estimate) => estimates.push(estimate),
            Err(err) => log::warn!("{}: skipping unreadable chance file: {err}", path.display()),
        }
    }

    let report = aggregate(rows, estimates);
    if let Some(out) = out_dir {
        report.write_to(out)?;
    }
    Ok(report)
}
