//! Generic trial-loop engine.
//!
//! `run_session` drives one agent through one environment: build the prompt,
//! query the agent, parse the action, advance the environment, record
//! everything. Scoring is a pure function of the finished transcript —
//! `replay` rebuilds the environment from the stored config and seed, feeds it
//! the stored actions, and must reproduce every prompt and feedback string
//! byte for byte.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{apply_strategy, Agent};
use crate::config::{Strategy, TaskConfig, TaskId};
use crate::envs::{build_env, SessionContext};
use crate::error::{ReplayError, SessionAbort};

/// After an unparseable reply the agent is re-prompted once, then the task's
/// fallback action is applied so every trial resolves to an action.
pub const MAX_PARSE_RETRIES: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

/// One prompt/response/feedback exchange. `parsed_action` is absent exactly
/// when `valid` is false, in which case the task's fallback action was applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub prompt: String,
    pub raw_response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed_action: Option<String>,
    pub feedback: String,
    pub valid: bool,
    pub retries_used: u32,
}

/// Ordered record of one agent-environment session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub session_id: String,
    pub task_id: TaskId,
    pub strategy: Strategy,
    pub seed: u64,
    pub config_snapshot: TaskConfig,
    pub records: Vec<TrialRecord>,
}

/// Normalized 0-100 score plus a task-specific metric breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task_id: TaskId,
    pub score: f64,
    pub details: BTreeMap<String, f64>,
}

impl TaskScore {
    pub fn new(task_id: TaskId, score: f64) -> Self {
        TaskScore { task_id, score, details: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.to_string(), value);
        self
    }
}

/// Task-specific behavioral analysis of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum BehaviorProfile {
    Wpt {
        /// Prediction pattern label: A correct, B driven by today's weather,
        /// C driven by the sensor, D one sensor context learned, E neither.
        pattern: char,
        /// Estimated transition matrices indexed `[sensor][today][next]`.
        estimate: [[[f64; 2]; 2]; 2],
        /// Observation counts per (sensor, today) context.
        context_counts: [[u32; 2]; 2],
    },
    Wcst {
        block_accuracy: Vec<f64>,
    },
    Nback {
        correct: usize,
        scoreable: usize,
        na_compliant: usize,
    },
    Dcigt {
        insist_gain: usize,
        insist_risk: usize,
        unnecessary_switch: usize,
        loss_avoiding_switch: usize,
        final_balance: i64,
        /// Sliding-window deck proportions over final choices, [A,B,C,D].
        trajectory: Vec<[f64; 4]>,
    },
    Prlt {
        /// Moving-average probability of choosing the initially-rich arm.
        choice_series: Vec<f64>,
    },
    Mbt {
        anticipation: f64,
        /// 20 x n reward grid, row per block.
        grid: Vec<Vec<u8>>,
    },
    Oddball {
        item_scores: Vec<Option<f64>>,
        embedder: String,
    },
}

/// Raised by `TextEnvironment::step` when the supplied action is not one of
/// the canonical options (only reachable through a tampered transcript).
#[derive(Debug, Clone)]
pub struct UnknownAction(pub String);

impl fmt::Display for UnknownAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown action `{}`", self.0)
    }
}

/// A text-facing task environment. Implementations own all hidden state and a
/// seeded RNG stream; none of the hidden parameters may ever appear in a
/// prompt or feedback string.
pub trait TextEnvironment {
    fn task_id(&self) -> TaskId;
    fn config(&self) -> &TaskConfig;
    fn seed(&self) -> u64;
    fn system_prompt(&self) -> String;
    /// Number of records a complete transcript holds.
    fn total_turns(&self) -> usize;
    /// User prompt for the next turn; embeds the previous turn's feedback.
    fn next_prompt(&mut self) -> String;
    /// Canonical action tokens for the current turn.
    fn options(&self) -> Vec<String>;
    /// Extract a canonical action token from a raw reply.
    fn parse_action(&self, raw: &str) -> Option<String>;
    /// Deterministic action applied when parsing fails twice.
    fn fallback_action(&self) -> String;
    /// Re-prompt sent after the first parse failure.
    fn retry_prompt(&self) -> String {
        format!("Respond with exactly one of: {}.", self.options().join(", "))
    }
    /// Apply the action, advance hidden state, return the feedback string.
    fn step(&mut self, action: &str) -> Result<String, UnknownAction>;
    /// Score the completed session. Pure in the applied actions.
    fn score(&self) -> Result<TaskScore, String>;
    fn behavior(&self) -> BehaviorProfile;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub transcript: Transcript,
    pub score: TaskScore,
    pub behavior: BehaviorProfile,
}

/// Drive `agent` through `env` under one prompting strategy.
///
/// Transport failures abort the session after the client's retry budget; the
/// partial transcript rides along in the error. Parse failures re-prompt once
/// and then fall back, so a completed session always has exactly
/// `env.total_turns()` records.
pub fn run_session(
    env: &mut dyn TextEnvironment,
    agent: &mut dyn Agent,
    strategy: Strategy,
    session_id: &str,
) -> Result<SessionOutcome, SessionAbort> {
    let mut records: Vec<TrialRecord> = Vec::with_capacity(env.total_turns());
    let mut messages = vec![ChatMessage::system(env.system_prompt())];

    let make_transcript = |records: Vec<TrialRecord>, env: &dyn TextEnvironment| Transcript {
        session_id: session_id.to_string(),
        task_id: env.task_id(),
        strategy,
        seed: env.seed(),
        config_snapshot: env.config().clone(),
        records,
    };

    for index in 1..=env.total_turns() {
        let prompt = apply_strategy(&env.next_prompt(), strategy);
        messages.push(ChatMessage::user(prompt.clone()));

        let abort = |records: &[TrialRecord], env: &dyn TextEnvironment, err| SessionAbort {
            session_id: session_id.to_string(),
            failed_at: index,
            source: err,
            partial: make_transcript(records.to_vec(), env),
        };

        let mut raw = match agent.reply(&messages) {
            Ok(text) => text,
            Err(err) => return Err(abort(&records, env, err)),
        };
        messages.push(ChatMessage::assistant(raw.clone()));
        let mut parsed = env.parse_action(&raw);
        let mut retries_used = 0;

        if parsed.is_none() && MAX_PARSE_RETRIES > 0 {
            retries_used = 1;
            messages.push(ChatMessage::user(env.retry_prompt()));
            raw = match agent.reply(&messages) {
                Ok(text) => text,
                Err(err) => return Err(abort(&records, env, err)),
            };
            messages.push(ChatMessage::assistant(raw.clone()));
            parsed = env.parse_action(&raw);
        }

        let valid = parsed.is_some();
        let effective = parsed.clone().unwrap_or_else(|| env.fallback_action());
        let feedback = env
            .step(&effective)
            .expect("parse and fallback always yield canonical actions");

        records.push(TrialRecord {
            index,
            prompt,
            raw_response: raw,
            parsed_action: parsed,
            feedback,
            valid,
            retries_used,
        });
    }

    let transcript = make_transcript(records, env);
    let score = env.score().expect("completed session must be scorable");
    let behavior = env.behavior();
    Ok(SessionOutcome { transcript, score, behavior })
}

/// Recompute score and behavior from a stored transcript without contacting
/// any agent. Every stored prompt and feedback string is checked against the
/// re-simulated environment; the first disagreement is reported by record.
pub fn replay_full(
    transcript: &Transcript,
    ctx: &SessionContext,
) -> Result<(TaskScore, BehaviorProfile), ReplayError> {
    if transcript.task_id != transcript.config_snapshot.task_id {
        return Err(ReplayError::Header(format!(
            "transcript task {} does not match config task {}",
            transcript.task_id, transcript.config_snapshot.task_id
        )));
    }
    let mut env = build_env(&transcript.config_snapshot, transcript.seed, ctx)?;

    for (position, record) in transcript.records.iter().enumerate() {
        let expected = position + 1;
        if record.index != expected {
            return Err(ReplayError::IndexGap { index: record.index, expected });
        }
        if record.valid != record.parsed_action.is_some() {
            return Err(ReplayError::ValidityMismatch { index: record.index });
        }
        if expected > env.total_turns() {
            return Err(ReplayError::LengthMismatch {
                expected: env.total_turns(),
                found: transcript.records.len(),
            });
        }
        let prompt = apply_strategy(&env.next_prompt(), transcript.strategy);
        if prompt != record.prompt {
            return Err(ReplayError::PromptMismatch { index: record.index });
        }
        let effective = record
            .parsed_action
            .clone()
            .unwrap_or_else(|| env.fallback_action());
        let feedback = env.step(&effective).map_err(|e| ReplayError::UnknownAction {
            index: record.index,
            action: e.0,
        })?;
        if feedback != record.feedback {
            return Err(ReplayError::FeedbackMismatch { index: record.index });
        }
    }

    if transcript.records.len() != env.total_turns() {
        return Err(ReplayError::LengthMismatch {
            expected: env.total_turns(),
            found: transcript.records.len(),
        });
    }

    let score = env.score().map_err(ReplayError::Scoring)?;
    Ok((score, env.behavior()))
}

/// `replay_full` with the default context (built-in corpus, offline embedder).
pub fn replay(transcript: &Transcript) -> Result<TaskScore, ReplayError> {
    replay_full(transcript, &SessionContext::default()).map(|(score, _)| score)
}

// ---------------------------------------------------------------------------
// Persistence: line-delimited JSON, one header record, one line per trial,
// one score footer for completed sessions.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Complete,
    Aborted,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum TranscriptLine {
    Header {
        session_id: String,
        task: TaskId,
        strategy: Strategy,
        seed: u64,
        status: SessionStatus,
        config: TaskConfig,
    },
    Trial(TrialRecord),
    Score {
        score: f64,
        details: BTreeMap<String, f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        embedder: Option<String>,
    },
}

/// A transcript as read back from disk.
#[derive(Debug, Clone)]
pub struct StoredSession {
    pub transcript: Transcript,
    pub status: SessionStatus,
    pub score: Option<TaskScore>,
    /// Embedder that produced the stored score (oddball sessions only).
    pub score_embedder: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum TranscriptFileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Structure { line: usize, message: String },
}

pub fn transcript_filename(task: TaskId, strategy: Strategy, session_id: &str) -> String {
    format!("{task}_{strategy}_{session_id}.jsonl")
}

pub fn write_transcript<W: Write>(
    mut w: W,
    transcript: &Transcript,
    status: SessionStatus,
    score: Option<&TaskScore>,
    score_embedder: Option<&str>,
) -> std::io::Result<()> {
    let header = TranscriptLine::Header {
        session_id: transcript.session_id.clone(),
        task: transcript.task_id,
        strategy: transcript.strategy,
        seed: transcript.seed,
        status,
        config: transcript.config_snapshot.clone(),
    };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    for record in &transcript.records {
        writeln!(w, "{}", serde_json::to_string(&TranscriptLine::Trial(record.clone()))?)?;
    }
    if let Some(score) = score {
        let footer = TranscriptLine::Score {
            score: score.score,
            details: score.details.clone(),
            embedder: score_embedder.map(str::to_string),
        };
        writeln!(w, "{}", serde_json::to_string(&footer)?)?;
    }
    Ok(())
}

pub fn save_transcript(
    path: &Path,
    transcript: &Transcript,
    status: SessionStatus,
    score: Option<&TaskScore>,
    score_embedder: Option<&str>,
) -> std::io::Result<()> {
    let mut buf = Vec::new();
    write_transcript(&mut buf, transcript, status, score, score_embedder)?;
    fs::write(path, buf)
}

pub fn read_transcript(path: &Path) -> Result<StoredSession, TranscriptFileError> {
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut header: Option<(Transcript, SessionStatus)> = None;
    let mut records = Vec::new();
    let mut score: Option<TaskScore> = None;
    let mut score_embedder: Option<String> = None;

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TranscriptLine = serde_json::from_str(&line)
            .map_err(|source| TranscriptFileError::Json { line: line_no, source })?;
        match parsed {
            TranscriptLine::Header { session_id, task, strategy, seed, status, config } => {
                if header.is_some() {
                    return Err(TranscriptFileError::Structure {
                        line: line_no,
                        message: "duplicate header".into(),
                    });
                }
                header = Some((
                    Transcript {
                        session_id,
                        task_id: task,
                        strategy,
                        seed,
                        config_snapshot: config,
                        records: Vec::new(),
                    },
                    status,
                ));
            }
            TranscriptLine::Trial(record) => {
                if header.is_none() {
                    return Err(TranscriptFileError::Structure {
                        line: line_no,
                        message: "trial record before header".into(),
                    });
                }
                records.push(record);
            }
            TranscriptLine::Score { score: s, details, embedder } => {
                let task = header
                    .as_ref()
                    .map(|(t, _)| t.task_id)
                    .ok_or(TranscriptFileError::Structure {
                        line: line_no,
                        message: "score record before header".into(),
                    })?;
                score = Some(TaskScore { task_id: task, score: s, details });
                score_embedder = embedder;
            }
        }
    }

    let (mut transcript, status) = header.ok_or(TranscriptFileError::Structure {
        line: 0,
        message: "missing header record".into(),
    })?;
    transcript.records = records;
    Ok(StoredSession { transcript, status, score, score_embedder })
}
