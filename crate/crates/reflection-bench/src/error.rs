//! Error types shared across the harness.

use thiserror::Error;

use crate::config::TaskId;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("task {task}: missing parameter `{name}`")]
    MissingParameter { task: TaskId, name: &'static str },
    #[error("task {task}: parameter `{name}` = {value} is out of range ({reason})")]
    InvalidParameter {
        task: TaskId,
        name: String,
        value: f64,
        reason: String,
    },
    #[error("task {task}: invalid trial count {trials} ({reason})")]
    InvalidTrials {
        task: TaskId,
        trials: usize,
        reason: String,
    },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error("unknown difficulty `{0}`")]
    UnknownDifficulty(String),
    #[error("infeasible sequence: {0}")]
    InfeasibleSequence(String),
}

/// Agent-side failures surfaced to the session loop.
#[derive(Debug, Error)]
pub enum AgentError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed completion payload: {0}")]
    MalformedReply(String),
    #[error("input stream closed")]
    InputClosed,
    #[error("agent `{kind}` is not defined for task {task}")]
    UnsupportedTask { kind: String, task: TaskId },
    #[error("missing API key: environment variable `{0}` is not set")]
    MissingApiKey(String),
}

/// A session that could not be completed; the partial transcript is preserved.
#[derive(Debug, Error)]
#[error("session {session_id} aborted at trial {failed_at}: {source}")]
pub struct SessionAbort {
    pub session_id: String,
    pub failed_at: usize,
    #[source]
    pub source: AgentError,
    pub partial: crate::session::Transcript,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("record {index}: expected consecutive index {expected}")]
    IndexGap { index: usize, expected: usize },
    #[error("record {index}: parsed_action presence disagrees with valid flag")]
    ValidityMismatch { index: usize },
    #[error("record {index}: stored prompt does not match replayed prompt")]
    PromptMismatch { index: usize },
    #[error("record {index}: stored feedback does not match replayed feedback")]
    FeedbackMismatch { index: usize },
    #[error("record {index}: action `{action}` is not a canonical option")]
    UnknownAction { index: usize, action: String },
    #[error("transcript has {found} records, environment expects {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scoring failed: {0}")]
    Scoring(String),
}

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed embedding payload: {0}")]
    Malformed(String),
    #[error("missing API key: environment variable `{0}` is not set")]
    MissingApiKey(String),
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("chance estimation does not support task {0}")]
    UnsupportedTask(TaskId),
    #[error("policy `{policy}` is not defined for task {task}")]
    UnsupportedPolicy { task: TaskId, policy: String },
    #[error("need at least {needed} aggregated points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
}
