//! Deterministic benchmark harness built around seven parameterized
//! cognitive-test environments that probe how a chat agent predicts, decides,
//! perceives, remembers, reconsiders, updates beliefs, and abstracts
//! structure:
//!
//! - `wpt` — weather prediction: learn sensor-cued transition matrices
//! - `wcst` — card sorting: infer a hidden matching rule that keeps changing
//! - `oddball` — spot the sentence that does not belong
//! - `nback` — does the current letter match the one n steps back
//! - `dcigt` — gambling with one chance to revise each choice
//! - `prlt` — two-armed bandit whose reward odds silently reverse
//! - `mbt` — bandit whose rewards alternate on a fixed schedule
//!
//! Any chat-style agent can be driven through them: a remote model over the
//! chat-completions protocol, scripted baselines, or a human at a terminal.
//! Every session is seeded and replayable byte for byte; scores are pure
//! functions of the transcript. The `analysis` module estimates chance-level
//! thresholds by Monte Carlo and aggregates suite reports.

pub mod agents;
pub mod analysis;
pub mod config;
pub mod embed;
pub mod envs;
pub mod error;
pub mod rng;
pub mod runner;
pub mod session;

pub use config::{Difficulty, Strategy, TaskConfig, TaskId};
pub use session::{
    replay, replay_full, run_session, BehaviorProfile, ChatMessage, SessionOutcome, TaskScore,
    Transcript, TrialRecord,
};
