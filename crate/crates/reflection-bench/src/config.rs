//! Task identifiers, prompting strategies, difficulty presets, and per-task
//! parameter sets.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// The seven cognitive-test environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskId {
    /// Weather prediction task: sensor-cued two-state weather chain.
    Wpt,
    /// Wisconsin card sorting test: hidden matching rule with scheduled switches.
    Wcst,
    /// Oddball test: spontaneous detection of a deviant sentence.
    Oddball,
    /// N-back: does the current letter match the one n steps earlier.
    Nback,
    /// Double-choice Iowa gambling task: revealed first outcome plus one revision.
    Dcigt,
    /// Probabilistic reversal learning task: complementary Bernoulli arms, midpoint swap.
    Prlt,
    /// Meta-bandit task: deterministic rewards reversing every n trials over 20 blocks.
    Mbt,
}

impl TaskId {
    pub const ALL: [TaskId; 7] = [
        TaskId::Wpt,
        TaskId::Wcst,
        TaskId::Oddball,
        TaskId::Nback,
        TaskId::Dcigt,
        TaskId::Prlt,
        TaskId::Mbt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::Wpt => "wpt",
            TaskId::Wcst => "wcst",
            TaskId::Oddball => "oddball",
            TaskId::Nback => "nback",
            TaskId::Dcigt => "dcigt",
            TaskId::Prlt => "prlt",
            TaskId::Mbt => "mbt",
        }
    }

    /// Tasks averaged into the overall score. The meta-bandit task is reported
    /// separately and never enters the overall mean.
    pub fn in_overall(self) -> bool {
        self != TaskId::Mbt
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wpt" => Ok(TaskId::Wpt),
            "wcst" => Ok(TaskId::Wcst),
            "oddball" => Ok(TaskId::Oddball),
            "nback" | "n-back" => Ok(TaskId::Nback),
            "dcigt" | "dc-igt" => Ok(TaskId::Dcigt),
            "prlt" => Ok(TaskId::Prlt),
            "mbt" => Ok(TaskId::Mbt),
            other => Err(ConfigError::UnknownTask(other.to_string())),
        }
    }
}

/// Prompting strategy applied to every user prompt of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// No suffix; the agent answers however it likes.
    Free,
    /// Ask for the bare choice with no analysis.
    Direct,
    /// Zero-shot chain of thought.
    Cot,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Free => "free",
            Strategy::Direct => "direct",
            Strategy::Cot => "cot",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "free" => Ok(Strategy::Free),
            "direct" => Ok(Strategy::Direct),
            "cot" => Ok(Strategy::Cot),
            other => Err(ConfigError::UnknownStrategy(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Hard,
    Custom,
}

impl Difficulty {
    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Hard => "hard",
            Difficulty::Custom => "custom",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Difficulty {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "easy" => Ok(Difficulty::Easy),
            "hard" => Ok(Difficulty::Hard),
            "custom" => Ok(Difficulty::Custom),
            other => Err(ConfigError::UnknownDifficulty(other.to_string())),
        }
    }
}

/// Number of sessions run per task by default. The oddball test is scored more
/// subjectively, so it gets one extra repetition.
pub fn default_sessions(task: TaskId) -> usize {
    match task {
        TaskId::Oddball => 3,
        _ => 2,
    }
}

/// Per-task parameter set. Numeric parameters (probabilities, depths, flags)
/// live in `parameters`; keys are the symbols used throughout the harness:
///
/// - `p` — WPT stay/transition probability; PRLT reward probability
/// - `x` — WCST trial count
/// - `n` — n-back depth; MBT block length
/// - `p_a`..`p_d` — DC-IGT per-deck loss probabilities
/// - `match_count` — n-back target count of Yes positions
/// - flags (0/1): `legacy_desk` (WCST desk with the duplicated number),
///   `score_na_trials` (n-back: score the warm-up positions too),
///   `fresh_sequence` (n-back: draw stimuli from the session seed instead of
///   the shared canonical sequence), `short_weight` (DC-IGT score weight)
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub task_id: TaskId,
    pub difficulty: Difficulty,
    pub parameters: BTreeMap<String, f64>,
    /// Trials per session. DC-IGT counts decision pairs here; its transcripts
    /// hold two records per trial.
    pub trials: usize,
    pub sessions: usize,
    pub seed: u64,
    /// Reference sentence for oddball surprise scoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standard_sentence: Option<String>,
}

impl TaskConfig {
    /// Preset matching the published easy/hard parameter table.
    pub fn preset(task: TaskId, difficulty: Difficulty, seed: u64) -> TaskConfig {
        let mut parameters = BTreeMap::new();
        let hard = difficulty == Difficulty::Hard;
        let trials = match task {
            TaskId::Wpt => {
                parameters.insert("p".into(), if hard { 0.8 } else { 0.9 });
                50
            }
            TaskId::Wcst => {
                let x = if hard { 90.0 } else { 72.0 };
                parameters.insert("x".into(), x);
                x as usize
            }
            TaskId::Oddball => 10,
            TaskId::Nback => {
                parameters.insert("n".into(), if hard { 4.0 } else { 2.0 });
                parameters.insert("match_count".into(), 10.0);
                26
            }
            TaskId::Dcigt => {
                parameters.insert("p_a".into(), 0.5);
                parameters.insert("p_b".into(), if hard { 0.2 } else { 0.1 });
                parameters.insert("p_c".into(), 0.5);
                parameters.insert("p_d".into(), if hard { 0.2 } else { 0.1 });
                40
            }
            TaskId::Prlt => {
                parameters.insert("p".into(), if hard { 0.7 } else { 0.8 });
                40
            }
            TaskId::Mbt => {
                let n = if hard { 4.0 } else { 2.0 };
                parameters.insert("n".into(), n);
                20 * n as usize
            }
        };
        TaskConfig {
            task_id: task,
            difficulty,
            parameters,
            trials,
            sessions: default_sessions(task),
            seed,
            standard_sentence: None,
        }
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.parameters.get(name).copied()
    }

    pub fn require(&self, name: &'static str) -> Result<f64, ConfigError> {
        self.param(name).ok_or(ConfigError::MissingParameter {
            task: self.task_id,
            name,
        })
    }

    pub fn flag(&self, name: &str) -> bool {
        self.param(name).is_some_and(|v| v != 0.0)
    }

    /// Set a parameter, keeping derived trial counts consistent (WCST trials
    /// follow `x`; MBT trials follow `n`).
    pub fn set_param(&mut self, name: &str, value: f64) {
        self.parameters.insert(name.to_string(), value);
        match (self.task_id, name) {
            (TaskId::Wcst, "x") => self.trials = value as usize,
            (TaskId::Mbt, "n") => self.trials = 20 * value as usize,
            _ => {}
        }
    }

    fn check_probability(&self, name: &'static str) -> Result<f64, ConfigError> {
        let v = self.require(name)?;
        if !(0.0..=1.0).contains(&v) {
            return Err(ConfigError::InvalidParameter {
                task: self.task_id,
                name: name.to_string(),
                value: v,
                reason: "probabilities must lie in [0,1]".into(),
            });
        }
        Ok(v)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials == 0 {
            return Err(ConfigError::InvalidTrials {
                task: self.task_id,
                trials: 0,
                reason: "at least one trial required".into(),
            });
        }
        match self.task_id {
            TaskId::Wpt => {
                self.check_probability("p")?;
            }
            TaskId::Wcst => {
                let x = self.require("x")? as usize;
                if x % 6 != 0 || x == 0 {
                    return Err(ConfigError::InvalidTrials {
                        task: self.task_id,
                        trials: x,
                        reason: "x must be a positive multiple of 6 (rule schedule)".into(),
                    });
                }
                if x != self.trials {
                    return Err(ConfigError::InvalidTrials {
                        task: self.task_id,
                        trials: self.trials,
                        reason: format!("trials must equal x = {x}"),
                    });
                }
            }
            TaskId::Oddball => {}
            TaskId::Nback => {
                let n = self.require("n")? as usize;
                if n == 0 || n >= self.trials {
                    return Err(ConfigError::InvalidTrials {
                        task: self.task_id,
                        trials: self.trials,
                        reason: format!("need 0 < n < trials, got n = {n}"),
                    });
                }
                let match_count = self.require("match_count")? as usize;
                if match_count > self.trials - n {
                    return Err(ConfigError::InvalidParameter {
                        task: self.task_id,
                        name: "match_count".into(),
                        value: match_count as f64,
                        reason: format!("at most trials - n = {}", self.trials - n),
                    });
                }
            }
            TaskId::Dcigt => {
                for name in ["p_a", "p_b", "p_c", "p_d"] {
                    self.check_probability(match name {
                        "p_a" => "p_a",
                        "p_b" => "p_b",
                        "p_c" => "p_c",
                        _ => "p_d",
                    })?;
                }
            }
            TaskId::Prlt => {
                self.check_probability("p")?;
                if self.trials % 2 != 0 {
                    return Err(ConfigError::InvalidTrials {
                        task: self.task_id,
                        trials: self.trials,
                        reason: "trial count must be even (midpoint reversal)".into(),
                    });
                }
            }
            TaskId::Mbt => {
                let n = self.require("n")? as usize;
                if n == 0 || self.trials != 20 * n {
                    return Err(ConfigError::InvalidTrials {
                        task: self.task_id,
                        trials: self.trials,
                        reason: format!("trials must equal 20 * n = {}", 20 * n),
                    });
                }
            }
        }
        Ok(())
    }
}
