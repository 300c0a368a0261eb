//! Scripted baseline agents.
//!
//! Baselines satisfy the same chat contract as remote models: they see only
//! the message history. Stochastic baselines draw from the session's "agent"
//! stream, so a (kind, seed) pair always reproduces the same choices. Oracle
//! baselines additionally know the task's hidden parameters; they re-derive
//! them from (config, seed) exactly the way the environment does, which is a
//! diagnostic back door no ordinary agent has.

use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{TaskConfig, TaskId};
use crate::envs::bandit::{Arm, MbtCore, PrltCore};
use crate::envs::dcigt::{expected_value, Deck};
use crate::envs::nback::NbackAnswer;
use crate::envs::oddball::DEFAULT_STANDARD_SENTENCE;
use crate::envs::wcst::{default_desk, legacy_desk, Card, Dimension, RULE_SCHEDULE};
use crate::envs::ENV_STREAM;
use crate::error::{AgentError, ConfigError};
use crate::rng::Seeder;
use crate::session::{ChatMessage, Role};

use super::{default_aliases, Agent};

/// RNG stream label for baseline agents' own randomness.
pub const AGENT_STREAM: &str = "agent";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BaselineKind {
    /// Uniform over the task's canonical options each trial.
    Random,
    /// Win-stay-lose-switch on the two-armed bandit tasks.
    Wsls,
    /// Always answers "No".
    AllNo,
    /// Always answers with the given token.
    Constant(String),
    /// Plays the task's optimal policy, using hidden parameters.
    Oracle,
}

impl FromStr for BaselineKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(BaselineKind::Random),
            "wsls" => Ok(BaselineKind::Wsls),
            "all_no" | "all-no" => Ok(BaselineKind::AllNo),
            "oracle" => Ok(BaselineKind::Oracle),
            other => match other.strip_prefix("constant:") {
                Some(token) if !token.is_empty() => Ok(BaselineKind::Constant(token.to_string())),
                _ => Err(ConfigError::UnknownStrategy(format!("baseline kind `{s}`"))),
            },
        }
    }
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BaselineKind::Random => write!(f, "random"),
            BaselineKind::Wsls => write!(f, "wsls"),
            BaselineKind::AllNo => write!(f, "all_no"),
            BaselineKind::Constant(token) => write!(f, "constant:{token}"),
            BaselineKind::Oracle => write!(f, "oracle"),
        }
    }
}

/// Build a baseline agent for one session.
pub fn build_baseline(
    kind: &BaselineKind,
    config: &TaskConfig,
    session_seed: u64,
) -> Result<Box<dyn Agent>, AgentError> {
    let rng = Seeder::new(session_seed).stream(AGENT_STREAM);
    let task = config.task_id;
    Ok(match kind {
        BaselineKind::Random => Box::new(RandomAgent::new(task, rng)),
        BaselineKind::Wsls => {
            if !matches!(task, TaskId::Prlt | TaskId::Mbt) {
                return Err(AgentError::UnsupportedTask { kind: "wsls".into(), task });
            }
            Box::new(WslsAgent::new(rng))
        }
        BaselineKind::AllNo => Box::new(ConstantAgent::new("all_no", "No")),
        BaselineKind::Constant(token) => Box::new(ConstantAgent::new("constant", token)),
        BaselineKind::Oracle => build_oracle(config, session_seed)?,
    })
}

fn build_oracle(config: &TaskConfig, session_seed: u64) -> Result<Box<dyn Agent>, AgentError> {
    let env_stream = Seeder::new(session_seed).stream(ENV_STREAM);
    Ok(match config.task_id {
        TaskId::Wpt => {
            let p = config.param("p").unwrap_or(0.9);
            Box::new(WptOracle { p })
        }
        TaskId::Wcst => {
            let desk = if config.flag("legacy_desk") { legacy_desk() } else { default_desk() };
            Box::new(WcstOracle { desk, block_len: config.trials / 6, trial: 0 })
        }
        TaskId::Nback => {
            let n = config.param("n").unwrap_or(2.0) as usize;
            Box::new(NbackOracle { n, seen: Vec::new() })
        }
        TaskId::Dcigt => {
            let p_loss = [
                config.param("p_a").unwrap_or(0.5),
                config.param("p_b").unwrap_or(0.1),
                config.param("p_c").unwrap_or(0.5),
                config.param("p_d").unwrap_or(0.1),
            ];
            let mut ranked: Vec<Deck> = Deck::ALL.to_vec();
            ranked.sort_by(|a, b| {
                expected_value(*b, &p_loss).partial_cmp(&expected_value(*a, &p_loss)).unwrap()
            });
            Box::new(DcigtOracle { best: ranked[0], second: ranked[1] })
        }
        TaskId::Prlt => {
            // Mirror the environment's hidden draw.
            let core = PrltCore::new(config.param("p").unwrap_or(0.8), config.trials, env_stream);
            Box::new(PrltOracle {
                rich: core.initially_rich_arm(),
                reversal_at: config.trials / 2,
                trial: 0,
            })
        }
        TaskId::Mbt => {
            let n = config.param("n").unwrap_or(2.0) as usize;
            let core = MbtCore::new(n, env_stream);
            Box::new(MbtOracle { core, trial: 0 })
        }
        TaskId::Oddball => Box::new(ConstantAgent::new("oracle", DEFAULT_STANDARD_SENTENCE)),
    })
}

fn last_user_message(messages: &[ChatMessage]) -> &str {
    messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .map(|m| m.content.as_str())
        .unwrap_or("")
}

/// The text between `label` and the next terminator, if present.
fn field_after<'a>(text: &'a str, label: &str) -> Option<&'a str> {
    let start = text.rfind(label)? + label.len();
    let rest = &text[start..];
    let end = rest.find(['.', ',', '\n']).unwrap_or(rest.len());
    Some(rest[..end].trim())
}

pub struct RandomAgent {
    options: Vec<String>,
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(task: TaskId, rng: ChaCha8Rng) -> Self {
        let options: Vec<String> = default_aliases(task)
            .iter()
            .map(|(_, canonical)| canonical.to_string())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        RandomAgent { options, rng }
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> &str {
        "baseline:random"
    }

    fn reply(&mut self, _messages: &[ChatMessage]) -> Result<String, AgentError> {
        if self.options.is_empty() {
            return Ok("No comment.".to_string());
        }
        let i = self.rng.random_range(0..self.options.len());
        Ok(self.options[i].clone())
    }
}

/// Repeats its previous arm after a reward, switches after a non-reward.
pub struct WslsAgent {
    rng: ChaCha8Rng,
    previous: Option<Arm>,
}

impl WslsAgent {
    pub fn new(rng: ChaCha8Rng) -> Self {
        WslsAgent { rng, previous: None }
    }
}

impl Agent for WslsAgent {
    fn name(&self) -> &str {
        "baseline:wsls"
    }

    fn reply(&mut self, messages: &[ChatMessage]) -> Result<String, AgentError> {
        let prompt = last_user_message(messages);
        let choice = match (self.previous, field_after(prompt, "Reward: ")) {
            (Some(prev), Some("1")) => prev,
            (Some(prev), Some("0")) => prev.other(),
            _ => {
                if self.rng.random_bool(0.5) {
                    Arm::Left
                } else {
                    Arm::Right
                }
            }
        };
        self.previous = Some(choice);
        Ok(choice.token().to_string())
    }
}

pub struct ConstantAgent {
    name: String,
    token: String,
}

impl ConstantAgent {
    pub fn new(kind: &str, token: impl Into<String>) -> Self {
        ConstantAgent { name: format!("baseline:{kind}"), token: token.into() }
    }
}

impl Agent for ConstantAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn reply(&mut self, _messages: &[ChatMessage]) -> Result<String, AgentError> {
        Ok(self.token.clone())
    }
}

/// Predicts the argmax of the true transition row for the current context.
struct WptOracle {
    p: f64,
}

impl Agent for WptOracle {
    fn name(&self) -> &str {
        "baseline:oracle"
    }

    fn reply(&mut self, messages: &[ChatMessage]) -> Result<String, AgentError> {
        let prompt = last_user_message(messages);
        let today = field_after(prompt, "Today's weather: ")
            .ok_or_else(|| AgentError::MalformedReply("prompt lacks today's weather".into()))?;
        let sensor_start = prompt
            .rfind("Sensor states: ")
            .ok_or_else(|| AgentError::MalformedReply("prompt lacks sensor states".into()))?
            + "Sensor states: ".len();
        let sensor_end = prompt[sensor_start..]
            .find(']')
            .ok_or_else(|| AgentError::MalformedReply("unterminated sensor states".into()))?
            + sensor_start;
        let sensor = &prompt[sensor_start..=sensor_end];
        let stay = (sensor == "[1,0]") == (self.p >= 0.5);
        let prediction = match (today, stay) {
            ("sunny", true) | ("rainy", false) => "sunny",
            _ => "rainy",
        };
        Ok(prediction.to_string())
    }
}

/// Knows the fixed rule schedule; reads the target from the prompt.
struct WcstOracle {
    desk: [Card; 4],
    block_len: usize,
    trial: usize,
}

impl Agent for WcstOracle {
    fn name(&self) -> &str {
        "baseline:oracle"
    }

    fn reply(&mut self, messages: &[ChatMessage]) -> Result<String, AgentError> {
        let prompt = last_user_message(messages);
        let quoted_start = prompt
            .rfind("Testing card: \"")
            .ok_or_else(|| AgentError::MalformedReply("prompt lacks testing card".into()))?
            + "Testing card: \"".len();
        let quoted_end = prompt[quoted_start..]
            .find('"')
            .ok_or_else(|| AgentError::MalformedReply("unterminated testing card".into()))?
            + quoted_start;
        let target = &prompt[quoted_start..quoted_end];
        let rule = RULE_SCHEDULE[(self.trial / self.block_len).min(5)];
        self.trial += 1;

        let mut parts = target.split_whitespace();
        let (shape, color, number) = (
            parts.next().unwrap_or(""),
            parts.next().unwrap_or(""),
            parts.next().unwrap_or(""),
        );
        let choice = self
            .desk
            .iter()
            .find(|card| match rule {
                Dimension::Shape => card.shape.as_str() == shape,
                Dimension::Color => card.color.as_str() == color,
                Dimension::Number => card.number.to_string() == number,
            })
            .ok_or_else(|| AgentError::MalformedReply(format!("no desk card matches `{target}`")))?;
        Ok(choice.token())
    }
}

/// Perfect working memory: tracks the letters it has been shown.
struct NbackOracle {
    n: usize,
    seen: Vec<char>,
}

impl Agent for NbackOracle {
    fn name(&self) -> &str {
        "baseline:oracle"
    }

    fn reply(&mut self, messages: &[ChatMessage]) -> Result<String, AgentError> {
        let prompt = last_user_message(messages);
        let letter = prompt
            .split_whitespace()
            .next()
            .and_then(|w| w.chars().next())
            .ok_or_else(|| AgentError::MalformedReply("empty letter prompt".into()))?;
        self.seen.push(letter);
        let i = self.seen.len() - 1;
        let answer = if i < self.n {
            NbackAnswer::NotAvailable
        } else if self.seen[i] == self.seen[i - self.n] {
            NbackAnswer::Yes
        } else {
            NbackAnswer::No
        };
        Ok(answer.token().to_string())
    }
}

/// First choice: the best deck by expected value. Revision: stay on a clean
/// gain, flee to the second-best deck when the revealed outcome had a loss.
struct DcigtOracle {
    best: Deck,
    second: Deck,
}

impl Agent for DcigtOracle {
    fn name(&self) -> &str {
        "baseline:oracle"
    }

    fn reply(&mut self, messages: &[ChatMessage]) -> Result<String, AgentError> {
        let prompt = last_user_message(messages);
        if prompt.contains("Make your final choice") {
            let lost = field_after(prompt, "lost $")
                .and_then(|v| v.parse::<i64>().ok())
                .ok_or_else(|| AgentError::MalformedReply("prompt lacks revealed loss".into()))?;
            let deck = if lost > 0 { self.second } else { self.best };
            Ok(deck.token().to_string())
        } else {
            Ok(self.best.token().to_string())
        }
    }
}

/// Plays the rich arm, switching exactly at the reversal.
struct PrltOracle {
    rich: Arm,
    reversal_at: usize,
    trial: usize,
}

impl Agent for PrltOracle {
    fn name(&self) -> &str {
        "baseline:oracle"
    }

    fn reply(&mut self, _messages: &[ChatMessage]) -> Result<String, AgentError> {
        let arm = if self.trial < self.reversal_at { self.rich } else { self.rich.other() };
        self.trial += 1;
        Ok(arm.token().to_string())
    }
}

/// Anticipates every scheduled reversal.
struct MbtOracle {
    core: MbtCore,
    trial: usize,
}

impl Agent for MbtOracle {
    fn name(&self) -> &str {
        "baseline:oracle"
    }

    fn reply(&mut self, _messages: &[ChatMessage]) -> Result<String, AgentError> {
        let arm = self.core.rewarding_arm_at(self.trial);
        self.trial += 1;
        Ok(arm.token().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Difficulty;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn kind_parsing_round_trips() {
        for raw in ["random", "wsls", "all_no", "oracle", "constant:left arm"] {
            let kind: BaselineKind = raw.parse().unwrap();
            assert_eq!(kind.to_string(), raw);
        }
        assert!("constant:".parse::<BaselineKind>().is_err());
        assert!("bogus".parse::<BaselineKind>().is_err());
    }

    #[test]
    fn random_agent_is_seed_deterministic() {
        let run = |seed: u64| {
            let mut agent =
                RandomAgent::new(TaskId::Prlt, ChaCha8Rng::seed_from_u64(seed));
            (0..20).map(|_| agent.reply(&[]).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn wsls_follows_reward_signal() {
        let mut agent = WslsAgent::new(ChaCha8Rng::seed_from_u64(1));
        let first = agent.reply(&[ChatMessage::user("Choose an arm (left arm or right arm).")]).unwrap();
        // Win: stays.
        let second = agent
            .reply(&[ChatMessage::user("Reward: 1. Choose an arm (left arm or right arm).")])
            .unwrap();
        assert_eq!(first, second);
        // Loss: switches.
        let third = agent
            .reply(&[ChatMessage::user("Reward: 0. Choose an arm (left arm or right arm).")])
            .unwrap();
        assert_ne!(second, third);
    }

    #[test]
    fn wsls_rejects_non_bandit_tasks() {
        let config = TaskConfig::preset(TaskId::Wcst, Difficulty::Easy, 1);
        assert!(build_baseline(&BaselineKind::Wsls, &config, 1).is_err());
    }

    #[test]
    fn wpt_oracle_predicts_argmax() {
        let mut oracle = WptOracle { p: 0.9 };
        let ask = |oracle: &mut WptOracle, prompt: &str| {
            oracle.reply(&[ChatMessage::user(prompt)]).unwrap()
        };
        assert_eq!(ask(&mut oracle, "Today's weather: sunny. Sensor states: [1,0]."), "sunny");
        assert_eq!(ask(&mut oracle, "Today's weather: sunny. Sensor states: [0,1]."), "rainy");
        assert_eq!(ask(&mut oracle, "Today's weather: rainy. Sensor states: [1,0]."), "rainy");
        assert_eq!(ask(&mut oracle, "Today's weather: rainy. Sensor states: [0,1]."), "sunny");
    }

    #[test]
    fn wpt_oracle_reads_feedback_style_prompts() {
        let mut oracle = WptOracle { p: 0.9 };
        let prompt = "The actual weather is rainy. Today's weather: rainy. Sensor states: [1,0]. let's think step by step.";
        assert_eq!(oracle.reply(&[ChatMessage::user(prompt)]).unwrap(), "rainy");
    }

    #[test]
    fn dcigt_oracle_switches_only_on_loss() {
        let config = TaskConfig::preset(TaskId::Dcigt, Difficulty::Easy, 1);
        let mut oracle = build_baseline(&BaselineKind::Oracle, &config, 1).unwrap();
        assert_eq!(oracle.reply(&[ChatMessage::user("Trial 1: choose a deck (AAA, BBB, CCC, or DDD).")]).unwrap(), "DDD");
        assert_eq!(
            oracle
                .reply(&[ChatMessage::user(
                    "You gained $50 and lost $0. You may stick with DDD or switch. Make your final choice (AAA, BBB, CCC, or DDD)."
                )])
                .unwrap(),
            "DDD"
        );
        assert_eq!(
            oracle
                .reply(&[ChatMessage::user(
                    "You gained $50 and lost $200. You may stick with DDD or switch. Make your final choice (AAA, BBB, CCC, or DDD)."
                )])
                .unwrap(),
            "CCC"
        );
    }

    #[test]
    fn prlt_oracle_mirrors_environment_hidden_arm() {
        let config = TaskConfig::preset(TaskId::Prlt, Difficulty::Easy, 1);
        for seed in 0..10u64 {
            let env = crate::envs::bandit::PrltEnv::new(config.clone(), seed).unwrap();
            let mut oracle = build_baseline(&BaselineKind::Oracle, &config, seed).unwrap();
            let first = oracle.reply(&[]).unwrap();
            assert_eq!(first, env.core().initially_rich_arm().token());
        }
    }
}
