//! Two-armed bandit tasks.
//!
//! PRLT: complementary Bernoulli reward probabilities `p` and `1-p` that swap
//! exactly once at the midpoint. Scored against the moving-average choice
//! probability of the initially-rich arm.
//!
//! MBT: deterministic rewards, one rewarding arm per block, reversing every
//! `n` trials across 20 blocks. Quantified with an anticipation score: the
//! fraction of post-reversal first trials that still earned a reward.

use rand_chacha::ChaCha8Rng;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::parse_with_aliases;
use crate::config::{TaskConfig, TaskId};
use crate::error::ConfigError;
use crate::rng::Seeder;
use crate::session::{BehaviorProfile, TaskScore, TextEnvironment, UnknownAction};

pub const MBT_BLOCKS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Left,
    Right,
}

impl Arm {
    pub fn token(self) -> &'static str {
        match self {
            Arm::Left => "left arm",
            Arm::Right => "right arm",
        }
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::Left => Arm::Right,
            Arm::Right => Arm::Left,
        }
    }

    pub fn from_token(token: &str) -> Option<Arm> {
        match token {
            "left arm" => Some(Arm::Left),
            "right arm" => Some(Arm::Right),
            _ => None,
        }
    }
}

fn arm_aliases() -> [(&'static str, &'static str); 4] {
    [
        ("left arm", "left arm"),
        ("right arm", "right arm"),
        ("left", "left arm"),
        ("right", "right arm"),
    ]
}

// ---------------------------------------------------------------------------
// PRLT
// ---------------------------------------------------------------------------

/// Probabilistic reversal learning dynamics.
#[derive(Debug, Clone)]
pub struct PrltCore {
    p: f64,
    trials: usize,
    reversal_at: usize,
    rich: Arm,
    rng: ChaCha8Rng,
    pub history: Vec<(Arm, u8)>,
}

impl PrltCore {
    pub fn new(p: f64, trials: usize, mut rng: ChaCha8Rng) -> Self {
        let rich = if rng.random_bool(0.5) { Arm::Left } else { Arm::Right };
        PrltCore {
            p,
            trials,
            reversal_at: trials / 2,
            rich,
            rng,
            history: Vec::with_capacity(trials.min(4096)),
        }
    }

    /// The arm that is rich before the reversal. Hidden from prompts; exposed
    /// for oracle baselines and analysis.
    pub fn initially_rich_arm(&self) -> Arm {
        self.rich
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    pub fn reversal_at(&self) -> usize {
        self.reversal_at
    }

    /// Bernoulli reward for pulling `choice` on the current trial.
    pub fn step(&mut self, choice: Arm) -> u8 {
        let before_reversal = self.history.len() < self.reversal_at;
        let rich_now = if before_reversal { self.rich } else { self.rich.other() };
        let probability = if choice == rich_now { self.p } else { 1.0 - self.p };
        let reward = u8::from(self.rng.random_bool(probability));
        self.history.push((choice, reward));
        reward
    }
}

/// Trailing moving average of choices coded 1 for the initially-rich arm;
/// the window shrinks at the start (`min(window, t)`).
pub fn estimate_choice_probability(choices: &[f64], window: usize) -> Vec<f64> {
    (0..choices.len())
        .map(|t| {
            let start = (t + 1).saturating_sub(window);
            let slice = &choices[start..=t];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

/// `(1 - MAE / Max_MAE) * 100` against the true reward probability of the
/// initially-rich arm: `p` before the reversal, `1-p` after.
pub fn score_prlt(estimate: &[f64], p: f64, reversal_at: usize) -> f64 {
    let n = estimate.len();
    let mae: f64 = estimate
        .iter()
        .enumerate()
        .map(|(t, e)| {
            let truth = if t < reversal_at { p } else { 1.0 - p };
            (e - truth).abs()
        })
        .sum::<f64>()
        / n as f64;
    let max_mae = p.max(1.0 - p);
    ((1.0 - mae / max_mae) * 100.0).clamp(0.0, 100.0)
}

const PRLT_SYSTEM_PROMPT: &str = "You are playing a two-arm bandit game. Each time you need to choose between the right arm and the left arm. You will receive feedback (0 or 1) based on your choice. Your goal is to maximize the total reward. Keep performing the task until the end of the test.";

pub const CHOICE_WINDOW: usize = 5;

/// Text adapter for PRLT.
pub struct PrltEnv {
    core: PrltCore,
    config: TaskConfig,
    seed: u64,
    last_feedback: Option<String>,
}

impl PrltEnv {
    pub fn new(config: TaskConfig, seed: u64) -> Result<Self, ConfigError> {
        let p = config.require("p")?;
        let rng = Seeder::new(seed).stream(super::ENV_STREAM);
        Ok(PrltEnv { core: PrltCore::new(p, config.trials, rng), config, seed, last_feedback: None })
    }

    pub fn core(&self) -> &PrltCore {
        &self.core
    }

    fn choice_series(&self) -> Vec<f64> {
        let rich = self.core.initially_rich_arm();
        let coded: Vec<f64> = self
            .core
            .history
            .iter()
            .map(|(arm, _)| if *arm == rich { 1.0 } else { 0.0 })
            .collect();
        estimate_choice_probability(&coded, CHOICE_WINDOW)
    }
}

impl TextEnvironment for PrltEnv {
    fn task_id(&self) -> TaskId {
        TaskId::Prlt
    }

    fn config(&self) -> &TaskConfig {
        &self.config
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn system_prompt(&self) -> String {
        PRLT_SYSTEM_PROMPT.to_string()
    }

    fn total_turns(&self) -> usize {
        self.core.trials()
    }

    fn next_prompt(&mut self) -> String {
        let ask = "Choose an arm (left arm or right arm).";
        match self.last_feedback.take() {
            Some(feedback) => format!("{feedback}. {ask}"),
            None => ask.to_string(),
        }
    }

    fn options(&self) -> Vec<String> {
        vec!["left arm".to_string(), "right arm".to_string()]
    }

    fn parse_action(&self, raw: &str) -> Option<String> {
        parse_with_aliases(raw, &arm_aliases())
    }

    fn fallback_action(&self) -> String {
        match self.core.history.last() {
            Some((arm, _)) => arm.token().to_string(),
            None => Arm::Left.token().to_string(),
        }
    }

    fn step(&mut self, action: &str) -> Result<String, UnknownAction> {
        let arm = Arm::from_token(action).ok_or_else(|| UnknownAction(action.to_string()))?;
        let reward = self.core.step(arm);
        let feedback = format!("Reward: {reward}");
        self.last_feedback = Some(feedback.clone());
        Ok(feedback)
    }

    fn score(&self) -> Result<TaskScore, String> {
        let series = self.choice_series();
        let score = score_prlt(&series, self.core.p(), self.core.reversal_at());
        let rewards: u32 = self.core.history.iter().map(|(_, r)| u32::from(*r)).sum();
        Ok(TaskScore::new(TaskId::Prlt, score)
            .with("max_mae", self.core.p().max(1.0 - self.core.p()))
            .with("total_reward", f64::from(rewards)))
    }

    fn behavior(&self) -> BehaviorProfile {
        BehaviorProfile::Prlt { choice_series: self.choice_series() }
    }
}

// ---------------------------------------------------------------------------
// MBT
// ---------------------------------------------------------------------------

/// Meta-bandit dynamics: deterministic rewards, block-wise alternation.
#[derive(Debug, Clone)]
pub struct MbtCore {
    n: usize,
    initial: Arm,
    pub history: Vec<(Arm, u8)>,
}

impl MbtCore {
    pub fn new(n: usize, mut rng: ChaCha8Rng) -> Self {
        let initial = if rng.random_bool(0.5) { Arm::Left } else { Arm::Right };
        MbtCore { n, initial, history: Vec::with_capacity(MBT_BLOCKS * n) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn trials(&self) -> usize {
        MBT_BLOCKS * self.n
    }

    /// Rewarding arm of block 1. Hidden from prompts; exposed for oracles.
    pub fn initial_rewarding_arm(&self) -> Arm {
        self.initial
    }

    /// Rewarding arm at 0-based trial index.
    pub fn rewarding_arm_at(&self, trial: usize) -> Arm {
        if (trial / self.n) % 2 == 0 {
            self.initial
        } else {
            self.initial.other()
        }
    }

    pub fn step(&mut self, choice: Arm) -> u8 {
        let reward = u8::from(choice == self.rewarding_arm_at(self.history.len()));
        self.history.push((choice, reward));
        reward
    }
}

/// Anticipation score over the 19 reversal trials (first trial of blocks
/// 2..=20) plus the 20 x n reward grid.
pub fn score_mbt(rewards: &[u8], n: usize) -> (f64, Vec<Vec<u8>>) {
    let grid: Vec<Vec<u8>> = rewards.chunks(n).map(<[u8]>::to_vec).collect();
    let anticipated = (1..MBT_BLOCKS)
        .filter(|block| rewards.get(block * n).copied() == Some(1))
        .count();
    let score = 100.0 * anticipated as f64 / (MBT_BLOCKS - 1) as f64;
    (score, grid)
}

const MBT_SYSTEM_PROMPT: &str = "You are playing a two-arm bandit game. Each time, there is one rewarding arm, and you need to choose between the right arm and the left arm. You will receive feedback (0 or 1) based on your choice. Your goal is to maximize the total reward. Respond with your choice (right arm or left arm). Keep performing the task until the end of the test.";

/// Text adapter for MBT.
pub struct MbtEnv {
    core: MbtCore,
    config: TaskConfig,
    seed: u64,
    last_feedback: Option<String>,
}

impl MbtEnv {
    pub fn new(config: TaskConfig, seed: u64) -> Result<Self, ConfigError> {
        let n = config.require("n")? as usize;
        let rng = Seeder::new(seed).stream(super::ENV_STREAM);
        Ok(MbtEnv { core: MbtCore::new(n, rng), config, seed, last_feedback: None })
    }

    pub fn core(&self) -> &MbtCore {
        &self.core
    }
}

impl TextEnvironment for MbtEnv {
    fn task_id(&self) -> TaskId {
        TaskId::Mbt
    }

    fn config(&self) -> &TaskConfig {
        &self.config
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn system_prompt(&self) -> String {
        MBT_SYSTEM_PROMPT.to_string()
    }

    fn total_turns(&self) -> usize {
        self.core.trials()
    }

    fn next_prompt(&mut self) -> String {
        let ask = "Choose an arm (left arm or right arm).";
        match self.last_feedback.take() {
            Some(feedback) => format!("{feedback}. {ask}"),
            None => ask.to_string(),
        }
    }

    fn options(&self) -> Vec<String> {
        vec!["left arm".to_string(), "right arm".to_string()]
    }

    fn parse_action(&self, raw: &str) -> Option<String> {
        parse_with_aliases(raw, &arm_aliases())
    }

    fn fallback_action(&self) -> String {
        match self.core.history.last() {
            Some((arm, _)) => arm.token().to_string(),
            None => Arm::Left.token().to_string(),
        }
    }

    fn step(&mut self, action: &str) -> Result<String, UnknownAction> {
        let arm = Arm::from_token(action).ok_or_else(|| UnknownAction(action.to_string()))?;
        let reward = self.core.step(arm);
        let feedback = format!("Reward: {reward}");
        self.last_feedback = Some(feedback.clone());
        Ok(feedback)
    }

    fn score(&self) -> Result<TaskScore, String> {
        let rewards: Vec<u8> = self.core.history.iter().map(|(_, r)| *r).collect();
        let (score, _) = score_mbt(&rewards, self.core.n());
        let total: u32 = rewards.iter().map(|&r| u32::from(r)).sum();
        Ok(TaskScore::new(TaskId::Mbt, score).with("total_reward", f64::from(total)))
    }

    fn behavior(&self) -> BehaviorProfile {
        let rewards: Vec<u8> = self.core.history.iter().map(|(_, r)| *r).collect();
        let (anticipation, grid) = score_mbt(&rewards, self.core.n());
        BehaviorProfile::Mbt { anticipation, grid }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn degenerate_probability_rewards_rich_arm() {
        let mut core = PrltCore::new(1.0, 40, rng(1));
        let rich = core.initially_rich_arm();
        assert_eq!(core.step(rich), 1);
    }

    #[test]
    fn reversal_flips_the_rich_arm() {
        let mut core = PrltCore::new(1.0, 40, rng(2));
        let rich = core.initially_rich_arm();
        for _ in 0..20 {
            assert_eq!(core.step(rich), 1);
        }
        // Trial 21 of 40: probabilities have swapped.
        assert_eq!(core.step(rich), 0);
        assert_eq!(core.step(rich.other()), 1);
    }

    #[test]
    fn rich_arm_reward_rate_matches_bernoulli_oracle() {
        let mut core = PrltCore::new(0.8, usize::MAX, rng(3));
        core.reversal_at = usize::MAX;
        let rich = core.initially_rich_arm();
        let n = 1_000_000u32;
        let mut hits = 0u32;
        for _ in 0..n {
            hits += u32::from(core.step(rich));
            core.history.clear();
        }
        let rate = f64::from(hits) / f64::from(n);
        assert!((rate - 0.8).abs() < 0.002, "rate {rate}");
    }

    #[test]
    fn moving_average_handles_shrinking_window() {
        let all_rich = vec![1.0; 10];
        assert!(estimate_choice_probability(&all_rich, 5).iter().all(|&v| v == 1.0));

        let choices = [1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let series = estimate_choice_probability(&choices, 5);
        assert_eq!(series, vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.8, 0.6, 0.4, 0.2, 0.0]);
    }

    #[test]
    fn perfect_estimate_scores_100() {
        let mut series = vec![0.8; 20];
        series.extend(vec![0.2; 20]);
        assert_eq!(score_prlt(&series, 0.8, 20), 100.0);
    }

    #[test]
    fn constant_rich_arm_scores_closed_form() {
        // MAE = (0.2 + 0.8) / 2 = 0.5, Max_MAE = 0.8.
        let series = vec![1.0; 40];
        let score = score_prlt(&series, 0.8, 20);
        assert!((score - 37.5).abs() < 1e-9, "score {score}");
    }

    #[test]
    fn perfect_switcher_scores_closed_form_with_transient() {
        // Rich arm for trials 1..=20, other arm after. The 5-wide moving
        // average takes 4 trials to decay: errors 0.6, 0.4, 0.2 at trials
        // 21-23, zero afterwards. MAE = (20*0.2 + 0.6+0.4+0.2 + 16*0.2)/40.
        let choices: Vec<f64> = (0..40).map(|t| if t < 20 { 1.0 } else { 0.0 }).collect();
        let series = estimate_choice_probability(&choices, 5);
        let score = score_prlt(&series, 0.8, 20);
        let expected_mae = (20.0 * 0.2 + 0.6 + 0.4 + 0.2 + 16.0 * 0.2) / 40.0;
        let expected = (1.0 - expected_mae / 0.8) * 100.0;
        assert!((score - expected).abs() < 1e-9);
        assert!((score - 73.75).abs() < 1e-9, "score {score}");
    }

    #[test]
    fn prlt_score_is_arm_relabel_invariant() {
        // Relabel both the choices and the rich arm: the coded series, and
        // therefore the score, must not change.
        let mut a = PrltCore::new(0.8, 40, rng(4));
        let mut b = a.clone();
        b.rich = a.rich.other();
        let code = |core: &PrltCore| -> Vec<f64> {
            core.history
                .iter()
                .map(|(arm, _)| if *arm == core.rich { 1.0 } else { 0.0 })
                .collect()
        };
        for t in 0..40 {
            let choice = if t % 3 == 0 { Arm::Left } else { Arm::Right };
            a.step(choice);
            b.step(choice.other());
        }
        let series_a = estimate_choice_probability(&code(&a), 5);
        let series_b = estimate_choice_probability(&code(&b), 5);
        assert_eq!(series_a, series_b);
        assert_eq!(score_prlt(&series_a, 0.8, 20), score_prlt(&series_b, 0.8, 20));
    }

    #[test]
    fn mbt_block_one_rewards_initial_arm() {
        let mut core = MbtCore::new(2, rng(5));
        let arm = core.initial_rewarding_arm();
        assert_eq!(core.step(arm), 1);
        assert_eq!(core.step(arm), 1);
        // First trial of block 2 flips.
        assert_eq!(core.step(arm), 0);
    }

    #[test]
    fn mbt_oracle_earns_every_reward() {
        let mut core = MbtCore::new(2, rng(6));
        for trial in 0..core.trials() {
            let arm = core.rewarding_arm_at(trial);
            assert_eq!(core.step(arm), 1);
        }
        let rewards: Vec<u8> = core.history.iter().map(|(_, r)| *r).collect();
        let (score, grid) = score_mbt(&rewards, 2);
        assert_eq!(score, 100.0);
        assert_eq!(grid.len(), 20);
        assert!(grid.iter().all(|row| row.len() == 2));
    }

    #[test]
    fn wsls_never_anticipates_reversals() {
        // Win-stay-lose-switch walks into every reversal: the last trial of a
        // block is rewarded, so it repeats that arm into the flipped block.
        for n in [2usize, 4] {
            for seed in 0..10u64 {
                let mut core = MbtCore::new(n, rng(seed));
                let mut choice = if seed % 2 == 0 { Arm::Left } else { Arm::Right };
                let mut last_reward = None;
                for _ in 0..core.trials() {
                    if let Some(reward) = last_reward {
                        if reward == 0 {
                            choice = choice.other();
                        }
                    }
                    last_reward = Some(core.step(choice));
                }
                let rewards: Vec<u8> = core.history.iter().map(|(_, r)| *r).collect();
                let (score, _) = score_mbt(&rewards, n);
                assert_eq!(score, 0.0, "n = {n}, seed = {seed}");
            }
        }
    }

    #[test]
    fn uniform_random_anticipation_is_binomial() {
        let sims = 10_000u64;
        let mut total = 0.0;
        let mut r = rng(7);
        for seed in 0..sims {
            let mut core = MbtCore::new(2, rng(100 + seed));
            for _ in 0..core.trials() {
                let choice = if r.random_bool(0.5) { Arm::Left } else { Arm::Right };
                core.step(choice);
            }
            let rewards: Vec<u8> = core.history.iter().map(|(_, reward)| *reward).collect();
            total += score_mbt(&rewards, 2).0;
        }
        let mean = total / sims as f64;
        assert!((mean - 50.0).abs() < 0.7, "mean {mean}");
    }

    #[test]
    fn mbt_grid_is_reproducible() {
        let run = |seed: u64| {
            let mut core = MbtCore::new(2, rng(seed));
            let mut r = rng(seed + 1000);
            for _ in 0..core.trials() {
                core.step(if r.random_bool(0.5) { Arm::Left } else { Arm::Right });
            }
            let rewards: Vec<u8> = core.history.iter().map(|(_, reward)| *reward).collect();
            score_mbt(&rewards, 2).1
        };
        assert_eq!(run(42), run(42));
    }
}
