//! Chance-level estimation.
//!
//! Simulates full sessions of an explicit random policy through the real
//! environment cores and scorers — no prompt rendering — and reports the mean
//! and empirical 95th percentile of the score distribution. Simulations are
//! independently seeded by index, so parallel execution and worker count
//! never change the estimate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{TaskConfig, TaskId};
use crate::envs::bandit::{estimate_choice_probability, score_prlt, Arm, PrltCore, CHOICE_WINDOW};
use crate::envs::dcigt::{expected_value, score_dcigt, Deck, DcigtCore};
use crate::envs::nback::{canonical_sequence, generate_sequence, score_nback, NbackAnswer};
use crate::envs::wcst::{default_desk, legacy_desk, score_wcst, Dimension, WcstCore};
use crate::envs::wpt::{estimate_internal_matrices, score_wpt, true_matrices, Weather, WptCore};
use crate::error::AnalysisError;
use crate::rng::Seeder;

/// Explicit random policies. The published thresholds came from unspecified
/// policies, so every estimate carries its policy label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChancePolicy {
    /// Uniform over the task's canonical actions, every turn.
    Uniform,
    /// WCST only: pick a dimension uniformly, then the card matching it.
    RandomDimension,
    /// PRLT only: win-stay-lose-switch.
    Wsls,
    /// The task's optimal scripted policy (upper reference).
    Oracle,
}

impl ChancePolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            ChancePolicy::Uniform => "uniform",
            ChancePolicy::RandomDimension => "random-dimension",
            ChancePolicy::Wsls => "wsls",
            ChancePolicy::Oracle => "oracle",
        }
    }
}

impl std::fmt::Display for ChancePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ChancePolicy {
    type Err = crate::error::ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(ChancePolicy::Uniform),
            "random-dimension" | "random_dimension" => Ok(ChancePolicy::RandomDimension),
            "wsls" => Ok(ChancePolicy::Wsls),
            "oracle" => Ok(ChancePolicy::Oracle),
            other => Err(crate::error::ConfigError::UnknownStrategy(format!("policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChanceEstimate {
    pub task_id: TaskId,
    pub policy: String,
    pub difficulty: crate::config::Difficulty,
    pub n_sims: usize,
    pub mean: f64,
    pub p95: f64,
    pub seed: u64,
}

/// Empirical quantile: smallest value with at least `q` of the mass at or
/// below it. `sorted` must be ascending and non-empty.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

fn supported(task: TaskId) -> bool {
    matches!(task, TaskId::Wpt | TaskId::Wcst | TaskId::Nback | TaskId::Dcigt | TaskId::Prlt)
}

fn policy_supported(task: TaskId, policy: ChancePolicy) -> bool {
    match policy {
        ChancePolicy::Uniform | ChancePolicy::Oracle => true,
        ChancePolicy::RandomDimension => task == TaskId::Wcst,
        ChancePolicy::Wsls => task == TaskId::Prlt,
    }
}

/// Simulate `n_sims` sessions of `policy` through the real environment and
/// scorer for the configured task.
pub fn estimate_chance(
    config: &TaskConfig,
    policy: ChancePolicy,
    n_sims: usize,
    seed: u64,
) -> Result<ChanceEstimate, AnalysisError> {
    let task = config.task_id;
    if !supported(task) {
        return Err(AnalysisError::UnsupportedTask(task));
    }
    if !policy_supported(task, policy) {
        return Err(AnalysisError::UnsupportedPolicy { task, policy: policy.to_string() });
    }
    config.validate()?;
    let scores = simulate_scores(config, policy, n_sims, seed)?;

    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let mut sorted = scores;
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    Ok(ChanceEstimate {
        task_id: task,
        policy: policy.to_string(),
        difficulty: config.difficulty,
        n_sims,
        mean,
        p95: percentile(&sorted, 0.95),
        seed,
    })
}

/// Raw per-simulation scores in simulation-index order.
pub fn simulate_scores(
    config: &TaskConfig,
    policy: ChancePolicy,
    n_sims: usize,
    seed: u64,
) -> Result<Vec<f64>, AnalysisError> {
    if n_sims == 0 {
        return Err(AnalysisError::TooFewPoints { needed: 1, got: 0 });
    }
    let seeder = Seeder::new(seed);
    let scores: Vec<f64> = (0..n_sims)
        .into_par_iter()
        .map(|i| {
            let sim_seed = seeder.derive_nth("sim", i as u64);
            simulate_one(config, policy, sim_seed)
        })
        .collect();
    Ok(scores)
}

fn simulate_one(config: &TaskConfig, policy: ChancePolicy, sim_seed: u64) -> f64 {
    let seeder = Seeder::new(sim_seed);
    let env_rng = seeder.stream(crate::envs::ENV_STREAM);
    let mut policy_rng = seeder.stream("policy");
    use rand::Rng;

    match config.task_id {
        TaskId::Wpt => {
            let p = config.param("p").unwrap_or(0.9);
            let mut core = WptCore::new(p, config.trials, env_rng);
            for _ in 0..config.trials {
                let prediction = match policy {
                    ChancePolicy::Oracle => {
                        let stay = (core.sensor() == crate::envs::wpt::Sensor::OneZero) == (p >= 0.5);
                        if stay { core.today() } else { core.today().flip() }
                    }
                    _ => {
                        if policy_rng.random_bool(0.5) {
                            Weather::Sunny
                        } else {
                            Weather::Rainy
                        }
                    }
                };
                core.step(prediction);
            }
            let estimate = estimate_internal_matrices(&core.history);
            score_wpt(&estimate.matrices, &true_matrices(p)).expect("valid probabilities")
        }
        TaskId::Wcst => {
            let trials = config.trials;
            let desk = if config.flag("legacy_desk") { legacy_desk() } else { default_desk() };
            let mut core = WcstCore::new(trials, desk, env_rng);
            for trial in 1..=trials {
                let target = core.generate_target();
                let choice = match policy {
                    ChancePolicy::Uniform => desk[policy_rng.random_range(0..4)],
                    ChancePolicy::RandomDimension => {
                        let dim = [Dimension::Shape, Dimension::Color, Dimension::Number]
                            [policy_rng.random_range(0..3)];
                        core.matching_card(&target, dim).expect("unique match per dimension")
                    }
                    ChancePolicy::Oracle => {
                        let rule = core.rule_for(trial);
                        core.matching_card(&target, rule).expect("unique match per dimension")
                    }
                    ChancePolicy::Wsls => unreachable!("rejected by policy_supported"),
                };
                core.apply(choice);
            }
            score_wcst(&core.history, trials)
        }
        TaskId::Nback => {
            let n = config.param("n").unwrap_or(2.0) as usize;
            let match_count = config.param("match_count").unwrap_or(10.0) as usize;
            let sequence = if config.flag("fresh_sequence") {
                let mut rng = env_rng;
                generate_sequence(n, config.trials, match_count, &mut rng)
                    .expect("validated config")
            } else {
                canonical_sequence(n, config.trials, match_count).expect("validated config")
            };
            let answers: Vec<NbackAnswer> = (0..sequence.len())
                .map(|i| match policy {
                    ChancePolicy::Oracle => sequence.expected(i),
                    _ => {
                        if policy_rng.random_bool(0.5) {
                            NbackAnswer::Yes
                        } else {
                            NbackAnswer::No
                        }
                    }
                })
                .collect();
            score_nback(&answers, &sequence, config.flag("score_na_trials")).0
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
            let mut core = DcigtCore::new(p_loss, config.trials, env_rng);
            for _ in 0..config.trials {
                match policy {
                    ChancePolicy::Oracle => {
                        let revealed = core.first_choice(ranked[0]);
                        let final_deck = if revealed.loss > 0 { ranked[1] } else { ranked[0] };
                        core.final_choice(final_deck);
                    }
                    _ => {
                        core.first_choice(Deck::ALL[policy_rng.random_range(0..4)]);
                        core.final_choice(Deck::ALL[policy_rng.random_range(0..4)]);
                    }
                }
            }
            let short_weight = config.param("short_weight").unwrap_or(0.5);
            score_dcigt(&core.history, &p_loss, config.trials, core.balance(), short_weight).score
        }
        TaskId::Prlt => {
            let p = config.param("p").unwrap_or(0.8);
            let mut core = PrltCore::new(p, config.trials, env_rng);
            let rich = core.initially_rich_arm();
            let mut coded = Vec::with_capacity(config.trials);
            let mut previous: Option<(Arm, u8)> = None;
            for trial in 0..config.trials {
                let choice = match policy {
                    ChancePolicy::Uniform => {
                        if policy_rng.random_bool(0.5) {
                            Arm::Left
                        } else {
                            Arm::Right
                        }
                    }
                    ChancePolicy::Wsls => match previous {
                        Some((arm, 1)) => arm,
                        Some((arm, _)) => arm.other(),
                        None => {
                            if policy_rng.random_bool(0.5) {
                                Arm::Left
                            } else {
                                Arm::Right
                            }
                        }
                    },
                    ChancePolicy::Oracle => {
                        if trial < core.reversal_at() {
                            rich
                        } else {
                            rich.other()
                        }
                    }
                    ChancePolicy::RandomDimension => unreachable!("rejected by policy_supported"),
                };
                let reward = core.step(choice);
                previous = Some((choice, reward));
                coded.push(if choice == rich { 1.0 } else { 0.0 });
            }
            let series = estimate_choice_probability(&coded, CHOICE_WINDOW);
            score_prlt(&series, p, core.reversal_at())
        }
        TaskId::Oddball | TaskId::Mbt => unreachable!("rejected by supported()"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Difficulty;

    fn cfg(task: TaskId) -> TaskConfig {
        TaskConfig::preset(task, Difficulty::Easy, 1)
    }

    #[test]
    fn oddball_and_mbt_are_unsupported() {
        for task in [TaskId::Oddball, TaskId::Mbt] {
            let err = estimate_chance(&cfg(task), ChancePolicy::Uniform, 10, 1).unwrap_err();
            assert!(matches!(err, AnalysisError::UnsupportedTask(_)));
        }
    }

    #[test]
    fn mismatched_policies_are_rejected() {
        assert!(matches!(
            estimate_chance(&cfg(TaskId::Wpt), ChancePolicy::RandomDimension, 10, 1),
            Err(AnalysisError::UnsupportedPolicy { .. })
        ));
        assert!(matches!(
            estimate_chance(&cfg(TaskId::Wcst), ChancePolicy::Wsls, 10, 1),
            Err(AnalysisError::UnsupportedPolicy { .. })
        ));
    }

    #[test]
    fn estimates_are_seed_deterministic() {
        let a = estimate_chance(&cfg(TaskId::Prlt), ChancePolicy::Uniform, 1000, 1).unwrap();
        let b = estimate_chance(&cfg(TaskId::Prlt), ChancePolicy::Uniform, 1000, 1).unwrap();
        assert_eq!(a, b);
        let c = estimate_chance(&cfg(TaskId::Prlt), ChancePolicy::Uniform, 1000, 2).unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn nback_uniform_mean_matches_binomial() {
        // Uniform Yes/No is correct with probability 1/2 on every scoreable
        // position regardless of the sequence.
        let est = estimate_chance(&cfg(TaskId::Nback), ChancePolicy::Uniform, 20_000, 3).unwrap();
        assert!((est.mean - 50.0).abs() < 1.0, "mean {}", est.mean);
    }

    #[test]
    fn wcst_random_dimension_mean_is_one_third() {
        let est =
            estimate_chance(&cfg(TaskId::Wcst), ChancePolicy::RandomDimension, 10_000, 4).unwrap();
        assert!((est.mean - 100.0 / 3.0).abs() < 1.0, "mean {}", est.mean);
    }

    #[test]
    fn wcst_uniform_mean_is_one_quarter() {
        let est = estimate_chance(&cfg(TaskId::Wcst), ChancePolicy::Uniform, 10_000, 5).unwrap();
        assert!((est.mean - 25.0).abs() < 1.0, "mean {}", est.mean);
    }

    #[test]
    fn oracle_dominates_uniform_on_every_supported_task() {
        for task in [TaskId::Wpt, TaskId::Wcst, TaskId::Nback, TaskId::Dcigt, TaskId::Prlt] {
            let config = cfg(task);
            let oracle = estimate_chance(&config, ChancePolicy::Oracle, 10_000, 6).unwrap();
            let uniform = estimate_chance(&config, ChancePolicy::Uniform, 10_000, 6).unwrap();
            assert!(
                oracle.mean >= uniform.mean,
                "{task}: oracle {} < uniform {}",
                oracle.mean,
                uniform.mean
            );
        }
    }

    #[test]
    fn doubling_sims_moves_mean_less_than_three_standard_errors() {
        let config = cfg(TaskId::Prlt);
        let scores = simulate_scores(&config, ChancePolicy::Uniform, 10_000, 7).unwrap();
        let mean1 = scores.iter().sum::<f64>() / scores.len() as f64;
        let var = scores.iter().map(|s| (s - mean1) * (s - mean1)).sum::<f64>()
            / (scores.len() - 1) as f64;
        let se = (var / scores.len() as f64).sqrt();
        let doubled = simulate_scores(&config, ChancePolicy::Uniform, 20_000, 7).unwrap();
        let mean2 = doubled.iter().sum::<f64>() / doubled.len() as f64;
        assert!((mean2 - mean1).abs() < 3.0 * se, "drift {} vs se {se}", (mean2 - mean1).abs());
    }

    #[test]
    fn percentile_picks_ceiling_rank() {
        let sorted = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(percentile(&sorted, 0.95), 10.0);
        assert_eq!(percentile(&sorted, 0.5), 5.0);
        assert_eq!(percentile(&sorted, 1.0), 10.0);
    }
}
