//! Double-choice Iowa gambling task.
//!
//! Four decks with fixed gains and probabilistic losses. Each trial is two
//! consecutive choices: the first outcome is revealed, then the agent may
//! stick (keeping the revealed outcome) or switch (drawing a fresh outcome
//! from the new deck). Only the final choice's outcome settles into the
//! balance. Short-term scoring classifies per-trial switching behavior;
//! long-term scoring normalizes final balance between the worst and best
//! constant-deck stay policies.

use rand_chacha::ChaCha8Rng;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::parse_with_tokens;
use crate::config::{TaskConfig, TaskId};
use crate::error::ConfigError;
use crate::rng::Seeder;
use crate::session::{BehaviorProfile, TaskScore, TextEnvironment, UnknownAction};

pub const STARTING_BALANCE: i64 = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Deck {
    A,
    B,
    C,
    D,
}

impl Deck {
    pub const ALL: [Deck; 4] = [Deck::A, Deck::B, Deck::C, Deck::D];

    pub fn token(self) -> &'static str {
        match self {
            Deck::A => "AAA",
            Deck::B => "BBB",
            Deck::C => "CCC",
            Deck::D => "DDD",
        }
    }

    pub fn from_token(token: &str) -> Option<Deck> {
        match token {
            "AAA" => Some(Deck::A),
            "BBB" => Some(Deck::B),
            "CCC" => Some(Deck::C),
            "DDD" => Some(Deck::D),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Deck::A => 0,
            Deck::B => 1,
            Deck::C => 2,
            Deck::D => 3,
        }
    }

    /// Fixed gain dealt on every draw.
    pub fn gain(self) -> i64 {
        match self {
            Deck::A | Deck::B => 100,
            Deck::C | Deck::D => 50,
        }
    }

    /// Loss amount dealt when a loss occurs.
    pub fn loss_amount(self) -> i64 {
        match self {
            Deck::A => 260,
            Deck::B => 1250,
            Deck::C => 50,
            Deck::D => 200,
        }
    }
}

/// Expected per-trial value of drawing from `deck` under loss probabilities
/// `p_loss` (indexed A..D).
pub fn expected_value(deck: Deck, p_loss: &[f64; 4]) -> f64 {
    deck.gain() as f64 - deck.loss_amount() as f64 * p_loss[deck.index()]
}

/// Expected final balances of the worst and best constant-deck stay policies.
pub fn policy_anchors(p_loss: &[f64; 4], trials: usize) -> (f64, f64) {
    let evs: Vec<f64> = Deck::ALL.iter().map(|&d| expected_value(d, p_loss)).collect();
    let best = evs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let worst = evs.iter().cloned().fold(f64::INFINITY, f64::min);
    (
        STARTING_BALANCE as f64 + trials as f64 * worst,
        STARTING_BALANCE as f64 + trials as f64 * best,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub gain: i64,
    pub loss: i64,
}

impl Outcome {
    pub fn net(self) -> i64 {
        self.gain - self.loss
    }
}

/// Per-trial switching behavior, a partition over (revealed loss, stayed).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchKind {
    InsistGain,
    InsistRisk,
    UnnecessarySwitch,
    LossAvoidingSwitch,
}

pub fn classify_switch(revealed_loss: bool, stayed: bool) -> SwitchKind {
    match (revealed_loss, stayed) {
        (false, true) => SwitchKind::InsistGain,
        (true, true) => SwitchKind::InsistRisk,
        (false, false) => SwitchKind::UnnecessarySwitch,
        (true, false) => SwitchKind::LossAvoidingSwitch,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcigtTrial {
    pub first: Deck,
    pub revealed: Outcome,
    pub final_choice: Deck,
    pub realized: Outcome,
}

impl DcigtTrial {
    pub fn stayed(&self) -> bool {
        self.first == self.final_choice
    }

    pub fn kind(&self) -> SwitchKind {
        classify_switch(self.revealed.loss > 0, self.stayed())
    }
}

/// Hidden deck dynamics and the two-phase trial state machine.
#[derive(Debug, Clone)]
pub struct DcigtCore {
    p_loss: [f64; 4],
    trials: usize,
    balance: i64,
    rng: ChaCha8Rng,
    pending: Option<(Deck, Outcome)>,
    pub history: Vec<DcigtTrial>,
}

impl DcigtCore {
    pub fn new(p_loss: [f64; 4], trials: usize, rng: ChaCha8Rng) -> Self {
        DcigtCore {
            p_loss,
            trials,
            balance: STARTING_BALANCE,
            rng,
            pending: None,
            history: Vec::with_capacity(trials),
        }
    }

    pub fn balance(&self) -> i64 {
        self.balance
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    pub fn p_loss(&self) -> &[f64; 4] {
        &self.p_loss
    }

    pub fn awaiting_revision(&self) -> bool {
        self.pending.is_some()
    }

    fn draw(&mut self, deck: Deck) -> Outcome {
        let loss = if self.rng.random_bool(self.p_loss[deck.index()]) {
            deck.loss_amount()
        } else {
            0
        };
        Outcome { gain: deck.gain(), loss }
    }

    /// First choice of a trial: sample and reveal an outcome.
    pub fn first_choice(&mut self, deck: Deck) -> Outcome {
        assert!(self.pending.is_none(), "trial already has a revealed outcome");
        let outcome = self.draw(deck);
        self.pending = Some((deck, outcome));
        outcome
    }

    /// Final choice: staying keeps the revealed outcome, switching draws a
    /// fresh one from the new deck. The realized outcome settles the balance.
    pub fn final_choice(&mut self, deck: Deck) -> Outcome {
        let (first, revealed) = self.pending.take().expect("first_choice before final_choice");
        let realized = if deck == first { revealed } else { self.draw(deck) };
        self.balance += realized.net();
        self.history.push(DcigtTrial { first, revealed, final_choice: deck, realized });
        realized
    }
}

/// Composite session score: `short_weight` x switching score plus the
/// balance score normalized between the constant-policy anchors.
pub fn score_dcigt(
    history: &[DcigtTrial],
    p_loss: &[f64; 4],
    trials: usize,
    final_balance: i64,
    short_weight: f64,
) -> TaskScore {
    let favorable = history
        .iter()
        .filter(|t| matches!(t.kind(), SwitchKind::InsistGain | SwitchKind::LossAvoidingSwitch))
        .count();
    let short_term = 100.0 * favorable as f64 / trials as f64;

    let (worst, best) = policy_anchors(p_loss, trials);
    let long_term = if (best - worst).abs() < f64::EPSILON {
        50.0
    } else {
        100.0 * ((final_balance as f64 - worst) / (best - worst)).clamp(0.0, 1.0)
    };

    let score = short_weight * short_term + (1.0 - short_weight) * long_term;
    TaskScore::new(TaskId::Dcigt, score)
        .with("short_term", short_term)
        .with("long_term", long_term)
        .with("final_balance", final_balance as f64)
}

/// Sliding-window deck proportions over final choices. Windows are trailing
/// and full-sized; each row sums to 1.
pub fn deck_trajectory(finals: &[Deck], window: usize) -> Vec<[f64; 4]> {
    if finals.len() < window || window == 0 {
        return Vec::new();
    }
    (window..=finals.len())
        .map(|end| {
            let mut row = [0.0f64; 4];
            for deck in &finals[end - window..end] {
                row[deck.index()] += 1.0;
            }
            for v in &mut row {
                *v /= window as f64;
            }
            row
        })
        .collect()
}

const SYSTEM_PROMPT: &str = "You are participating in an interesting game. There are four decks of cards in front of you, labeled 'AAA', 'BBB', 'CCC', and 'DDD'. You start with $2000 in your account. Your goal is to maximize your account assets by making a series of choices from these decks. For each trial: 1. Choose one deck ('AAA', 'BBB', 'CCC', or 'DDD'). 2. You will receive feedback on the outcome of your choice, including any gains and losses. 3. After receiving the feedback, you have one opportunity to reconsider your initial decision; you can either stick with your original choice or make a new choice. 4. Your final choice would determine your actual gain or loss for the trial. Respond with your deck choice (AAA, BBB, CCC, or DDD) for each choice. keep making choices until instructed to stop.";

/// Text adapter. One trial spans two records: the first-choice turn and the
/// revision turn.
pub struct DcigtEnv {
    core: DcigtCore,
    config: TaskConfig,
    seed: u64,
    pending_prompt: Option<String>,
    last_realized: Option<String>,
}

impl DcigtEnv {
    pub fn new(config: TaskConfig, seed: u64) -> Result<Self, ConfigError> {
        let p_loss = [
            config.require("p_a")?,
            config.require("p_b")?,
            config.require("p_c")?,
            config.require("p_d")?,
        ];
        let rng = Seeder::new(seed).stream(super::ENV_STREAM);
        Ok(DcigtEnv {
            core: DcigtCore::new(p_loss, config.trials, rng),
            config,
            seed,
            pending_prompt: None,
            last_realized: None,
        })
    }

    pub fn core(&self) -> &DcigtCore {
        &self.core
    }

    fn short_weight(&self) -> f64 {
        self.config.param("short_weight").unwrap_or(0.5)
    }
}

impl TextEnvironment for DcigtEnv {
    fn task_id(&self) -> TaskId {
        TaskId::Dcigt
    }

    fn config(&self) -> &TaskConfig {
        &self.config
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn system_prompt(&self) -> String {
        SYSTEM_PROMPT.to_string()
    }

    fn total_turns(&self) -> usize {
        2 * self.core.trials()
    }

    fn next_prompt(&mut self) -> String {
        if let Some(prompt) = self.pending_prompt.take() {
            return prompt;
        }
        let trial = self.core.history.len() + 1;
        let lead = format!("Trial {trial}: choose a deck (AAA, BBB, CCC, or DDD).");
        match self.last_realized.take() {
            Some(realized) => format!("{realized} {lead}"),
            None => lead,
        }
    }

    fn options(&self) -> Vec<String> {
        Deck::ALL.iter().map(|d| d.token().to_string()).collect()
    }

    fn parse_action(&self, raw: &str) -> Option<String> {
        parse_with_tokens(raw, &self.options())
    }

    fn fallback_action(&self) -> String {
        // Repeat the most recent applied choice; first canonical option when
        // nothing has been chosen yet.
        if let Some((first, _)) = self.core.pending {
            return first.token().to_string();
        }
        match self.core.history.last() {
            Some(trial) => trial.final_choice.token().to_string(),
            None => Deck::A.token().to_string(),
        }
    }

    fn step(&mut self, action: &str) -> Result<String, UnknownAction> {
        let deck = Deck::from_token(action).ok_or_else(|| UnknownAction(action.to_string()))?;
        if !self.core.awaiting_revision() {
            let revealed = self.core.first_choice(deck);
            let feedback = format!(
                "You gained ${} and lost ${}.",
                revealed.gain, revealed.loss
            );
            self.pending_prompt = Some(format!(
                "{feedback} You may stick with {} or switch. Make your final choice (AAA, BBB, CCC, or DDD).",
                deck.token()
            ));
            Ok(feedback)
        } else {
            let realized = self.core.final_choice(deck);
            let feedback = format!(
                "Final outcome: gained ${}, lost ${}. Your balance is ${}.",
                realized.gain,
                realized.loss,
                self.core.balance()
            );
            self.last_realized = Some(feedback.clone());
            Ok(feedback)
        }
    }

    fn score(&self) -> Result<TaskScore, String> {
        Ok(score_dcigt(
            &self.core.history,
            self.core.p_loss(),
            self.core.trials(),
            self.core.balance(),
            self.short_weight(),
        ))
    }

    fn behavior(&self) -> BehaviorProfile {
        let mut counts = [0usize; 4];
        for trial in &self.core.history {
            let slot = match trial.kind() {
                SwitchKind::InsistGain => 0,
                SwitchKind::InsistRisk => 1,
                SwitchKind::UnnecessarySwitch => 2,
                SwitchKind::LossAvoidingSwitch => 3,
            };
            counts[slot] += 1;
        }
        let finals: Vec<Deck> = self.core.history.iter().map(|t| t.final_choice).collect();
        BehaviorProfile::Dcigt {
            insist_gain: counts[0],
            insist_risk: counts[1],
            unnecessary_switch: counts[2],
            loss_avoiding_switch: counts[3],
            final_balance: self.core.balance(),
            trajectory: deck_trajectory(&finals, 10),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    const EASY: [f64; 4] = [0.5, 0.1, 0.5, 0.1];

    fn core(seed: u64) -> DcigtCore {
        DcigtCore::new(EASY, 40, ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn expected_values_match_arithmetic() {
        assert_eq!(expected_value(Deck::A, &EASY), -30.0);
        assert_eq!(expected_value(Deck::B, &EASY), -25.0);
        assert_eq!(expected_value(Deck::C, &EASY), 25.0);
        assert_eq!(expected_value(Deck::D, &EASY), 30.0);
    }

    #[test]
    fn hard_preset_ev_ordering_is_computed() {
        let hard = [0.5, 0.2, 0.5, 0.2];
        let mut ranked: Vec<(Deck, f64)> =
            Deck::ALL.iter().map(|&d| (d, expected_value(d, &hard))).collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let order: Vec<Deck> = ranked.iter().map(|(d, _)| *d).collect();
        assert_eq!(order, vec![Deck::C, Deck::D, Deck::A, Deck::B]);
        assert_eq!(ranked[0].1, 25.0);
        assert_eq!(ranked[1].1, 10.0);
    }

    #[test]
    fn anchors_span_constant_policies() {
        let (worst, best) = policy_anchors(&EASY, 40);
        assert_eq!(worst, 2000.0 - 40.0 * 30.0);
        assert_eq!(best, 2000.0 + 40.0 * 30.0);
    }

    #[test]
    fn staying_keeps_the_revealed_outcome() {
        for seed in 0..50 {
            let mut c = core(seed);
            let revealed = c.first_choice(Deck::D);
            let realized = c.final_choice(Deck::D);
            assert_eq!(revealed, realized);
            assert_eq!(c.balance(), STARTING_BALANCE + realized.net());
        }
    }

    #[test]
    fn stay_on_loss_applies_the_loss() {
        // Deterministic loss deck: p_d = 1.
        let mut c = DcigtCore::new([0.5, 0.1, 0.5, 1.0], 40, ChaCha8Rng::seed_from_u64(1));
        let revealed = c.first_choice(Deck::D);
        assert_eq!(revealed, Outcome { gain: 50, loss: 200 });
        c.final_choice(Deck::D);
        assert_eq!(c.balance(), STARTING_BALANCE - 150);
    }

    #[test]
    fn degenerate_probability_never_loses() {
        let mut c = DcigtCore::new([0.5, 0.0, 0.5, 0.1], 40, ChaCha8Rng::seed_from_u64(2));
        for _ in 0..40 {
            let revealed = c.first_choice(Deck::B);
            assert_eq!(revealed, Outcome { gain: 100, loss: 0 });
            c.final_choice(Deck::B);
        }
        assert_eq!(c.balance(), STARTING_BALANCE + 40 * 100);
    }

    #[test]
    fn switching_resamples_from_the_new_deck() {
        let mut c = DcigtCore::new([1.0, 0.0, 0.5, 0.1], 40, ChaCha8Rng::seed_from_u64(3));
        let revealed = c.first_choice(Deck::A);
        assert_eq!(revealed.loss, 260);
        let realized = c.final_choice(Deck::B);
        assert_eq!(realized, Outcome { gain: 100, loss: 0 });
        assert_eq!(c.balance(), STARTING_BALANCE + 100);
    }

    #[test]
    fn always_d_stay_policy_mean_balance() {
        // EV arithmetic + Monte Carlo: mean final balance 3200 within 3 sigma.
        let sims = 100_000;
        let mut total = 0.0;
        for seed in 0..sims {
            let mut c = DcigtCore::new(EASY, 40, ChaCha8Rng::seed_from_u64(seed));
            for _ in 0..40 {
                c.first_choice(Deck::D);
                c.final_choice(Deck::D);
            }
            total += c.balance() as f64;
        }
        let mean = total / sims as f64;
        // Per-trial variance p(1-p) * loss^2 = 0.09 * 200^2; 40 trials/session.
        let session_sigma = (40.0 * 0.1 * 0.9 * 200.0f64 * 200.0).sqrt();
        let tolerance = 3.0 * session_sigma / (sims as f64).sqrt();
        assert!((mean - 3200.0).abs() < tolerance, "mean {mean}, tolerance {tolerance}");
    }

    #[test]
    fn switch_taxonomy_is_a_partition() {
        assert_eq!(classify_switch(true, false), SwitchKind::LossAvoidingSwitch);
        assert_eq!(classify_switch(false, true), SwitchKind::InsistGain);
        assert_eq!(classify_switch(true, true), SwitchKind::InsistRisk);
        assert_eq!(classify_switch(false, false), SwitchKind::UnnecessarySwitch);
    }

    #[test]
    fn oracle_policy_avoids_risk_and_waste() {
        // Stay on gain, switch to the second-best deck on loss: no insist_risk,
        // no unnecessary_switch, by the policy's construction.
        let mut c = core(11);
        for _ in 0..40 {
            let revealed = c.first_choice(Deck::D);
            let final_deck = if revealed.loss > 0 { Deck::C } else { Deck::D };
            c.final_choice(final_deck);
        }
        let kinds: Vec<SwitchKind> = c.history.iter().map(|t| t.kind()).collect();
        assert!(!kinds.contains(&SwitchKind::InsistRisk));
        assert!(!kinds.contains(&SwitchKind::UnnecessarySwitch));
        assert_eq!(kinds.len(), 40);
        let score = score_dcigt(&c.history, &EASY, 40, c.balance(), 0.5);
        assert_eq!(score.details["short_term"], 100.0);
    }

    #[test]
    fn balance_conservation() {
        let mut c = core(13);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..40 {
            let first = Deck::ALL[rng.random_range(0..4)];
            c.first_choice(first);
            let last = Deck::ALL[rng.random_range(0..4)];
            c.final_choice(last);
        }
        let net: i64 = c.history.iter().map(|t| t.realized.net()).sum();
        assert_eq!(c.balance(), STARTING_BALANCE + net);
    }

    #[test]
    fn trajectory_constant_and_alternating() {
        let always_d = vec![Deck::D; 40];
        let series = deck_trajectory(&always_d, 10);
        assert_eq!(series.len(), 31);
        assert!(series.iter().all(|row| row[3] == 1.0));

        let alternating: Vec<Deck> =
            (0..40).map(|i| if i % 2 == 0 { Deck::C } else { Deck::D }).collect();
        for row in deck_trajectory(&alternating, 10) {
            assert_eq!(row[2], 0.5);
            assert_eq!(row[3], 0.5);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn always_a_long_term_is_zero_in_expectation() {
        let sims = 2_000;
        let mut total = 0.0;
        for seed in 0..sims {
            let mut c = DcigtCore::new(EASY, 40, ChaCha8Rng::seed_from_u64(1_000_000 + seed));
            for _ in 0..40 {
                c.first_choice(Deck::A);
                c.final_choice(Deck::A);
            }
            let score = score_dcigt(&c.history, &EASY, 40, c.balance(), 0.5);
            total += score.details["long_term"];
        }
        // Clamping at the worst-policy anchor keeps the mean near zero.
        assert!(total / sims as f64 < 8.0, "mean long_term {}", total / sims as f64);
    }
}
