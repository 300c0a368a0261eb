//! Wisconsin card sorting test.
//!
//! Four fixed desk cards, a hidden matching rule over shape/color/number, and
//! a rule schedule that switches every `x/6` trials so each rule is tested
//! twice. Targets are constructed so that every rule points at a distinct
//! desk card and no desk card equals the target, which makes every answer
//! informative about the active rule.
//!
//! The default desk is `triangle red 1`, `cross green 2`, `circle yellow 3`,
//! `star blue 4`: pairwise distinct on every dimension. The `legacy_desk`
//! flag restores the variant with `circle yellow 1`, whose duplicated number
//! breaks unique number matching; it is kept only for compatibility with
//! transcripts produced against that desk.

use rand_chacha::ChaCha8Rng;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::parse_with_tokens;
use crate::config::{TaskConfig, TaskId};
use crate::error::ConfigError;
use crate::rng::Seeder;
use crate::session::{BehaviorProfile, TaskScore, TextEnvironment, UnknownAction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Triangle,
    Cross,
    Circle,
    Star,
}

impl Shape {
    pub fn as_str(self) -> &'static str {
        match self {
            Shape::Triangle => "triangle",
            Shape::Cross => "cross",
            Shape::Circle => "circle",
            Shape::Star => "star",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Yellow,
    Blue,
}

impl Color {
    pub fn as_str(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Yellow => "yellow",
            Color::Blue => "blue",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Card {
    pub shape: Shape,
    pub color: Color,
    pub number: u8,
}

impl Card {
    pub fn token(&self) -> String {
        format!("{} {} {}", self.shape.as_str(), self.color.as_str(), self.number)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Shape,
    Color,
    Number,
}

impl Dimension {
    pub fn matches(self, a: &Card, b: &Card) -> bool {
        match self {
            Dimension::Shape => a.shape == b.shape,
            Dimension::Color => a.color == b.color,
            Dimension::Number => a.number == b.number,
        }
    }
}

/// Rule order: shape, color, number, repeated so each rule runs twice.
pub const RULE_SCHEDULE: [Dimension; 6] = [
    Dimension::Shape,
    Dimension::Color,
    Dimension::Number,
    Dimension::Shape,
    Dimension::Color,
    Dimension::Number,
];

pub fn default_desk() -> [Card; 4] {
    [
        Card { shape: Shape::Triangle, color: Color::Red, number: 1 },
        Card { shape: Shape::Cross, color: Color::Green, number: 2 },
        Card { shape: Shape::Circle, color: Color::Yellow, number: 3 },
        Card { shape: Shape::Star, color: Color::Blue, number: 4 },
    ]
}

/// Desk variant where two cards share number 1.
pub fn legacy_desk() -> [Card; 4] {
    let mut desk = default_desk();
    desk[2].number = 1;
    desk
}

pub(crate) fn default_desk_aliases() -> Vec<(&'static str, &'static str)> {
    vec![
        ("triangle red 1", "triangle red 1"),
        ("cross green 2", "cross green 2"),
        ("circle yellow 3", "circle yellow 3"),
        ("star blue 4", "star blue 4"),
    ]
}

/// One judged trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WcstTrial {
    pub target: Card,
    pub choice: Card,
    pub rule: Dimension,
    pub correct: bool,
}

/// Hidden rule schedule, target generator, and judge.
#[derive(Debug, Clone)]
pub struct WcstCore {
    trials: usize,
    block_len: usize,
    desk: [Card; 4],
    rng: ChaCha8Rng,
    current_target: Option<Card>,
    pub history: Vec<WcstTrial>,
}

impl WcstCore {
    pub fn new(trials: usize, desk: [Card; 4], rng: ChaCha8Rng) -> Self {
        WcstCore {
            trials,
            block_len: trials / 6,
            desk,
            rng,
            current_target: None,
            history: Vec::with_capacity(trials),
        }
    }

    pub fn desk(&self) -> &[Card; 4] {
        &self.desk
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    /// Active rule for a 1-based trial index.
    pub fn rule_for(&self, trial: usize) -> Dimension {
        RULE_SCHEDULE[((trial - 1) / self.block_len).min(5)]
    }

    /// Construct the next target: pick three distinct desk cards to donate
    /// shape, color, and number. All 4*3*2 donor assignments are equally
    /// likely. For a desk that is pairwise distinct per dimension this makes
    /// the target match exactly one desk card per dimension and equal none.
    pub fn generate_target(&mut self) -> Card {
        let mut indices = [0usize, 1, 2, 3];
        for slot in 0..3 {
            let pick = slot + self.rng.random_range(0..4 - slot);
            indices.swap(slot, pick);
        }
        let target = Card {
            shape: self.desk[indices[0]].shape,
            color: self.desk[indices[1]].color,
            number: self.desk[indices[2]].number,
        };
        self.current_target = Some(target);
        target
    }

    /// Judge a desk-card choice against the pending target under the active
    /// rule. Feedback carries no rule information.
    pub fn apply(&mut self, choice: Card) -> bool {
        let target = self.current_target.take().expect("generate_target before apply");
        let rule = self.rule_for(self.history.len() + 1);
        let correct = rule.matches(&target, &choice);
        self.history.push(WcstTrial { target, choice, rule, correct });
        correct
    }

    /// The desk card matching `target` on `dimension`, if exactly one exists.
    pub fn matching_card(&self, target: &Card, dimension: Dimension) -> Option<Card> {
        let mut found = None;
        for card in &self.desk {
            if dimension.matches(target, card) {
                if found.is_some() {
                    return None;
                }
                found = Some(*card);
            }
        }
        found
    }
}

pub fn judge_match(target: &Card, choice: &Card, rule: Dimension) -> (bool, &'static str) {
    let correct = rule.matches(target, choice);
    (correct, if correct { "Right" } else { "Wrong" })
}

pub fn score_wcst(history: &[WcstTrial], trials: usize) -> f64 {
    let correct = history.iter().filter(|t| t.correct).count();
    100.0 * correct as f64 / trials as f64
}

/// Accuracy over the six consecutive rule blocks.
pub fn block_accuracy(history: &[WcstTrial], block_len: usize) -> Vec<f64> {
    history
        .chunks(block_len)
        .map(|block| 100.0 * block.iter().filter(|t| t.correct).count() as f64 / block.len() as f64)
        .collect()
}

const SYSTEM_PROMPT_TEMPLATE: &str = "You are performing an interesting Task. In this task, you have four cards on your desk, that is, {c1}, {c2}, {c3}, and {c4}. The three word/figure represent (1) the type of shape, i.e. triangle, cross, circle, or star, (2) the color of the shape, i.e. red, green, yellow, or blue, and (3) the number of the shape, i.e., 1, 2, 3, or 4, respectively. At each trial, you will be presented with a testing card. You should point out which card on your desk matches the testing card. I will not tell you the matching rule, but only provide feedback if your choice was right or wrong. Your primary goal is to strive to maximize your accuracy rate. Respond with your option ({c1}, {c2}, {c3}, or {c4}). Keep performing the task until the end of the test.";

/// Text adapter for the session loop.
pub struct WcstEnv {
    core: WcstCore,
    config: TaskConfig,
    seed: u64,
    last_feedback: Option<&'static str>,
}

impl WcstEnv {
    pub fn new(config: TaskConfig, seed: u64) -> Result<Self, ConfigError> {
        let trials = config.require("x")? as usize;
        let desk = if config.flag("legacy_desk") { legacy_desk() } else { default_desk() };
        let rng = Seeder::new(seed).stream(super::ENV_STREAM);
        Ok(WcstEnv {
            core: WcstCore::new(trials, desk, rng),
            config,
            seed,
            last_feedback: None,
        })
    }

    pub fn core(&self) -> &WcstCore {
        &self.core
    }

    fn card_by_token(&self, token: &str) -> Option<Card> {
        self.core.desk().iter().copied().find(|c| c.token() == token)
    }
}

impl TextEnvironment for WcstEnv {
    fn task_id(&self) -> TaskId {
        TaskId::Wcst
    }

    fn config(&self) -> &TaskConfig {
        &self.config
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn system_prompt(&self) -> String {
        let quoted: Vec<String> =
            self.core.desk().iter().map(|c| format!("'{}'", c.token())).collect();
        SYSTEM_PROMPT_TEMPLATE
            .replace("{c1}", &quoted[0])
            .replace("{c2}", &quoted[1])
            .replace("{c3}", &quoted[2])
            .replace("{c4}", &quoted[3])
    }

    fn total_turns(&self) -> usize {
        self.core.trials()
    }

    fn next_prompt(&mut self) -> String {
        let target = self.core.generate_target();
        match self.last_feedback.take() {
            Some(feedback) => format!("{feedback}. Testing card: \"{}\".", target.token()),
            None => format!("Testing card: \"{}\".", target.token()),
        }
    }

    fn options(&self) -> Vec<String> {
        self.core.desk().iter().map(Card::token).collect()
    }

    fn parse_action(&self, raw: &str) -> Option<String> {
        parse_with_tokens(raw, &self.options())
    }

    fn fallback_action(&self) -> String {
        // Repeat the previous applied choice; first canonical option on trial 1.
        match self.core.history.last() {
            Some(trial) => trial.choice.token(),
            None => self.core.desk()[0].token(),
        }
    }

    fn step(&mut self, action: &str) -> Result<String, UnknownAction> {
        let choice = self
            .card_by_token(action)
            .ok_or_else(|| UnknownAction(action.to_string()))?;
        let correct = self.core.apply(choice);
        let feedback = if correct { "Right" } else { "Wrong" };
        self.last_feedback = Some(feedback);
        Ok(feedback.to_string())
    }

    fn score(&self) -> Result<TaskScore, String> {
        let correct = self.core.history.iter().filter(|t| t.correct).count();
        Ok(TaskScore::new(TaskId::Wcst, score_wcst(&self.core.history, self.core.trials()))
            .with("correct", correct as f64)
            .with("trials", self.core.trials() as f64))
    }

    fn behavior(&self) -> BehaviorProfile {
        BehaviorProfile::Wcst {
            block_accuracy: block_accuracy(&self.core.history, self.core.block_len()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    fn core(trials: usize, seed: u64) -> WcstCore {
        WcstCore::new(trials, default_desk(), ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn desk_is_pairwise_distinct_per_dimension() {
        let desk = default_desk();
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(desk[i].shape, desk[j].shape);
                assert_ne!(desk[i].color, desk[j].color);
                assert_ne!(desk[i].number, desk[j].number);
            }
        }
    }

    #[test]
    fn legacy_desk_duplicates_number_one() {
        let desk = legacy_desk();
        assert_eq!(desk[0].number, 1);
        assert_eq!(desk[2].number, 1);
    }

    #[test]
    fn targets_have_unique_answers_and_avoid_desk() {
        let mut c = core(72, 5);
        for _ in 0..1000 {
            let target = c.generate_target();
            c.current_target = None;
            assert!(!c.desk().iter().any(|card| *card == target));
            let mut matched = Vec::new();
            for dim in [Dimension::Shape, Dimension::Color, Dimension::Number] {
                let card = c.matching_card(&target, dim).expect("exactly one match per dimension");
                matched.push(card);
            }
            // The three matched desk cards are distinct.
            assert_ne!(matched[0], matched[1]);
            assert_ne!(matched[0], matched[2]);
            assert_ne!(matched[1], matched[2]);
        }
    }

    #[test]
    fn target_assignments_are_uniform() {
        // Exact enumeration: 24 donor assignments, 10^4 draws, 3-sigma bounds.
        let mut c = core(72, 9);
        let mut counts = std::collections::HashMap::new();
        let n = 10_000;
        for _ in 0..n {
            let target = c.generate_target();
            c.current_target = None;
            let key = (
                c.matching_card(&target, Dimension::Shape).unwrap().token(),
                c.matching_card(&target, Dimension::Color).unwrap().token(),
                c.matching_card(&target, Dimension::Number).unwrap().token(),
            );
            *counts.entry(key).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 24);
        let expected = n as f64 / 24.0;
        let sigma = (n as f64 * (1.0 / 24.0) * (23.0 / 24.0)).sqrt();
        for (_, count) in counts {
            assert!((count as f64 - expected).abs() < 3.0 * sigma, "count {count}");
        }
    }

    #[test]
    fn judge_matches_by_rule_dimension() {
        let target = Card { shape: Shape::Triangle, color: Color::Blue, number: 2 };
        let choice = Card { shape: Shape::Triangle, color: Color::Red, number: 1 };
        assert_eq!(judge_match(&target, &choice, Dimension::Shape), (true, "Right"));
        assert_eq!(judge_match(&target, &choice, Dimension::Color), (false, "Wrong"));
    }

    #[test]
    fn rule_schedule_tests_each_rule_twice() {
        let c = core(72, 1);
        let mut counts = std::collections::HashMap::new();
        for trial in 1..=72 {
            *counts.entry(c.rule_for(trial)).or_insert(0) += 1;
        }
        assert_eq!(counts[&Dimension::Shape], 24);
        assert_eq!(counts[&Dimension::Color], 24);
        assert_eq!(counts[&Dimension::Number], 24);
        // Two separate blocks per rule.
        assert_eq!(c.rule_for(1), Dimension::Shape);
        assert_eq!(c.rule_for(37), Dimension::Shape);
    }

    #[test]
    fn omniscient_agent_is_perfect() {
        let mut c = core(72, 2);
        for trial in 1..=72 {
            let target = c.generate_target();
            let rule = c.rule_for(trial);
            let choice = c.matching_card(&target, rule).unwrap();
            assert!(c.apply(choice));
        }
        assert_eq!(score_wcst(&c.history, 72), 100.0);
    }

    #[test]
    fn always_shape_agent_score_and_blocks() {
        // Correct exactly during the two shape blocks, by unique-match construction.
        let mut c = core(72, 3);
        for _ in 1..=72 {
            let target = c.generate_target();
            let choice = c.matching_card(&target, Dimension::Shape).unwrap();
            c.apply(choice);
        }
        let blocks = block_accuracy(&c.history, c.block_len());
        assert_eq!(blocks, vec![100.0, 0.0, 0.0, 100.0, 0.0, 0.0]);
        let score = score_wcst(&c.history, 72);
        assert!((score - 100.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn feedback_literals_never_leak_the_rule() {
        use crate::config::{Difficulty, TaskConfig};
        let config = TaskConfig::preset(TaskId::Wcst, Difficulty::Easy, 1);
        let mut env = WcstEnv::new(config, 4).unwrap();
        for _ in 0..72 {
            let _ = env.next_prompt();
            let feedback = env.step("triangle red 1").unwrap();
            assert!(feedback == "Right" || feedback == "Wrong");
        }
    }

    #[test]
    fn legacy_desk_targets_still_match_each_dimension() {
        let mut c = WcstCore::new(72, legacy_desk(), ChaCha8Rng::seed_from_u64(6));
        for _ in 0..500 {
            let target = c.generate_target();
            c.current_target = None;
            for dim in [Dimension::Shape, Dimension::Color, Dimension::Number] {
                assert!(c.desk().iter().any(|card| dim.matches(&target, card)));
            }
        }
    }
}
