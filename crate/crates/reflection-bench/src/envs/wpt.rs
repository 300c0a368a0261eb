//! Weather prediction task.
//!
//! A two-state weather chain whose transition matrix is selected by a
//! per-trial sensor cue. With cue `[1,0]` tomorrow keeps today's weather with
//! probability `p`; with cue `[0,1]` it flips with probability `p`. The agent
//! never sees `p` or the matrices — only today's weather, the cue, and the
//! realized outcome. Scoring compares the transition structure implied by the
//! agent's predictions against the true matrices.

use rand_chacha::ChaCha8Rng;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::parse_with_aliases;
use crate::config::{TaskConfig, TaskId};
use crate::error::ConfigError;
use crate::rng::Seeder;
use crate::session::{BehaviorProfile, TaskScore, TextEnvironment, UnknownAction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weather {
    Sunny,
    Rainy,
}

impl Weather {
    pub fn as_str(self) -> &'static str {
        match self {
            Weather::Sunny => "sunny",
            Weather::Rainy => "rainy",
        }
    }

    pub fn flip(self) -> Weather {
        match self {
            Weather::Sunny => Weather::Rainy,
            Weather::Rainy => Weather::Sunny,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Weather::Sunny => 0,
            Weather::Rainy => 1,
        }
    }

    pub fn from_index(i: usize) -> Weather {
        if i == 0 { Weather::Sunny } else { Weather::Rainy }
    }
}

/// Sensor cue shown each trial, rendered `[1,0]` or `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sensor {
    OneZero,
    ZeroOne,
}

impl Sensor {
    pub fn as_str(self) -> &'static str {
        match self {
            Sensor::OneZero => "[1,0]",
            Sensor::ZeroOne => "[0,1]",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Sensor::OneZero => 0,
            Sensor::ZeroOne => 1,
        }
    }
}

/// One completed trial: the context the agent saw, its prediction, and the
/// sampled outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WptTrial {
    pub today: Weather,
    pub sensor: Sensor,
    pub prediction: Weather,
    pub next: Weather,
}

/// Transition matrices indexed `[sensor][today][next]`.
pub type Matrices = [[[f64; 2]; 2]; 2];

/// True matrices for stay-probability `p` under cue `[1,0]`.
pub fn true_matrices(p: f64) -> Matrices {
    let stay = [[p, 1.0 - p], [1.0 - p, p]];
    let flip = [[1.0 - p, p], [p, 1.0 - p]];
    [stay, flip]
}

/// Hidden state and seeded dynamics of one session.
#[derive(Debug, Clone)]
pub struct WptCore {
    p: f64,
    trials: usize,
    today: Weather,
    sensor: Sensor,
    rng: ChaCha8Rng,
    pub history: Vec<WptTrial>,
}

impl WptCore {
    pub fn new(p: f64, trials: usize, mut rng: ChaCha8Rng) -> Self {
        let today = if rng.random_bool(0.5) { Weather::Sunny } else { Weather::Rainy };
        let sensor = if rng.random_bool(0.5) { Sensor::OneZero } else { Sensor::ZeroOne };
        WptCore { p, trials, today, sensor, rng, history: Vec::with_capacity(trials.min(4096)) }
    }

    pub fn today(&self) -> Weather {
        self.today
    }

    pub fn sensor(&self) -> Sensor {
        self.sensor
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Record the prediction, sample the next day's weather from the
    /// cue-selected matrix row, and draw the next cue.
    pub fn step(&mut self, prediction: Weather) -> Weather {
        let stay_probability = match self.sensor {
            Sensor::OneZero => self.p,
            Sensor::ZeroOne => 1.0 - self.p,
        };
        let next = if self.rng.random_bool(stay_probability) {
            self.today
        } else {
            self.today.flip()
        };
        self.history.push(WptTrial { today: self.today, sensor: self.sensor, prediction, next });
        self.today = next;
        self.sensor = if self.rng.random_bool(0.5) { Sensor::OneZero } else { Sensor::ZeroOne };
        next
    }

    pub fn done(&self) -> bool {
        self.history.len() >= self.trials
    }
}

/// Prediction-frequency estimate of the agent's internal transition matrices,
/// plus the number of observations behind each (sensor, today) context.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionEstimate {
    pub matrices: Matrices,
    pub counts: [[u32; 2]; 2],
}

/// Estimate `P(next | today, sensor)` from prediction counts. Contexts that
/// were never observed keep the uniform row.
pub fn estimate_internal_matrices(history: &[WptTrial]) -> TransitionEstimate {
    let mut hits = [[[0u32; 2]; 2]; 2];
    let mut counts = [[0u32; 2]; 2];
    for trial in history {
        let s = trial.sensor.index();
        let d = trial.today.index();
        hits[s][d][trial.prediction.index()] += 1;
        counts[s][d] += 1;
    }
    let mut matrices = [[[0.5f64; 2]; 2]; 2];
    for s in 0..2 {
        for d in 0..2 {
            if counts[s][d] > 0 {
                let total = f64::from(counts[s][d]);
                matrices[s][d] = [f64::from(hits[s][d][0]) / total, f64::from(hits[s][d][1]) / total];
            }
        }
    }
    TransitionEstimate { matrices, counts }
}

/// `(1 - MAE / Max_MAE) * 100`, clamped to [0, 100]. MAE is the mean absolute
/// entry difference over all 8 entries; Max_MAE averages each true entry's
/// worst case `max(t, 1-t)`, so the maximally wrong matrix scores 0.
pub fn score_wpt(estimate: &Matrices, truth: &Matrices) -> Result<f64, String> {
    let mut abs_error = 0.0;
    let mut worst = 0.0;
    for s in 0..2 {
        for d in 0..2 {
            for n in 0..2 {
                let t = truth[s][d][n];
                abs_error += (estimate[s][d][n] - t).abs();
                worst += t.max(1.0 - t);
            }
        }
    }
    let mae = abs_error / 8.0;
    let max_mae = worst / 8.0;
    if max_mae == 0.0 {
        return Err("degenerate true matrices: Max_MAE is zero".to_string());
    }
    Ok(((1.0 - mae / max_mae) * 100.0).clamp(0.0, 100.0))
}

/// Entry tolerance for calling a sensor context "learned".
pub const PATTERN_MATCH_TOLERANCE: f64 = 0.15;
/// Minimum stay rate in both contexts to call predictions today-driven.
pub const PATTERN_STAY_RATE: f64 = 0.85;
/// Minimum between-sensor spread to call predictions sensor-driven.
pub const PATTERN_SENSOR_SPREAD: f64 = 0.5;

/// Prediction pattern labels.
///
/// A: both sensor contexts match the truth. B: predictions track today's
/// weather regardless of the sensor. C: predictions track the sensor
/// regardless of today. D: exactly one sensor context matches. E: none of
/// the above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WptPattern {
    Correct,
    TodayDriven,
    SensorDriven,
    PartiallyCorrect,
    Unclassified,
}

impl WptPattern {
    pub fn letter(self) -> char {
        match self {
            WptPattern::Correct => 'A',
            WptPattern::TodayDriven => 'B',
            WptPattern::SensorDriven => 'C',
            WptPattern::PartiallyCorrect => 'D',
            WptPattern::Unclassified => 'E',
        }
    }
}

pub fn classify_wpt_pattern(estimate: &Matrices, truth: &Matrices) -> WptPattern {
    let context_matches = |s: usize| -> bool {
        (0..2).all(|d| (0..2).all(|n| (estimate[s][d][n] - truth[s][d][n]).abs() <= PATTERN_MATCH_TOLERANCE))
    };
    let matched = [context_matches(0), context_matches(1)];
    if matched[0] && matched[1] {
        return WptPattern::Correct;
    }
    let stay_driven = (0..2).all(|s| (0..2).all(|d| estimate[s][d][d] >= PATTERN_STAY_RATE));
    if stay_driven {
        return WptPattern::TodayDriven;
    }
    // P(predict sunny | today d, sensor s)
    let p_sunny = |s: usize, d: usize| estimate[s][d][0];
    let sensor_spread = (0..2)
        .map(|d| (p_sunny(0, d) - p_sunny(1, d)).abs())
        .fold(0.0f64, f64::max);
    let today_spread = (0..2)
        .map(|s| (p_sunny(s, 0) - p_sunny(s, 1)).abs())
        .fold(0.0f64, f64::max);
    if sensor_spread >= PATTERN_SENSOR_SPREAD && today_spread <= PATTERN_MATCH_TOLERANCE {
        return WptPattern::SensorDriven;
    }
    if matched[0] != matched[1] {
        return WptPattern::PartiallyCorrect;
    }
    WptPattern::Unclassified
}

const SYSTEM_PROMPT: &str = "You are an expert forecaster working in a weather station. There are two devices collecting data from nature. Your task is to predict tomorrow's weather based on (1) today's weather and (2) the current states of four sensor devices in the weather station. Here's how the task works: 1. There are two devices, each represented by either 0 (inactive) or 1 (active). 2. The device states will be given to you in the format [d1,d2], where each d is either 0 or 1; 3. Based on these device states and today's weather, you need to predict whether tomorrow's weather will be sunny or rainy. 4. After your prediction, I will inform you of the actual weather outcome. 5. We will repeat this process multiple times, and you should try to improve your predictions based on the feedback. At each time, make your prediction of the next day's weather ('sunny' or 'rainy').";

/// Text adapter for the session loop.
pub struct WptEnv {
    core: WptCore,
    config: TaskConfig,
    seed: u64,
    pending_feedback: Option<String>,
}

impl WptEnv {
    pub fn new(config: TaskConfig, seed: u64) -> Result<Self, ConfigError> {
        let p = config.require("p")?;
        let rng = Seeder::new(seed).stream(super::ENV_STREAM);
        Ok(WptEnv {
            core: WptCore::new(p, config.trials, rng),
            config,
            seed,
            pending_feedback: None,
        })
    }

    pub fn core(&self) -> &WptCore {
        &self.core
    }

    fn situation(&self) -> String {
        format!(
            "Today's weather: {}. Sensor states: {}.",
            self.core.today().as_str(),
            self.core.sensor().as_str()
        )
    }
}

impl TextEnvironment for WptEnv {
    fn task_id(&self) -> TaskId {
        TaskId::Wpt
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
        self.config.trials
    }

    fn next_prompt(&mut self) -> String {
        match self.pending_feedback.take() {
            Some(feedback) => feedback,
            None => self.situation(),
        }
    }

    fn options(&self) -> Vec<String> {
        vec!["sunny".to_string(), "rainy".to_string()]
    }

    fn parse_action(&self, raw: &str) -> Option<String> {
        parse_with_aliases(raw, &[("sunny", "sunny"), ("rainy", "rainy")])
    }

    fn fallback_action(&self) -> String {
        // Predict that the weather persists.
        self.core.today().as_str().to_string()
    }

    fn step(&mut self, action: &str) -> Result<String, UnknownAction> {
        let prediction = match action {
            "sunny" => Weather::Sunny,
            "rainy" => Weather::Rainy,
            other => return Err(UnknownAction(other.to_string())),
        };
        let actual = self.core.step(prediction);
        let feedback = format!("The actual weather is {}. {}", actual.as_str(), self.situation());
        self.pending_feedback = Some(feedback.clone());
        Ok(feedback)
    }

    fn score(&self) -> Result<TaskScore, String> {
        let estimate = estimate_internal_matrices(&self.core.history);
        let truth = true_matrices(self.core.p());
        let score = score_wpt(&estimate.matrices, &truth)?;
        let mut abs_error = 0.0;
        for s in 0..2 {
            for d in 0..2 {
                for n in 0..2 {
                    abs_error += (estimate.matrices[s][d][n] - truth[s][d][n]).abs();
                }
            }
        }
        Ok(TaskScore::new(TaskId::Wpt, score)
            .with("mae", abs_error / 8.0)
            .with("max_mae", truth.iter().flatten().flatten().map(|t| t.max(1.0 - t)).sum::<f64>() / 8.0))
    }

    fn behavior(&self) -> BehaviorProfile {
        let estimate = estimate_internal_matrices(&self.core.history);
        let truth = true_matrices(self.core.p());
        BehaviorProfile::Wpt {
            pattern: classify_wpt_pattern(&estimate.matrices, &truth).letter(),
            estimate: estimate.matrices,
            context_counts: estimate.counts,
        }
    }
}
