//! N-back letter task.
//!
//! Letters from {E, F, G, H} are shown one at a time; the agent answers
//! whether the current letter equals the one `n` steps earlier, or
//! "Not Available" for the first `n` warm-up positions. By default every
//! session with the same depth shares one canonical sequence (26 letters, 10
//! matches among the 24 scoreable positions), so cross-agent comparisons use
//! identical stimuli. Set `fresh_sequence` to draw stimuli from the session
//! seed instead.

use rand_chacha::ChaCha8Rng;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::parse_with_aliases;
use crate::config::{TaskConfig, TaskId};
use crate::error::ConfigError;
use crate::rng::Seeder;
use crate::session::{BehaviorProfile, TaskScore, TextEnvironment, UnknownAction};

pub const ALPHABET: [char; 4] = ['E', 'F', 'G', 'H'];

/// Seed for the shared canonical sequences; independent of any session seed.
const CANONICAL_SEED: u64 = 0x6e_62_61_63_6b; // "nback"

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NbackAnswer {
    Yes,
    No,
    NotAvailable,
}

impl NbackAnswer {
    pub fn token(self) -> &'static str {
        match self {
            NbackAnswer::Yes => "Yes",
            NbackAnswer::No => "No",
            NbackAnswer::NotAvailable => "Not Available",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NbackSequence {
    pub n: usize,
    pub letters: Vec<char>,
}

impl NbackSequence {
    /// Expected answer at 0-based position `i`.
    pub fn expected(&self, i: usize) -> NbackAnswer {
        if i < self.n {
            NbackAnswer::NotAvailable
        } else if self.letters[i] == self.letters[i - self.n] {
            NbackAnswer::Yes
        } else {
            NbackAnswer::No
        }
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn yes_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.expected(i) == NbackAnswer::Yes).count()
    }
}

/// Build a sequence with exactly `match_count` Yes positions among the
/// `length - n` scoreable ones.
pub fn generate_sequence(
    n: usize,
    length: usize,
    match_count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<NbackSequence, ConfigError> {
    if n == 0 || length <= n {
        return Err(ConfigError::InfeasibleSequence(format!(
            "need 0 < n < length, got n = {n}, length = {length}"
        )));
    }
    if match_count > length - n {
        return Err(ConfigError::InfeasibleSequence(format!(
            "match_count {match_count} exceeds scoreable positions {}",
            length - n
        )));
    }

    // Choose which scoreable positions are matches (partial Fisher-Yates).
    let mut positions: Vec<usize> = (n..length).collect();
    for slot in 0..match_count {
        let pick = slot + rng.random_range(0..positions.len() - slot);
        positions.swap(slot, pick);
    }
    let mut is_match = vec![false; length];
    for &p in &positions[..match_count] {
        is_match[p] = true;
    }

    let mut letters = Vec::with_capacity(length);
    for i in 0..length {
        if i < n {
            letters.push(ALPHABET[rng.random_range(0..ALPHABET.len())]);
        } else if is_match[i] {
            letters.push(letters[i - n]);
        } else {
            let forbidden = letters[i - n];
            let others: Vec<char> = ALPHABET.iter().copied().filter(|&c| c != forbidden).collect();
            letters.push(others[rng.random_range(0..others.len())]);
        }
    }

    let sequence = NbackSequence { n, letters };
    debug_assert_eq!(sequence.yes_count(), match_count);
    Ok(sequence)
}

/// The shared default sequence for depth `n`: same stimuli for every session.
pub fn canonical_sequence(n: usize, length: usize, match_count: usize) -> Result<NbackSequence, ConfigError> {
    let mut rng = Seeder::new(CANONICAL_SEED).stream(&format!("sequence-{n}-{length}-{match_count}"));
    generate_sequence(n, length, match_count, &mut rng)
}

/// Score answers against the sequence. Scoreable positions exclude the first
/// `n` unless `score_na_trials` is set; warm-up answers are always checked
/// for the literal "Not Available" as protocol compliance.
pub fn score_nback(answers: &[NbackAnswer], sequence: &NbackSequence, score_na_trials: bool) -> (f64, usize, usize, usize) {
    let na_compliant = (0..sequence.n.min(answers.len()))
        .filter(|&i| answers[i] == NbackAnswer::NotAvailable)
        .count();
    let range: Box<dyn Iterator<Item = usize>> = if score_na_trials {
        Box::new(0..answers.len())
    } else {
        Box::new(sequence.n..answers.len())
    };
    let mut correct = 0;
    let mut scoreable = 0;
    for i in range {
        scoreable += 1;
        if answers[i] == sequence.expected(i) {
            correct += 1;
        }
    }
    let score = if scoreable == 0 { 0.0 } else { 100.0 * correct as f64 / scoreable as f64 };
    (score, correct, scoreable, na_compliant)
}

const SYSTEM_PROMPT_TEMPLATE: &str = "You are playing a game. I will give you a series of characters in sequence, showing only one at a time. Your task is to determine whether the current character is the same as the character {n} steps before. If the current character is the same as the character {n} steps before, answer Yes. If the current character is different from the character {n} steps before, answer No. For the first {n} steps, since there aren't enough preceding characters for comparison, answer Not Available.";

/// Text adapter for the session loop.
pub struct NbackEnv {
    sequence: NbackSequence,
    config: TaskConfig,
    seed: u64,
    answers: Vec<NbackAnswer>,
    shown: usize,
}

impl NbackEnv {
    pub fn new(config: TaskConfig, seed: u64) -> Result<Self, ConfigError> {
        let n = config.require("n")? as usize;
        let match_count = config.require("match_count")? as usize;
        let sequence = if config.flag("fresh_sequence") {
            let mut rng = Seeder::new(seed).stream(super::ENV_STREAM);
            generate_sequence(n, config.trials, match_count, &mut rng)?
        } else {
            canonical_sequence(n, config.trials, match_count)?
        };
        Ok(NbackEnv { sequence, config, seed, answers: Vec::new(), shown: 0 })
    }

    pub fn sequence(&self) -> &NbackSequence {
        &self.sequence
    }
}

impl TextEnvironment for NbackEnv {
    fn task_id(&self) -> TaskId {
        TaskId::Nback
    }

    fn config(&self) -> &TaskConfig {
        &self.config
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn system_prompt(&self) -> String {
        SYSTEM_PROMPT_TEMPLATE.replace("{n}", &self.sequence.n.to_string())
    }

    fn total_turns(&self) -> usize {
        self.sequence.len()
    }

    fn next_prompt(&mut self) -> String {
        let letter = self.sequence.letters[self.shown];
        self.shown += 1;
        letter.to_string()
    }

    fn options(&self) -> Vec<String> {
        vec!["Yes".to_string(), "No".to_string(), "Not Available".to_string()]
    }

    fn parse_action(&self, raw: &str) -> Option<String> {
        parse_with_aliases(
            raw,
            &[("Yes", "Yes"), ("No", "No"), ("Not Available", "Not Available")],
        )
    }

    fn fallback_action(&self) -> String {
        "No".to_string()
    }

    fn step(&mut self, action: &str) -> Result<String, UnknownAction> {
        let answer = match action {
            "Yes" => NbackAnswer::Yes,
            "No" => NbackAnswer::No,
            "Not Available" => NbackAnswer::NotAvailable,
            other => return Err(UnknownAction(other.to_string())),
        };
        self.answers.push(answer);
        Ok(String::new())
    }

    fn score(&self) -> Result<TaskScore, String> {
        let (score, correct, scoreable, na_compliant) = score_nback(
            &self.answers,
            &self.sequence,
            self.config.flag("score_na_trials"),
        );
        Ok(TaskScore::new(TaskId::Nback, score)
            .with("correct", correct as f64)
            .with("scoreable", scoreable as f64)
            .with("na_compliant", na_compliant as f64))
    }

    fn behavior(&self) -> BehaviorProfile {
        let (_, correct, scoreable, na_compliant) = score_nback(
            &self.answers,
            &self.sequence,
            self.config.flag("score_na_trials"),
        );
        BehaviorProfile::Nback { correct, scoreable, na_compliant }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn generated_sequence_recounts_to_spec() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seq = generate_sequence(2, 26, 10, &mut rng).unwrap();
        assert_eq!(seq.len(), 26);
        // Recount labels independently from the emitted letters.
        let yes = (2..26).filter(|&i| seq.letters[i] == seq.letters[i - 2]).count();
        let no = (2..26).filter(|&i| seq.letters[i] != seq.letters[i - 2]).count();
        assert_eq!(yes, 10);
        assert_eq!(no, 14);
    }

    #[test]
    fn expected_labels_follow_definition() {
        let seq = NbackSequence { n: 2, letters: vec!['E', 'F', 'E', 'G'] };
        assert_eq!(seq.expected(0), NbackAnswer::NotAvailable);
        assert_eq!(seq.expected(1), NbackAnswer::NotAvailable);
        assert_eq!(seq.expected(2), NbackAnswer::Yes);
        assert_eq!(seq.expected(3), NbackAnswer::No);
    }

    #[test]
    fn zero_match_sequence_is_all_no() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let seq = generate_sequence(2, 26, 0, &mut rng).unwrap();
        assert!((2..26).all(|i| seq.expected(i) == NbackAnswer::No));
    }

    #[test]
    fn infeasible_match_count_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(generate_sequence(2, 26, 25, &mut rng).is_err());
    }

    #[test]
    fn canonical_sequence_is_stable_and_balanced() {
        let a = canonical_sequence(2, 26, 10).unwrap();
        let b = canonical_sequence(2, 26, 10).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.yes_count(), 10);
        let c = canonical_sequence(4, 26, 10).unwrap();
        assert_eq!(c.yes_count(), 10);
        assert_ne!(a.letters, c.letters);
    }

    #[test]
    fn perfect_agent_scores_100() {
        let seq = canonical_sequence(2, 26, 10).unwrap();
        let answers: Vec<NbackAnswer> = (0..26).map(|i| seq.expected(i)).collect();
        let (score, correct, scoreable, na) = score_nback(&answers, &seq, false);
        assert_eq!(score, 100.0);
        assert_eq!(correct, 24);
        assert_eq!(scoreable, 24);
        assert_eq!(na, 2);
    }

    #[test]
    fn all_no_agent_scores_14_of_24() {
        let seq = canonical_sequence(2, 26, 10).unwrap();
        let answers = vec![NbackAnswer::No; 26];
        let (score, correct, scoreable, na) = score_nback(&answers, &seq, false);
        assert!((score - 1400.0 / 24.0).abs() < 1e-9, "score {score}");
        assert_eq!(correct, 14);
        assert_eq!(scoreable, 24);
        assert_eq!(na, 0);
    }

    #[test]
    fn all_yes_agent_scores_complement() {
        let seq = canonical_sequence(2, 26, 10).unwrap();
        let answers = vec![NbackAnswer::Yes; 26];
        let (score, ..) = score_nback(&answers, &seq, false);
        assert!((score - 1000.0 / 24.0).abs() < 1e-9);
    }

    #[test]
    fn yes_and_no_scores_partition_to_100() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let count = (seed % 12) as usize;
            let seq = generate_sequence(2, 26, count, &mut rng).unwrap();
            let (yes_score, ..) = score_nback(&vec![NbackAnswer::Yes; 26], &seq, false);
            let (no_score, ..) = score_nback(&vec![NbackAnswer::No; 26], &seq, false);
            assert!((yes_score + no_score - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn scoring_ignores_warm_up_answers() {
        let seq = canonical_sequence(2, 26, 10).unwrap();
        let mut a: Vec<NbackAnswer> = (0..26).map(|i| seq.expected(i)).collect();
        let mut b = a.clone();
        a[0] = NbackAnswer::Yes;
        b[0] = NbackAnswer::NotAvailable;
        let (sa, ..) = score_nback(&a, &seq, false);
        let (sb, ..) = score_nback(&b, &seq, false);
        assert_eq!(sa, sb);
    }

    #[test]
    fn na_flag_scores_all_positions() {
        let seq = canonical_sequence(2, 26, 10).unwrap();
        let answers: Vec<NbackAnswer> = (0..26).map(|i| seq.expected(i)).collect();
        let (score, _, scoreable, _) = score_nback(&answers, &seq, true);
        assert_eq!(score, 100.0);
        assert_eq!(scoreable, 26);
    }
}
