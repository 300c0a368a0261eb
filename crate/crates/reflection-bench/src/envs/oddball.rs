//! Oddball perception test.
//!
//! Each stimulus is eight short sentences: seven about one topic plus one
//! topically unrelated deviant somewhere in positions 2-7. The agent is only
//! asked to comment freely; surprise is scored afterwards as the highest
//! cosine similarity between any sentence of the response and a canonical
//! surprise sentence. A 0-3 manual annotation scale exists for validation;
//! `validate_scoring` correlates the two.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{TaskConfig, TaskId};
use crate::embed::{cosine, Embedder};
use crate::error::{AnalysisError, ConfigError, EmbedError};
use crate::session::{BehaviorProfile, TaskScore, TextEnvironment, UnknownAction};

/// Default canonical surprise sentence; configurable per run.
pub const DEFAULT_STANDARD_SENTENCE: &str =
    "Wait, that sentence seems completely out of place and unrelated to the rest of the topic.";

/// One stimulus: eight assembled sentences with the deviant's 1-based
/// position recorded as metadata (never shown to the agent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddballItem {
    pub id: String,
    pub topic: String,
    pub sentences: Vec<String>,
    pub deviant_index: usize,
}

impl OddballItem {
    pub fn prompt(&self) -> String {
        self.sentences.join(" ")
    }

    /// Assemble an item from seven topic sentences and one deviant, inserting
    /// the deviant at a seeded uniform position in 2..=7.
    pub fn assemble(
        id: impl Into<String>,
        topic: impl Into<String>,
        topic_sentences: [String; 7],
        deviant: String,
        rng: &mut ChaCha8Rng,
    ) -> OddballItem {
        let deviant_index = 2 + rng.random_range(0..6); // 1-based position in [2,7]
        let mut sentences: Vec<String> = topic_sentences.to_vec();
        sentences.insert(deviant_index - 1, deviant);
        OddballItem { id: id.into(), topic: topic.into(), sentences, deviant_index }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.sentences.len() != 8 {
            return Err(ConfigError::InfeasibleSequence(format!(
                "oddball item `{}` has {} sentences, expected 8",
                self.id,
                self.sentences.len()
            )));
        }
        if !(2..=7).contains(&self.deviant_index) {
            return Err(ConfigError::InfeasibleSequence(format!(
                "oddball item `{}` deviant_index {} outside 2..=7",
                self.id, self.deviant_index
            )));
        }
        Ok(())
    }
}

const BUILTIN_CORPUS: &str = include_str!("../../assets/oddball_corpus.jsonl");

/// The ten shipped stimulus sets.
pub fn builtin_corpus() -> Vec<OddballItem> {
    parse_corpus(BUILTIN_CORPUS).expect("built-in corpus is well-formed")
}

pub fn parse_corpus(text: &str) -> Result<Vec<OddballItem>, ConfigError> {
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: OddballItem = serde_json::from_str(line).map_err(|e| {
            ConfigError::InfeasibleSequence(format!("corpus line {}: {e}", i + 1))
        })?;
        item.validate()?;
        items.push(item);
    }
    if items.is_empty() {
        return Err(ConfigError::InfeasibleSequence("corpus holds no items".into()));
    }
    Ok(items)
}

pub fn load_corpus(path: &Path) -> Result<Vec<OddballItem>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ConfigError::InfeasibleSequence(format!("cannot read corpus {}: {e}", path.display()))
    })?;
    parse_corpus(&text)
}

/// Words that end with a period without ending a sentence.
const ABBREVIATIONS: &[&str] = &[
    "e.g", "i.e", "etc", "vs", "dr", "mr", "mrs", "ms", "prof", "st", "no", "cf", "al",
];

/// Split free text into sentences on terminal punctuation, guarding against
/// common abbreviations and decimal points. Text without a terminator comes
/// back as a single sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;

    for i in 0..chars.len() {
        let c = chars[i];
        if c != '.' && c != '!' && c != '?' {
            continue;
        }
        // Decimal point or intra-number punctuation: digit on both sides.
        if c == '.'
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit())
        {
            continue;
        }
        // Abbreviation guard: the word ending here is a known abbreviation.
        if c == '.' {
            let mut w = i;
            while w > start && (chars[w - 1].is_alphanumeric() || chars[w - 1] == '.') {
                w -= 1;
            }
            let word: String = chars[w..i].iter().collect::<String>().to_lowercase();
            if ABBREVIATIONS.contains(&word.as_str()) {
                continue;
            }
        }
        // Sentence ends only when followed by whitespace or end of text.
        let next = chars.get(i + 1);
        if next.is_none() || next.is_some_and(|n| n.is_whitespace()) {
            let sentence: String = chars[start..=i].iter().collect::<String>().trim().to_string();
            if !sentence.is_empty() {
                sentences.push(sentence);
            }
            start = i + 1;
        }
    }

    let tail: String = chars[start.min(chars.len())..].iter().collect::<String>().trim().to_string();
    if !tail.is_empty() {
        sentences.push(tail);
    }
    if sentences.is_empty() && !text.trim().is_empty() {
        sentences.push(text.trim().to_string());
    }
    sentences
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurpriseScore {
    pub per_sentence: Vec<f64>,
    pub max_similarity: f64,
    /// 100 x max similarity, clamped to [0, 100].
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_label: Option<u8>,
}

/// Highest cosine similarity between any sentence of `response` and the
/// canonical surprise sentence, scaled to 0-100.
pub fn score_surprise(
    response: &str,
    standard_sentence: &str,
    embedder: &dyn Embedder,
) -> Result<SurpriseScore, EmbedError> {
    let sentences = split_sentences(response);
    let mut inputs = vec![standard_sentence.to_string()];
    inputs.extend(sentences.iter().cloned());
    let vectors = embedder.embed(&inputs)?;
    let standard = &vectors[0];
    let per_sentence: Vec<f64> = vectors[1..].iter().map(|v| cosine(standard, v)).collect();
    let max_similarity = per_sentence.iter().copied().fold(f64::NAN, f64::max);
    let max_similarity = if max_similarity.is_nan() { 0.0 } else { max_similarity };
    Ok(SurpriseScore {
        per_sentence,
        max_similarity,
        score: (100.0 * max_similarity).clamp(0.0, 100.0),
        human_label: None,
    })
}

/// Pearson correlation between automated scores and human labels after
/// averaging consecutive groups of `aggregation` items.
pub fn validate_scoring(
    auto_scores: &[f64],
    human_labels: &[f64],
    aggregation: usize,
) -> Result<f64, AnalysisError> {
    assert_eq!(auto_scores.len(), human_labels.len(), "paired data required");
    let group = aggregation.max(1);
    let means = |xs: &[f64]| -> Vec<f64> {
        xs.chunks(group)
            .filter(|c| c.len() == group)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    };
    let a = means(auto_scores);
    let h = means(human_labels);
    if a.len() < 2 {
        return Err(AnalysisError::TooFewPoints { needed: 2, got: a.len() });
    }
    Ok(pearson(&a, &h))
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

const SYSTEM_PROMPT: &str = "You are playing a game and will be presented with a sequence of sentences about a specific topic. Just make some short comments on the material.";

/// Text adapter: one turn per corpus item, no feedback.
pub struct OddballEnv {
    items: Arc<Vec<OddballItem>>,
    config: TaskConfig,
    seed: u64,
    embedder: Arc<dyn Embedder>,
    standard_sentence: String,
    responses: Vec<String>,
    shown: usize,
}

impl OddballEnv {
    pub fn new(
        mut config: TaskConfig,
        seed: u64,
        items: Arc<Vec<OddballItem>>,
        embedder: Arc<dyn Embedder>,
    ) -> Result<Self, ConfigError> {
        if items.is_empty() {
            return Err(ConfigError::InfeasibleSequence("corpus holds no items".into()));
        }
        // The corpus defines the session length.
        config.trials = items.len();
        let standard_sentence = config
            .standard_sentence
            .clone()
            .unwrap_or_else(|| DEFAULT_STANDARD_SENTENCE.to_string());
        Ok(OddballEnv {
            items,
            config,
            seed,
            embedder,
            standard_sentence,
            responses: Vec::new(),
            shown: 0,
        })
    }

    pub fn standard_sentence(&self) -> &str {
        &self.standard_sentence
    }

    fn item_scores(&self) -> Vec<Option<f64>> {
        self.responses
            .iter()
            .map(|response| {
                if response.is_empty() {
                    return Some(0.0);
                }
                match score_surprise(response, &self.standard_sentence, self.embedder.as_ref()) {
                    Ok(s) => Some(s.score),
                    Err(e) => {
                        log::warn!("oddball item unscored: {e}");
                        None
                    }
                }
            })
            .collect()
    }
}

impl TextEnvironment for OddballEnv {
    fn task_id(&self) -> TaskId {
        TaskId::Oddball
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
        self.items.len()
    }

    fn next_prompt(&mut self) -> String {
        let prompt = self.items[self.shown].prompt();
        self.shown += 1;
        prompt
    }

    fn options(&self) -> Vec<String> {
        Vec::new()
    }

    fn parse_action(&self, raw: &str) -> Option<String> {
        let trimmed = raw.trim();
        (!trimmed.is_empty()).then(|| trimmed.to_string())
    }

    fn fallback_action(&self) -> String {
        String::new()
    }

    fn retry_prompt(&self) -> String {
        "Please make a short comment on the material.".to_string()
    }

    fn step(&mut self, action: &str) -> Result<String, UnknownAction> {
        self.responses.push(action.to_string());
        Ok(String::new())
    }

    fn score(&self) -> Result<TaskScore, String> {
        let scores = self.item_scores();
        let scored: Vec<f64> = scores.iter().filter_map(|s| *s).collect();
        let unscored = scores.len() - scored.len();
        if unscored > 0 {
            log::warn!("{unscored} oddball item(s) excluded from the session mean");
        }
        let mean = if scored.is_empty() {
            0.0
        } else {
            scored.iter().sum::<f64>() / scored.len() as f64
        };
        Ok(TaskScore::new(TaskId::Oddball, mean)
            .with("items_scored", scored.len() as f64)
            .with("items_unscored", unscored as f64))
    }

    fn behavior(&self) -> BehaviorProfile {
        BehaviorProfile::Oddball {
            item_scores: self.item_scores(),
            embedder: self.embedder.id().to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashEmbedder;

    #[test]
    fn builtin_corpus_is_valid() {
        let corpus = builtin_corpus();
        assert_eq!(corpus.len(), 10);
        for item in &corpus {
            item.validate().unwrap();
            assert_eq!(item.sentences.len(), 8);
        }
        // The stock example keeps its deviant at position 5.
        let wall = &corpus[0];
        assert_eq!(wall.id, "great-wall");
        assert_eq!(wall.sentences[wall.deviant_index - 1], "Bananas are rich in potassium.");
    }

    #[test]
    fn splits_on_terminal_punctuation() {
        assert_eq!(split_sentences("A. B! C?"), vec!["A.", "B!", "C?"]);
    }

    #[test]
    fn splits_annotated_example_fragment() {
        let text = "wait, what's with the bananas? That seems out of place.";
        assert_eq!(
            split_sentences(text),
            vec!["wait, what's with the bananas?", "That seems out of place."]
        );
    }

    #[test]
    fn unterminated_text_is_one_sentence() {
        assert_eq!(split_sentences("no punctuation"), vec!["no punctuation"]);
    }

    #[test]
    fn guards_abbreviations_and_decimals() {
        assert_eq!(
            split_sentences("It weighs 3.5 tons. Really!"),
            vec!["It weighs 3.5 tons.", "Really!"]
        );
        assert_eq!(
            split_sentences("Some parts, e.g. the east gate, are closed. True."),
            vec!["Some parts, e.g. the east gate, are closed.", "True."]
        );
    }

    #[test]
    fn identical_response_scores_100() {
        let embedder = HashEmbedder::default();
        let s = score_surprise(DEFAULT_STANDARD_SENTENCE, DEFAULT_STANDARD_SENTENCE, &embedder)
            .unwrap();
        assert!((s.score - 100.0).abs() < 1e-6);
    }

    #[test]
    fn unrelated_response_scores_zero() {
        let embedder = HashEmbedder::default();
        let s = score_surprise("Glaciers calve icebergs.", DEFAULT_STANDARD_SENTENCE, &embedder)
            .unwrap();
        assert_eq!(s.score, 0.0);
    }

    #[test]
    fn score_is_order_free_and_monotone_in_appends() {
        let embedder = HashEmbedder::default();
        let a = "That seems out of place. The wall is long.";
        let b = "The wall is long. That seems out of place.";
        let sa = score_surprise(a, DEFAULT_STANDARD_SENTENCE, &embedder).unwrap();
        let sb = score_surprise(b, DEFAULT_STANDARD_SENTENCE, &embedder).unwrap();
        assert!((sa.score - sb.score).abs() < 1e-9);

        let extended = format!("{a} Bananas again.");
        let se = score_surprise(&extended, DEFAULT_STANDARD_SENTENCE, &embedder).unwrap();
        assert!(se.score >= sa.score - 1e-9);
    }

    #[test]
    fn assemble_places_deviant_in_range() {
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let item = OddballItem::assemble(
                "t",
                "topic",
                std::array::from_fn(|i| format!("Topic sentence {i}.")),
                "Deviant sentence.".to_string(),
                &mut rng,
            );
            item.validate().unwrap();
            assert_eq!(item.sentences[item.deviant_index - 1], "Deviant sentence.");
        }
    }

    #[test]
    fn pearson_is_affine_invariant() {
        let auto: Vec<f64> = (0..40).map(|i| f64::from(i)).collect();
        let labels: Vec<f64> = auto.iter().map(|v| 3.0 * v + 7.0).collect();
        let r = validate_scoring(&auto, &labels, 10).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_aggregated_points_errors() {
        let xs = vec![1.0; 10];
        assert!(validate_scoring(&xs, &xs, 10).is_err());
    }

    #[test]
    fn shuffled_labels_decorrelate() {
        use rand::seq::SliceRandom;
        use rand_chacha::rand_core::SeedableRng;
        // Permutation oracle: with labels shuffled, |r| should be small on
        // almost all permutations; record the 95th percentile.
        let auto: Vec<f64> = (0..200).map(|i| f64::from(i % 4)).collect();
        let labels = auto.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut magnitudes = Vec::new();
        for _ in 0..1000 {
            let mut shuffled = labels.clone();
            shuffled.shuffle(&mut rng);
            magnitudes.push(validate_scoring(&auto, &shuffled, 10).unwrap().abs());
        }
        magnitudes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let p95 = magnitudes[949];
        assert!(p95 < 0.6, "permutation 95th percentile {p95}");
        let r_true = validate_scoring(&auto, &labels, 10).unwrap();
        assert!((r_true - 1.0).abs() < 1e-12);
    }
}
