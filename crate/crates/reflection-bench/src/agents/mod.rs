//! Agent adapters and the pieces every adapter shares: the chat contract,
//! prompting-strategy suffixes, and canonical-token response parsing.

pub mod baseline;
pub mod human;
pub mod remote;

pub use baseline::{build_baseline, BaselineKind};
pub use human::HumanAgent;
pub use remote::{ChatReply, RateLimiter, RemoteAgent, RemoteEndpoint};

use crate::config::{Strategy, TaskId};
use crate::error::AgentError;
use crate::session::ChatMessage;

/// The chat contract every agent satisfies: full message history in,
/// assistant text out. Remote models, scripted baselines, and the human
/// terminal adapter are interchangeable behind it.
pub trait Agent {
    fn name(&self) -> &str;
    fn reply(&mut self, messages: &[ChatMessage]) -> Result<String, AgentError>;
}

/// Suffix appended verbatim to each user prompt; the system prompt is never
/// touched.
pub fn strategy_suffix(strategy: Strategy) -> &'static str {
    match strategy {
        Strategy::Free => "",
        Strategy::Direct => {
            "respond only with your choice directly without outputting any other information or analysis."
        }
        Strategy::Cot => "let's think step by step.",
    }
}

pub fn apply_strategy(user_prompt: &str, strategy: Strategy) -> String {
    let suffix = strategy_suffix(strategy);
    if suffix.is_empty() {
        user_prompt.to_string()
    } else {
        format!("{user_prompt} {suffix}")
    }
}

fn is_boundary(byte: Option<u8>) -> bool {
    match byte {
        None => true,
        Some(b) => !b.is_ascii_alphanumeric(),
    }
}

/// Scan `raw` for token aliases (case-insensitive, word-boundary aware) and
/// return the canonical token of the LAST occurrence — free-form and
/// chain-of-thought replies end with the final answer. Overlapping matches at
/// the same position resolve to the longest alias.
pub fn parse_with_aliases(raw: &str, aliases: &[(&str, &str)]) -> Option<String> {
    let haystack = raw.to_ascii_lowercase();
    let bytes = haystack.as_bytes();
    let mut best: Option<(usize, usize, &str)> = None; // (start, len, canonical)

    for (alias, canonical) in aliases {
        let needle = alias.to_ascii_lowercase();
        let mut from = 0;
        while let Some(pos) = haystack[from..].find(&needle) {
            let start = from + pos;
            let end = start + needle.len();
            let bounded = is_boundary(start.checked_sub(1).map(|i| bytes[i]))
                && is_boundary(bytes.get(end).copied());
            if bounded {
                let better = match best {
                    None => true,
                    Some((s, l, _)) => start > s || (start == s && needle.len() > l),
                };
                if better {
                    best = Some((start, needle.len(), canonical));
                }
            }
            from = start + 1;
        }
    }
    best.map(|(_, _, canonical)| canonical.to_string())
}

/// Canonical tokens only, no aliases.
pub fn parse_with_tokens(raw: &str, tokens: &[String]) -> Option<String> {
    let pairs: Vec<(&str, &str)> = tokens.iter().map(|t| (t.as_str(), t.as_str())).collect();
    parse_with_aliases(raw, &pairs)
}

/// Alias table for a task's default canonical action tokens.
pub fn default_aliases(task: TaskId) -> Vec<(&'static str, &'static str)> {
    match task {
        TaskId::Wpt => vec![("sunny", "sunny"), ("rainy", "rainy")],
        TaskId::Wcst => crate::envs::wcst::default_desk_aliases(),
        TaskId::Oddball => vec![],
        TaskId::Nback => vec![
            ("Yes", "Yes"),
            ("No", "No"),
            ("Not Available", "Not Available"),
        ],
        TaskId::Dcigt => vec![("AAA", "AAA"), ("BBB", "BBB"), ("CCC", "CCC"), ("DDD", "DDD")],
        TaskId::Prlt | TaskId::Mbt => vec![
            ("left arm", "left arm"),
            ("right arm", "right arm"),
            ("left", "left arm"),
            ("right", "right arm"),
        ],
    }
}

/// Extract a canonical action token for `task` from a raw reply. The oddball
/// test has no tokens: any non-empty comment is the action.
pub fn parse_choice(task: TaskId, raw: &str) -> Option<String> {
    if task == TaskId::Oddball {
        let trimmed = raw.trim();
        return (!trimmed.is_empty()).then(|| trimmed.to_string());
    }
    parse_with_aliases(raw, &default_aliases(task))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_suffixes_are_exact() {
        assert_eq!(apply_strategy("Choose an arm.", Strategy::Free), "Choose an arm.");
        assert_eq!(
            apply_strategy("Choose an arm.", Strategy::Direct),
            "Choose an arm. respond only with your choice directly without outputting any other information or analysis."
        );
        assert_eq!(
            apply_strategy("Pick a card.", Strategy::Cot),
            "Pick a card. let's think step by step."
        );
    }

    #[test]
    fn parses_single_token_in_prose() {
        assert_eq!(
            parse_choice(TaskId::Prlt, "I think… therefore left arm."),
            Some("left arm".to_string())
        );
    }

    #[test]
    fn last_occurrence_wins() {
        assert_eq!(
            parse_choice(TaskId::Prlt, "Not right arm — left arm!"),
            Some("left arm".to_string())
        );
        assert_eq!(
            parse_choice(TaskId::Prlt, "I choose left arm. No wait, right arm."),
            Some("right arm".to_string())
        );
    }

    #[test]
    fn absent_when_no_token() {
        assert_eq!(parse_choice(TaskId::Wpt, "The weather will improve"), None);
    }

    #[test]
    fn word_boundaries_respected() {
        // "no" must not match inside "not", nor "AAA" inside "AAAA".
        assert_eq!(parse_choice(TaskId::Nback, "Not Available"), Some("Not Available".to_string()));
        assert_eq!(parse_choice(TaskId::Dcigt, "AAAA"), None);
        assert_eq!(parse_choice(TaskId::Nback, "nope, noisy"), None);
    }

    #[test]
    fn aliases_map_to_canonical() {
        assert_eq!(parse_choice(TaskId::Prlt, "left"), Some("left arm".to_string()));
        assert_eq!(parse_choice(TaskId::Prlt, "RIGHT"), Some("right arm".to_string()));
    }

    #[test]
    fn case_insensitive_with_punctuation() {
        assert_eq!(parse_choice(TaskId::Wpt, "Sunny."), Some("sunny".to_string()));
        assert_eq!(parse_choice(TaskId::Nback, "yes!"), Some("Yes".to_string()));
    }

    #[test]
    fn parsing_is_idempotent() {
        for task in TaskId::ALL {
            for (_, canonical) in default_aliases(task) {
                assert_eq!(parse_choice(task, canonical), Some(canonical.to_string()));
            }
        }
    }

    #[test]
    fn oddball_takes_whole_comment() {
        assert_eq!(
            parse_choice(TaskId::Oddball, "  interesting stuff  "),
            Some("interesting stuff".to_string())
        );
        assert_eq!(parse_choice(TaskId::Oddball, "   "), None);
    }
}
