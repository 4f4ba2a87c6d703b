//! Iterative concept generation: ask for a batch, keep what is new, feed
//! the accumulated list back into the next prompt.

use std::collections::HashSet;
use std::path::PathBuf;

use faithtrace_core::ConceptSource;
use serde::{Deserialize, Serialize};

use crate::client::{ChatBackend, ChatRequest};
use crate::error::GenError;
use crate::prompt::{render_prompt, PromptMode};

/// Phrases with more words than this are dropped.
pub const MAX_WORDS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub llm_target_count: usize,
    pub vlm_target_count: usize,
    /// Concepts requested per call; informational, the prompt asks for ~10.
    pub batch_size: usize,
    /// Consecutive rounds without a new concept before a phase gives up.
    pub stall_limit: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            llm_target_count: 100,
            vlm_target_count: 30,
            batch_size: 10,
            stall_limit: 3,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.llm_target_count == 0 || self.vlm_target_count == 0 || self.batch_size == 0 {
            return Err(GenError::Config("target counts and batch size must be >= 1".into()));
        }
        if self.stall_limit == 0 {
            return Err(GenError::Config("stall limit must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedConcept {
    pub text: String,
    pub source: PromptMode,
}

impl From<PromptMode> for ConceptSource {
    fn from(m: PromptMode) -> Self {
        match m {
            PromptMode::Llm => ConceptSource::Llm,
            PromptMode::Vlm => ConceptSource::Vlm,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratedBank {
    #[serde(rename = "class")]
    pub class_name: String,
    pub concepts: Vec<GeneratedConcept>,
    /// Rounds (prompts) issued, not counting HTTP retries.
    pub rounds: usize,
    pub requests: usize,
    pub stalled: bool,
    pub warnings: Vec<String>,
    /// Phrases removed by post-processing, with the reason.
    pub filtered: Vec<String>,
}

impl GeneratedBank {
    pub fn texts(&self) -> Vec<String> {
        self.concepts.iter().map(|c| c.text.clone()).collect()
    }
}

/// Bullet items (`- `, `* `, `• `) of a completion.
pub fn parse_bullets(response: &str) -> Result<Vec<String>, GenError> {
    let items: Vec<String> = response
        .lines()
        .filter_map(|line| {
            let line = line.trim();
            ["- ", "* ", "• "]
                .iter()
                .find_map(|marker| line.strip_prefix(marker))
                .map(|rest| rest.trim().trim_end_matches(['.', ',', ';']).trim().to_string())
        })
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        Err(GenError::Parse)
    } else {
        Ok(items)
    }
}

enum Verdict {
    Keep,
    Duplicate,
    ClassName,
    TooLong,
}

fn judge(phrase: &str, class_folded: &str, seen: &HashSet<String>) -> Verdict {
    let folded = phrase.to_lowercase();
    if !class_folded.is_empty() && folded.contains(class_folded) {
        Verdict::ClassName
    } else if phrase.split_whitespace().count() > MAX_WORDS {
        Verdict::TooLong
    } else if seen.contains(&folded) {
        Verdict::Duplicate
    } else {
        Verdict::Keep
    }
}

/// Runs the LLM phase then the VLM phase, each until its target is met or
/// `stall_limit` consecutive rounds add nothing.
///
/// Kept phrases are unique under case folding, never contain the class
/// name, and have at most [`MAX_WORDS`] words. Transport failures abort;
/// unparsable responses are skipped with a warning.
pub fn generate_bank(
    cfg: &GenConfig,
    backend: &mut dyn ChatBackend,
    class_name: &str,
    image: Option<PathBuf>,
) -> Result<GeneratedBank, GenError> {
    cfg.validate()?;
    if class_name.trim().is_empty() {
        return Err(GenError::Config("class name is empty".into()));
    }
    let class_folded = class_name.trim().to_lowercase();
    let mut bank = GeneratedBank {
        class_name: class_name.to_string(),
        ..Default::default()
    };
    let mut seen: HashSet<String> = HashSet::new();

    for (mode, target) in [
        (PromptMode::Llm, cfg.llm_target_count),
        (PromptMode::Vlm, cfg.vlm_target_count),
    ] {
        if mode == PromptMode::Vlm && image.is_none() {
            log::info!("no image given; VLM prompts are sent text-only");
        }
        let mut added = 0;
        let mut idle_rounds = 0;
        while added < target {
            let existing = bank.texts();
            let request = ChatRequest {
                mode,
                prompt: render_prompt(class_name, &existing, mode),
                image: image.clone(),
            };
            bank.rounds += 1;
            let response = backend.complete(&request)?;
            let mut new_this_round = 0;
            match parse_bullets(&response) {
                Ok(phrases) => {
                    for phrase in phrases {
                        if added == target {
                            break;
                        }
                        match judge(&phrase, &class_folded, &seen) {
                            Verdict::Keep => {
                                seen.insert(phrase.to_lowercase());
                                bank.concepts.push(GeneratedConcept {
                                    text: phrase,
                                    source: mode,
                                });
                                added += 1;
                                new_this_round += 1;
                            }
                            Verdict::Duplicate => {}
                            Verdict::ClassName => {
                                log::debug!("dropping {phrase:?}: contains the class name");
                                bank.filtered.push(format!("{phrase} (class name)"));
                            }
                            Verdict::TooLong => {
                                log::debug!("dropping {phrase:?}: more than {MAX_WORDS} words");
                                bank.filtered.push(format!("{phrase} (too long)"));
                            }
                        }
                    }
                }
                Err(e) => {
                    let msg = format!("{mode} round {}: {e}", bank.rounds);
                    log::warn!("{msg}");
                    bank.warnings.push(msg);
                }
            }
            if new_this_round == 0 {
                idle_rounds += 1;
                if idle_rounds >= cfg.stall_limit {
                    let msg = format!(
                        "{mode} phase stalled after {idle_rounds} rounds without new concepts ({added}/{target})"
                    );
                    log::warn!("{msg}");
                    bank.warnings.push(msg);
                    bank.stalled = true;
                    break;
                }
            } else {
                idle_rounds = 0;
            }
        }
    }
    bank.requests = backend.requests_sent();
    Ok(bank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::MockScript;

    fn bullets(items: &[&str]) -> String {
        items.iter().map(|i| format!("- {i}\n")).collect()
    }

    fn cfg(llm: usize, vlm: usize) -> GenConfig {
        GenConfig {
            llm_target_count: llm,
            vlm_target_count: vlm,
            ..Default::default()
        }
    }

    #[test]
    fn parses_bullets() {
        let r = "There are several:\n- long tail\n  * large eyes.\n• gray fur\nnot a bullet\n-\n";
        assert_eq!(parse_bullets(r).unwrap(), vec!["long tail", "large eyes", "gray fur"]);
        assert!(matches!(parse_bullets("no list here"), Err(GenError::Parse)));
    }

    #[test]
    fn passthrough_ten() {
        let ten = [
            "long tail",
            "large eyes",
            "gray fur",
            "trees",
            "branches",
            "forest",
            "black nose",
            "white belly",
            "ringed pattern",
            "leaf cover",
        ];
        let mut mock = MockScript::new(vec![bullets(&ten)]);
        let bank = generate_bank(&cfg(10, 1), &mut mock, "lemur", None).unwrap();
        let llm: Vec<String> = bank
            .concepts
            .iter()
            .filter(|c| c.source == PromptMode::Llm)
            .map(|c| c.text.clone())
            .collect();
        assert_eq!(llm, ten.to_vec());
        assert_eq!(bank.concepts.len(), 10);
        // VLM phase got only empty responses and stalled.
        assert!(bank.stalled);
        assert_eq!(bank.rounds, 1 + 3);
    }

    #[test]
    fn dedupes_case_insensitively() {
        let mut mock = MockScript::new(vec![bullets(&["long tail", "Long Tail", "fur"])]);
        let bank = generate_bank(&cfg(5, 1), &mut mock, "lemur", None).unwrap();
        assert_eq!(bank.texts(), vec!["long tail", "fur"]);
    }

    #[test]
    fn drops_class_name_and_long_phrases() {
        let mut mock = MockScript::new(vec![bullets(&[
            "lemur ears",
            "LEMUR tail",
            "ringed tail",
            "a very long phrase with too many words",
        ])]);
        let bank = generate_bank(&cfg(5, 1), &mut mock, "lemur", None).unwrap();
        assert_eq!(bank.texts(), vec!["ringed tail"]);
        assert_eq!(bank.filtered.len(), 3);
    }

    #[test]
    fn feeds_existing_concepts_back() {
        let mut mock = MockScript::new(vec![bullets(&["a b"]), bullets(&["c d"]), bullets(&["e f"])]);
        let bank = generate_bank(&cfg(2, 1), &mut mock, "cat", None).unwrap();
        assert_eq!(bank.texts(), vec!["a b", "c d", "e f"]);
        assert!(mock.prompts()[0].contains("(DO NOT repeat these): none."));
        assert!(mock.prompts()[1].contains("(DO NOT repeat these): a b."));
        assert!(mock.prompts()[2].contains("(DO NOT repeat these): a b, c d."));
        assert!(mock.prompts()[2].contains("Look at this image carefully"));
        assert_eq!(bank.concepts[2].source, PromptMode::Vlm);
        assert!(!bank.stalled);
    }

    #[test]
    fn truncates_to_target() {
        let mut mock = MockScript::new(vec![bullets(&["a", "b", "c", "d"]), bullets(&["e"])]);
        let bank = generate_bank(&cfg(3, 1), &mut mock, "x", None).unwrap();
        assert_eq!(bank.texts(), vec!["a", "b", "c", "e"]);
    }

    #[test]
    fn stalls_within_limit() {
        let mut mock = MockScript::new(vec![bullets(&["a"]), bullets(&["a"]), "garbage".to_string()]);
        let bank = generate_bank(&cfg(5, 2), &mut mock, "x", None).unwrap();
        assert_eq!(bank.texts(), vec!["a"]);
        // 1 productive + 3 idle LLM rounds, then 3 idle VLM rounds.
        assert_eq!(bank.rounds, 7);
        assert!(bank.stalled);
        assert!(bank.warnings.iter().any(|w| w.contains("no bullet-list")));
    }

    #[test]
    fn fixed_script_is_idempotent() {
        let script = vec![bullets(&["a", "B"]), bullets(&["b", "c"]), "nothing".to_string()];
        let run = || {
            let mut mock = MockScript::new(script.clone());
            generate_bank(&cfg(4, 2), &mut mock, "x", None).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_bad_config() {
        let mut mock = MockScript::default();
        assert!(generate_bank(&cfg(0, 1), &mut mock, "x", None).is_err());
        assert!(generate_bank(&cfg(1, 1), &mut mock, " ", None).is_err());
    }
}
