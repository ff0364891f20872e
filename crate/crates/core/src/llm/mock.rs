//! Offline providers.
//!
//! [`MockProvider`] derives its output entirely from a SHA-256 of the prompt,
//! so identical requests give identical text in every process. Summary
//! prompts get 210 words, quiz prompts get ten well-formed questions in the
//! marker format, chat prompts get an answer quoting the supplied data.
//! [`ScriptedProvider`] replays a fixed list of outcomes for failure tests.

use std::collections::{BTreeSet, VecDeque};
use std::sync::Mutex;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::templates::data_slot;
use super::{CompletionProvider, CompletionRequest, PromptKind, ProviderError};

pub const MOCK_SUMMARY_WORDS: usize = 210;
pub const MOCK_QUIZ_QUESTIONS: usize = 10;

const FALLBACK_VOCABULARY: &[&str] = &[
    "culture",
    "tradition",
    "festival",
    "heritage",
    "custom",
    "music",
    "cuisine",
    "language",
    "history",
    "community",
    "ceremony",
    "craft",
    "region",
    "etiquette",
    "family",
    "season",
];

#[derive(Debug, Clone, Default)]
pub struct MockProvider;

impl MockProvider {
    pub fn new() -> Self {
        MockProvider
    }

    fn rng_for(prompt: &str) -> ChaCha8Rng {
        let digest = Sha256::digest(prompt.as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest[..32]);
        ChaCha8Rng::from_seed(seed)
    }
}

/// Distinct lowercase words of at least three letters, first-seen order.
fn vocabulary(text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut words = Vec::new();
    for word in text
        .split(|c: char| !c.is_alphabetic())
        .filter(|w| w.chars().count() >= 3)
    {
        let word = word.to_lowercase();
        if seen.insert(word.clone()) {
            words.push(word);
        }
    }
    for extra in FALLBACK_VOCABULARY {
        if words.len() >= 8 {
            break;
        }
        if seen.insert(extra.to_string()) {
            words.push(extra.to_string());
        }
    }
    words
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn summary_text(rng: &mut ChaCha8Rng, vocab: &[String]) -> String {
    let mut sentences = Vec::new();
    let mut remaining = MOCK_SUMMARY_WORDS;
    while remaining > 0 {
        let len = rng.random_range(8..=15).min(remaining);
        let words: Vec<&str> = (0..len)
            .map(|_| vocab.choose(rng).map(String::as_str).unwrap_or("culture"))
            .collect();
        sentences.push(format!("{}.", capitalize(&words.join(" "))));
        remaining -= len;
    }
    sentences.join(" ")
}

fn quiz_text(rng: &mut ChaCha8Rng, vocab: &[String]) -> String {
    let mut out = String::new();
    for n in 1..=MOCK_QUIZ_QUESTIONS {
        let mut picks: Vec<&String> = vocab.iter().collect();
        picks.shuffle(rng);
        let topic = picks[0];
        let options: Vec<&String> = picks.iter().skip(1).take(4).copied().collect();
        let answer = rng.random_range(1..=4);
        out.push_str(&format!(
            "*Question :** {n}. Which idea does the material connect with {topic}?\n"
        ));
        for option in &options {
            out.push_str(&format!("*Option :** {}\n", capitalize(option)));
        }
        out.push_str(&format!("*Answer :** {answer}\n\n"));
    }
    out
}

fn chat_text(rng: &mut ChaCha8Rng, data: &str) -> String {
    let words: Vec<&str> = data.split_whitespace().collect();
    if words.is_empty() {
        return "The provided data does not contain an answer.".to_string();
    }
    let span = words.len().min(40);
    let start = rng.random_range(0..=words.len() - span);
    format!(
        "According to the provided data: {}",
        words[start..start + span].join(" ")
    )
}

impl CompletionProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let mut rng = Self::rng_for(&request.prompt);
        let data = data_slot(request.provenance, &request.prompt).unwrap_or(&request.prompt);
        let text = match request.provenance {
            PromptKind::Summary => summary_text(&mut rng, &vocabulary(data)),
            PromptKind::Quiz => quiz_text(&mut rng, &vocabulary(data)),
            PromptKind::Chat => chat_text(&mut rng, data),
        };
        Ok(text)
    }
}

/// Replays queued outcomes in order, repeating the last one when exhausted.
pub struct ScriptedProvider {
    script: Mutex<VecDeque<Result<String, ProviderError>>>,
    last: Mutex<Option<Result<String, ProviderError>>>,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedProvider {
    pub fn new(script: Vec<Result<String, ProviderError>>) -> Self {
        ScriptedProvider {
            script: Mutex::new(script.into()),
            last: Mutex::new(None),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> usize {
        self.prompts.lock().unwrap().len()
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }
}

impl CompletionProvider for ScriptedProvider {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        self.prompts.lock().unwrap().push(request.prompt.clone());
        let mut last = self.last.lock().unwrap();
        if let Some(next) = self.script.lock().unwrap().pop_front() {
            *last = Some(next);
        }
        last.clone().unwrap_or_else(|| {
            Err(ProviderError::Rejected {
                status: 500,
                message: "empty script".into(),
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::templates::{render_chat_prompt, render_quiz_prompt, render_summary_prompt};

    fn request(kind: PromptKind, prompt: String) -> CompletionRequest {
        CompletionRequest {
            prompt,
            model_name: "m".into(),
            max_tokens: 100,
            temperature: 0.2,
            provenance: kind,
        }
    }

    #[test]
    fn summary_has_fixed_word_count_and_is_deterministic() {
        let prompt = render_summary_prompt("Tea ceremonies in Kyoto follow seasonal etiquette.", "").unwrap();
        let a = MockProvider
            .complete(&request(PromptKind::Summary, prompt.clone()))
            .unwrap();
        let b = MockProvider.complete(&request(PromptKind::Summary, prompt)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.split_whitespace().count(), MOCK_SUMMARY_WORDS);
    }

    #[test]
    fn quiz_has_ten_marker_blocks() {
        let prompt = render_quiz_prompt("Sushi and ramen are popular Japanese dishes.").unwrap();
        let text = MockProvider.complete(&request(PromptKind::Quiz, prompt)).unwrap();
        assert_eq!(text.matches("*Question :**").count(), 10);
        assert_eq!(text.matches("*Option :**").count(), 40);
        assert_eq!(text.matches("*Answer :**").count(), 10);
    }

    #[test]
    fn chat_quotes_the_context() {
        let prompt = render_chat_prompt(&["Diwali is the festival of lights"], "What is Diwali?").unwrap();
        let text = MockProvider.complete(&request(PromptKind::Chat, prompt)).unwrap();
        assert_eq!(text, "According to the provided data: Diwali is the festival of lights");
    }

    #[test]
    fn scripted_repeats_last() {
        let p = ScriptedProvider::new(vec![Ok("a".into()), Ok("b".into())]);
        let r = request(PromptKind::Chat, "x".into());
        assert_eq!(p.complete(&r).unwrap(), "a");
        assert_eq!(p.complete(&r).unwrap(), "b");
        assert_eq!(p.complete(&r).unwrap(), "b");
        assert_eq!(p.calls(), 3);
    }
}
