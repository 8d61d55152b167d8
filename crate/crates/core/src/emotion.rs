//! Chat message → pictogram reply → stored emotion.
//!
//! A rule table names 14 pictogram intents, each with match patterns and
//! the emotion it reduces to. Classification walks the intents in order and
//! returns the first whose patterns hit the message.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::{Emotion, EmotionSet, EMOTION_COUNT};

pub const INTENT_COUNT: usize = 14;

/// The rule table shipped with the crate.
pub const DEFAULT_RULES: &str = include_str!("../config/intents.toml");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClassifierError {
    #[error("invalid intent table: {0}")]
    Config(String),
    #[error("message is empty")]
    EmptyMessage,
    #[error("unknown intent {0:?}")]
    UnknownIntent(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PictogramIntent {
    pub id: String,
    pub emoji: String,
}

#[derive(Debug, Clone, Deserialize)]
struct IntentEntry {
    id: String,
    emoji: String,
    emotion: String,
    #[serde(default)]
    patterns: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    emotions: Vec<String>,
    fallback: String,
    intent: Vec<IntentEntry>,
}

#[derive(Debug, Clone)]
enum Pattern {
    /// Lowercase word sequence matched on token boundaries.
    Phrase(Vec<String>),
    /// Raw substring, for punctuation-only patterns.
    Raw(String),
}

impl Pattern {
    fn parse(text: &str) -> Option<Pattern> {
        let words = tokenize(text);
        if !words.is_empty() {
            Some(Pattern::Phrase(words))
        } else if !text.trim().is_empty() {
            Some(Pattern::Raw(text.trim().to_string()))
        } else {
            None
        }
    }

    fn matches(&self, raw: &str, tokens: &[String]) -> bool {
        match self {
            Pattern::Phrase(words) => tokens.windows(words.len()).any(|w| w == words.as_slice()),
            Pattern::Raw(s) => raw.contains(s.as_str()),
        }
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone)]
struct Rule {
    intent: PictogramIntent,
    emotion: Emotion,
    patterns: Vec<Pattern>,
}

/// Ordered pictogram rules plus the fallback intent. Construction checks
/// the 14-intent / 8-emotion shape and that the reduction attains every
/// emotion.
#[derive(Debug, Clone)]
pub struct IntentRuleSet {
    rules: Vec<Rule>,
    fallback: usize,
    emotions: EmotionSet,
}

impl IntentRuleSet {
    pub fn from_toml(text: &str) -> Result<Self, ClassifierError> {
        let file: RuleFile =
            toml::from_str(text).map_err(|e| ClassifierError::Config(e.to_string()))?;
        let emotions =
            EmotionSet::new(file.emotions).map_err(|e| ClassifierError::Config(e.to_string()))?;

        if file.intent.len() != INTENT_COUNT {
            return Err(ClassifierError::Config(format!(
                "expected {INTENT_COUNT} intents, got {}",
                file.intent.len()
            )));
        }
        let mut ids = BTreeSet::new();
        let mut attained = BTreeSet::new();
        let mut rules = Vec::with_capacity(INTENT_COUNT);
        for entry in file.intent {
            if entry.id.trim().is_empty() || entry.emoji.trim().is_empty() {
                return Err(ClassifierError::Config(
                    "intent id and emoji must be set".into(),
                ));
            }
            if !ids.insert(entry.id.clone()) {
                return Err(ClassifierError::Config(format!(
                    "duplicate intent {:?}",
                    entry.id
                )));
            }
            let emotion = emotions.get(&entry.emotion).map_err(|_| {
                ClassifierError::Config(format!(
                    "intent {:?} reduces to unknown emotion {:?}",
                    entry.id, entry.emotion
                ))
            })?;
            attained.insert(emotion.clone());
            rules.push(Rule {
                intent: PictogramIntent {
                    id: entry.id,
                    emoji: entry.emoji,
                },
                emotion,
                patterns: entry
                    .patterns
                    .iter()
                    .filter_map(|p| Pattern::parse(p))
                    .collect(),
            });
        }
        if attained.len() != EMOTION_COUNT {
            let missing: Vec<&str> = emotions
                .labels()
                .iter()
                .filter(|e| !attained.contains(*e))
                .map(Emotion::as_str)
                .collect();
            return Err(ClassifierError::Config(format!(
                "no intent reduces to {}",
                missing.join(", ")
            )));
        }
        let fallback = rules
            .iter()
            .position(|r| r.intent.id == file.fallback)
            .ok_or_else(|| {
                ClassifierError::Config(format!("fallback {:?} is not an intent", file.fallback))
            })?;
        Ok(IntentRuleSet {
            rules,
            fallback,
            emotions,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, ClassifierError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ClassifierError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn emotions(&self) -> &EmotionSet {
        &self.emotions
    }

    pub fn intents(&self) -> impl Iterator<Item = &PictogramIntent> {
        self.rules.iter().map(|r| &r.intent)
    }

    pub fn fallback(&self) -> &PictogramIntent {
        &self.rules[self.fallback].intent
    }

    pub fn intent(&self, id: &str) -> Option<&PictogramIntent> {
        self.rules.iter().map(|r| &r.intent).find(|i| i.id == id)
    }

    pub fn reduce_to_emotion(&self, intent: &PictogramIntent) -> Result<Emotion, ClassifierError> {
        self.rules
            .iter()
            .find(|r| r.intent.id == intent.id)
            .map(|r| r.emotion.clone())
            .ok_or_else(|| ClassifierError::UnknownIntent(intent.id.clone()))
    }

    pub fn classify(&self, message: &str) -> Result<(PictogramIntent, Emotion), ClassifierError> {
        let message = message.trim();
        if message.is_empty() {
            return Err(ClassifierError::EmptyMessage);
        }
        let raw = message.to_lowercase();
        let tokens = tokenize(message);
        let rule = self
            .rules
            .iter()
            .find(|r| r.patterns.iter().any(|p| p.matches(&raw, &tokens)))
            .unwrap_or(&self.rules[self.fallback]);
        Ok((rule.intent.clone(), rule.emotion.clone()))
    }
}

impl Default for IntentRuleSet {
    fn default() -> Self {
        IntentRuleSet::from_toml(DEFAULT_RULES).expect("shipped intent table is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_table_has_expected_shape() {
        let rules = IntentRuleSet::default();
        assert_eq!(rules.intents().count(), 14);
        let attained: BTreeSet<Emotion> = rules
            .intents()
            .map(|i| rules.reduce_to_emotion(i).unwrap())
            .collect();
        assert_eq!(attained.len(), 8);
        assert_eq!(rules.emotions(), &EmotionSet::default());
    }

    #[test]
    fn glad_message_is_joy() {
        let rules = IntentRuleSet::default();
        let (intent, emotion) = rules.classify("I'm so glad we came!").unwrap();
        assert_eq!(intent.id, "joy");
        assert_eq!(emotion.as_str(), "happy");
    }

    #[test]
    fn joy_reduces_to_happy() {
        let rules = IntentRuleSet::default();
        let joy = rules.intent("joy").unwrap().clone();
        assert_eq!(rules.reduce_to_emotion(&joy).unwrap().as_str(), "happy");
    }

    #[test]
    fn unknown_intent_is_an_error() {
        let rules = IntentRuleSet::default();
        let bogus = PictogramIntent {
            id: "unknown".into(),
            emoji: "?".into(),
        };
        assert_eq!(
            rules.reduce_to_emotion(&bogus),
            Err(ClassifierError::UnknownIntent("unknown".into()))
        );
    }

    #[test]
    fn unmatched_message_uses_fallback() {
        let rules = IntentRuleSet::default();
        let (intent, emotion) = rules.classify("the bus leaves at noon").unwrap();
        assert_eq!(&intent, rules.fallback());
        assert_eq!(emotion.as_str(), "neutral");
    }

    #[test]
    fn empty_message_rejected() {
        let rules = IntentRuleSet::default();
        assert_eq!(rules.classify("   "), Err(ClassifierError::EmptyMessage));
    }

    #[test]
    fn word_patterns_respect_boundaries() {
        let rules = IntentRuleSet::default();
        // "hi" must not fire inside "this"
        let (intent, _) = rules.classify("this way").unwrap();
        assert_ne!(intent.id, "greeting");
        assert_eq!(rules.classify("Hello!").unwrap().0.id, "greeting");
        assert_eq!(
            rules.classify("Was the fish good?").unwrap().0.id,
            "question"
        );
        assert_eq!(rules.classify("WOW").unwrap().0.id, "surprise");
    }

    #[test]
    fn first_rule_wins() {
        let rules = IntentRuleSet::default();
        // matches both greeting and joy; greeting comes first
        assert_eq!(rules.classify("hello, I'm glad").unwrap().0.id, "greeting");
    }

    #[test]
    fn table_validation() {
        let broken = DEFAULT_RULES.replace("fallback = \"acknowledge\"", "fallback = \"nope\"");
        assert!(IntentRuleSet::from_toml(&broken).is_err());
        let no_neutral = DEFAULT_RULES.replace("emotion = \"neutral\"", "emotion = \"happy\"");
        assert!(matches!(
            IntentRuleSet::from_toml(&no_neutral),
            Err(ClassifierError::Config(msg)) if msg.contains("neutral")
        ));
        let thirteen = DEFAULT_RULES.replace(
            "[[intent]]\nid = \"laugh\"",
            "[laugh_removed]\nid = \"laugh\"",
        );
        assert!(IntentRuleSet::from_toml(&thirteen).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn classify_is_deterministic_and_consistent(msg in "[a-zA-Z !?']{1,40}") {
                let rules = IntentRuleSet::default();
                let first = rules.classify(&msg);
                prop_assert_eq!(&first, &rules.classify(&msg));
                if let Ok((intent, emotion)) = first {
                    prop_assert_eq!(rules.reduce_to_emotion(&intent).unwrap(), emotion);
                }
            }
        }
    }
}
