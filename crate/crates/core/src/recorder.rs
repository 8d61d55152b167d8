//! Live recording front end shared by the CLI and the HTTP service: chat
//! messages are classified into a pictogram reply before they are stored,
//! and missing camera frames are replaced by placeholder images.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::emotion::{ClassifierError, IntentRuleSet, PictogramIntent};
use crate::memory::{
    placeholder_image, ActionKind, Appended, ChatInput, Emotion, EventRecord, MemoryError, Session,
    TOY_SUCCESS_THRESHOLD,
};

#[derive(Debug, Error)]
pub enum RecordError {
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// A stored chat together with the robot's reply.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatOutcome {
    pub record: EventRecord,
    pub reply: PictogramIntent,
}

/// Records of one toy-play or feed moment, plus the reply to its chat.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionOutcome {
    pub record: EventRecord,
    pub chat: Option<EventRecord>,
    pub reply: Option<PictogramIntent>,
}

pub struct Recorder {
    session: Session,
    rules: Arc<IntentRuleSet>,
}

impl std::fmt::Debug for Recorder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Recorder")
            .field("session", &self.session)
            .finish()
    }
}

impl Recorder {
    pub fn new(session: Session, rules: Arc<IntentRuleSet>) -> Self {
        Recorder { session, rules }
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn close(&mut self) -> bool {
        self.session.close()
    }

    fn next(&self) -> u32 {
        self.session.folder().max_event_number() + 1
    }

    fn frame(event_number: u32, action: ActionKind, emotion: &Emotion) -> Vec<u8> {
        placeholder_image(event_number, action, emotion, "")
    }

    fn classify(&self, message: &str) -> Result<(PictogramIntent, Emotion), RecordError> {
        Ok(self.rules.classify(message)?)
    }

    pub fn chat(
        &mut self,
        message: &str,
        image: Option<Vec<u8>>,
    ) -> Result<ChatOutcome, RecordError> {
        let (reply, emotion) = self.classify(message)?;
        let image = image.unwrap_or_else(|| Self::frame(self.next(), ActionKind::Chat, &emotion));
        let record = self
            .session
            .record_chat(message, &reply.emoji, emotion.as_str(), &image)?;
        Ok(ChatOutcome { record, reply })
    }

    fn chat_input(
        &self,
        speech: Option<&str>,
    ) -> Result<Option<(ChatInput, PictogramIntent)>, RecordError> {
        speech
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                let (reply, emotion) = self.classify(s)?;
                Ok((
                    ChatInput::new(s, reply.emoji.clone(), emotion.as_str()),
                    reply,
                ))
            })
            .transpose()
    }

    fn outcome(appended: Appended, reply: Option<PictogramIntent>) -> ActionOutcome {
        ActionOutcome {
            record: appended.action,
            chat: appended.chat,
            reply,
        }
    }

    /// A toy play; `speech` is the partner's chat during it, recorded after
    /// the toy-play event.
    pub fn toy_play(
        &mut self,
        toy_name: &str,
        probability: f64,
        image: Option<Vec<u8>>,
        speech: Option<&str>,
    ) -> Result<ActionOutcome, RecordError> {
        let chat = self.chat_input(speech)?;
        let image = match image {
            Some(bytes) => bytes,
            None => {
                let policy = self.session.policy();
                let label = match &chat {
                    Some((input, _)) => input.emotion.clone(),
                    None if probability > TOY_SUCCESS_THRESHOLD => {
                        policy.toy_success_emotion.clone()
                    }
                    None => policy.toy_failed_emotion.clone(),
                };
                Self::frame(self.next(), ActionKind::ToyPlay, &Emotion::new(label))
            }
        };
        let (input, reply) = chat.unzip();
        let appended = self
            .session
            .record_toy_play(toy_name, probability, &image, input)?;
        Ok(Self::outcome(appended, reply))
    }

    /// A feeding; `speech` is the chat that led up to it, recorded before
    /// the feed event.
    pub fn feed(
        &mut self,
        food_tag: &str,
        image: Option<Vec<u8>>,
        speech: Option<&str>,
    ) -> Result<ActionOutcome, RecordError> {
        let chat = self.chat_input(speech)?;
        let image = match image {
            Some(bytes) => bytes,
            None => {
                let (number, label) = match &chat {
                    Some((input, _)) => (self.next() + 1, input.emotion.clone()),
                    None => (self.next(), self.session.policy().feed_emotion.clone()),
                };
                Self::frame(number, ActionKind::Feed, &Emotion::new(label))
            }
        };
        let (input, reply) = chat.unzip();
        let appended = self.session.record_feed(food_tag, &image, input)?;
        Ok(Self::outcome(appended, reply))
    }
}
