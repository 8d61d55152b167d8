use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::store::{load_folder, read_folder, render_events, write_atomic, EVENTS_FILE};
use super::{
    image_file_name, ActionKind, Emotion, EmotionSet, EventRecord, MemoryError, MemoryFolder,
    Result, FEED_RESPONSE, STATUS_FAILED, STATUS_NONE, STATUS_SUCCESS, TOY_SUCCESS_THRESHOLD,
};
use crate::providers::Translator;

/// Emotions stored on toy-play and feed records that arrive without an
/// accompanying chat to take the emotion from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecordingPolicy {
    pub toy_success_emotion: String,
    pub toy_failed_emotion: String,
    pub feed_emotion: String,
}

impl Default for RecordingPolicy {
    fn default() -> Self {
        RecordingPolicy {
            toy_success_emotion: "happy".into(),
            toy_failed_emotion: "sad".into(),
            feed_emotion: "happy".into(),
        }
    }
}

/// A chat exchange that belongs to a toy-play or feed moment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatInput {
    pub speech: String,
    pub response: String,
    pub emotion: String,
    /// Camera frame for the chat; the action's image is reused when absent.
    pub image: Option<Vec<u8>>,
}

impl ChatInput {
    pub fn new(
        speech: impl Into<String>,
        response: impl Into<String>,
        emotion: impl Into<String>,
    ) -> Self {
        ChatInput {
            speech: speech.into(),
            response: response.into(),
            emotion: emotion.into(),
            image: None,
        }
    }
}

/// Records appended by one toy-play or feed call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Appended {
    pub action: EventRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chat: Option<EventRecord>,
}

impl Appended {
    /// Both records in event-number order.
    pub fn records(&self) -> Vec<&EventRecord> {
        let mut all: Vec<&EventRecord> = std::iter::once(&self.action).chain(&self.chat).collect();
        all.sort_by_key(|r| r.event_number);
        all
    }
}

/// A session folder open for writing. Single writer: callers that share a
/// session across threads must serialize access themselves.
pub struct Session {
    dir: PathBuf,
    folder: MemoryFolder,
    emotions: EmotionSet,
    policy: RecordingPolicy,
    translator: Option<Arc<dyn Translator>>,
    open: bool,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("dir", &self.dir)
            .field("records", &self.folder.records.len())
            .field("open", &self.open)
            .finish()
    }
}

impl Session {
    /// Creates `<root>/<date>` with an empty events file. A folder that
    /// already holds events is a conflict.
    pub fn create(root: &Path, date: NaiveDate, emotions: EmotionSet) -> Result<Self> {
        let folder = MemoryFolder::new(date);
        let dir = root.join(folder.folder_name());
        if dir.join(EVENTS_FILE).exists() {
            let existing = read_folder(&dir)?;
            if !existing.records.is_empty() {
                return Err(MemoryError::Conflict(format!(
                    "{} already holds {} events",
                    dir.display(),
                    existing.records.len()
                )));
            }
        }
        fs::create_dir_all(&dir).map_err(|e| MemoryError::io(&dir, e))?;
        write_atomic(&dir.join(EVENTS_FILE), &render_events(&folder))?;
        let images = read_folder(&dir)?.images;
        Ok(Session {
            dir,
            folder: MemoryFolder { images, ..folder },
            emotions,
            policy: RecordingPolicy::default(),
            translator: None,
            open: true,
        })
    }

    /// Reopens an existing, valid session folder for appending.
    pub fn resume(dir: &Path, emotions: EmotionSet) -> Result<Self> {
        let folder = load_folder(dir, &emotions)?;
        Ok(Session {
            dir: dir.to_path_buf(),
            folder,
            emotions,
            policy: RecordingPolicy::default(),
            translator: None,
            open: true,
        })
    }

    pub fn with_policy(mut self, policy: RecordingPolicy) -> Result<Self> {
        for label in [
            &policy.toy_success_emotion,
            &policy.toy_failed_emotion,
            &policy.feed_emotion,
        ] {
            self.emotions.get(label)?;
        }
        self.policy = policy;
        Ok(self)
    }

    /// Speech is passed through `translator` before it is stored.
    pub fn with_translator(mut self, translator: Arc<dyn Translator>) -> Self {
        self.translator = Some(translator);
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn folder(&self) -> &MemoryFolder {
        &self.folder
    }

    pub fn emotions(&self) -> &EmotionSet {
        &self.emotions
    }

    pub fn policy(&self) -> &RecordingPolicy {
        &self.policy
    }

    pub fn is_open(&self) -> bool {
        self.open
    }

    /// Closes the session. Returns `false` if it was already closed.
    pub fn close(&mut self) -> bool {
        std::mem::replace(&mut self.open, false)
    }

    pub fn record_chat(
        &mut self,
        speech: &str,
        response: &str,
        emotion: &str,
        image: &[u8],
    ) -> Result<EventRecord> {
        self.ensure_open()?;
        let record = self.chat_record(
            self.folder.max_event_number() + 1,
            speech,
            response,
            emotion,
        )?;
        self.commit(vec![(record.clone(), image)])?;
        Ok(record)
    }

    pub fn record_toy_play(
        &mut self,
        toy_name: &str,
        classification_probability: f64,
        pre_grab_image: &[u8],
        accompanying_chat: Option<ChatInput>,
    ) -> Result<Appended> {
        self.ensure_open()?;
        let toy_name = non_empty("object_name", toy_name)?;
        if !(0.0..=1.0).contains(&classification_probability) {
            return Err(MemoryError::validation(
                "classification_probability",
                format!("{classification_probability} is outside [0, 1]"),
            ));
        }
        let success = classification_probability > TOY_SUCCESS_THRESHOLD;
        let next = self.folder.max_event_number() + 1;

        let chat = accompanying_chat
            .as_ref()
            .map(|c| self.chat_record(next + 1, &c.speech, &c.response, &c.emotion))
            .transpose()?;
        let emotion = match &chat {
            Some(c) => c.emotion.clone(),
            None if success => self.emotions.get(&self.policy.toy_success_emotion)?,
            None => self.emotions.get(&self.policy.toy_failed_emotion)?,
        };
        let action = EventRecord {
            event_number: next,
            action: ActionKind::ToyPlay,
            human_speech: chat
                .as_ref()
                .map(|c| c.human_speech.clone())
                .unwrap_or_default(),
            robot_response: chat
                .as_ref()
                .map(|c| c.robot_response.clone())
                .unwrap_or_default(),
            object_name: Some(toy_name.to_string()),
            event_status: Some(
                if success {
                    STATUS_SUCCESS
                } else {
                    STATUS_FAILED
                }
                .to_string(),
            ),
            image_file: image_file_name(next, ActionKind::ToyPlay, &emotion),
            emotion,
        };

        let mut writes = vec![(action.clone(), pre_grab_image)];
        if let (Some(record), Some(input)) = (&chat, &accompanying_chat) {
            writes.push((
                record.clone(),
                input.image.as_deref().unwrap_or(pre_grab_image),
            ));
        }
        self.commit(writes)?;
        Ok(Appended { action, chat })
    }

    pub fn record_feed(
        &mut self,
        food_tag: &str,
        touch_image: &[u8],
        accompanying_chat: Option<ChatInput>,
    ) -> Result<Appended> {
        self.ensure_open()?;
        let food_tag = non_empty("object_name", food_tag)?;
        let next = self.folder.max_event_number() + 1;

        // the chat that led up to the feeding is stored first
        let chat = accompanying_chat
            .as_ref()
            .map(|c| self.chat_record(next, &c.speech, &c.response, &c.emotion))
            .transpose()?;
        let number = if chat.is_some() { next + 1 } else { next };
        let emotion = match &chat {
            Some(c) => c.emotion.clone(),
            None => self.emotions.get(&self.policy.feed_emotion)?,
        };
        let action = EventRecord {
            event_number: number,
            action: ActionKind::Feed,
            human_speech: chat
                .as_ref()
                .map(|c| c.human_speech.clone())
                .unwrap_or_default(),
            robot_response: FEED_RESPONSE.to_string(),
            object_name: Some(food_tag.to_string()),
            event_status: Some(STATUS_NONE.to_string()),
            image_file: image_file_name(number, ActionKind::Feed, &emotion),
            emotion,
        };

        let mut writes = Vec::new();
        if let (Some(record), Some(input)) = (&chat, &accompanying_chat) {
            writes.push((
                record.clone(),
                input.image.as_deref().unwrap_or(touch_image),
            ));
        }
        writes.push((action.clone(), touch_image));
        self.commit(writes)?;
        Ok(Appended { action, chat })
    }

    fn ensure_open(&self) -> Result<()> {
        if self.open {
            Ok(())
        } else {
            Err(MemoryError::Closed)
        }
    }

    fn chat_record(
        &self,
        event_number: u32,
        speech: &str,
        response: &str,
        emotion: &str,
    ) -> Result<EventRecord> {
        let speech = non_empty("human_speech", speech)?;
        let emotion: Emotion = self.emotions.get(emotion)?;
        let speech = match &self.translator {
            Some(t) => t
                .translate(speech)
                .map_err(|e| MemoryError::validation("human_speech", e.to_string()))?,
            None => speech.to_string(),
        };
        Ok(EventRecord {
            event_number,
            action: ActionKind::Chat,
            image_file: image_file_name(event_number, ActionKind::Chat, &emotion),
            emotion,
            human_speech: speech,
            robot_response: response.to_string(),
            object_name: None,
            event_status: None,
        })
    }

    /// Writes images, then the events file. On any failure the images
    /// written so far are removed and the in-memory folder is untouched.
    fn commit(&mut self, writes: Vec<(EventRecord, &[u8])>) -> Result<()> {
        let mut next = self.folder.clone();
        let mut written: Vec<PathBuf> = Vec::new();
        let outcome = (|| {
            for (record, image) in &writes {
                let path = self.dir.join(&record.image_file);
                let existed = path.exists();
                write_atomic(&path, image)?;
                if !existed {
                    written.push(path);
                }
                next.images.insert(record.image_file.clone());
                next.records.push(record.clone());
            }
            next.records.sort_by_key(|r| r.event_number);
            write_atomic(&self.dir.join(EVENTS_FILE), &render_events(&next))
        })();
        match outcome {
            Ok(()) => {
                self.folder = next;
                Ok(())
            }
            Err(e) => {
                for path in written {
                    let _ = fs::remove_file(path);
                }
                Err(e)
            }
        }
    }
}

fn non_empty<'a>(field: &str, value: &'a str) -> Result<&'a str> {
    if value.trim().is_empty() {
        Err(MemoryError::validation(field, "must not be empty"))
    } else {
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::{parse_date, validate_folder};

    fn session(tmp: &Path) -> Session {
        Session::create(
            tmp,
            parse_date("2022-12-12").unwrap(),
            EmotionSet::default(),
        )
        .unwrap()
    }

    #[test]
    fn first_chat_in_empty_session() {
        let tmp = tempfile::tempdir().unwrap();
        let mut s = session(tmp.path());
        let r = s.record_chat("Hello!", "😊", "happy", b"img").unwrap();
        assert_eq!(r.event_number, 1);
        assert_eq!(r.action, ActionKind::Chat);
        assert_eq!(r.emotion.as_str(), "happy");
        assert_eq!(r.image_file, "001_0_happy.png");
        assert!(s.dir().join("001_0_happy.png").is_file());
        assert_eq!(s.dir(), tmp.path().join("2022-12-12"));
    }

    #[test]
    fn chat_numbering_continues_from_previous_max() {
        let tmp = tempfile::tempdir().unwrap();
        let mut s = session(tmp.path());
        for i in 0..34 {
            s.record_chat(&format!("line {i}"), "🙂", "neutral", b"x")
                .unwrap();
        }
        let r = s
            .record_chat("Was the fish good?", "😋", "happy", b"x")
            .unwrap();
        assert_eq!(r.event_number, 35);
        assert_eq!(r.human_speech, "Was the fish good?");
    }

    #[test]
    fn unknown_emotion_and_empty_speech_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let mut s = session(tmp.path());
        assert!(matches!(
            s.record_chat("hi", "😊", "ecstatic", b"x"),
            Err(MemoryError::Validation { .. })
        ));
        assert!(matches!(
            s.record_chat("  ", "😊", "happy", b"x"),
            Err(MemoryError::Validation { .. })
        ));
        assert!(s.folder().records.is_empty());
    }

    #[test]
    fn toy_play_threshold_is_strict() {
        let tmp = tempfile::tempdir().unwrap();
        let mut s = session(tmp.path());
        let dice = s.record_toy_play("dice", 0.85, b"x", None).unwrap().action;
        assert_eq!(dice.event_status.as_deref(), Some("success"));
        assert_eq!(dice.object_name.as_deref(), Some("dice"));
        assert_eq!(dice.image_file, "001_1_happy_ball play.png");
        let at = s.record_toy_play("ball", 0.70, b"x", None).unwrap().action;
        assert_eq!(at.event_status.as_deref(), Some("failed"));
        let below = s.record_toy_play("ball", 0.65, b"x", None).unwrap().action;
        assert_eq!(below.event_status.as_deref(), Some("failed"));
        assert!(s.record_toy_play("ball", 1.2, b"x", None).is_err());
        assert!(s.record_toy_play("ball", -0.1, b"x", None).is_err());
        assert!(s.record_toy_play("ball", f64::NAN, b"x", None).is_err());
        assert!(s.record_toy_play("", 0.9, b"x", None).is_err());
    }

    #[test]
    fn toy_play_chat_is_stored_after_the_toy() {
        let tmp = tempfile::tempdir().unwrap();
        let mut s = session(tmp.path());
        let out = s
            .record_toy_play(
                "ball",
                0.9,
                b"x",
                Some(ChatInput::new("Nice catch!", "😊", "happy")),
            )
            .unwrap();
        assert_eq!(out.action.event_number, 1);
        assert_eq!(out.chat.as_ref().unwrap().event_number, 2);
        assert_eq!(out.action.human_speech, "Nice catch!");
        assert!(validate_folder(s.folder(), s.emotions()).is_empty());
    }

    #[test]
    fn feed_records_yummy_and_dummy_status() {
        let tmp = tempfile::tempdir().unwrap();
        let mut s = session(tmp.path());
        let fish = s.record_feed("fish", b"x", None).unwrap().action;
        assert_eq!(fish.object_name.as_deref(), Some("fish"));
        assert_eq!(fish.event_status.as_deref(), Some("none"));
        assert_eq!(fish.robot_response, "yummy");
        assert_eq!(fish.image_file, "001_2_happy_feed.png");
        let berry = s.record_feed("strawberry", b"x", None).unwrap().action;
        assert_eq!(berry.object_name.as_deref(), Some("strawberry"));
        assert!(matches!(
            s.record_feed("", b"x", None),
            Err(MemoryError::Validation { .. })
        ));
    }

    #[test]
    fn feed_chat_precedes_the_feed() {
        let tmp = tempfile::tempdir().unwrap();
        let mut s = session(tmp.path());
        s.record_chat("Hello!", "😊", "happy", b"x").unwrap();
        let out = s
            .record_feed(
                "fish",
                b"x",
                Some(ChatInput::new("Was the fish good?", "😋", "curious")),
            )
            .unwrap();
        assert_eq!(out.chat.as_ref().unwrap().event_number, 2);
        assert_eq!(out.action.event_number, 3);
        assert_eq!(out.action.emotion.as_str(), "curious");
        assert_eq!(out.action.human_speech, "Was the fish good?");
        let numbers: Vec<u32> = out.records().iter().map(|r| r.event_number).collect();
        assert_eq!(numbers, [2, 3]);
    }

    #[test]
    fn closed_session_rejects_writes() {
        let tmp = tempfile::tempdir().unwrap();
        let mut s = session(tmp.path());
        assert!(s.close());
        assert!(!s.close());
        assert!(matches!(
            s.record_chat("hi", "😊", "happy", b"x"),
            Err(MemoryError::Closed)
        ));
    }

    #[test]
    fn create_conflicts_when_events_exist() {
        let tmp = tempfile::tempdir().unwrap();
        let mut s = session(tmp.path());
        // an empty session folder may be reopened
        let again = Session::create(
            tmp.path(),
            parse_date("2022-12-12").unwrap(),
            EmotionSet::default(),
        );
        assert!(again.is_ok());
        s.record_chat("hi", "😊", "happy", b"x").unwrap();
        let conflict = Session::create(
            tmp.path(),
            parse_date("2022-12-12").unwrap(),
            EmotionSet::default(),
        );
        assert!(matches!(conflict, Err(MemoryError::Conflict(_))));
    }

    #[test]
    fn storage_failure_leaves_session_unchanged() {
        let tmp = tempfile::tempdir().unwrap();
        let mut s = session(tmp.path());
        s.record_chat("hi", "😊", "happy", b"x").unwrap();
        // a directory in place of the events file makes the final rename fail
        let events = s.dir().join(EVENTS_FILE);
        fs::remove_file(&events).unwrap();
        fs::create_dir(events.join("")).unwrap();
        fs::write(events.join("keep"), b"").unwrap();
        let result = s.record_chat("again", "😊", "happy", b"x");
        assert!(matches!(result, Err(MemoryError::Io { .. })), "{result:?}");
        assert_eq!(s.folder().records.len(), 1);
        assert!(!s.dir().join("002_0_happy.png").exists());
    }

    #[test]
    fn resume_continues_numbering() {
        let tmp = tempfile::tempdir().unwrap();
        let mut s = session(tmp.path());
        s.record_chat("hi", "😊", "happy", b"x").unwrap();
        let mut resumed = Session::resume(s.dir(), EmotionSet::default()).unwrap();
        let r = resumed.record_chat("again", "😊", "happy", b"x").unwrap();
        assert_eq!(r.event_number, 2);
    }
}
