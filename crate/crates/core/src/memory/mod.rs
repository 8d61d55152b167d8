//! On-disk experiential memory: dated session folders holding an
//! `events.json` log plus one image per event.
//!
//! Layout of a session:
//!
//! ```text
//! <root>/<YYYY-MM-DD>/events.json
//! <root>/<YYYY-MM-DD>/001_0_happy.png
//! <root>/<YYYY-MM-DD>/002_1_happy_ball play.png
//! <root>/<YYYY-MM-DD>/004_2_happy_feed.png
//! ```

mod placeholder;
mod session;
mod store;

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use placeholder::placeholder_image;
pub use session::{Appended, ChatInput, RecordingPolicy, Session};
pub use store::{
    check_dir_name, load_folder, read_folder, validate_dir, validate_folder, write_folder, Finding,
    Severity, EVENTS_FILE,
};

/// Probability a toy classification must strictly exceed to count as a grab.
pub const TOY_SUCCESS_THRESHOLD: f64 = 0.7;

/// Status literals stored in `event_status`.
pub const STATUS_SUCCESS: &str = "success";
pub const STATUS_FAILED: &str = "failed";
pub const STATUS_NONE: &str = "none";

/// What the robot says whenever it is fed.
pub const FEED_RESPONSE: &str = "yummy";

pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {} at byte {offset} (line {line}, column {column}): {message}", path.display())]
    Parse {
        path: PathBuf,
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema violation in record {index}, field `{field}`: {message}")]
    Schema {
        index: usize,
        field: String,
        message: String,
    },

    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error("folder failed validation: {}", summarize_findings(.0))]
    Invalid(Vec<Finding>),

    #[error("missing referenced images: {}", .0.join(", "))]
    MissingImages(Vec<String>),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("session is closed")]
    Closed,

    #[error("not found: {}", .0.display())]
    NotFound(PathBuf),
}

impl MemoryError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MemoryError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(field: &str, message: impl Into<String>) -> Self {
        MemoryError::Validation {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

fn summarize_findings(findings: &[Finding]) -> String {
    findings
        .iter()
        .filter(|f| f.severity == Severity::Error)
        .map(|f| f.message.clone())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, MemoryError>;

/// The three kinds of memorized action and their stored codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum ActionKind {
    Chat,
    ToyPlay,
    Feed,
}

impl ActionKind {
    pub const ALL: [ActionKind; 3] = [ActionKind::Chat, ActionKind::ToyPlay, ActionKind::Feed];

    pub fn code(self) -> u8 {
        match self {
            ActionKind::Chat => 0,
            ActionKind::ToyPlay => 1,
            ActionKind::Feed => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ActionKind::Chat),
            1 => Some(ActionKind::ToyPlay),
            2 => Some(ActionKind::Feed),
            _ => None,
        }
    }

    /// Toy play and feed are situation-specific interactions; chat is the
    /// base action that happens throughout a walk.
    pub fn is_additional(self) -> bool {
        !matches!(self, ActionKind::Chat)
    }

    /// Suffix appended to the serial part of the image file name.
    pub fn image_suffix(self) -> &'static str {
        match self {
            ActionKind::Chat => "",
            ActionKind::ToyPlay => "_ball play",
            ActionKind::Feed => "_feed",
        }
    }
}

impl From<ActionKind> for u8 {
    fn from(kind: ActionKind) -> u8 {
        kind.code()
    }
}

impl TryFrom<u8> for ActionKind {
    type Error = String;

    fn try_from(code: u8) -> std::result::Result<Self, Self::Error> {
        ActionKind::from_code(code).ok_or_else(|| format!("unknown action code {code}"))
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionKind::Chat => "chat",
            ActionKind::ToyPlay => "toy play",
            ActionKind::Feed => "feed",
        })
    }
}

/// An emotion label. Membership in the configured set is checked by
/// [`EmotionSet`], not by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Emotion(String);

impl Emotion {
    pub fn new(label: impl Into<String>) -> Self {
        Emotion(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Emotion {
    fn from(s: &str) -> Self {
        Emotion::new(s)
    }
}

pub const EMOTION_COUNT: usize = 8;

pub const DEFAULT_EMOTIONS: [&str; EMOTION_COUNT] = [
    "happy",
    "sad",
    "angry",
    "surprised",
    "scared",
    "disgusted",
    "curious",
    "neutral",
];

/// The closed set of emotion labels a configuration stores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmotionSet {
    labels: Vec<Emotion>,
}

impl EmotionSet {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<Emotion> = labels.into_iter().map(|s| Emotion::new(s)).collect();
        if labels.len() != EMOTION_COUNT {
            return Err(MemoryError::validation(
                "emotions",
                format!("expected {EMOTION_COUNT} labels, got {}", labels.len()),
            ));
        }
        let mut seen = BTreeSet::new();
        for label in &labels {
            let s = label.as_str();
            if s.is_empty() || s.chars().any(|c| c.is_whitespace() || c.is_uppercase()) {
                return Err(MemoryError::validation(
                    "emotions",
                    format!("label {s:?} must be lowercase without whitespace"),
                ));
            }
            if !seen.insert(s) {
                return Err(MemoryError::validation(
                    "emotions",
                    format!("duplicate label {s:?}"),
                ));
            }
        }
        Ok(EmotionSet { labels })
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|e| e.as_str() == label)
    }

    /// Looks up `label`, failing with a validation error when it is not
    /// one of the configured emotions.
    pub fn get(&self, label: &str) -> Result<Emotion> {
        self.labels
            .iter()
            .find(|e| e.as_str() == label)
            .cloned()
            .ok_or_else(|| {
                MemoryError::validation(
                    "emotion",
                    format!("{label:?} is not one of the configured emotions"),
                )
            })
    }

    pub fn labels(&self) -> &[Emotion] {
        &self.labels
    }
}

impl Default for EmotionSet {
    fn default() -> Self {
        EmotionSet::new(DEFAULT_EMOTIONS).expect("default emotion set is valid")
    }
}

/// One memorized moment of a walk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub event_number: u32,
    #[serde(rename = "action_number")]
    pub action: ActionKind,
    pub emotion: Emotion,
    pub human_speech: String,
    pub robot_response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_status: Option<String>,
    pub image_file: String,
}

impl EventRecord {
    /// The image file name this record must carry.
    pub fn expected_image_file(&self) -> String {
        image_file_name(self.event_number, self.action, &self.emotion)
    }
}

/// Serial image name: zero-padded event number, action code, emotion, then
/// the action-specific suffix.
pub fn image_file_name(event_number: u32, action: ActionKind, emotion: &Emotion) -> String {
    format!(
        "{event_number:03}_{}_{}{}.png",
        action.code(),
        emotion,
        action.image_suffix()
    )
}

/// A dated session: the unit the diary pipeline consumes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryFolder {
    pub date: NaiveDate,
    /// Sorted by `event_number`.
    pub records: Vec<EventRecord>,
    /// Image file names present on disk.
    pub images: BTreeSet<String>,
}

impl MemoryFolder {
    pub fn new(date: NaiveDate) -> Self {
        MemoryFolder {
            date,
            records: Vec::new(),
            images: BTreeSet::new(),
        }
    }

    pub fn folder_name(&self) -> String {
        self.date.format(DATE_FORMAT).to_string()
    }

    pub fn record(&self, event_number: u32) -> Option<&EventRecord> {
        self.records.iter().find(|r| r.event_number == event_number)
    }

    pub fn record_for_image(&self, image_file: &str) -> Option<&EventRecord> {
        self.records.iter().find(|r| r.image_file == image_file)
    }

    pub fn max_event_number(&self) -> u32 {
        self.records
            .iter()
            .map(|r| r.event_number)
            .max()
            .unwrap_or(0)
    }

    pub fn additional_records(&self) -> impl Iterator<Item = &EventRecord> {
        self.records.iter().filter(|r| r.action.is_additional())
    }
}

/// A memory folder together with the directory its images live in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredFolder {
    pub dir: PathBuf,
    pub folder: MemoryFolder,
}

impl StoredFolder {
    /// Loads and validates the folder at `dir`.
    pub fn load(dir: &std::path::Path, emotions: &EmotionSet) -> Result<Self> {
        Ok(StoredFolder {
            dir: dir.to_path_buf(),
            folder: load_folder(dir, emotions)?,
        })
    }
}

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, DATE_FORMAT)
        .ok()
        .filter(|d| d.format(DATE_FORMAT).to_string() == s)
        .ok_or_else(|| MemoryError::validation("date", format!("{s:?} is not a YYYY-MM-DD date")))
}
