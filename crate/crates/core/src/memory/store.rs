use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{
    parse_date, ActionKind, EmotionSet, EventRecord, MemoryError, MemoryFolder, Result,
    STATUS_FAILED, STATUS_NONE, STATUS_SUCCESS,
};

pub const EVENTS_FILE: &str = "events.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

/// A single validation observation. Findings are data: validation never
/// fails, it reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    /// Position in the sorted record list, when the finding concerns a record.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_index: Option<usize>,
    pub message: String,
}

impl Finding {
    fn error(field: &str, record_index: Option<usize>, message: impl Into<String>) -> Self {
        Finding {
            severity: Severity::Error,
            field: Some(field.to_string()),
            record_index,
            message: message.into(),
        }
    }

    fn warning(field: &str, message: impl Into<String>) -> Self {
        Finding {
            severity: Severity::Warning,
            field: Some(field.to_string()),
            record_index: None,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

#[derive(Serialize)]
struct EventsFile<'a> {
    date: String,
    events: &'a [EventRecord],
}

const RECORD_KEYS: [(&str, bool); 8] = [
    ("event_number", true),
    ("action_number", true),
    ("emotion", true),
    ("human_speech", true),
    ("robot_response", true),
    ("object_name", false),
    ("event_status", false),
    ("image_file", true),
];

/// Serializes the events file exactly as it is stored on disk.
pub(crate) fn render_events(folder: &MemoryFolder) -> Vec<u8> {
    let file = EventsFile {
        date: folder.folder_name(),
        events: &folder.records,
    };
    let mut bytes = serde_json::to_vec_pretty(&file).expect("event records always serialize");
    bytes.push(b'\n');
    bytes
}

/// Writes `bytes` to `path` through a sibling temp file and a rename, so a
/// reader never observes a partially written file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        MemoryError::io(path, e)
    })
}

/// Writes the events file of `folder` into `dir`. Images are not touched.
pub fn write_folder(dir: &Path, folder: &MemoryFolder) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| MemoryError::io(dir, e))?;
    write_atomic(&dir.join(EVENTS_FILE), &render_events(folder))
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

fn check_record_shape(index: usize, obj: &Map<String, Value>) -> Result<()> {
    let schema = |field: &str, message: String| MemoryError::Schema {
        index,
        field: field.to_string(),
        message,
    };
    for key in obj.keys() {
        if !RECORD_KEYS.iter().any(|(k, _)| k == key) {
            return Err(schema(key, "unknown field".into()));
        }
    }
    for (key, required) in RECORD_KEYS {
        let Some(value) = obj.get(key) else {
            if required {
                return Err(schema(key, "missing field".into()));
            }
            continue;
        };
        match key {
            "event_number" => {
                if !value
                    .as_u64()
                    .is_some_and(|n| n >= 1 && n <= u32::MAX as u64)
                {
                    return Err(schema(
                        key,
                        format!("expected a positive integer, got {value}"),
                    ));
                }
            }
            "action_number" => {
                if !value
                    .as_u64()
                    .is_some_and(|n| n <= 255 && ActionKind::from_code(n as u8).is_some())
                {
                    return Err(schema(key, format!("expected 0, 1 or 2, got {value}")));
                }
            }
            _ => {
                if !value.is_string() {
                    return Err(schema(key, format!("expected a string, got {value}")));
                }
            }
        }
    }
    Ok(())
}

/// Parses a session folder without checking record invariants.
///
/// Records come back sorted by `event_number` regardless of their order in
/// the file. Structural problems (malformed JSON, missing or mistyped keys)
/// are errors; invariant problems are left to [`validate_folder`].
pub fn read_folder(dir: &Path) -> Result<MemoryFolder> {
    if !dir.is_dir() {
        return Err(MemoryError::NotFound(dir.to_path_buf()));
    }
    let events_path = dir.join(EVENTS_FILE);
    if !events_path.is_file() {
        return Err(MemoryError::NotFound(events_path));
    }
    let text = fs::read_to_string(&events_path).map_err(|e| MemoryError::io(&events_path, e))?;
    let root: Value = serde_json::from_str(&text).map_err(|e| MemoryError::Parse {
        offset: byte_offset(&text, e.line(), e.column()),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
        path: events_path.clone(),
    })?;

    let top = root
        .as_object()
        .ok_or_else(|| MemoryError::validation("events.json", "top level must be an object"))?;
    for key in top.keys() {
        if key != "date" && key != "events" {
            return Err(MemoryError::validation(key, "unknown top-level field"));
        }
    }
    let date = top
        .get("date")
        .and_then(Value::as_str)
        .ok_or_else(|| MemoryError::validation("date", "missing or not a string"))?;
    let date = parse_date(date)?;
    let events = top
        .get("events")
        .and_then(Value::as_array)
        .ok_or_else(|| MemoryError::validation("events", "missing or not an array"))?;

    let mut records = Vec::with_capacity(events.len());
    for (index, value) in events.iter().enumerate() {
        let obj = value.as_object().ok_or_else(|| MemoryError::Schema {
            index,
            field: "*".into(),
            message: "record must be an object".into(),
        })?;
        check_record_shape(index, obj)?;
        let record: EventRecord =
            serde_json::from_value(value.clone()).map_err(|e| MemoryError::Schema {
                index,
                field: "*".into(),
                message: e.to_string(),
            })?;
        records.push(record);
    }
    // stable: duplicates keep file order so validation can report them
    records.sort_by_key(|r| r.event_number);

    let mut images = BTreeSet::new();
    for entry in fs::read_dir(dir).map_err(|e| MemoryError::io(dir, e))? {
        let entry = entry.map_err(|e| MemoryError::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.path().is_file() && name.to_ascii_lowercase().ends_with(".png") {
            images.insert(name);
        }
    }

    Ok(MemoryFolder {
        date,
        records,
        images,
    })
}

/// Checks every record and folder invariant, returning one finding per
/// violation. Orphan images are warnings; everything else is an error.
pub fn validate_folder(folder: &MemoryFolder, emotions: &EmotionSet) -> Vec<Finding> {
    let mut findings = Vec::new();

    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for r in &folder.records {
        *counts.entry(r.event_number).or_default() += 1;
    }
    for (&n, &count) in &counts {
        if count > 1 {
            findings.push(Finding::error(
                "event_number",
                None,
                format!("duplicate event_number: {n}"),
            ));
        }
    }
    let n = folder.records.len() as u32;
    for expected in 1..=n {
        if !counts.contains_key(&expected) {
            findings.push(Finding::error(
                "event_number",
                None,
                format!("missing event_number: {expected}"),
            ));
        }
    }
    for &number in counts.keys().filter(|&&k| k > n) {
        findings.push(Finding::error(
            "event_number",
            None,
            format!("event_number {number} outside 1..={n}"),
        ));
    }

    for (i, r) in folder.records.iter().enumerate() {
        let at = Some(i);
        let num = r.event_number;
        if !emotions.contains(r.emotion.as_str()) {
            findings.push(Finding::error(
                "emotion",
                at,
                format!(
                    "event {num}: emotion {:?} not in configured set",
                    r.emotion.as_str()
                ),
            ));
        }
        match r.action {
            ActionKind::Chat => {
                if r.object_name.is_some() {
                    findings.push(Finding::error(
                        "object_name",
                        at,
                        format!("event {num}: chat records carry no object_name"),
                    ));
                }
                if r.event_status.is_some() {
                    findings.push(Finding::error(
                        "event_status",
                        at,
                        format!("event {num}: chat records carry no event_status"),
                    ));
                }
            }
            ActionKind::ToyPlay | ActionKind::Feed => {
                if r.object_name.as_deref().is_none_or(str::is_empty) {
                    findings.push(Finding::error(
                        "object_name",
                        at,
                        format!("event {num}: {} record needs object_name", r.action),
                    ));
                }
                let status = r.event_status.as_deref();
                let ok = if r.action == ActionKind::ToyPlay {
                    matches!(status, Some(STATUS_SUCCESS) | Some(STATUS_FAILED))
                } else {
                    status == Some(STATUS_NONE)
                };
                if !ok {
                    findings.push(Finding::error(
                        "event_status",
                        at,
                        format!(
                            "event {num}: {} record has event_status {:?}",
                            r.action,
                            status.unwrap_or("<absent>")
                        ),
                    ));
                }
            }
        }
        let expected = r.expected_image_file();
        if r.image_file != expected {
            findings.push(Finding::error(
                "image_file",
                at,
                format!(
                    "event {num}: image_file {:?} should be {expected:?}",
                    r.image_file
                ),
            ));
        }
    }

    let referenced: BTreeSet<&str> = folder
        .records
        .iter()
        .map(|r| r.image_file.as_str())
        .collect();
    let missing: Vec<&str> = referenced
        .iter()
        .copied()
        .filter(|f| !folder.images.contains(*f))
        .collect();
    if !missing.is_empty() {
        findings.push(Finding::error(
            "image_file",
            None,
            format!("missing referenced images: {}", missing.join(", ")),
        ));
    }
    for orphan in folder
        .images
        .iter()
        .filter(|img| !referenced.contains(img.as_str()))
    {
        findings.push(Finding::warning(
            "images",
            format!("image {orphan:?} is not referenced by any event"),
        ));
    }

    findings
}

/// The directory holding a session must be named after its date.
pub fn check_dir_name(dir: &Path, folder: &MemoryFolder) -> Option<Finding> {
    let name = dir.file_name()?.to_string_lossy();
    let expected = folder.folder_name();
    (name != expected).then(|| {
        Finding::error(
            "date",
            None,
            format!("folder name {name:?} does not match session date {expected}"),
        )
    })
}

/// Reads `dir` and returns it together with every finding, including the
/// folder-name check.
pub fn validate_dir(dir: &Path, emotions: &EmotionSet) -> Result<(MemoryFolder, Vec<Finding>)> {
    let folder = read_folder(dir)?;
    let mut findings: Vec<Finding> = check_dir_name(dir, &folder).into_iter().collect();
    findings.extend(validate_folder(&folder, emotions));
    Ok((folder, findings))
}

/// Reads and validates a session folder. Any error finding fails the load;
/// warnings are logged and otherwise ignored.
pub fn load_folder(dir: &Path, emotions: &EmotionSet) -> Result<MemoryFolder> {
    let (folder, findings) = validate_dir(dir, emotions)?;
    let missing: Vec<String> = folder
        .records
        .iter()
        .filter(|r| !folder.images.contains(&r.image_file))
        .map(|r| r.image_file.clone())
        .collect();
    let errors: Vec<Finding> = findings.iter().filter(|f| f.is_error()).cloned().collect();
    if !missing.is_empty() && errors.len() == 1 {
        return Err(MemoryError::MissingImages(missing));
    }
    if !errors.is_empty() {
        return Err(MemoryError::Invalid(errors));
    }
    for warning in findings {
        tracing::warn!(folder = %dir.display(), "{}", warning.message);
    }
    Ok(folder)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::{Emotion, Session};

    fn chat(n: u32) -> EventRecord {
        EventRecord {
            event_number: n,
            action: ActionKind::Chat,
            emotion: Emotion::new("happy"),
            human_speech: format!("message {n}"),
            robot_response: "😊".into(),
            object_name: None,
            event_status: None,
            image_file: format!("{n:03}_0_happy.png"),
        }
    }

    fn folder_of(records: Vec<EventRecord>) -> MemoryFolder {
        let images = records.iter().map(|r| r.image_file.clone()).collect();
        MemoryFolder {
            date: parse_date("2022-12-12").unwrap(),
            records,
            images,
        }
    }

    #[test]
    fn valid_folder_has_no_findings() {
        let folder = folder_of(vec![chat(1), chat(2)]);
        assert!(validate_folder(&folder, &EmotionSet::default()).is_empty());
    }

    #[test]
    fn feed_with_success_status_is_an_error() {
        let mut feed = chat(2);
        feed.action = ActionKind::Feed;
        feed.object_name = Some("fish".into());
        feed.event_status = Some("success".into());
        feed.image_file = "002_2_happy_feed.png".into();
        let findings = validate_folder(&folder_of(vec![chat(1), feed]), &EmotionSet::default());
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].severity, Severity::Error);
        assert_eq!(findings[0].field.as_deref(), Some("event_status"));
    }

    #[test]
    fn orphan_image_is_a_warning() {
        let mut folder = folder_of(vec![chat(1)]);
        folder.images.insert("999_0_happy.png".into());
        let findings = validate_folder(&folder, &EmotionSet::default());
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].severity, Severity::Warning);
    }

    #[test]
    fn duplicate_and_gap_numbers_are_reported() {
        let findings = validate_folder(
            &folder_of(vec![chat(1), chat(3), chat(3)]),
            &EmotionSet::default(),
        );
        let messages: Vec<&str> = findings.iter().map(|f| f.message.as_str()).collect();
        assert!(messages.contains(&"duplicate event_number: 3"));
        assert!(messages.contains(&"missing event_number: 2"));
    }

    #[test]
    fn chat_with_object_and_bad_image_name() {
        let mut r = chat(1);
        r.object_name = Some("ball".into());
        r.image_file = "1_0_happy.png".into();
        let findings = validate_folder(&folder_of(vec![r]), &EmotionSet::default());
        let fields: BTreeSet<_> = findings.iter().filter_map(|f| f.field.as_deref()).collect();
        assert!(fields.contains("object_name"));
        assert!(fields.contains("image_file"));
    }

    #[test]
    fn missing_image_fails_load_with_list() {
        let tmp = tempfile::tempdir().unwrap();
        let mut session = Session::create(
            tmp.path(),
            parse_date("2022-12-12").unwrap(),
            EmotionSet::default(),
        )
        .unwrap();
        session
            .record_chat("Hello!", "😊", "happy", b"img")
            .unwrap();
        fs::remove_file(session.dir().join("001_0_happy.png")).unwrap();
        match load_folder(session.dir(), &EmotionSet::default()) {
            Err(MemoryError::MissingImages(files)) => assert_eq!(files, ["001_0_happy.png"]),
            other => panic!("expected missing images, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_number_fails_load() {
        let tmp = tempfile::tempdir().unwrap();
        let folder = folder_of(vec![chat(1), chat(2), chat(3), chat(3)]);
        let dir = tmp.path().join("2022-12-12");
        write_folder(&dir, &folder).unwrap();
        for img in &folder.images {
            fs::write(dir.join(img), b"x").unwrap();
        }
        let err = load_folder(&dir, &EmotionSet::default()).unwrap_err();
        assert!(
            err.to_string().contains("duplicate event_number: 3"),
            "{err}"
        );
    }

    #[test]
    fn records_are_sorted_on_read() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("2022-12-12");
        let folder = folder_of(vec![chat(2), chat(1)]);
        write_folder(&dir, &folder).unwrap();
        let read = read_folder(&dir).unwrap();
        let numbers: Vec<u32> = read.records.iter().map(|r| r.event_number).collect();
        assert_eq!(numbers, [1, 2]);
    }

    #[test]
    fn malformed_json_reports_byte_offset() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("2022-12-12");
        fs::create_dir_all(&dir).unwrap();
        let text = "{\n  \"date\": \"2022-12-12\",\n  \"events\": [ }\n";
        fs::write(dir.join(EVENTS_FILE), text).unwrap();
        match read_folder(&dir) {
            Err(MemoryError::Parse { offset, line, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(&text[offset..offset + 1], "}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn schema_errors_name_field_and_index() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("2022-12-12");
        fs::create_dir_all(&dir).unwrap();
        let mut bad = serde_json::to_value(chat(2)).unwrap();
        bad["action_number"] = Value::from(7);
        let doc = serde_json::json!({"date": "2022-12-12", "events": [chat(1), bad]});
        fs::write(dir.join(EVENTS_FILE), doc.to_string()).unwrap();
        match read_folder(&dir) {
            Err(MemoryError::Schema { index, field, .. }) => {
                assert_eq!(index, 1);
                assert_eq!(field, "action_number");
            }
            other => panic!("expected schema error, got {other:?}"),
        }

        let mut bad = serde_json::to_value(chat(1)).unwrap();
        bad.as_object_mut().unwrap().remove("emotion");
        let doc = serde_json::json!({"date": "2022-12-12", "events": [bad]});
        fs::write(dir.join(EVENTS_FILE), doc.to_string()).unwrap();
        assert!(matches!(
            read_folder(&dir),
            Err(MemoryError::Schema { index: 0, ref field, .. }) if field == "emotion"
        ));
    }

    #[test]
    fn folder_name_must_match_date() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("walk");
        let folder = folder_of(vec![chat(1)]);
        write_folder(&dir, &folder).unwrap();
        fs::write(dir.join("001_0_happy.png"), b"x").unwrap();
        let (_, findings) = validate_dir(&dir, &EmotionSet::default()).unwrap();
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].field.as_deref(), Some("date"));
    }
}
