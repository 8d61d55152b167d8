//! Scene description: toy-play and feed scenes are written from their event
//! records, chat scenes from caption analysis and visual question answering.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Stage};
use crate::memory::{ActionKind, EventRecord, StoredFolder, STATUS_SUCCESS};
use crate::providers::offline::DEFAULT_PERSON_NOUNS;
use crate::providers::{
    with_retry, Entity, EntityCategory, EntityTagger, ImageRef, QuestionAnswerer,
};
use crate::select::{CaptionedImage, ImageList};
use crate::text::{ends_with_terminal, sentence};

pub const DEFAULT_TEMPLATES: &str = include_str!("../config/templates.toml");
pub const DEFAULT_PARTNER: &str = "Aiko";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    Additional,
    Base,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneDescription {
    pub event_number: u32,
    pub image_file: String,
    pub kind: SceneKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityAnnotation {
    pub caption: String,
    pub entities: Vec<Entity>,
    pub has_person: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonDetails {
    pub attire: String,
    pub eye_direction: String,
    pub expression: String,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdditionalTemplates {
    pub toy_success: String,
    pub toy_failed: String,
    pub feed: String,
    pub speech: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseTemplates {
    pub person: String,
    pub scenery: String,
    pub speech: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlTemplates {
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Questions {
    pub attire: String,
    pub eye_direction: String,
    pub expression: String,
    pub action: String,
    pub atmosphere: String,
    pub object: String,
}

impl Questions {
    /// Looks a question up by its field name.
    pub fn get(&self, key: &str) -> Option<&str> {
        Some(match key {
            "attire" => &self.attire,
            "eye_direction" => &self.eye_direction,
            "expression" => &self.expression,
            "action" => &self.action,
            "atmosphere" => &self.atmosphere,
            "object" => &self.object,
            _ => return None,
        })
    }
}

/// Sentence frames and VQA questions, loaded from a TOML file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Templates {
    pub additional: AdditionalTemplates,
    pub base: BaseTemplates,
    pub control: ControlTemplates,
    pub questions: Questions,
}

impl Templates {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let templates: Templates = toml::from_str(text).map_err(|e| e.to_string())?;
        templates.check()?;
        Ok(templates)
    }

    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    fn check(&self) -> Result<(), String> {
        let additional = ["partner", "object", "response", "speech"];
        let checks: [(&str, &str, &[&str]); 8] = [
            (
                "additional.toy_success",
                &self.additional.toy_success,
                &additional,
            ),
            (
                "additional.toy_failed",
                &self.additional.toy_failed,
                &additional,
            ),
            ("additional.feed", &self.additional.feed, &additional),
            ("additional.speech", &self.additional.speech, &additional),
            (
                "base.person",
                &self.base.person,
                &[
                    "partner",
                    "scene",
                    "attire",
                    "eye_direction",
                    "expression",
                    "action",
                ],
            ),
            (
                "base.scenery",
                &self.base.scenery,
                &["partner", "scene", "atmosphere", "object", "emotion"],
            ),
            ("base.speech", &self.base.speech, &["partner", "speech"]),
            ("control.caption", &self.control.caption, &["scene"]),
        ];
        for (name, template, allowed) in checks {
            if template.trim().is_empty() {
                return Err(format!("template {name} is empty"));
            }
            for placeholder in placeholders(template) {
                if !allowed.contains(&placeholder) {
                    return Err(format!(
                        "template {name} uses unknown placeholder {{{placeholder}}}"
                    ));
                }
            }
        }
        Ok(())
    }
}

impl Default for Templates {
    fn default() -> Self {
        Templates::from_toml(DEFAULT_TEMPLATES).expect("shipped templates are valid")
    }
}

fn placeholder_regex() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").unwrap())
}

fn placeholders(template: &str) -> Vec<&str> {
    placeholder_regex()
        .captures_iter(template)
        .map(|c| c.get(1).unwrap().as_str())
        .collect()
}

/// Fills `{name}` placeholders. Unknown names are left as written.
pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let map: BTreeMap<&str, &str> = values.iter().copied().collect();
    placeholder_regex()
        .replace_all(template, |caps: &regex::Captures| {
            let name = caps.get(1).unwrap().as_str();
            map.get(name)
                .map(|v| v.to_string())
                .unwrap_or_else(|| caps[0].to_string())
        })
        .into_owned()
}

/// Settings shared by every describe operation.
#[derive(Debug, Clone)]
pub struct DescribeConfig {
    /// Everyone the robot walks with is called by this name.
    pub partner_name: String,
    pub templates: Templates,
    /// Words standing for an unnamed person; replaced by the partner name.
    pub person_nouns: Vec<String>,
    person_pattern: Regex,
}

impl DescribeConfig {
    pub fn new(partner_name: &str, templates: Templates, person_nouns: Vec<String>) -> Self {
        let alternatives: Vec<String> = person_nouns.iter().map(|n| regex::escape(n)).collect();
        let pattern = format!(
            r"(?i)\b(?:(?:a|an|the|one|this|that)\s+)?(?:{})\b",
            alternatives.join("|")
        );
        DescribeConfig {
            partner_name: partner_name.to_string(),
            templates,
            person_nouns,
            person_pattern: Regex::new(&pattern).expect("escaped alternatives form a valid regex"),
        }
    }

    /// Replaces every person reference with the partner name.
    pub fn resolve_names(&self, text: &str) -> String {
        if self.person_nouns.is_empty() {
            return text.to_string();
        }
        self.person_pattern
            .replace_all(text, regex::NoExpand(&self.partner_name))
            .into_owned()
    }
}

impl Default for DescribeConfig {
    fn default() -> Self {
        DescribeConfig::new(
            DEFAULT_PARTNER,
            Templates::default(),
            DEFAULT_PERSON_NOUNS.iter().map(|s| s.to_string()).collect(),
        )
    }
}

fn finish(text: String) -> String {
    let text = text.trim();
    if ends_with_terminal(text) {
        text.to_string()
    } else {
        sentence(text)
    }
}

fn speech_sentence(template: &str, config: &DescribeConfig, speech: &str) -> Option<String> {
    (!speech.trim().is_empty()).then(|| {
        fill(
            template,
            &[("partner", &config.partner_name), ("speech", speech)],
        )
    })
}

/// Describes a toy-play or feed scene straight from its record.
pub fn describe_additional(
    record: &EventRecord,
    config: &DescribeConfig,
) -> Result<SceneDescription, PipelineError> {
    let t = &config.templates.additional;
    let object = record.object_name.as_deref().unwrap_or_default();
    let values = [
        ("partner", config.partner_name.as_str()),
        ("object", object),
        ("response", record.robot_response.as_str()),
    ];
    let frame = match record.action {
        ActionKind::Chat => {
            return Err(PipelineError::invalid(
                Stage::Describe,
                format!(
                    "event {} is a chat; only toy play and feed are described from records",
                    record.event_number
                ),
            ))
        }
        ActionKind::ToyPlay if record.event_status.as_deref() == Some(STATUS_SUCCESS) => {
            &t.toy_success
        }
        ActionKind::ToyPlay => &t.toy_failed,
        ActionKind::Feed => &t.feed,
    };
    let mut parts = vec![fill(frame, &values)];
    parts.extend(speech_sentence(&t.speech, config, &record.human_speech));
    Ok(SceneDescription {
        event_number: record.event_number,
        image_file: record.image_file.clone(),
        kind: SceneKind::Additional,
        text: finish(parts.join(" ")),
    })
}

/// Tags entities in a caption and notes whether a person is present.
pub fn analyze_caption(
    caption: &str,
    tagger: &dyn EntityTagger,
) -> Result<EntityAnnotation, PipelineError> {
    if caption.trim().is_empty() {
        return Err(PipelineError::invalid(
            Stage::Describe,
            "cannot analyze an empty caption",
        ));
    }
    let entities =
        with_retry(|| tagger.tag(caption)).map_err(|source| PipelineError::Provider {
            stage: Stage::Describe,
            provider: tagger.name().to_string(),
            subject: format!("caption {caption:?}"),
            source,
        })?;
    let has_person = entities
        .iter()
        .any(|e| e.category == EntityCategory::Person);
    Ok(EntityAnnotation {
        caption: caption.to_string(),
        entities,
        has_person,
    })
}

fn ask(
    vqa: &dyn QuestionAnswerer,
    image: &ImageRef,
    question: &str,
) -> Result<String, PipelineError> {
    let answer =
        with_retry(|| vqa.answer(image, question)).map_err(|source| PipelineError::Provider {
            stage: Stage::Describe,
            provider: vqa.name().to_string(),
            subject: format!("scene {} ({question:?})", image.file_name),
            source,
        })?;
    let answer = answer.trim().trim_end_matches(['.', '!', '?']).trim();
    Ok(if answer.is_empty() {
        crate::providers::offline::UNKNOWN_ANSWER.to_string()
    } else {
        answer.to_string()
    })
}

/// Asks the four person questions about an image.
pub fn person_details(
    image: &ImageRef,
    vqa: &dyn QuestionAnswerer,
    config: &DescribeConfig,
) -> Result<PersonDetails, PipelineError> {
    let q = &config.templates.questions;
    Ok(PersonDetails {
        attire: ask(vqa, image, &q.attire)?,
        eye_direction: ask(vqa, image, &q.eye_direction)?,
        expression: ask(vqa, image, &q.expression)?,
        action: ask(vqa, image, &q.action)?,
    })
}

/// Describes a chat scene from its caption.
///
/// With a person in view the partner's attire, gaze, expression and action
/// are asked about; otherwise the atmosphere, the main object and the
/// robot's emotion are. The partner's speech at that moment is appended.
pub fn describe_base(
    dir: &Path,
    scene: &CaptionedImage,
    annotation: &EntityAnnotation,
    record: &EventRecord,
    vqa: &dyn QuestionAnswerer,
    config: &DescribeConfig,
) -> Result<SceneDescription, PipelineError> {
    if record.action != ActionKind::Chat {
        return Err(PipelineError::invalid(
            Stage::Describe,
            format!("event {} is not a chat scene", record.event_number),
        ));
    }
    if annotation.caption != scene.caption {
        return Err(PipelineError::invalid(
            Stage::Describe,
            format!("annotation does not belong to {}", scene.image_file),
        ));
    }
    let image = ImageRef::new(dir, &scene.image_file);
    let partner = config.partner_name.as_str();
    let scene_text = config.resolve_names(&crate::text::lowercase_article(&scene.caption));
    let body = if annotation.has_person {
        let d = person_details(&image, vqa, config)?;
        let resolved: Vec<String> = [&d.attire, &d.eye_direction, &d.expression, &d.action]
            .into_iter()
            .map(|a| config.resolve_names(a))
            .collect();
        fill(
            &config.templates.base.person,
            &[
                ("partner", partner),
                ("scene", &scene_text),
                ("attire", &resolved[0]),
                ("eye_direction", &resolved[1]),
                ("expression", &resolved[2]),
                ("action", &resolved[3]),
            ],
        )
    } else {
        let q = &config.templates.questions;
        let atmosphere = config.resolve_names(&ask(vqa, &image, &q.atmosphere)?);
        let object = config.resolve_names(&ask(vqa, &image, &q.object)?);
        fill(
            &config.templates.base.scenery,
            &[
                ("partner", partner),
                ("scene", &scene_text),
                ("atmosphere", &atmosphere),
                ("object", &object),
                ("emotion", record.emotion.as_str()),
            ],
        )
    };
    let mut parts = vec![body];
    parts.extend(speech_sentence(
        &config.templates.base.speech,
        config,
        &record.human_speech,
    ));
    Ok(SceneDescription {
        event_number: record.event_number,
        image_file: scene.image_file.clone(),
        kind: SceneKind::Base,
        text: finish(parts.join(" ")),
    })
}

/// Describes one selected scene, dispatching on its action kind.
pub fn describe_scene(
    stored: &StoredFolder,
    scene: &CaptionedImage,
    tagger: &dyn EntityTagger,
    vqa: &dyn QuestionAnswerer,
    config: &DescribeConfig,
) -> Result<SceneDescription, PipelineError> {
    let record = stored
        .folder
        .record_for_image(&scene.image_file)
        .ok_or_else(|| {
            PipelineError::invalid(
                Stage::Describe,
                format!("{} is not referenced by any event", scene.image_file),
            )
        })?;
    if record.action.is_additional() {
        describe_additional(record, config)
    } else {
        let annotation = analyze_caption(&scene.caption, tagger)?;
        describe_base(&stored.dir, scene, &annotation, record, vqa, config)
    }
}

/// Describes every scene of `images`, in list order. Scenes are described
/// concurrently.
pub fn describe_scenes(
    images: &ImageList,
    stored: &StoredFolder,
    tagger: &dyn EntityTagger,
    vqa: &dyn QuestionAnswerer,
    config: &DescribeConfig,
) -> Result<Vec<SceneDescription>, PipelineError> {
    images
        .entries()
        .par_iter()
        .map(|scene| describe_scene(stored, scene, tagger, vqa, config))
        .collect()
}

/// All scene descriptions joined by single spaces, in list order.
pub fn describe_all(
    images: &ImageList,
    stored: &StoredFolder,
    tagger: &dyn EntityTagger,
    vqa: &dyn QuestionAnswerer,
    config: &DescribeConfig,
) -> Result<String, PipelineError> {
    Ok(join_scenes(&describe_scenes(
        images, stored, tagger, vqa, config,
    )?))
}

pub fn join_scenes(scenes: &[SceneDescription]) -> String {
    scenes
        .iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Caption-only description used for the no-interaction control diary.
pub fn describe_captions(captions: &[CaptionedImage], config: &DescribeConfig) -> String {
    captions
        .iter()
        .map(|c| {
            sentence(&fill(
                &config.templates.control.caption,
                &[("scene", &c.caption)],
            ))
        })
        .collect::<Vec<_>>()
        .join(" ")
}
