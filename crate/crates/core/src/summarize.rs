//! Diary generation: a Premise / Description / Direction prompt handed to a
//! text generator, in two modes. The interaction diary runs the full
//! select and describe stages; the control diary sends only the captions of
//! a seeded random sample of walk photos.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::describe::{describe_all, describe_captions, DescribeConfig};
use crate::error::{PipelineError, Stage};
use crate::memory::{MemoryError, MemoryFolder, StoredFolder};
use crate::providers::{with_retry, Captioner, ImageRef, Providers};
use crate::select::{effective_k, select_scenes, CaptionedImage};

pub const PREMISE_LABEL: &str = "Premise:";
pub const DESCRIPTION_LABEL: &str = "Description:";
pub const DIRECTION_LABEL: &str = "Direction:";

pub const DEFAULT_DIRECTION: &str = "Write a diary entry about this day in the first person, \
from the point of view of the robot, describing what happened and how the robot felt.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Premise {
    pub date: NaiveDate,
    pub place: String,
    pub person: String,
    pub event: String,
}

/// What the user types in for the premise.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PremiseInputs {
    pub place: String,
    #[serde(default)]
    pub person: String,
    pub event: String,
}

impl PremiseInputs {
    pub fn new(place: &str, person: &str, event: &str) -> Self {
        PremiseInputs {
            place: place.into(),
            person: person.into(),
            event: event.into(),
        }
    }
}

/// Builds the premise; the date always comes from the folder.
///
/// A blank `person` falls back to `default_person` when one is given and is
/// an error otherwise.
pub fn build_premise(
    folder: &MemoryFolder,
    inputs: &PremiseInputs,
    default_person: Option<&str>,
) -> Result<Premise, PipelineError> {
    let required = |field: &str, value: &str| {
        if value.trim().is_empty() {
            Err(PipelineError::Memory(MemoryError::Validation {
                field: field.to_string(),
                message: "must not be empty".into(),
            }))
        } else {
            Ok(value.trim().to_string())
        }
    };
    let place = required("place", &inputs.place)?;
    let event = required("event", &inputs.event)?;
    let person = match (inputs.person.trim(), default_person) {
        ("", Some(default)) => required("person", default)?,
        (person, _) => required("person", person)?,
    };
    Ok(Premise {
        date: folder.date,
        place,
        person,
        event,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiaryPrompt {
    pub premise: Premise,
    pub description: String,
    pub direction: String,
}

pub fn format_date(date: NaiveDate) -> String {
    date.format("%B %-d, %Y").to_string()
}

/// Renders the prompt text sent to the generator: three labeled blocks in
/// the order Premise, Description, Direction.
pub fn render_prompt(
    prompt: &DiaryPrompt,
    allow_empty_description: bool,
) -> Result<String, PipelineError> {
    if prompt.description.trim().is_empty() && !allow_empty_description {
        return Err(PipelineError::invalid(
            Stage::Summarize,
            "description is empty",
        ));
    }
    if prompt.direction.trim().is_empty() {
        return Err(PipelineError::invalid(
            Stage::Summarize,
            "direction is empty",
        ));
    }
    let p = &prompt.premise;
    Ok(format!(
        "{PREMISE_LABEL}\nDate: {}\nPlace: {}\nPerson: {}\nEvent: {}\n\n\
         {DESCRIPTION_LABEL}\n{}\n\n\
         {DIRECTION_LABEL}\n{}\n",
        format_date(p.date),
        p.place,
        p.person,
        p.event,
        prompt.description.trim(),
        prompt.direction.trim(),
    ))
}

/// A rendered prompt split back into its blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSections {
    pub premise: Vec<(String, String)>,
    pub description: String,
    pub direction: String,
}

impl PromptSections {
    pub fn parse(prompt: &str) -> Option<Self> {
        let lines: Vec<&str> = prompt.lines().collect();
        let premise_at = lines.iter().position(|l| l.trim() == PREMISE_LABEL)?;
        let description_at = premise_at
            + lines[premise_at..]
                .iter()
                .position(|l| l.trim() == DESCRIPTION_LABEL)?;
        let direction_at = description_at
            + lines[description_at..]
                .iter()
                .rposition(|l| l.trim() == DIRECTION_LABEL)?;
        let block = |from: usize, to: usize| lines[from + 1..to].join("\n").trim().to_string();
        let premise = lines[premise_at + 1..description_at]
            .iter()
            .filter_map(|l| l.split_once(':'))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        Some(PromptSections {
            premise,
            description: block(description_at, direction_at),
            direction: block(direction_at, lines.len()),
        })
    }

    pub fn premise_field(&self, key: &str) -> Option<&str> {
        self.premise
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiaryMode {
    WithInteraction,
    WithoutInteraction,
}

impl DiaryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiaryMode::WithInteraction => "with_interaction",
            DiaryMode::WithoutInteraction => "without_interaction",
        }
    }
}

impl std::str::FromStr for DiaryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "with" | "with_interaction" => Ok(DiaryMode::WithInteraction),
            "without" | "without_interaction" => Ok(DiaryMode::WithoutInteraction),
            other => Err(format!(
                "unknown diary mode {other:?} (expected with or without)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diary {
    pub text: String,
    pub mode: DiaryMode,
    pub source_images: Vec<String>,
    /// The prompt the text was generated from; re-renders to the exact
    /// string the generator received.
    pub prompt: DiaryPrompt,
}

impl Diary {
    pub fn rendered_prompt(&self) -> String {
        render_prompt(&self.prompt, true).expect("a generated diary had a renderable prompt")
    }
}

/// Knobs for one diary generation.
#[derive(Debug, Clone)]
pub struct DiaryConfig {
    /// Cluster count; `None` uses the default bound.
    pub k: Option<usize>,
    pub seed: u64,
    pub direction: String,
    pub allow_empty_description: bool,
    /// Substitute for a blank premise person.
    pub default_person: Option<String>,
    pub describe: DescribeConfig,
}

impl Default for DiaryConfig {
    fn default() -> Self {
        let describe = DescribeConfig::default();
        DiaryConfig {
            k: None,
            seed: 0,
            direction: DEFAULT_DIRECTION.to_string(),
            allow_empty_description: false,
            default_person: Some(describe.partner_name.clone()),
            describe,
        }
    }
}

fn generate(
    prompt: DiaryPrompt,
    mode: DiaryMode,
    source_images: Vec<String>,
    providers: &Providers,
    config: &DiaryConfig,
) -> Result<Diary, PipelineError> {
    let rendered = render_prompt(&prompt, config.allow_empty_description)?;
    tracing::debug!(
        generator = providers.generator.name(),
        mode = mode.as_str(),
        "generating diary"
    );
    let text = with_retry(|| providers.generator.generate(&rendered)).map_err(|source| {
        PipelineError::Generation {
            prompt: rendered.clone(),
            source,
        }
    })?;
    let text = text.trim().to_string();
    if text.is_empty() {
        return Err(PipelineError::Generation {
            prompt: rendered,
            source: crate::providers::ProviderError::Failed("empty completion".into()),
        });
    }
    Ok(Diary {
        text,
        mode,
        source_images,
        prompt,
    })
}

/// Select → Describe → Summarize over a session folder.
pub fn generate_diary(
    stored: &StoredFolder,
    inputs: &PremiseInputs,
    providers: &Providers,
    config: &DiaryConfig,
) -> Result<Diary, PipelineError> {
    let premise = build_premise(&stored.folder, inputs, config.default_person.as_deref())?;
    let selection = select_scenes(
        stored,
        providers.captioner.as_ref(),
        providers.embedder.as_ref(),
        config.k,
        config.seed,
    )?;
    let description = describe_all(
        &selection.images,
        stored,
        providers.entities.as_ref(),
        providers.vqa.as_ref(),
        &config.describe,
    )?;
    let prompt = DiaryPrompt {
        premise,
        description,
        direction: config.direction.clone(),
    };
    generate(
        prompt,
        DiaryMode::WithInteraction,
        selection.images.image_files(),
        providers,
        config,
    )
}

/// Picks `k` walk photos at random (seeded) and returns them in event order.
pub fn sample_photos(folder: &MemoryFolder, k: Option<usize>, seed: u64) -> Vec<String> {
    let base: Vec<&crate::memory::EventRecord> = folder
        .records
        .iter()
        .filter(|r| !r.action.is_additional())
        .collect();
    let count = effective_k(k, base.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, base.len(), count).into_vec();
    picked.sort_unstable();
    picked
        .into_iter()
        .map(|i| base[i].image_file.clone())
        .collect()
}

fn caption_files(
    stored: &StoredFolder,
    files: &[String],
    captioner: &dyn Captioner,
) -> Result<Vec<CaptionedImage>, PipelineError> {
    files
        .iter()
        .map(|file| {
            let record = stored.folder.record_for_image(file).ok_or_else(|| {
                PipelineError::invalid(Stage::Select, format!("{file} has no event"))
            })?;
            let image = ImageRef::new(&stored.dir, file);
            let caption = with_retry(|| captioner.caption(&image)).map_err(|source| {
                PipelineError::Provider {
                    stage: Stage::Select,
                    provider: captioner.name().to_string(),
                    subject: file.clone(),
                    source,
                }
            })?;
            Ok(CaptionedImage {
                image_file: file.clone(),
                event_number: record.event_number,
                action: record.action,
                caption: caption.trim().to_string(),
            })
        })
        .collect()
}

/// Control diary: captions of randomly chosen walk photos, in event order,
/// with no speech, emotions or interaction records.
pub fn generate_control_diary(
    stored: &StoredFolder,
    inputs: &PremiseInputs,
    providers: &Providers,
    config: &DiaryConfig,
    seed: u64,
) -> Result<Diary, PipelineError> {
    let premise = build_premise(&stored.folder, inputs, config.default_person.as_deref())?;
    let photos = sample_photos(&stored.folder, config.k, seed);
    let captions = caption_files(stored, &photos, providers.captioner.as_ref())?;
    let prompt = DiaryPrompt {
        premise,
        description: describe_captions(&captions, &config.describe),
        direction: config.direction.clone(),
    };
    generate(
        prompt,
        DiaryMode::WithoutInteraction,
        photos,
        providers,
        config,
    )
}

/// Writes the diary next to the session folder as
/// `diary_<mode>_<timestamp>.json` and returns the path.
pub fn save_diary(diary: &Diary, session_dir: &Path) -> Result<PathBuf, MemoryError> {
    let parent = session_dir
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let stamp = Utc::now().format("%Y%m%dT%H%M%S%3fZ");
    let path = parent.join(format!("diary_{}_{stamp}.json", diary.mode.as_str()));
    let mut bytes = serde_json::to_vec_pretty(diary).expect("diary serializes");
    bytes.push(b'\n');
    fs::write(&path, bytes).map_err(|e| MemoryError::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok(path)
}
