//! Runtime configuration: a TOML file plus `ROBODIARY_*` environment
//! overrides. Relative paths in the file resolve against the file's
//! directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::describe::{DescribeConfig, Templates, DEFAULT_PARTNER};
use crate::emotion::IntentRuleSet;
use crate::memory::RecordingPolicy;
use crate::providers::offline::{
    GazetteerTagger, TableCaptioner, TableVqa, TemplateDiaryWriter, TrigramEmbedder,
    DEFAULT_EMBEDDING_DIM, DEFAULT_EMBEDDING_SEED, DEFAULT_PERSON_NOUNS,
};
use crate::providers::{
    load_caption_table, load_vqa_table, CaptionTable, HttpTextGeneratorConfig, Providers,
    TextGenerator, VqaTable,
};
use crate::summarize::{DiaryConfig, DEFAULT_DIRECTION};

pub const ENV_PREFIX: &str = "ROBODIARY_";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const OFFLINE: &str = "offline";
pub const HTTP: &str = "http";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectSettings {
    /// Cluster count; unset means `min(5, base images)`.
    pub k: Option<usize>,
    pub seed: u64,
    pub captioner: String,
    pub embedder: String,
    pub embedding_dim: usize,
    pub embedding_seed: u64,
    /// Caption fixture table for the offline captioner.
    pub captions: Option<PathBuf>,
}

impl Default for SelectSettings {
    fn default() -> Self {
        SelectSettings {
            k: None,
            seed: 0,
            captioner: OFFLINE.into(),
            embedder: OFFLINE.into(),
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            embedding_seed: DEFAULT_EMBEDDING_SEED,
            captions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescribeSettings {
    pub templates: Option<PathBuf>,
    pub tagger: String,
    pub vqa: String,
    /// Answer fixture table for the offline VQA provider.
    pub answers: Option<PathBuf>,
    pub person_nouns: Vec<String>,
}

impl Default for DescribeSettings {
    fn default() -> Self {
        DescribeSettings {
            templates: None,
            tagger: OFFLINE.into(),
            vqa: OFFLINE.into(),
            answers: None,
            person_nouns: DEFAULT_PERSON_NOUNS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarizeSettings {
    pub generator: String,
    pub direction: String,
    pub allow_empty_description: bool,
    /// Fill a blank premise person with the partner name.
    pub default_person: bool,
    pub http: HttpTextGeneratorConfig,
}

impl Default for SummarizeSettings {
    fn default() -> Self {
        SummarizeSettings {
            generator: OFFLINE.into(),
            direction: DEFAULT_DIRECTION.into(),
            allow_empty_description: false,
            default_person: true,
            http: HttpTextGeneratorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSettings {
    pub bind: String,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        ServiceSettings {
            bind: DEFAULT_BIND.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Directory holding the dated session folders.
    pub root: PathBuf,
    pub partner_name: String,
    /// Intent rule table; the bundled table when unset.
    pub rules: Option<PathBuf>,
    pub recording: RecordingPolicy,
    pub select: SelectSettings,
    pub describe: DescribeSettings,
    pub summarize: SummarizeSettings,
    pub service: ServiceSettings,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            root: PathBuf::from("sessions"),
            partner_name: DEFAULT_PARTNER.into(),
            rules: None,
            recording: RecordingPolicy::default(),
            select: SelectSettings::default(),
            describe: DescribeSettings::default(),
            summarize: SummarizeSettings::default(),
            service: ServiceSettings::default(),
        }
    }
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

impl Config {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut config: Config = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut config.root);
        for p in [
            &mut config.rules,
            &mut config.select.captions,
            &mut config.describe.templates,
            &mut config.describe.answers,
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, p);
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Config::from_toml(&text, path)
    }

    /// File (or defaults) with the process environment applied on top.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => Config::from_file(p)?,
            None => Config::default(),
        };
        config.apply_env(|key| std::env::var(key).ok())?;
        Ok(config)
    }

    /// Applies `ROBODIARY_*` overrides read through `lookup`.
    pub fn apply_env(
        &mut self,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<(), ConfigError> {
        let get = |name: &str| lookup(&format!("{ENV_PREFIX}{name}"));
        let number = |name: &str, value: String| {
            value
                .trim()
                .parse::<u64>()
                .map_err(|e| invalid(&format!("{ENV_PREFIX}{name}"), e.to_string()))
        };
        if let Some(v) = get("ROOT") {
            self.root = PathBuf::from(v);
        }
        if let Some(v) = get("BIND") {
            self.service.bind = v;
        }
        if let Some(v) = get("PARTNER") {
            self.partner_name = v;
        }
        if let Some(v) = get("CAPTIONER") {
            self.select.captioner = v;
        }
        if let Some(v) = get("EMBEDDER") {
            self.select.embedder = v;
        }
        if let Some(v) = get("GENERATOR") {
            self.summarize.generator = v;
        }
        if let Some(v) = get("GENERATOR_URL") {
            self.summarize.http.url = v;
        }
        if let Some(v) = get("K") {
            self.select.k = Some(number("K", v)? as usize);
        }
        if let Some(v) = get("SEED") {
            self.select.seed = number("SEED", v)?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn rules(&self) -> Result<IntentRuleSet, ConfigError> {
        match &self.rules {
            Some(path) => {
                IntentRuleSet::from_file(path).map_err(|e| invalid("rules", e.to_string()))
            }
            None => Ok(IntentRuleSet::default()),
        }
    }

    pub fn templates(&self) -> Result<Templates, ConfigError> {
        match &self.describe.templates {
            Some(path) => Templates::from_file(path).map_err(|e| invalid("describe.templates", e)),
            None => Ok(Templates::default()),
        }
    }

    pub fn describe_config(&self) -> Result<DescribeConfig, ConfigError> {
        if self.partner_name.trim().is_empty() {
            return Err(invalid("partner_name", "must not be empty"));
        }
        Ok(DescribeConfig::new(
            &self.partner_name,
            self.templates()?,
            self.describe.person_nouns.clone(),
        ))
    }

    pub fn diary_config(&self) -> Result<DiaryConfig, ConfigError> {
        Ok(DiaryConfig {
            k: self.select.k,
            seed: self.select.seed,
            direction: self.summarize.direction.clone(),
            allow_empty_description: self.summarize.allow_empty_description,
            default_person: self
                .summarize
                .default_person
                .then(|| self.partner_name.clone()),
            describe: self.describe_config()?,
        })
    }

    fn generator(&self) -> Result<Arc<dyn TextGenerator>, ConfigError> {
        match self.summarize.generator.as_str() {
            OFFLINE => Ok(Arc::new(TemplateDiaryWriter::default())),
            #[cfg(feature = "http-providers")]
            HTTP => crate::providers::HttpTextGenerator::new(self.summarize.http.clone())
                .map(|g| Arc::new(g) as Arc<dyn TextGenerator>)
                .map_err(|e| invalid("summarize.generator", e.to_string())),
            #[cfg(not(feature = "http-providers"))]
            HTTP => Err(invalid(
                "summarize.generator",
                "this build has no HTTP providers (enable the http-providers feature)",
            )),
            other => Err(invalid(
                "summarize.generator",
                format!("unknown provider {other:?}"),
            )),
        }
    }

    /// Builds the provider set named by the configuration.
    pub fn providers(&self) -> Result<Providers, ConfigError> {
        let offline_only = [
            ("select.captioner", &self.select.captioner),
            ("select.embedder", &self.select.embedder),
            ("describe.tagger", &self.describe.tagger),
            ("describe.vqa", &self.describe.vqa),
        ];
        for (key, value) in offline_only {
            if value != OFFLINE {
                return Err(invalid(
                    key,
                    format!("unknown provider {value:?} (expected offline)"),
                ));
            }
        }
        if self.select.embedding_dim == 0 {
            return Err(invalid("select.embedding_dim", "must be positive"));
        }
        let captions = match &self.select.captions {
            Some(path) => {
                load_caption_table(path).map_err(|e| invalid("select.captions", e.to_string()))?
            }
            None => CaptionTable::new(),
        };
        let answers = match &self.describe.answers {
            Some(path) => {
                load_vqa_table(path).map_err(|e| invalid("describe.answers", e.to_string()))?
            }
            None => VqaTable::default(),
        };
        Ok(Providers {
            captioner: Arc::new(TableCaptioner::new(captions)),
            embedder: Arc::new(TrigramEmbedder::new(
                self.select.embedding_dim,
                self.select.embedding_seed,
            )),
            entities: Arc::new(
                GazetteerTagger::new([self.partner_name.clone()])
                    .with_person_nouns(self.describe.person_nouns.clone()),
            ),
            vqa: Arc::new(TableVqa::new(answers)),
            generator: self.generator()?,
        })
    }

    pub fn recording_policy(&self) -> RecordingPolicy {
        self.recording.clone()
    }
}
