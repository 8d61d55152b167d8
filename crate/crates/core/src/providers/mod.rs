//! Provider interfaces for the external models the pipeline leans on:
//! image captioning, sentence embedding, entity tagging, visual question
//! answering, text generation and translation.
//!
//! Every interface has an offline implementation in [`offline`] so the whole
//! pipeline runs without network access. Live services plug in behind the
//! same traits.

mod http;
pub mod offline;
mod tables;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[cfg(feature = "http-providers")]
pub use http::HttpTextGenerator;
pub use http::HttpTextGeneratorConfig;
pub use tables::{load_caption_table, load_vqa_table, CaptionTable, VqaTable};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProviderError {
    /// The provider cannot be reached at all; retrying other inputs is
    /// pointless.
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    /// The provider rejected or failed on this particular input.
    #[error("provider failed: {0}")]
    Failed(String),
}

pub type ProviderResult<T> = Result<T, ProviderError>;

/// A memorized image as handed to vision providers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRef {
    pub file_name: String,
    pub path: PathBuf,
}

impl ImageRef {
    pub fn new(dir: &Path, file_name: &str) -> Self {
        ImageRef {
            file_name: file_name.to_string(),
            path: dir.join(file_name),
        }
    }

    pub fn read(&self) -> ProviderResult<Vec<u8>> {
        std::fs::read(&self.path)
            .map_err(|e| ProviderError::Failed(format!("{}: {e}", self.path.display())))
    }
}

pub trait Captioner: Send + Sync {
    fn name(&self) -> &str;
    fn caption(&self, image: &ImageRef) -> ProviderResult<String>;
}

pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;
    /// Raw embedding; callers normalize.
    fn embed(&self, text: &str) -> ProviderResult<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntityCategory {
    Person,
    Location,
    Organization,
    Other,
}

impl fmt::Display for EntityCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityCategory::Person => "PERSON",
            EntityCategory::Location => "LOCATION",
            EntityCategory::Organization => "ORGANIZATION",
            EntityCategory::Other => "OTHER",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub surface: String,
    pub category: EntityCategory,
}

pub trait EntityTagger: Send + Sync {
    fn name(&self) -> &str;
    fn tag(&self, text: &str) -> ProviderResult<Vec<Entity>>;
}

/// Visual question answering.
pub trait QuestionAnswerer: Send + Sync {
    fn name(&self) -> &str;
    fn answer(&self, image: &ImageRef, question: &str) -> ProviderResult<String>;
}

pub trait TextGenerator: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, prompt: &str) -> ProviderResult<String>;
}

pub trait Translator: Send + Sync {
    fn name(&self) -> &str;
    fn translate(&self, text: &str) -> ProviderResult<String>;
}

/// The provider set one pipeline run uses.
#[derive(Clone)]
pub struct Providers {
    pub captioner: Arc<dyn Captioner>,
    pub embedder: Arc<dyn Embedder>,
    pub entities: Arc<dyn EntityTagger>,
    pub vqa: Arc<dyn QuestionAnswerer>,
    pub generator: Arc<dyn TextGenerator>,
}

impl fmt::Debug for Providers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Providers")
            .field("captioner", &self.captioner.name())
            .field("embedder", &self.embedder.name())
            .field("entities", &self.entities.name())
            .field("vqa", &self.vqa.name())
            .field("generator", &self.generator.name())
            .finish()
    }
}

impl Providers {
    /// All-offline providers with empty fixture tables.
    pub fn offline(partner_name: &str) -> Self {
        Providers {
            captioner: Arc::new(offline::TableCaptioner::default()),
            embedder: Arc::new(offline::TrigramEmbedder::default()),
            entities: Arc::new(offline::GazetteerTagger::new([partner_name])),
            vqa: Arc::new(offline::TableVqa::default()),
            generator: Arc::new(offline::TemplateDiaryWriter::default()),
        }
    }
}

/// Calls `f`, retrying once unless the provider reports itself unavailable.
pub(crate) fn with_retry<T>(mut f: impl FnMut() -> ProviderResult<T>) -> ProviderResult<T> {
    match f() {
        Ok(v) => Ok(v),
        Err(ProviderError::Unavailable(msg)) => Err(ProviderError::Unavailable(msg)),
        Err(first) => {
            tracing::debug!("provider call failed, retrying once: {first}");
            f()
        }
    }
}
