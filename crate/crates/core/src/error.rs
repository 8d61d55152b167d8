use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::memory::MemoryError;
use crate::providers::ProviderError;

/// The diary pipeline stage an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Select,
    Describe,
    Summarize,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Select => "select",
            Stage::Describe => "describe",
            Stage::Summarize => "summarize",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("[{stage}] {provider} provider failed on {subject}: {source}")]
    Provider {
        stage: Stage,
        provider: String,
        subject: String,
        #[source]
        source: ProviderError,
    },

    #[error("[{stage}] {message}")]
    Invalid { stage: Stage, message: String },

    #[error("[summarize] text generation failed: {source}")]
    Generation {
        /// The rendered prompt that was sent, kept for diagnosis.
        prompt: String,
        #[source]
        source: ProviderError,
    },

    #[error(transparent)]
    Memory(#[from] MemoryError),
}

impl PipelineError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Provider { stage, .. } | PipelineError::Invalid { stage, .. } => {
                Some(*stage)
            }
            PipelineError::Generation { .. } => Some(Stage::Summarize),
            PipelineError::Memory(_) => None,
        }
    }

    pub(crate) fn invalid(stage: Stage, message: impl Into<String>) -> Self {
        PipelineError::Invalid {
            stage,
            message: message.into(),
        }
    }
}
