use serde::{Deserialize, Serialize};

/// Settings for an OpenAI-style completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpTextGeneratorConfig {
    pub url: String,
    pub model: String,
    pub max_tokens: u32,
    pub temperature: f64,
    /// Name of the environment variable holding the bearer token. The token
    /// itself never appears in configuration or logs.
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for HttpTextGeneratorConfig {
    fn default() -> Self {
        HttpTextGeneratorConfig {
            url: "http://127.0.0.1:8000/v1/completions".into(),
            model: "text-davinci-003".into(),
            max_tokens: 512,
            temperature: 0.7,
            api_key_env: "ROBODIARY_API_KEY".into(),
            timeout_secs: 60,
        }
    }
}

#[cfg(feature = "http-providers")]
mod client;

#[cfg(feature = "http-providers")]
pub use client::HttpTextGenerator;
