use std::time::Duration;

use serde_json::{json, Value};

use super::HttpTextGeneratorConfig;
use crate::providers::{ProviderError, ProviderResult, TextGenerator};

pub struct HttpTextGenerator {
    config: HttpTextGeneratorConfig,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for HttpTextGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpTextGenerator")
            .field("url", &self.config.url)
            .field("model", &self.config.model)
            .finish()
    }
}

impl HttpTextGenerator {
    pub fn new(config: HttpTextGeneratorConfig) -> ProviderResult<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        Ok(HttpTextGenerator { config, client })
    }
}

fn completion_text(body: &Value) -> Option<&str> {
    let choice = body.get("choices")?.get(0)?;
    choice
        .get("text")
        .and_then(Value::as_str)
        .or_else(|| choice.get("message")?.get("content")?.as_str())
}

impl TextGenerator for HttpTextGenerator {
    fn name(&self) -> &str {
        "http"
    }

    fn generate(&self, prompt: &str) -> ProviderResult<String> {
        let mut request = self.client.post(&self.config.url).json(&json!({
            "model": self.config.model,
            "prompt": prompt,
            "max_tokens": self.config.max_tokens,
            "temperature": self.config.temperature,
        }));
        if let Ok(key) = std::env::var(&self.config.api_key_env) {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| ProviderError::Unavailable(e.without_url().to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(ProviderError::Failed(format!(
                "completion endpoint returned {status}"
            )));
        }
        let body: Value = response
            .json()
            .map_err(|e| ProviderError::Failed(format!("unreadable completion: {e}")))?;
        completion_text(&body)
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
            .ok_or_else(|| ProviderError::Failed("completion response has no text".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serves one canned HTTP response and hands back the request body.
    fn serve_once(status: &str, body: &str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/completions", listener.local_addr().unwrap());
        let response = format!(
            "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
            body.len()
        );
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            (&stream).write_all(response.as_bytes()).unwrap();
            String::from_utf8(buf).unwrap()
        });
        (url, handle)
    }

    #[test]
    fn posts_prompt_and_reads_completion() {
        let (url, handle) = serve_once("200 OK", r#"{"choices":[{"text":"  Dear diary.  "}]}"#);
        let generator = HttpTextGenerator::new(HttpTextGeneratorConfig {
            url,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(generator.generate("Premise:\n...").unwrap(), "Dear diary.");
        let sent: Value = serde_json::from_str(&handle.join().unwrap()).unwrap();
        assert_eq!(sent["prompt"], "Premise:\n...");
    }

    #[test]
    fn server_error_is_a_failure() {
        let (url, handle) = serve_once("500 Internal Server Error", "{}");
        let generator = HttpTextGenerator::new(HttpTextGeneratorConfig {
            url,
            ..Default::default()
        })
        .unwrap();
        assert!(matches!(
            generator.generate("p"),
            Err(ProviderError::Failed(_))
        ));
        handle.join().unwrap();
    }

    #[test]
    fn chat_style_responses_are_accepted() {
        let body = json!({"choices": [{"message": {"content": "hi"}}]});
        assert_eq!(completion_text(&body), Some("hi"));
    }
}
