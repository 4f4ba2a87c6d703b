//! Chat backends: an OpenAI-compatible HTTP client with bounded retries and
//! a scripted mock for offline runs.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::GenError;
use crate::prompt::PromptMode;

/// One generation request.
#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub mode: PromptMode,
    pub prompt: String,
    pub image: Option<PathBuf>,
}

/// Anything that turns a prompt into a completion.
pub trait ChatBackend {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, GenError>;

    /// HTTP requests issued so far, retries included.
    fn requests_sent(&self) -> usize;
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub endpoint_url: String,
    pub api_key: Option<String>,
    pub model_name: String,
    pub max_retries: u32,
    pub timeout: Duration,
    /// First backoff delay; doubles after each failed attempt.
    pub backoff_base: Duration,
}

/// Blocking client for `/v1/chat/completions`.
pub struct HttpChatClient {
    cfg: HttpConfig,
    url: String,
    http: reqwest::blocking::Client,
    sent: usize,
}

impl HttpChatClient {
    pub fn new(cfg: HttpConfig) -> Result<Self, GenError> {
        if cfg.endpoint_url.trim().is_empty() {
            return Err(GenError::Config("endpoint url is empty".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| GenError::Config(format!("http client: {e}")))?;
        Ok(Self {
            url: completions_url(&cfg.endpoint_url),
            cfg,
            http,
            sent: 0,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn body(&self, request: &ChatRequest) -> Result<serde_json::Value, GenError> {
        let content = match &request.image {
            Some(path) if request.mode == PromptMode::Vlm => json!([
                {"type": "text", "text": request.prompt},
                {"type": "image_url", "image_url": {"url": image_data_url(path)?}},
            ]),
            _ => json!(request.prompt),
        };
        Ok(json!({
            "model": self.cfg.model_name,
            "messages": [{"role": "user", "content": content}],
        }))
    }
}

/// Appends the standard path unless the URL already names an endpoint.
pub fn completions_url(endpoint: &str) -> String {
    let base = endpoint.trim_end_matches('/');
    if base.ends_with("/chat/completions") {
        base.to_string()
    } else if base.ends_with("/v1") {
        format!("{base}/chat/completions")
    } else {
        format!("{base}/v1/chat/completions")
    }
}

fn image_data_url(path: &Path) -> Result<String, GenError> {
    let bytes = fs::read(path).map_err(|e| GenError::Config(format!("{}: {e}", path.display())))?;
    let mime = match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg") | Some("jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        _ => "application/octet-stream",
    };
    let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
    Ok(format!("data:{mime};base64,{encoded}"))
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

fn retryable(status: reqwest::StatusCode) -> bool {
    status == reqwest::StatusCode::TOO_MANY_REQUESTS || status.is_server_error()
}

impl ChatBackend for HttpChatClient {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, GenError> {
        let body = self.body(request)?;
        let mut last_error = String::new();
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                let delay = self.cfg.backoff_base.saturating_mul(1 << (attempt - 1).min(16));
                log::warn!("retrying chat request in {delay:?} (attempt {attempt}): {last_error}");
                thread::sleep(delay);
            }
            self.sent += 1;
            let mut req = self.http.post(&self.url).json(&body);
            if let Some(key) = &self.cfg.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let parsed: CompletionResponse = resp
                            .json()
                            .map_err(|e| GenError::Response(format!("bad completion body: {e}")))?;
                        return parsed
                            .choices
                            .into_iter()
                            .next()
                            .and_then(|c| c.message.content)
                            .ok_or_else(|| GenError::Response("completion has no message content".into()));
                    }
                    let text = resp.text().unwrap_or_default();
                    last_error = format!("HTTP {status}: {text}");
                    if !retryable(status) {
                        return Err(GenError::Http {
                            attempts: attempt + 1,
                            message: last_error,
                        });
                    }
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(GenError::Http {
            attempts: self.cfg.max_retries + 1,
            message: last_error,
        })
    }

    fn requests_sent(&self) -> usize {
        self.sent
    }
}

/// Canned responses replayed in order. Once exhausted every request
/// returns an empty completion.
#[derive(Debug, Clone, Default)]
pub struct MockScript {
    responses: VecDeque<String>,
    sent: usize,
    prompts: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ScriptEntry {
    Text(String),
    Lines(Vec<String>),
}

impl MockScript {
    pub fn new(responses: impl IntoIterator<Item = String>) -> Self {
        Self {
            responses: responses.into_iter().collect(),
            sent: 0,
            prompts: Vec::new(),
        }
    }

    /// Loads a JSON array whose items are either a full response string or
    /// an array of phrases (rendered as a bullet list).
    pub fn from_file(path: &Path) -> Result<Self, GenError> {
        let text = fs::read_to_string(path).map_err(|e| GenError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, GenError> {
        let entries: Vec<ScriptEntry> =
            serde_json::from_str(text).map_err(|e| GenError::Config(format!("mock script: {e}")))?;
        Ok(Self::new(entries.into_iter().map(|e| match e {
            ScriptEntry::Text(s) => s,
            ScriptEntry::Lines(lines) => lines.iter().map(|l| format!("- {l}\n")).collect(),
        })))
    }

    /// Prompts received so far.
    pub fn prompts(&self) -> &[String] {
        &self.prompts
    }
}

impl ChatBackend for MockScript {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, GenError> {
        self.sent += 1;
        self.prompts.push(request.prompt.clone());
        Ok(self.responses.pop_front().unwrap_or_default())
    }

    fn requests_sent(&self) -> usize {
        self.sent
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn url_normalization() {
        assert_eq!(completions_url("http://h:1"), "http://h:1/v1/chat/completions");
        assert_eq!(completions_url("http://h:1/"), "http://h:1/v1/chat/completions");
        assert_eq!(completions_url("http://h/v1"), "http://h/v1/chat/completions");
        assert_eq!(
            completions_url("http://h/v1/chat/completions"),
            "http://h/v1/chat/completions"
        );
    }

    #[test]
    fn mock_script_formats() {
        let mut m = MockScript::from_json(r#"["- a\n- b", ["c", "d"]]"#).unwrap();
        let req = ChatRequest {
            mode: PromptMode::Llm,
            prompt: "p".into(),
            image: None,
        };
        assert_eq!(m.complete(&req).unwrap(), "- a\n- b");
        assert_eq!(m.complete(&req).unwrap(), "- c\n- d\n");
        assert_eq!(m.complete(&req).unwrap(), "");
        assert_eq!(m.requests_sent(), 3);
        assert!(MockScript::from_json("{").is_err());
    }

    #[test]
    fn vlm_body_attaches_image() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("x.png");
        fs::write(&img, [1u8, 2, 3]).unwrap();
        let client = HttpChatClient::new(HttpConfig {
            endpoint_url: "http://127.0.0.1:9".into(),
            api_key: None,
            model_name: "m".into(),
            max_retries: 0,
            timeout: Duration::from_secs(1),
            backoff_base: Duration::from_millis(1),
        })
        .unwrap();
        let body = client
            .body(&ChatRequest {
                mode: PromptMode::Vlm,
                prompt: "look".into(),
                image: Some(img),
            })
            .unwrap();
        let content = &body["messages"][0]["content"];
        assert_eq!(content[0]["text"], "look");
        assert_eq!(content[1]["image_url"]["url"], "data:image/png;base64,AQID");

        let text_only = client
            .body(&ChatRequest {
                mode: PromptMode::Llm,
                prompt: "p".into(),
                image: None,
            })
            .unwrap();
        assert_eq!(text_only["messages"][0]["content"], "p");
        assert!(text_only.get("temperature").is_none());
    }
}
