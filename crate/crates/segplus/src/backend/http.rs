//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::json;

use super::{Backend, BackendRequest, BackendResponse};
use crate::error::{Error, Result};
use crate::token::{ApproxCounter, TokenCounter};

/// Transport settings. `retry_delays` doubles as the retry budget: one
/// initial attempt plus one retry per delay.
#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    /// Endpoint root; `/chat/completions` is appended.
    pub base_url: String,
    pub api_key: String,
    pub model: String,
    pub request_timeout: Duration,
    pub retry_delays: Vec<Duration>,
}

impl HttpBackendConfig {
    pub fn new(
        base_url: impl Into<String>,
        api_key: impl Into<String>,
        model: impl Into<String>,
    ) -> Self {
        HttpBackendConfig {
            base_url: base_url.into(),
            api_key: api_key.into(),
            model: model.into(),
            request_timeout: Duration::from_secs(120),
            retry_delays: vec![
                Duration::from_secs(1),
                Duration::from_secs(2),
                Duration::from_secs(4),
            ],
        }
    }

    /// Reads `SEGPLUS_API_BASE` and `SEGPLUS_API_KEY`.
    pub fn from_env(model: impl Into<String>) -> Result<Self> {
        let base_url = std::env::var("SEGPLUS_API_BASE").map_err(|_| Error::ConfigInvalid {
            field: "SEGPLUS_API_BASE",
            reason: "environment variable not set".to_string(),
        })?;
        let api_key = std::env::var("SEGPLUS_API_KEY").map_err(|_| Error::ConfigInvalid {
            field: "SEGPLUS_API_KEY",
            reason: "environment variable not set".to_string(),
        })?;
        Ok(HttpBackendConfig::new(base_url, api_key, model))
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    client: reqwest::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Usage,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: String,
}

#[derive(Deserialize, Default)]
struct Usage {
    #[serde(default)]
    prompt_tokens: usize,
    #[serde(default)]
    completion_tokens: usize,
}

enum AttemptError {
    /// Timeout or transient transport/status failure; worth retrying.
    Retry {
        timeout: bool,
        reason: String,
    },
    Fatal(Error),
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self> {
        let client = reqwest::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| Error::BackendUnavailable {
                attempts: 0,
                reason: format!("client construction failed: {e}"),
            })?;
        Ok(HttpBackend { config, client })
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }

    async fn attempt(
        &self,
        request: &BackendRequest,
    ) -> std::result::Result<(String, Usage), AttemptError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let response = self
            .client
            .post(self.endpoint())
            .bearer_auth(&self.config.api_key)
            .json(&body)
            .send()
            .await
            .map_err(|e| AttemptError::Retry {
                timeout: e.is_timeout(),
                reason: e.to_string(),
            })?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(AttemptError::Retry {
                timeout: false,
                reason: format!("status {}", status.as_u16()),
            });
        }
        if !status.is_success() {
            let text = response.text().await.unwrap_or_default();
            return Err(AttemptError::Fatal(Error::BackendRejected {
                status: status.as_u16(),
                reason: first_line(&text),
            }));
        }
        let parsed: ChatResponse = response.json().await.map_err(|e| {
            AttemptError::Fatal(Error::BackendRejected {
                status: status.as_u16(),
                reason: format!("malformed response body: {e}"),
            })
        })?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| {
                AttemptError::Fatal(Error::BackendRejected {
                    status: status.as_u16(),
                    reason: "response carried no choices".to_string(),
                })
            })?;
        Ok((text, parsed.usage))
    }
}

fn first_line(text: &str) -> String {
    text.lines()
        .next()
        .unwrap_or("")
        .chars()
        .take(200)
        .collect()
}

#[async_trait]
impl Backend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    async fn complete(&self, request: &BackendRequest) -> Result<BackendResponse> {
        let mut attempts: u32 = 0;
        loop {
            attempts += 1;
            match self.attempt(request).await {
                Ok((text, usage)) => {
                    // Servers are not obliged to report usage; fall back
                    // to the builtin counter so traces keep token totals.
                    let prompt_tokens = if usage.prompt_tokens > 0 {
                        usage.prompt_tokens
                    } else {
                        ApproxCounter.count(&request.prompt)
                    };
                    let completion_tokens = if usage.completion_tokens > 0 {
                        usage.completion_tokens
                    } else {
                        ApproxCounter.count(&text)
                    };
                    return Ok(BackendResponse {
                        text,
                        prompt_tokens,
                        completion_tokens,
                        attempts,
                    });
                }
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Retry { timeout, reason }) => {
                    let retries_used = (attempts - 1) as usize;
                    if retries_used >= self.config.retry_delays.len() {
                        return Err(if timeout {
                            Error::Timeout { attempts }
                        } else {
                            Error::BackendUnavailable { attempts, reason }
                        });
                    }
                    tokio::time::sleep(self.config.retry_delays[retries_used]).await;
                }
            }
        }
    }
}
