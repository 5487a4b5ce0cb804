//! Blocking HTTP-JSON transport with bounded retries and exponential backoff.
//!
//! Transport failures and retryable statuses (429 and 5xx) are retried up to
//! the configured budget; other non-success statuses fail immediately.
//! Request and response bodies are logged at debug level; the API key is only
//! ever sent as a bearer header and never logged.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};

/// Connection settings for one remote role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEndpoint {
    pub base_url: String,
    pub model: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl RemoteEndpoint {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteEndpoint {
            base_url: base_url.into(),
            model: model.into(),
            timeout_ms: 30_000,
            max_retries: 3,
            backoff_ms: 250,
        }
    }
}

pub struct HttpJsonClient {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: Option<String>,
    max_retries: u32,
    backoff_ms: u64,
    stage: Stage,
}

impl HttpJsonClient {
    pub fn new(endpoint: &RemoteEndpoint, api_key: Option<String>, stage: Stage) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(endpoint.timeout_ms))
            .build()
            .map_err(|e| Error::transport(stage, format!("building http client: {e}")))?;
        Ok(HttpJsonClient {
            client,
            base_url: endpoint.base_url.trim_end_matches('/').to_string(),
            api_key,
            max_retries: endpoint.max_retries,
            backoff_ms: endpoint.backoff_ms,
            stage,
        })
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    fn is_retryable_status(status: u16) -> bool {
        status == 429 || (500..600).contains(&status)
    }

    /// POST `body` to `base_url + path`, returning the parsed JSON response.
    pub fn post_json(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value> {
        let url = format!("{}{}", self.base_url, path);
        let mut last_failure = String::new();

        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                let backoff = self.backoff_ms.saturating_mul(1 << (attempt - 1));
                std::thread::sleep(Duration::from_millis(backoff));
                tracing::debug!(stage = %self.stage, attempt, "retrying request");
            }
            tracing::debug!(stage = %self.stage, %url, request = %body, "sending request");

            let mut request = self.client.post(&url).json(body);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            match request.send() {
                Err(e) => {
                    last_failure = format!("transport: {e}");
                }
                Ok(response) => {
                    let status = response.status().as_u16();
                    let text = response
                        .text()
                        .map_err(|e| self.transport_err(format!("reading body: {e}")))?;
                    tracing::debug!(stage = %self.stage, status, response = %text, "received response");
                    if (200..300).contains(&status) {
                        return serde_json::from_str(&text).map_err(|e| {
                            Error::integrity(self.stage, format!("response is not JSON: {e}"))
                        });
                    }
                    last_failure = format!("http {status}: {}", text.chars().take(200).collect::<String>());
                    if !Self::is_retryable_status(status) {
                        return Err(self.transport_err(last_failure));
                    }
                }
            }
        }
        Err(self.transport_err(format!(
            "{last_failure} (after {} attempts)",
            self.max_retries + 1
        )))
    }

    fn transport_err(&self, message: String) -> Error {
        Error::transport(self.stage, message)
    }
}
