//! Chat-completions HTTP backend with retries and backoff.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::Deserialize;
use serde_json::json;

use crate::extraction::{BackendError, ExtractionBackend, ExtractionConfig};

static NETWORK_ATTEMPTS: AtomicU64 = AtomicU64::new(0);

/// Total HTTP attempts made by any remote backend in this process. The
/// offline paths assert this stays at zero.
pub fn network_attempts() -> u64 {
    NETWORK_ATTEMPTS.load(Ordering::Relaxed)
}

/// Client for an OpenAI-style `chat/completions` endpoint. The system
/// prompt is sent as the system message and the report text as the user
/// message; temperature and seed come from the config so runs are as
/// reproducible as the endpoint allows.
pub struct RemoteLlmBackend {
    config: ExtractionConfig,
    credential: Option<String>,
    client: reqwest::blocking::Client,
    calls: AtomicU64,
}

impl RemoteLlmBackend {
    pub fn new(config: ExtractionConfig) -> Result<Self, BackendError> {
        let credential = if config.credential_env_var.is_empty() {
            None
        } else {
            Some(std::env::var(&config.credential_env_var).map_err(|_| {
                BackendError::MissingCredential(config.credential_env_var.clone())
            })?)
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            config,
            credential,
            client,
            calls: AtomicU64::new(0),
        })
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<String, BackendError> {
        NETWORK_ATTEMPTS.fetch_add(1, Ordering::Relaxed);
        let mut request = self.client.post(&self.config.endpoint).json(body);
        if let Some(cred) = &self.credential {
            request = request
                .header("Authorization", format!("Bearer {cred}"))
                .header("api-key", cred.as_str());
        }
        let response = request
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status();
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse::<u64>().ok());
        let text = response
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            let err = BackendError::Http {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            };
            return Err(match retry_after {
                Some(secs) => BackendError::Transport(format!("{err} (retry-after {secs}s)")),
                None => err,
            });
        }
        #[derive(Deserialize)]
        struct Choice {
            message: Message,
        }
        #[derive(Deserialize)]
        struct Message {
            content: String,
        }
        #[derive(Deserialize)]
        struct Completion {
            choices: Vec<Choice>,
        }
        let completion: Completion = serde_json::from_str(&text)
            .map_err(|e| BackendError::BadResponseShape(e.to_string()))?;
        completion
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| BackendError::BadResponseShape("empty choices".to_string()))
    }

    fn retryable(err: &BackendError) -> bool {
        match err {
            BackendError::Http { status, .. } => *status == 429 || *status >= 500,
            BackendError::Transport(_) => true,
            _ => false,
        }
    }
}

impl ExtractionBackend for RemoteLlmBackend {
    fn complete(&self, system_prompt: &str, user_content: &str) -> Result<String, BackendError> {
        let mut body = json!({
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_content},
            ],
            "temperature": self.config.temperature,
        });
        if let Some(seed) = self.config.request_seed {
            body["seed"] = json!(seed);
        }
        let attempts = self.config.max_retries + 1;
        let mut last: Option<BackendError> = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                let backoff = self.config.initial_backoff * 2u32.pow(attempt - 1);
                std::thread::sleep(backoff);
            }
            match self.attempt(&body) {
                Ok(content) => {
                    self.calls.fetch_add(1, Ordering::Relaxed);
                    return Ok(content);
                }
                Err(err) if Self::retryable(&err) => last = Some(err),
                Err(err) => return Err(err),
            }
        }
        Err(BackendError::RetriesExhausted {
            attempts,
            last: last.map(|e| e.to_string()).unwrap_or_default(),
        })
    }

    fn name(&self) -> &str {
        "remote"
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}
