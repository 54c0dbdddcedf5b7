use std::time::{Duration, Instant};

use serde_json::{json, Value};
use ureq::Agent;

use super::{count_tokens, Backend, BackendError, Completion, CompletionRequest, UsageRecord};

pub const ENV_API_BASE: &str = "RDD_API_BASE";
pub const ENV_API_KEY: &str = "RDD_API_KEY";
pub const ENV_MODEL: &str = "RDD_MODEL";

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    /// Base URL up to and including the API version, e.g. `http://host:8000/v1`.
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteConfig {
            base_url: base_url.into(),
            api_key: None,
            model: model.into(),
            max_attempts: 5,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(300),
        }
    }

    /// Reads `RDD_API_BASE`, `RDD_MODEL` and the optional `RDD_API_KEY`.
    pub fn from_env() -> Result<Self, BackendError> {
        let var = |name: &str| std::env::var(name).ok().filter(|v| !v.is_empty());
        let base = var(ENV_API_BASE)
            .ok_or_else(|| BackendError::InvalidRequest(format!("{ENV_API_BASE} is not set")))?;
        let model = var(ENV_MODEL)
            .ok_or_else(|| BackendError::InvalidRequest(format!("{ENV_MODEL} is not set")))?;
        let mut config = RemoteConfig::new(base, model);
        config.api_key = var(ENV_API_KEY);
        Ok(config)
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Delays slept before attempts 2..=max_attempts.
pub fn backoff_schedule(initial: Duration, max_attempts: u32) -> Vec<Duration> {
    (1..max_attempts.max(1))
        .map(|i| initial.saturating_mul(1 << (i - 1).min(20)))
        .collect()
}

/// Chat-completions client.
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: Agent,
}

enum Attempt {
    Done(Completion),
    Retry(BackendError),
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteBackend { config, agent }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn body(&self, request: &CompletionRequest) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<Attempt, BackendError> {
        let started = Instant::now();
        let mut call = self.agent.post(&self.config.endpoint());
        if let Some(key) = &self.config.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = match call.send_json(self.body(request)) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Ok(Attempt::Retry(BackendError::Timeout)),
            Err(e) => return Err(BackendError::Protocol(e.to_string())),
        };
        let status = response.status().as_u16();
        if status == 429 {
            return Ok(Attempt::Retry(BackendError::RateLimited { attempts: 0 }));
        }
        if status >= 500 {
            return Ok(Attempt::Retry(BackendError::Protocol(format!("server returned {status}"))));
        }
        if status != 200 {
            return Err(BackendError::Protocol(format!("server returned {status}")));
        }
        let value: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Protocol(format!("invalid response body: {e}")))?;
        let text = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| BackendError::Protocol("response has no message content".into()))?
            .to_string();
        let reported = |key: &str| value["usage"][key].as_u64();
        let usage = UsageRecord {
            context_tokens: reported("prompt_tokens").unwrap_or_else(|| count_tokens(&request.prompt)),
            output_tokens: reported("completion_tokens").unwrap_or_else(|| count_tokens(&text)),
            latency: started.elapsed(),
            call_count: 1,
        };
        Ok(Attempt::Done(Completion { text, usage }))
    }
}

impl Backend for RemoteBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        request.validate()?;
        let attempts = self.config.max_attempts.max(1);
        let delays = backoff_schedule(self.config.initial_backoff, attempts);
        let mut last = BackendError::Timeout;
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(delays[attempt as usize - 1]);
            }
            match self.attempt(request)? {
                Attempt::Done(c) => return Ok(c),
                Attempt::Retry(e) => last = e,
            }
        }
        Err(match last {
            BackendError::RateLimited { .. } => BackendError::RateLimited { attempts },
            other => other,
        })
    }

    fn name(&self) -> String {
        format!("remote({})", self.config.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles() {
        let s = backoff_schedule(Duration::from_millis(100), 4);
        assert_eq!(s, [100, 200, 400].map(Duration::from_millis));
        assert!(backoff_schedule(Duration::from_millis(1), 1).is_empty());
    }

    #[test]
    fn endpoint_joins_cleanly() {
        assert_eq!(RemoteConfig::new("http://h/v1/", "m").endpoint(), "http://h/v1/chat/completions");
    }
}
