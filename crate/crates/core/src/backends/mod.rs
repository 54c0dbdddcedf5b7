//! Model invocation: one trait, several implementations.

use std::sync::{Arc, Condvar, Mutex};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod fault;
mod oracle;
mod remote;
mod replay;

pub use fault::{FaultCounts, FaultInjector, FaultRates};
pub use oracle::{OracleAction, OracleBackend, OracleConfig};
pub use remote::{backoff_schedule, RemoteBackend, RemoteConfig};
pub use replay::{ReplayBackend, ReplayTurn};

pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            seed: None,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UsageRecord {
    pub context_tokens: u64,
    pub output_tokens: u64,
    pub latency: Duration,
    pub call_count: u32,
}

impl UsageRecord {
    /// Whitespace-word approximation used by the offline backends.
    pub fn estimate(prompt: &str, completion: &str) -> Self {
        UsageRecord {
            context_tokens: count_tokens(prompt),
            output_tokens: count_tokens(completion),
            latency: Duration::ZERO,
            call_count: 1,
        }
    }

    pub fn add(&mut self, other: &UsageRecord) {
        self.context_tokens += other.context_tokens;
        self.output_tokens += other.output_tokens;
        self.latency += other.latency;
        self.call_count += other.call_count;
    }
}

pub fn count_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: UsageRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("replay transcript exhausted after {turns} turns")]
    ReplayExhausted { turns: usize },
    #[error("replay turn {turn} was recorded for a different prompt")]
    ReplayMismatch { turn: usize },
    #[error("not a benchmark problem: {0}")]
    UnparsableBenchmarkProblem(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError>;

    fn name(&self) -> String {
        std::any::type_name::<Self>()
            .rsplit("::")
            .next()
            .unwrap_or("backend")
            .to_string()
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        (**self).complete(request)
    }

    fn name(&self) -> String {
        (**self).name()
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        (**self).complete(request)
    }

    fn name(&self) -> String {
        (**self).name()
    }
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        (**self).complete(request)
    }

    fn name(&self) -> String {
        (**self).name()
    }
}

/// Caps the number of in-flight calls to the wrapped backend.
pub struct Bounded<B> {
    inner: B,
    limit: usize,
    in_flight: Mutex<usize>,
    released: Condvar,
    peak: AtomicUsize,
}

impl<B: Backend> Bounded<B> {
    pub fn new(inner: B, limit: usize) -> Self {
        Bounded {
            inner,
            limit: limit.max(1),
            in_flight: Mutex::new(0),
            released: Condvar::new(),
            peak: AtomicUsize::new(0),
        }
    }

    /// Highest number of simultaneous calls observed so far.
    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: Backend> Backend for Bounded<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        {
            let mut n = self.in_flight.lock().unwrap();
            while *n >= self.limit {
                n = self.released.wait(n).unwrap();
            }
            *n += 1;
            self.peak.fetch_max(*n, Ordering::SeqCst);
        }
        let result = self.inner.complete(request);
        *self.in_flight.lock().unwrap() -= 1;
        self.released.notify_one();
        result
    }

    fn name(&self) -> String {
        self.inner.name()
    }
}
