//! Model gateway: the request/response types shared by the three model
//! roles, the backend trait, and the spring-sampling temperature schedule.

mod http;
mod scripted;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{HttpBackend, RetryPolicy, API_KEY_ENV, FALLBACK_API_KEY_ENV};
pub use scripted::{Fixture, ScriptedBackend};

pub const CODE_MAX_TOKENS: u32 = 1024;
pub const EXPLAIN_MAX_TOKENS: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Synth,
    Explain,
    Debug,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Synth => "synth",
            Role::Explain => "explain",
            Role::Debug => "debug",
        }
    }

    fn default_max_tokens(self) -> u32 {
        match self {
            Role::Explain => EXPLAIN_MAX_TOKENS,
            Role::Synth | Role::Debug => CODE_MAX_TOKENS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub system_message: String,
    pub user_message: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub role: Role,
}

impl ModelRequest {
    pub fn new(role: Role, system_message: impl Into<String>, user_message: impl Into<String>) -> Self {
        Self {
            system_message: system_message.into(),
            user_message: user_message.into(),
            temperature: 0.0,
            max_tokens: role.default_max_tokens(),
            role,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature must be finite and non-negative, got {}",
                self.temperature
            )));
        }
        if self.system_message.is_empty() || self.user_message.is_empty() {
            return Err(BackendError::InvalidRequest("messages must be non-empty".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 over role and both messages (temperature excluded).
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.role.as_str().as_bytes());
        hasher.update([0]);
        hasher.update(self.system_message.as_bytes());
        hasher.update([0]);
        hasher.update(self.user_message.as_bytes());
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelResponse {
    /// Raw completion; may be empty.
    pub text: String,
    pub backend_id: String,
    pub latency: Duration,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid model request: {0}")]
    InvalidRequest(String),
    #[error("model request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("model backend failed after {attempts} attempt(s): {message}")]
    Unavailable { attempts: u32, message: String },
    #[error("model backend returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed model response: {0}")]
    Malformed(String),
    #[error("scripted fixture: {0}")]
    Fixture(String),
}

/// A model service. Implementations must tolerate concurrent calls.
pub trait ModelBackend: Send + Sync {
    fn id(&self) -> &str;

    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError>;

    /// Upper bound on concurrent requests issued for one batch. Backends whose
    /// answers depend on call order return 1.
    fn max_concurrency(&self) -> usize {
        1
    }

    /// Called once at the start of every search run.
    fn begin_run(&self, _seed: u64) {}
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("sample index {index} outside 1..={n}")]
pub struct ScheduleError {
    pub index: usize,
    pub n: usize,
}

/// Spring-sampling temperature of the `index`-th (1-based) of `n` samples:
/// exactly `(index - 1) / n`, so the first sample is greedy.
pub fn temperature_for(index: usize, n: usize) -> Result<f64, ScheduleError> {
    if index == 0 || index > n {
        return Err(ScheduleError { index, n });
    }
    Ok((index - 1) as f64 / n as f64)
}

/// Samples `n` completions of `request`, the `i`-th at `temperature_for(i, n)`.
pub fn generate_batch(
    request: &ModelRequest,
    n: usize,
    backend: &dyn ModelBackend,
) -> Result<Vec<ModelResponse>, BackendError> {
    generate_prefix(request, n, n, backend)
}

/// Like [`generate_batch`] but only issues the first `take` requests of an
/// `n`-sample schedule. Used when the program budget truncates a batch.
pub fn generate_prefix(
    request: &ModelRequest,
    n: usize,
    take: usize,
    backend: &dyn ModelBackend,
) -> Result<Vec<ModelResponse>, BackendError> {
    let take = take.min(n);
    let requests = (1..=take)
        .map(|i| {
            let t = temperature_for(i, n).expect("index within schedule");
            request.clone().with_temperature(t)
        })
        .collect::<Vec<_>>();
    for r in &requests {
        r.validate()?;
    }

    let workers = backend.max_concurrency().clamp(1, take.max(1));
    if workers == 1 {
        return requests.iter().map(|r| backend.complete(r)).collect();
    }

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<ModelResponse, BackendError>>>> =
        Mutex::new((0..take).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= requests.len() {
                    break;
                }
                let result = backend.complete(&requests[i]);
                slots.lock().unwrap()[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("every slot filled"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo {
        seen: Mutex<Vec<f64>>,
        workers: usize,
    }

    impl ModelBackend for Echo {
        fn id(&self) -> &str {
            "echo"
        }

        fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
            self.seen.lock().unwrap().push(request.temperature);
            Ok(ModelResponse {
                text: format!("{}", request.temperature),
                backend_id: "echo".into(),
                latency: Duration::ZERO,
            })
        }

        fn max_concurrency(&self) -> usize {
            self.workers
        }
    }

    #[test]
    fn schedule_values() {
        assert_eq!(temperature_for(1, 10), Ok(0.0));
        assert_eq!(temperature_for(6, 10), Ok(0.5));
        assert_eq!(temperature_for(1, 1), Ok(0.0));
        assert_eq!(temperature_for(0, 3), Err(ScheduleError { index: 0, n: 3 }));
        assert_eq!(temperature_for(4, 3), Err(ScheduleError { index: 4, n: 3 }));
    }

    #[test]
    fn batch_temperatures_in_order() {
        let backend = Echo {
            seen: Mutex::new(vec![]),
            workers: 1,
        };
        let req = ModelRequest::new(Role::Synth, "sys", "user");
        let out = generate_batch(&req, 10, &backend).unwrap();
        let temps: Vec<f64> = out.iter().map(|r| r.text.parse().unwrap()).collect();
        let expected: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        assert_eq!(temps, expected);
    }

    #[test]
    fn concurrent_batch_restores_order() {
        let backend = Echo {
            seen: Mutex::new(vec![]),
            workers: 4,
        };
        let req = ModelRequest::new(Role::Debug, "sys", "user");
        let out = generate_batch(&req, 16, &backend).unwrap();
        for (i, r) in out.iter().enumerate() {
            assert_eq!(r.text.parse::<f64>().unwrap(), i as f64 / 16.0);
        }
        assert_eq!(backend.seen.lock().unwrap().len(), 16);
    }

    #[test]
    fn prefix_keeps_full_schedule() {
        let backend = Echo {
            seen: Mutex::new(vec![]),
            workers: 1,
        };
        let req = ModelRequest::new(Role::Debug, "sys", "user");
        let out = generate_prefix(&req, 4, 2, &backend).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(*backend.seen.lock().unwrap(), vec![0.0, 0.25]);
    }

    #[test]
    fn request_validation() {
        let req = ModelRequest::new(Role::Synth, "sys", "user").with_temperature(f64::NAN);
        assert!(matches!(req.validate(), Err(BackendError::InvalidRequest(_))));
        let req = ModelRequest::new(Role::Synth, "", "user");
        assert!(req.validate().is_err());
        assert_eq!(ModelRequest::new(Role::Explain, "a", "b").max_tokens, 256);
        assert_eq!(ModelRequest::new(Role::Debug, "a", "b").max_tokens, 1024);
    }
}
