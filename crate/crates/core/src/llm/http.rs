use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{BackendError, ModelBackend, ModelRequest, ModelResponse};

/// Environment variable holding the bearer token for the chat endpoint.
pub const API_KEY_ENV: &str = "REPAIRLOOP_API_KEY";
/// Consulted when [`API_KEY_ENV`] is unset.
pub const FALLBACK_API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the second attempt; doubled after each failure.
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 2],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReplyMessage,
}

#[derive(Deserialize)]
struct ChatReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Attempt {
    Retry(BackendError),
    Fatal(BackendError),
}

/// Chat-completion client (`POST {base_url}/chat/completions`). Works with
/// hosted endpoints and local servers exposing the same protocol.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    concurrency: usize,
    id: String,
}

impl HttpBackend {
    pub fn new(base_url: &str, model: &str) -> Result<Self, BackendError> {
        Self::with_timeout(base_url, model, Duration::from_secs(120))
    }

    pub fn with_timeout(base_url: &str, model: &str, timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::InvalidRequest(format!("cannot build HTTP client: {e}")))?;
        let base = base_url.trim_end_matches('/');
        Ok(Self {
            client,
            endpoint: format!("{base}/chat/completions"),
            model: model.to_owned(),
            api_key: None,
            retry: RetryPolicy::default(),
            concurrency: 4,
            id: format!("http:{model}"),
        })
    }

    /// Reads the API key from [`API_KEY_ENV`] or [`FALLBACK_API_KEY_ENV`].
    pub fn with_env_api_key(mut self) -> Self {
        self.api_key = std::env::var(API_KEY_ENV)
            .or_else(|_| std::env::var(FALLBACK_API_KEY_ENV))
            .ok()
            .filter(|k| !k.is_empty());
        self
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_concurrency(mut self, concurrency: usize) -> Self {
        self.concurrency = concurrency.max(1);
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn attempt(&self, request: &ModelRequest) -> Result<String, Attempt> {
        let body = ChatBody {
            model: &self.model,
            messages: [
                ChatMessage {
                    role: "system",
                    content: &request.system_message,
                },
                ChatMessage {
                    role: "user",
                    content: &request.user_message,
                },
            ],
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let mut call = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let response = call.send().map_err(|e| {
            if e.is_timeout() {
                Attempt::Retry(BackendError::Timeout { attempts: 1 })
            } else {
                Attempt::Retry(BackendError::Unavailable {
                    attempts: 1,
                    message: e.to_string(),
                })
            }
        })?;
        let status = response.status();
        let text = response.text().map_err(|e| {
            Attempt::Retry(BackendError::Unavailable {
                attempts: 1,
                message: e.to_string(),
            })
        })?;
        if !status.is_success() {
            let err = BackendError::Http {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            };
            return Err(if status.is_server_error() || status.as_u16() == 429 {
                Attempt::Retry(err)
            } else {
                Attempt::Fatal(err)
            });
        }
        let reply: ChatReply = serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(BackendError::Malformed(e.to_string())))?;
        let choice = reply
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| Attempt::Fatal(BackendError::Malformed("no choices in response".into())))?;
        Ok(choice.message.content.unwrap_or_default())
    }
}

impl ModelBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        request.validate()?;
        let started = Instant::now();
        let attempts = self.retry.attempts.max(1);
        let mut backoff = self.retry.initial_backoff;
        let mut last = None;
        for attempt in 1..=attempts {
            match self.attempt(request) {
                Ok(text) => {
                    return Ok(ModelResponse {
                        text,
                        backend_id: self.id.clone(),
                        latency: started.elapsed(),
                    })
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    last = Some(e);
                    if attempt < attempts {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(match last {
            Some(BackendError::Timeout { .. }) => BackendError::Timeout { attempts },
            Some(BackendError::Unavailable { message, .. }) => BackendError::Unavailable { attempts, message },
            Some(BackendError::Http { status, body }) => BackendError::Unavailable {
                attempts,
                message: format!("HTTP {status}: {body}"),
            },
            Some(other) => other,
            None => unreachable!("at least one attempt is made"),
        })
    }

    fn max_concurrency(&self) -> usize {
        self.concurrency
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::Role;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    /// Serves canned `(status, body)` replies, one per connection, and keeps
    /// the request bodies it received.
    fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let seen = Arc::clone(&bodies);
        std::thread::spawn(move || {
            for (status, reply) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut length = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0; length];
                reader.read_exact(&mut body).unwrap();
                seen.lock().unwrap().push(String::from_utf8(body).unwrap());
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                    reply.len()
                )
                .unwrap();
            }
        });
        (format!("http://{addr}/v1"), bodies)
    }

    fn fast_retry() -> RetryPolicy {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_millis(10),
        }
    }

    #[test]
    fn speaks_chat_completion_protocol() {
        let reply = r#"{"choices":[{"message":{"role":"assistant","content":"print(1)"}}]}"#;
        let (url, bodies) = serve(vec![(200, reply.into())]);
        let backend = HttpBackend::new(&url, "llama3").unwrap().with_api_key("k");
        let req = ModelRequest::new(Role::Synth, "system text", "user text").with_temperature(0.5);
        let resp = backend.complete(&req).unwrap();
        assert_eq!(resp.text, "print(1)");
        assert_eq!(resp.backend_id, "http:llama3");

        let body: serde_json::Value = serde_json::from_str(&bodies.lock().unwrap()[0]).unwrap();
        assert_eq!(body["model"], "llama3");
        assert_eq!(body["temperature"], 0.5);
        assert_eq!(body["max_tokens"], 1024);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][0]["content"], "system text");
        assert_eq!(body["messages"][1]["role"], "user");
        assert_eq!(body["messages"][1]["content"], "user text");
    }

    #[test]
    fn retries_server_errors() {
        let ok = r#"{"choices":[{"message":{"content":"done"}}]}"#;
        let (url, bodies) = serve(vec![(500, "{}".into()), (503, "{}".into()), (200, ok.into())]);
        let backend = HttpBackend::new(&url, "m").unwrap().with_retry(fast_retry());
        let req = ModelRequest::new(Role::Explain, "s", "u");
        assert_eq!(backend.complete(&req).unwrap().text, "done");
        assert_eq!(bodies.lock().unwrap().len(), 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, bodies) = serve(vec![(401, r#"{"error":"bad key"}"#.into())]);
        let backend = HttpBackend::new(&url, "m").unwrap().with_retry(fast_retry());
        let req = ModelRequest::new(Role::Explain, "s", "u");
        match backend.complete(&req) {
            Err(BackendError::Http { status, .. }) => assert_eq!(status, 401),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(bodies.lock().unwrap().len(), 1);
    }

    #[test]
    fn unreachable_backend_exhausts_retries() {
        // Bind then drop to get a port with nothing listening.
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let backend = HttpBackend::new(&format!("http://127.0.0.1:{port}"), "m")
            .unwrap()
            .with_retry(fast_retry());
        let req = ModelRequest::new(Role::Synth, "s", "u");
        match backend.complete(&req) {
            Err(BackendError::Unavailable { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_reply() {
        let (url, _) = serve(vec![(200, r#"{"choices":[]}"#.into())]);
        let backend = HttpBackend::new(&url, "m").unwrap().with_retry(fast_retry());
        let req = ModelRequest::new(Role::Synth, "s", "u");
        assert!(matches!(backend.complete(&req), Err(BackendError::Malformed(_))));
    }
}
