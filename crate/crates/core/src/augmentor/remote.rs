//! HTTP chat-completion client with bounded retries and a shared
//! token-bucket rate limiter.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng as _;
use serde_json::{json, Value};

use super::{ChatRequest, ChatResponse, RewriteClient, Role, Usage};
use crate::error::{Error, Result};
use crate::rng::{self, fnv1a};

pub const API_KEY_VAR: &str = "CHAT_API_KEY";
pub const API_BASE_VAR: &str = "CHAT_API_BASE";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    /// Total attempts including the first.
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Exponential backoff with ±25% jitter derived from the request, so
    /// concurrent clients spread out without a global RNG.
    fn delay(&self, attempt: u32, salt: u64) -> Duration {
        let exp = self.base_delay.saturating_mul(1u32 << attempt.min(16));
        let capped = exp.min(self.max_delay);
        let jitter = rng::derive(salt, &[u64::from(attempt)]).gen_range(0.75..1.25);
        capped.mul_f64(jitter)
    }
}

/// Refills `rate` tokens per second up to `burst`.
pub struct TokenBucket {
    rate: f64,
    burst: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(rate: f64, burst: f64) -> Self {
        Self {
            rate,
            burst,
            state: Mutex::new((burst, Instant::now())),
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut s = self.state.lock().unwrap_or_else(|e| e.into_inner());
                let now = Instant::now();
                let refill = now.duration_since(s.1).as_secs_f64() * self.rate;
                s.0 = (s.0 + refill).min(self.burst);
                s.1 = now;
                if s.0 >= 1.0 {
                    s.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - s.0) / self.rate)
            };
            std::thread::sleep(wait);
        }
    }
}

enum Attempt {
    Done(ChatResponse),
    Retry(String, Option<Duration>),
    Fatal(Error),
}

pub struct RemoteClient {
    base_url: String,
    api_key: String,
    pub retry: RetryPolicy,
    limiter: TokenBucket,
    agent: ureq::Agent,
}

impl RemoteClient {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(180)))
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            retry: RetryPolicy::default(),
            limiter: TokenBucket::new(3.0, 3.0),
            agent,
        }
    }

    pub fn from_env() -> Result<Self> {
        let key = std::env::var(API_KEY_VAR)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| Error::Credential(format!("{API_KEY_VAR} is not set")))?;
        let base = std::env::var(API_BASE_VAR).unwrap_or_else(|_| DEFAULT_API_BASE.to_string());
        Ok(Self::new(base, key))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, per_second: f64, burst: f64) -> Self {
        self.limiter = TokenBucket::new(per_second, burst.max(1.0));
        self
    }

    fn body(request: &ChatRequest) -> Value {
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::System => "system",
                    Role::User => "user",
                };
                json!({"role": role, "content": m.content})
            })
            .collect();
        let mut body = json!({"model": request.model_name, "messages": messages});
        if let Some(t) = request.temperature {
            body["temperature"] = json!(t);
        }
        if let Some(m) = request.max_output_tokens {
            body["max_tokens"] = json!(m);
        }
        body
    }

    fn attempt(&self, body: &Value) -> Attempt {
        self.limiter.acquire();
        let url = format!("{}/chat/completions", self.base_url);
        let result = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body);
        let mut resp = match result {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string(), None),
        };
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        match status {
            200..=299 => match parse_completion(&text) {
                Ok(r) => Attempt::Done(r),
                Err(e) => Attempt::Fatal(e),
            },
            401 | 403 => Attempt::Fatal(Error::Credential(format!("HTTP {status}: {text}"))),
            408 | 429 | 500..=599 => Attempt::Retry(format!("HTTP {status}"), retry_after),
            _ => Attempt::Fatal(Error::Transport(format!("HTTP {status}: {text}"))),
        }
    }
}

fn parse_completion(text: &str) -> Result<ChatResponse> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| Error::Transport(format!("malformed completion body: {e}")))?;
    let choice = &v["choices"][0];
    let content = choice["message"]["content"].as_str().unwrap_or("").to_string();
    let finish_reason = choice["finish_reason"].as_str().unwrap_or("").to_string();
    if content.trim().is_empty() {
        return Err(Error::EmptyResponse(format!("finish_reason={finish_reason:?}")));
    }
    let usage = v.get("usage").map(|u| Usage {
        prompt_tokens: u["prompt_tokens"].as_u64().unwrap_or(0),
        completion_tokens: u["completion_tokens"].as_u64().unwrap_or(0),
    });
    Ok(ChatResponse {
        content,
        finish_reason,
        usage,
    })
}

impl RewriteClient for RemoteClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse> {
        request.validate()?;
        let body = Self::body(request);
        let salt = fnv1a(body.to_string().as_bytes());
        let mut last = String::new();
        for attempt in 0..self.retry.max_attempts {
            match self.attempt(&body) {
                Attempt::Done(r) => return Ok(r),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(msg, hint) => {
                    last = msg;
                    if attempt + 1 < self.retry.max_attempts {
                        let wait = hint
                            .map(|h| h.min(self.retry.max_delay))
                            .unwrap_or_else(|| self.retry.delay(attempt, salt));
                        std::thread::sleep(wait);
                    }
                }
            }
        }
        Err(Error::Transport(format!(
            "gave up after {} attempts: {last}",
            self.retry.max_attempts
        )))
    }
}
