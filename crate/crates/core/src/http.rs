//! Blocking JSON-over-HTTP helper shared by the remote LLM and embedding
//! clients: bearer auth, bounded in-flight requests, retry with backoff.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub timeout_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 8_000,
            timeout_ms: 60_000,
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .initial_backoff_ms
            .saturating_mul(1u64 << attempt.min(16))
            .min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }

    /// Upper bound on the time a call can take, ignoring backoff sleeps.
    pub fn deadline(&self) -> Duration {
        Duration::from_millis(self.timeout_ms.saturating_mul(u64::from(self.attempts.max(1))))
    }
}

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("request failed after {attempts} attempt(s): {message}")]
    Exhausted { attempts: u32, message: String },
    #[error("non-retriable status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("missing API key: environment variable {0} is not set")]
    MissingKey(String),
}

/// Counting semaphore capping concurrent requests per client.
#[derive(Debug)]
pub struct InFlight {
    limit: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a InFlight);

impl InFlight {
    pub fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            used: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock().unwrap_or_else(|e| e.into_inner());
        while *used >= self.limit {
            used = self.freed.wait(used).unwrap_or_else(|e| e.into_inner());
        }
        *used += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut used = self.0.used.lock().unwrap_or_else(|e| e.into_inner());
        *used -= 1;
        self.0.freed.notify_one();
    }
}

pub fn read_key(env_var: &str) -> Result<Option<String>, HttpError> {
    if env_var.is_empty() {
        return Ok(None);
    }
    match std::env::var(env_var) {
        Ok(v) if !v.is_empty() => Ok(Some(v)),
        _ => Err(HttpError::MissingKey(env_var.to_string())),
    }
}

fn retriable(status: u16) -> bool {
    status == 408 || status == 429 || status >= 500
}

#[derive(Debug)]
pub struct JsonClient {
    client: reqwest::blocking::Client,
    policy: RetryPolicy,
    in_flight: InFlight,
}

impl JsonClient {
    pub fn new(policy: RetryPolicy, max_in_flight: usize) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(policy.timeout_ms))
            .build()
            .expect("http client builds");
        Self {
            client,
            policy,
            in_flight: InFlight::new(max_in_flight),
        }
    }

    pub fn policy(&self) -> &RetryPolicy {
        &self.policy
    }

    pub fn post<B: Serialize, R: for<'de> Deserialize<'de>>(
        &self,
        url: &str,
        key: Option<&str>,
        body: &B,
    ) -> Result<R, HttpError> {
        let _permit = self.in_flight.acquire();
        let attempts = self.policy.attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.policy.backoff(attempt - 1));
            }
            let mut req = self.client.post(url).json(body);
            if let Some(key) = key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    let text = resp.text().unwrap_or_default();
                    if (200..300).contains(&status) {
                        return serde_json::from_str(&text)
                            .map_err(|e| HttpError::Malformed(format!("{e}: {text}")));
                    }
                    if !retriable(status) {
                        return Err(HttpError::Status { status, body: text });
                    }
                    log::warn!("{url} returned {status} (attempt {})", attempt + 1);
                    last = format!("status {status}: {text}");
                }
                Err(e) => {
                    log::warn!("{url} failed: {e} (attempt {})", attempt + 1);
                    last = e.to_string();
                }
            }
        }
        Err(HttpError::Exhausted {
            attempts,
            message: last,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            attempts: 5,
            initial_backoff_ms: 100,
            max_backoff_ms: 350,
            timeout_ms: 1000,
        };
        assert_eq!(p.backoff(0), Duration::from_millis(100));
        assert_eq!(p.backoff(1), Duration::from_millis(200));
        assert_eq!(p.backoff(2), Duration::from_millis(350));
        assert_eq!(p.deadline(), Duration::from_millis(5000));
    }

    #[test]
    fn in_flight_limit_blocks_excess() {
        let gate = std::sync::Arc::new(InFlight::new(1));
        let first = gate.acquire();
        let g2 = gate.clone();
        let handle = std::thread::spawn(move || {
            let _p = g2.acquire();
        });
        std::thread::sleep(Duration::from_millis(30));
        assert!(!handle.is_finished());
        drop(first);
        handle.join().unwrap();
    }
}
