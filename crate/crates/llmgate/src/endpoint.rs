use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use reqwest::{StatusCode, Url};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay_ms: 1000,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    /// Wait before retry number `retry` (1-based): base · 2^(retry−1), capped.
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u64 << (retry.saturating_sub(1)).min(20);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

/// An OpenAI-style chat-completion service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmEndpoint {
    pub base_url: String,
    pub model_name: String,
    /// Environment variable holding the bearer token. `None` sends no
    /// Authorization header.
    #[serde(default)]
    pub api_key_env: Option<String>,
    pub timeout_secs: f64,
    pub max_parallel: usize,
    pub temperature: f64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

pub const CLASSIFY_TEMPERATURE: f64 = 0.0;
pub const GENERATE_TEMPERATURE: f64 = 0.8;

impl LlmEndpoint {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        LlmEndpoint {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_env: None,
            timeout_secs: 60.0,
            max_parallel: 4,
            temperature: CLASSIFY_TEMPERATURE,
            retry: RetryPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<Url> {
        let url = Url::parse(&self.base_url).map_err(|e| Error::Config(format!("base_url {:?}: {e}", self.base_url)))?;
        if !matches!(url.scheme(), "http" | "https") {
            return Err(Error::Config(format!("base_url {:?} is not http(s)", self.base_url)));
        }
        if self.max_parallel == 0 {
            return Err(Error::Config("max_parallel must be at least 1".into()));
        }
        if !(self.temperature >= 0.0) || !(self.timeout_secs > 0.0) {
            return Err(Error::Config(format!(
                "temperature {} / timeout {}s out of range",
                self.temperature, self.timeout_secs
            )));
        }
        Ok(url)
    }

    fn completions_url(&self) -> Result<Url> {
        let mut base = self.validate()?.to_string();
        if !base.ends_with('/') {
            base.push('/');
        }
        Url::parse(&base)
            .and_then(|u| u.join("chat/completions"))
            .map_err(|e| Error::Config(e.to_string()))
    }
}

/// Reply text plus the number of HTTP attempts it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub attempts: u32,
}

#[derive(Debug, Clone)]
pub struct ChatClient {
    endpoint: LlmEndpoint,
    url: Url,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

enum Attempt {
    Done(String),
    Retry(Error),
    Fatal(Error),
}

fn retryable(status: StatusCode) -> bool {
    status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS
}

impl ChatClient {
    pub fn new(endpoint: LlmEndpoint) -> Result<Self> {
        let url = endpoint.completions_url()?;
        let api_key = match &endpoint.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| Error::Config(format!("API key variable {var} is not set")))?,
            ),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(endpoint.timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("HTTP client: {e}")))?;
        Ok(ChatClient {
            endpoint,
            url,
            api_key,
            http,
        })
    }

    pub fn endpoint(&self) -> &LlmEndpoint {
        &self.endpoint
    }

    fn attempt(&self, prompt: &str, attempts: u32) -> Attempt {
        let body = json!({
            "model": self.endpoint.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.endpoint.temperature,
        });
        let mut req = self.http.post(self.url.clone()).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry(Error::Transport {
                    message: e.to_string(),
                    attempts,
                })
            }
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => {
                return Attempt::Retry(Error::Transport {
                    message: e.to_string(),
                    attempts,
                })
            }
        };
        if !status.is_success() {
            let err = Error::Http {
                status: status.as_u16(),
                body: text.chars().take(200).collect(),
                attempts,
            };
            return if retryable(status) { Attempt::Retry(err) } else { Attempt::Fatal(err) };
        }
        match extract_content(&text) {
            Ok(content) => Attempt::Done(content),
            Err(e) => Attempt::Fatal(e),
        }
    }

    /// One prompt, retried on transport errors, 5xx and 429.
    pub fn complete(&self, prompt: &str) -> Result<Completion> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(prompt, attempts) {
                Attempt::Done(text) => return Ok(Completion { text, attempts }),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) => {
                    if attempts > self.endpoint.retry.max_retries {
                        return Err(e);
                    }
                    log::debug!("attempt {attempts} failed ({e}); retrying");
                    thread::sleep(self.endpoint.retry.delay(attempts));
                }
            }
        }
    }

    /// Completes every prompt with at most `max_parallel` requests in flight.
    /// Output index i always answers prompt i.
    pub fn complete_all(&self, prompts: &[String]) -> Vec<Result<Completion>> {
        let slots: Vec<Mutex<Option<Result<Completion>>>> = prompts.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.endpoint.max_parallel.min(prompts.len());
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= prompts.len() {
                        break;
                    }
                    let r = self.complete(&prompts[i]);
                    *slots[i].lock().expect("slot lock") = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().expect("slot lock").expect("every slot filled"))
            .collect()
    }
}

/// `choices[0].message.content` of a chat-completion response body.
pub fn extract_content(body: &str) -> Result<String> {
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| Error::Response(format!("{e}: {body:.200}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| Error::Response(format!("no choices[0].message.content in {body:.200}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy { max_retries: 3, base_delay_ms: 100, max_delay_ms: 350 };
        let d: Vec<u128> = (1..=4).map(|r| p.delay(r).as_millis()).collect();
        assert_eq!(d, [100, 200, 350, 350]);
    }

    #[test]
    fn url_and_settings_checked() {
        let ok = LlmEndpoint::new("http://localhost:8080/v1", "m");
        assert_eq!(ok.completions_url().unwrap().as_str(), "http://localhost:8080/v1/chat/completions");
        assert!(LlmEndpoint::new("not a url", "m").validate().is_err());
        assert!(LlmEndpoint::new("ftp://x", "m").validate().is_err());
        let zero = LlmEndpoint { max_parallel: 0, ..ok.clone() };
        assert!(zero.validate().is_err());
        let key = LlmEndpoint { api_key_env: Some("CTXCLF_SURELY_UNSET_KEY".into()), ..ok };
        assert!(matches!(ChatClient::new(key), Err(Error::Config(_))));
    }

    #[test]
    fn content_extraction() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"2"}}]}"#;
        assert_eq!(extract_content(body).unwrap(), "2");
        assert!(extract_content(r#"{"choices":[]}"#).is_err());
        assert!(extract_content("<html>").is_err());
    }
}
