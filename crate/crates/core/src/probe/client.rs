use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use reqwest::header::{HeaderMap, RETRY_AFTER};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::ProbeError;

/// Sampling parameters sent with every request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodingParams {
    pub top_k: u32,
    pub top_p: f64,
    pub temperature: f64,
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams {
            top_k: 100,
            top_p: 0.9,
            temperature: 1.0,
        }
    }
}

impl DecodingParams {
    pub fn validate(&self) -> Result<(), ProbeError> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ProbeError::Config(format!("top_p must be in (0, 1], got {}", self.top_p)));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ProbeError::Config(format!(
                "temperature must be non-negative, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// An OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectConfig {
    pub name: String,
    /// Base URL; `/v1/chat/completions` is appended unless already present.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    #[serde(default)]
    pub token_env: Option<String>,
}

impl SubjectConfig {
    pub fn endpoint(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else if base.ends_with("/v1") {
            format!("{base}/chat/completions")
        } else {
            format!("{base}/v1/chat/completions")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    pub timeout_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay_ms: 250,
            max_delay_ms: 30_000,
            timeout_ms: 120_000,
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64 << (attempt.saturating_sub(1)).min(16);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

/// HTTP client bound to one subject. Remembers whether the endpoint accepts
/// the `top_k` extension field.
#[derive(Debug)]
pub struct SubjectClient {
    http: reqwest::Client,
    subject: SubjectConfig,
    token: Option<String>,
    retry: RetryPolicy,
    top_k_supported: AtomicBool,
}

fn retry_after(headers: &HeaderMap) -> Option<Duration> {
    let v = headers.get(RETRY_AFTER)?.to_str().ok()?;
    v.trim().parse::<f64>().ok().filter(|s| *s >= 0.0).map(Duration::from_secs_f64)
}

fn mentions_top_k(body: &str) -> bool {
    let b = body.to_lowercase();
    b.contains("top_k") || b.contains("top-k") || b.contains("topk")
}

impl SubjectClient {
    pub fn new(subject: SubjectConfig, retry: RetryPolicy) -> Result<Self, ProbeError> {
        let token = match &subject.token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| ProbeError::MissingToken {
                subject: subject.name.clone(),
                var: var.clone(),
            })?),
            None => None,
        };
        let http = reqwest::Client::builder()
            .timeout(Duration::from_millis(retry.timeout_ms))
            .build()
            .map_err(|e| ProbeError::Config(format!("http client: {e}")))?;
        Ok(SubjectClient {
            http,
            subject,
            token,
            retry,
            top_k_supported: AtomicBool::new(true),
        })
    }

    pub fn subject(&self) -> &SubjectConfig {
        &self.subject
    }

    pub fn top_k_supported(&self) -> bool {
        self.top_k_supported.load(Ordering::Relaxed)
    }

    fn body(&self, prompt: &str, decoding: &DecodingParams, seed: Option<u64>) -> Value {
        let mut body = json!({
            "model": self.subject.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": decoding.temperature,
            "top_p": decoding.top_p,
        });
        if self.top_k_supported() {
            body["top_k"] = json!(decoding.top_k);
        }
        if let Some(seed) = seed {
            body["seed"] = json!(seed);
        }
        body
    }

    /// Text of the first completion choice. Transport failures and 5xx are
    /// retried with exponential backoff; 429 waits for Retry-After.
    pub async fn complete(
        &self,
        prompt: &str,
        decoding: &DecodingParams,
        seed: Option<u64>,
    ) -> Result<String, ProbeError> {
        let url = self.subject.endpoint();
        let mut attempt = 0;
        loop {
            attempt += 1;
            let sent_top_k = self.top_k_supported();
            let mut req = self.http.post(&url).json(&self.body(prompt, decoding, seed));
            if let Some(token) = &self.token {
                req = req.bearer_auth(token);
            }
            let failure = match req.send().await {
                Err(e) => ProbeError::Transport {
                    subject: self.subject.name.clone(),
                    attempts: attempt,
                    message: e.to_string(),
                },
                Ok(resp) => {
                    let status = resp.status();
                    let headers = resp.headers().clone();
                    let text = resp.text().await.unwrap_or_default();
                    if status.is_success() {
                        return extract_content(&text);
                    }
                    if sent_top_k
                        && matches!(status, StatusCode::BAD_REQUEST | StatusCode::UNPROCESSABLE_ENTITY)
                        && mentions_top_k(&text)
                    {
                        tracing::warn!(
                            subject = %self.subject.name,
                            "endpoint rejected top_k; continuing without it"
                        );
                        self.top_k_supported.store(false, Ordering::Relaxed);
                        attempt -= 1;
                        continue;
                    }
                    if status == StatusCode::TOO_MANY_REQUESTS {
                        let wait = retry_after(&headers)
                            .unwrap_or_else(|| self.retry.backoff(attempt))
                            .min(Duration::from_millis(self.retry.max_delay_ms));
                        if attempt >= self.retry.max_attempts {
                            return Err(ProbeError::RateLimited {
                                subject: self.subject.name.clone(),
                                attempts: attempt,
                            });
                        }
                        tracing::debug!(subject = %self.subject.name, ?wait, "rate limited");
                        tokio::time::sleep(wait).await;
                        continue;
                    }
                    if status.is_client_error() {
                        return Err(ProbeError::Rejected {
                            subject: self.subject.name.clone(),
                            status: status.as_u16(),
                            body: text.chars().take(500).collect(),
                        });
                    }
                    ProbeError::Transport {
                        subject: self.subject.name.clone(),
                        attempts: attempt,
                        message: format!("HTTP {status}"),
                    }
                }
            };
            if attempt >= self.retry.max_attempts {
                return Err(failure);
            }
            let wait = self.retry.backoff(attempt);
            tracing::debug!(subject = %self.subject.name, attempt, ?wait, "retrying: {failure}");
            tokio::time::sleep(wait).await;
        }
    }
}

fn extract_content(body: &str) -> Result<String, ProbeError> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| ProbeError::MalformedResponse(format!("invalid JSON: {e}")))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| ProbeError::MalformedResponse("no choices".into()))?;
    choice
        .pointer("/message/content")
        .or_else(|| choice.get("text"))
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ProbeError::MalformedResponse("first choice has no text content".into()))
}

/// One-shot query with the default retry policy.
pub async fn query_subject(
    prompt: &str,
    subject: &SubjectConfig,
    decoding: &DecodingParams,
) -> Result<String, ProbeError> {
    SubjectClient::new(subject.clone(), RetryPolicy::default())?
        .complete(prompt, decoding, None)
        .await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let d = DecodingParams::default();
        assert_eq!((d.top_k, d.top_p, d.temperature), (100, 0.9, 1.0));
        assert!(d.validate().is_ok());
        assert!(DecodingParams { top_p: 0.0, ..d }.validate().is_err());
        assert!(DecodingParams { temperature: -1.0, ..d }.validate().is_err());
    }

    #[test]
    fn endpoint_paths() {
        let mut s = SubjectConfig {
            name: "s".into(),
            base_url: "http://h:1".into(),
            model: "m".into(),
            token_env: None,
        };
        assert_eq!(s.endpoint(), "http://h:1/v1/chat/completions");
        s.base_url = "http://h:1/v1/".into();
        assert_eq!(s.endpoint(), "http://h:1/v1/chat/completions");
        s.base_url = "http://h:1/api/chat/completions".into();
        assert_eq!(s.endpoint(), "http://h:1/api/chat/completions");
    }

    #[test]
    fn content_extraction() {
        let ok = r#"{"choices":[{"index":0,"message":{"role":"assistant","content":"Valeur prédite : 5."}}]}"#;
        assert_eq!(extract_content(ok).unwrap(), "Valeur prédite : 5.");
        assert!(matches!(extract_content("{}"), Err(ProbeError::MalformedResponse(_))));
        assert!(matches!(extract_content("nope"), Err(ProbeError::MalformedResponse(_))));
    }

    #[test]
    fn backoff_grows_and_caps() {
        let r = RetryPolicy { base_delay_ms: 100, max_delay_ms: 350, ..Default::default() };
        assert_eq!(r.backoff(1), Duration::from_millis(100));
        assert_eq!(r.backoff(2), Duration::from_millis(200));
        assert_eq!(r.backoff(3), Duration::from_millis(350));
    }

    #[test]
    fn missing_token_env() {
        let s = SubjectConfig {
            name: "s".into(),
            base_url: "http://h".into(),
            model: "m".into(),
            token_env: Some("SDOH_PROBE_TEST_UNSET_TOKEN".into()),
        };
        assert!(matches!(
            SubjectClient::new(s, RetryPolicy::default()),
            Err(ProbeError::MissingToken { .. })
        ));
    }
}
