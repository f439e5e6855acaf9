use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::association::ProfessionMapping;
use crate::corpus::parse_rendered;
use crate::model::{ProfessionGroup, SdohKey, SdohMap};
use crate::probe::extract_record;

use super::SynthError;

/// What a rule answers: a fixed value or a uniform draw from a range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Answer {
    #[serde(default)]
    pub value: Option<u8>,
    #[serde(default)]
    pub uniform: Option<[u8; 2]>,
}

impl Answer {
    pub fn fixed(v: u8) -> Self {
        Answer { value: Some(v), uniform: None }
    }

    pub fn uniform(lo: u8, hi: u8) -> Self {
        Answer { value: None, uniform: Some([lo, hi]) }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let ok = |v: u8| (1..=7).contains(&v);
        match (self.value, self.uniform) {
            (Some(v), None) if ok(v) => Ok(()),
            (None, Some([lo, hi])) if ok(lo) && ok(hi) && lo <= hi => Ok(()),
            _ => Err(SynthError::Rule(
                "an answer needs either `value` in 1..=7 or `uniform = [lo, hi]` within 1..=7".into(),
            )),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> u8 {
        match (self.value, self.uniform) {
            (Some(v), _) => v,
            (None, Some([lo, hi])) => rng.random_range(lo..=hi),
            _ => unreachable!("validated"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhenClause {
    /// Matches when the record's occupation maps to this group.
    #[serde(default)]
    pub profession_group: Option<String>,
    /// Matches when this option key is flagged.
    #[serde(default)]
    pub sdoh: Option<String>,
    #[serde(flatten)]
    pub answer: Answer,
}

fn default_refusal_text() -> String {
    "Je ne peux pas déterminer le genre de ce patient à partir de ces informations.".into()
}

/// Decision rule of a mock subject. The first matching `when` clause wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRuleConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub refusal_rate: f64,
    #[serde(default = "default_refusal_text")]
    pub refusal_text: String,
    /// Answer with HTTP 400 whenever a request carries `top_k`.
    #[serde(default)]
    pub reject_top_k: bool,
    pub default: Answer,
    #[serde(default)]
    pub when: Vec<WhenClause>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Matcher {
    Group(ProfessionGroup),
    Option(SdohKey),
}

#[derive(Debug, Clone)]
pub struct MockRule {
    config: MockRuleConfig,
    clauses: Vec<(Matcher, Answer)>,
    mapping: ProfessionMapping,
}

/// Mock decision for one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockDecision {
    Value(u8),
    Refusal,
}

impl MockRule {
    pub fn new(config: MockRuleConfig) -> Result<Self, SynthError> {
        if !(0.0..=1.0).contains(&config.refusal_rate) {
            return Err(SynthError::Rule(format!(
                "refusal_rate {} is not in [0, 1]",
                config.refusal_rate
            )));
        }
        config.default.validate()?;
        let mut clauses = Vec::new();
        for w in &config.when {
            w.answer.validate()?;
            let matcher = match (&w.profession_group, &w.sdoh) {
                (Some(g), None) => Matcher::Group(
                    g.parse().map_err(|e| SynthError::Rule(format!("when.profession_group: {e}")))?,
                ),
                (None, Some(k)) => {
                    let key: SdohKey = k.parse().map_err(|e| SynthError::Rule(format!("when.sdoh: {e}")))?;
                    if key.is_span() {
                        return Err(SynthError::Rule(format!("when.sdoh `{k}` must be an option key")));
                    }
                    Matcher::Option(key)
                }
                _ => {
                    return Err(SynthError::Rule(
                        "each [[when]] needs exactly one of profession_group or sdoh".into(),
                    ))
                }
            };
            clauses.push((matcher, w.answer));
        }
        Ok(MockRule {
            config,
            clauses,
            mapping: ProfessionMapping::builtin(),
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        Self::new(toml::from_str(text).map_err(|e| SynthError::Rule(e.to_string()))?)
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SynthError::Rule(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn config(&self) -> &MockRuleConfig {
        &self.config
    }

    /// Deterministic decision for a record under a request seed.
    pub fn decide(&self, sdoh: &SdohMap, request_seed: u64) -> MockDecision {
        let mut h = Sha256::new();
        h.update(self.config.seed.to_le_bytes());
        h.update(request_seed.to_le_bytes());
        let digest: [u8; 32] = h.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        if self.config.refusal_rate > 0.0 && rng.random_bool(self.config.refusal_rate) {
            return MockDecision::Refusal;
        }
        let group = sdoh
            .occupation()
            .and_then(|o| self.mapping.group_profession(o).group());
        let answer = self
            .clauses
            .iter()
            .find(|(m, _)| match m {
                Matcher::Group(g) => group == Some(*g),
                Matcher::Option(k) => k.option_value().is_some_and(|o| sdoh.is_flagged(o)),
            })
            .map(|(_, a)| *a)
            .unwrap_or(self.config.default);
        MockDecision::Value(answer.draw(&mut rng))
    }

    pub fn completion_text(&self, decision: MockDecision) -> String {
        match decision {
            MockDecision::Value(v) => format!("Valeur prédite : {v}."),
            MockDecision::Refusal => self.config.refusal_text.clone(),
        }
    }
}

fn prompt_seed(prompt: &str) -> u64 {
    let digest = Sha256::digest(prompt.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn error(status: StatusCode, message: &str) -> Response {
    (
        status,
        Json(json!({"error": {"message": message, "type": "invalid_request_error"}})),
    )
        .into_response()
}

async fn chat(State(rule): State<Arc<MockRule>>, Json(body): Json<Value>) -> Response {
    if rule.config.reject_top_k && body.get("top_k").is_some() {
        return error(StatusCode::BAD_REQUEST, "Unrecognized request argument supplied: top_k");
    }
    let Some(prompt) = body
        .get("messages")
        .and_then(Value::as_array)
        .and_then(|m| m.iter().rev().find(|m| m["role"] == "user"))
        .and_then(|m| m["content"].as_str())
    else {
        return error(StatusCode::BAD_REQUEST, "messages must contain a user message");
    };
    let sdoh = match parse_rendered(extract_record(prompt)) {
        Ok(m) => m,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, &format!("cannot read record: {e}")),
    };
    let seed = body
        .get("seed")
        .and_then(Value::as_u64)
        .unwrap_or_else(|| prompt_seed(prompt));
    let text = rule.completion_text(rule.decide(&sdoh, seed));
    Json(json!({
        "id": format!("mock-{seed:016x}"),
        "object": "chat.completion",
        "created": 0,
        "model": body.get("model").cloned().unwrap_or(Value::Null),
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": text},
            "finish_reason": "stop"
        }]
    }))
    .into_response()
}

pub fn mock_router(rule: MockRule) -> Router {
    Router::new()
        .route("/v1/chat/completions", post(chat))
        .route("/chat/completions", post(chat))
        .with_state(Arc::new(rule))
}

/// Serve the mock on an already-bound listener until the task is dropped.
pub async fn serve_mock(rule: MockRule, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, mock_router(rule)).await
}

/// Bind the mock on a loopback port and serve it in the background.
pub async fn spawn_mock(rule: MockRule) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", 0)).await?;
    let addr = listener.local_addr()?;
    let handle = tokio::spawn(async move {
        if let Err(e) = serve_mock(rule, listener).await {
            tracing::error!("mock subject stopped: {e}");
        }
    });
    Ok((addr, handle))
}
