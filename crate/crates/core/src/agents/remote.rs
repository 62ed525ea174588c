//! OpenAI-compatible chat-completions client that reads answer-token
//! log-probabilities.

use std::fmt;
use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Agent, AgentError, EvalRequest, ScoreSource, TokenScores};
use crate::seed::hex_digest;
use crate::stimgen::Label;

/// API key that never appears in debug output.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    pub fn from_env(var: &str) -> Option<Self> {
        std::env::var(var).ok().filter(|k| !k.is_empty()).map(Self)
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.0.is_empty() { "ApiKey(<none>)" } else { "ApiKey(<redacted>)" })
    }
}

#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    pub api_key: ApiKey,
    pub top_logprobs_k: u32,
    pub timeout: Duration,
    pub max_retries: u32,
    pub floor_margin: f64,
    pub initial_backoff: Duration,
    pub keep_raw: bool,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key: ApiKey::default(),
            top_logprobs_k: 20,
            timeout: Duration::from_secs(60),
            max_retries: 4,
            floor_margin: 5.0,
            initial_backoff: Duration::from_millis(500),
            keep_raw: false,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.top_logprobs_k < 2 {
            return Err(AgentError::Config("top_logprobs_k must be at least 2".into()));
        }
        if !(self.floor_margin.is_finite() && self.floor_margin > 0.0) {
            return Err(AgentError::Config("floor_margin must be positive".into()));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(AgentError::Config(format!("base_url {:?} is not an http(s) URL", self.base_url)));
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

/// Unparsed response body with its HTTP status.
#[derive(Debug, Clone)]
pub struct RawResponse {
    pub status: u16,
    pub body: String,
    pub attempts: u32,
}

/// Chat-completions body: image part then prompt text, one output token,
/// greedy decoding, top-k log-probabilities.
pub fn build_request_body(png: &[u8], prompt: &str, cfg: &EndpointConfig) -> Value {
    let data_url = format!("data:image/png;base64,{}", BASE64.encode(png));
    json!({
        "model": cfg.model_name,
        "messages": [{
            "role": "user",
            "content": [
                { "type": "image_url", "image_url": { "url": data_url } },
                { "type": "text", "text": prompt },
            ],
        }],
        "max_tokens": 1,
        "temperature": 0.0,
        "logprobs": true,
        "top_logprobs": cfg.top_logprobs_k,
    })
}

fn http_agent(cfg: &EndpointConfig) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(cfg.timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn send_once(
    agent: &ureq::Agent,
    cfg: &EndpointConfig,
    body: &str,
    correlation_id: &str,
) -> Result<(u16, String), AgentError> {
    let mut request = agent
        .post(cfg.completions_url())
        .header("Content-Type", "application/json")
        .header("X-Request-Id", correlation_id);
    if !cfg.api_key.expose().is_empty() {
        request = request.header("Authorization", format!("Bearer {}", cfg.api_key.expose()));
    }
    let response = request.send(body).map_err(map_transport)?;
    let status = response.status().as_u16();
    let text = response
        .into_body()
        .read_to_string()
        .map_err(map_transport)?;
    Ok((status, text))
}

fn map_transport(e: ureq::Error) -> AgentError {
    match e {
        ureq::Error::Timeout(t) => AgentError::Timeout(t.to_string()),
        other => AgentError::Transport(other.to_string()),
    }
}

fn post_with_retries(
    agent: &ureq::Agent,
    cfg: &EndpointConfig,
    body: &str,
    correlation_id: &str,
) -> Result<RawResponse, AgentError> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        let outcome = send_once(agent, cfg, body, correlation_id).and_then(|(status, text)| {
            if (200..300).contains(&status) {
                Ok(RawResponse { status, body: text, attempts: attempt })
            } else {
                Err(AgentError::HttpStatus { status, body: truncate(&text, 512) })
            }
        });
        match outcome {
            Err(e) if e.is_transient() && attempt <= cfg.max_retries => {
                let factor = 1u32 << (attempt - 1).min(16);
                thread::sleep(cfg.initial_backoff.saturating_mul(factor));
            }
            other => return other,
        }
    }
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

/// Issues one scoring request, retrying transient failures with exponential
/// backoff.
pub fn remote_request(req: &EvalRequest, cfg: &EndpointConfig) -> Result<RawResponse, AgentError> {
    cfg.validate()?;
    let png = req.image.png_bytes()?;
    let body = build_request_body(&png, &req.prompt.full_text, cfg).to_string();
    post_with_retries(&http_agent(cfg), cfg, &body, &req.correlation_id)
}

/// Collects `(token, logprob)` alternatives for the first generated token.
fn alternatives(body: &Value) -> Result<Vec<(String, f64)>, AgentError> {
    let choice = body
        .get("choices")
        .and_then(Value::as_array)
        .and_then(|c| c.first())
        .ok_or_else(|| AgentError::Malformed("missing choices[0]".into()))?;
    let logprobs = match choice.get("logprobs") {
        None | Some(Value::Null) => {
            return Err(AgentError::CapabilityMissing("choices[0].logprobs is absent".into()))
        }
        Some(v) => v,
    };
    let mut out = Vec::new();
    let number = |v: &Value, what: &str| {
        v.as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| AgentError::Malformed(format!("non-numeric logprob for {what}")))
    };

    if let Some(content) = logprobs.get("content") {
        let first = content
            .as_array()
            .and_then(|c| c.first())
            .ok_or_else(|| AgentError::CapabilityMissing("logprobs.content is empty".into()))?;
        if let (Some(tok), Some(lp)) = (first.get("token").and_then(Value::as_str), first.get("logprob")) {
            out.push((tok.to_string(), number(lp, tok)?));
        }
        match first.get("top_logprobs").and_then(Value::as_array) {
            Some(top) => {
                for entry in top {
                    let tok = entry
                        .get("token")
                        .and_then(Value::as_str)
                        .ok_or_else(|| AgentError::Malformed("top_logprobs entry without token".into()))?;
                    let lp = entry
                        .get("logprob")
                        .ok_or_else(|| AgentError::Malformed("top_logprobs entry without logprob".into()))?;
                    out.push((tok.to_string(), number(lp, tok)?));
                }
            }
            None => {
                return Err(AgentError::CapabilityMissing("no top_logprobs alternatives".into()))
            }
        }
    } else if let Some(top) = logprobs.get("top_logprobs") {
        // Legacy completions shape: a list of {token: logprob} maps.
        let map = top
            .as_array()
            .and_then(|t| t.first())
            .and_then(Value::as_object)
            .or_else(|| top.as_object())
            .ok_or_else(|| AgentError::Malformed("unrecognized top_logprobs shape".into()))?;
        for (tok, lp) in map {
            out.push((tok.clone(), number(lp, tok)?));
        }
    } else {
        return Err(AgentError::CapabilityMissing("logprobs carries no alternatives".into()));
    }
    if out.is_empty() {
        return Err(AgentError::CapabilityMissing("empty alternatives".into()));
    }
    Ok(out)
}

fn label_score(alts: &[(String, f64)], label: Label) -> Option<f64> {
    let spaced = format!(" {}", label.as_str());
    alts.iter()
        .filter(|(tok, _)| tok == label.as_str() || *tok == spaced)
        .map(|&(_, lp)| lp)
        .reduce(f64::max)
}

/// Parses a chat-completions payload into answer-token scores.
///
/// A label missing from the returned alternatives is scored at the lowest
/// observed log-probability minus `floor_margin`.
pub fn parse_token_scores(body: &str, floor_margin: f64) -> Result<TokenScores, AgentError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| AgentError::Malformed(format!("invalid JSON: {e}")))?;
    let alts = alternatives(&value)?;
    let floor = alts.iter().map(|&(_, lp)| lp).fold(f64::INFINITY, f64::min) - floor_margin;
    let (a, b) = match (label_score(&alts, Label::A), label_score(&alts, Label::B)) {
        (None, None) => return Err(AgentError::AnswerTokensMissing),
        (a, b) => (a.unwrap_or(floor), b.unwrap_or(floor)),
    };
    let mut scores = TokenScores::new(a, b, ScoreSource::Remote)?;
    scores.raw_payload_digest = Some(hex_digest(body.as_bytes()));
    Ok(scores)
}

/// Remote model behind an OpenAI-compatible endpoint.
pub struct RemoteAgent {
    cfg: EndpointConfig,
    http: ureq::Agent,
}

impl RemoteAgent {
    pub fn new(cfg: EndpointConfig) -> Result<Self, AgentError> {
        cfg.validate()?;
        let http = http_agent(&cfg);
        Ok(Self { cfg, http })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }
}

impl Agent for RemoteAgent {
    fn evaluate(&self, req: &EvalRequest) -> Result<TokenScores, AgentError> {
        let png = req.image.png_bytes()?;
        let body = build_request_body(&png, &req.prompt.full_text, &self.cfg).to_string();
        let raw = post_with_retries(&self.http, &self.cfg, &body, &req.correlation_id)?;
        let mut scores = parse_token_scores(&raw.body, self.cfg.floor_margin)?;
        if self.cfg.keep_raw {
            scores.raw_payload = Some(raw.body);
        }
        Ok(scores)
    }
}

/// Endpoint settings as they appear in a run config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointSettings {
    pub base_url: String,
    pub model_name: String,
    pub api_key_env: String,
    pub top_logprobs_k: u32,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub floor_margin: f64,
    pub backoff_ms: u64,
}

impl Default for EndpointSettings {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            model_name: String::new(),
            api_key_env: "CONFORMITY_API_KEY".into(),
            top_logprobs_k: 20,
            timeout_secs: 60.0,
            max_retries: 4,
            floor_margin: 5.0,
            backoff_ms: 500,
        }
    }
}

impl EndpointSettings {
    pub fn to_config(&self, keep_raw: bool) -> EndpointConfig {
        EndpointConfig {
            base_url: self.base_url.clone(),
            model_name: self.model_name.clone(),
            api_key: ApiKey::from_env(&self.api_key_env).unwrap_or_default(),
            top_logprobs_k: self.top_logprobs_k,
            timeout: Duration::from_secs_f64(self.timeout_secs.max(0.001)),
            max_retries: self.max_retries,
            floor_margin: self.floor_margin,
            initial_backoff: Duration::from_millis(self.backoff_ms),
            keep_raw,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chat_payload(top: &[(&str, f64)]) -> String {
        let entries: Vec<Value> =
            top.iter().map(|(t, lp)| json!({"token": t, "logprob": lp})).collect();
        json!({
            "choices": [{
                "message": {"role": "assistant", "content": top[0].0},
                "logprobs": {"content": [{
                    "token": top[0].0, "logprob": top[0].1, "top_logprobs": entries
                }]}
            }]
        })
        .to_string()
    }

    #[test]
    fn direct_parse_of_both_tokens() {
        let s = parse_token_scores(&chat_payload(&[("A", -0.1), ("B", -2.4)]), 5.0).unwrap();
        assert_eq!((s.score_a, s.score_b), (-0.1, -2.4));
        assert!(s.raw_payload_digest.is_some());
    }

    #[test]
    fn legacy_map_shape() {
        let body = json!({"choices": [{"logprobs": {"top_logprobs": [{"A": -0.1, "B": -2.4}]}}]});
        let s = parse_token_scores(&body.to_string(), 5.0).unwrap();
        assert_eq!((s.score_a, s.score_b), (-0.1, -2.4));
    }

    #[test]
    fn missing_token_gets_floor() {
        let s = parse_token_scores(&chat_payload(&[("A", -0.01), ("The", -5.5), ("a", -7.25)]), 5.0)
            .unwrap();
        assert_eq!(s.score_a, -0.01);
        assert_eq!(s.score_b, -7.25 - 5.0);
    }

    #[test]
    fn leading_space_variant_is_accepted() {
        let s = parse_token_scores(&chat_payload(&[(" B", -0.2), ("A", -3.0), ("B", -4.0)]), 5.0)
            .unwrap();
        assert_eq!((s.score_a, s.score_b), (-3.0, -0.2));
    }

    #[test]
    fn absent_logprobs_is_capability_missing() {
        let body = json!({"choices": [{"message": {"content": "A"}, "logprobs": null}]}).to_string();
        assert!(matches!(parse_token_scores(&body, 5.0), Err(AgentError::CapabilityMissing(_))));
        let body = json!({"choices": [{"message": {"content": "A"}}]}).to_string();
        assert!(matches!(parse_token_scores(&body, 5.0), Err(AgentError::CapabilityMissing(_))));
    }

    #[test]
    fn malformed_payloads_are_typed() {
        assert!(matches!(parse_token_scores("not json", 5.0), Err(AgentError::Malformed(_))));
        assert!(matches!(parse_token_scores("{}", 5.0), Err(AgentError::Malformed(_))));
        assert!(matches!(
            parse_token_scores(&chat_payload(&[("C", -0.1), ("D", -1.0)]), 5.0),
            Err(AgentError::AnswerTokensMissing)
        ));
    }

    #[test]
    fn request_body_contract() {
        let cfg = EndpointConfig::new("http://localhost:1/v1", "m");
        let body = build_request_body(&[1, 2, 3], "prompt text", &cfg);
        assert_eq!(body["max_tokens"], 1);
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["logprobs"], true);
        assert_eq!(body["top_logprobs"], 20);
        let content = &body["messages"][0]["content"];
        assert_eq!(content[0]["type"], "image_url");
        assert_eq!(content[0]["image_url"]["url"], "data:image/png;base64,AQID");
        assert_eq!(content[1]["text"], "prompt text");
    }

    #[test]
    fn api_key_is_redacted() {
        let key = ApiKey::new("sk-secret");
        assert!(!format!("{key:?}").contains("secret"));
    }

    #[test]
    fn config_validation() {
        let mut cfg = EndpointConfig::new("http://x/v1", "m");
        assert!(cfg.validate().is_ok());
        cfg.top_logprobs_k = 1;
        assert!(cfg.validate().is_err());
        assert_eq!(
            EndpointConfig::new("http://x/v1/", "m").completions_url(),
            "http://x/v1/chat/completions"
        );
    }
}
