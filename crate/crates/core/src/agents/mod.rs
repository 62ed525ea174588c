//! Agents that score the two answer tokens for a prompt.
//!
//! Both the remote chat-completions client and the synthetic Social-Impact
//! agent implement [`Agent`]; downstream metrics only ever see
//! [`TokenScores`].

mod remote;
mod synthetic;

use std::path::PathBuf;
use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::promptkit::{Condition, RenderedPrompt};
use crate::stimgen::{encode_png, Label};

pub use remote::{EndpointSettings, 
    build_request_body, parse_token_scores, remote_request, ApiKey, EndpointConfig, RawResponse,
    RemoteAgent,
};
pub use synthetic::{scores_from_p, synthetic_p_wrong, SyntheticAgent, SyntheticAgentParams};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("endpoint does not return log-probabilities: {0}")]
    CapabilityMissing(String),
    #[error("neither answer token appears among the returned alternatives")]
    AnswerTokensMissing,
    #[error("agent configuration: {0}")]
    Config(String),
    #[error("value outside domain: {0}")]
    Domain(String),
    #[error("image unavailable: {0}")]
    Image(String),
}

impl AgentError {
    /// Whether a retry may succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            AgentError::Transport(_) | AgentError::Timeout(_) => true,
            AgentError::HttpStatus { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    Remote,
    Synthetic,
}

/// Raw scores for answer tokens `A` and `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScores {
    pub score_a: f64,
    pub score_b: f64,
    pub source: ScoreSource,
    pub raw_payload_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_payload: Option<String>,
}

impl TokenScores {
    pub fn new(score_a: f64, score_b: f64, source: ScoreSource) -> Result<Self, AgentError> {
        if !(score_a.is_finite() && score_b.is_finite()) {
            return Err(AgentError::Domain(format!("non-finite scores ({score_a}, {score_b})")));
        }
        Ok(Self { score_a, score_b, source, raw_payload_digest: None, raw_payload: None })
    }

    /// Orients a (correct, wrong) pair onto labels.
    pub fn from_correct_wrong(
        correct: Label,
        score_correct: f64,
        score_wrong: f64,
        source: ScoreSource,
    ) -> Result<Self, AgentError> {
        match correct {
            Label::A => Self::new(score_correct, score_wrong, source),
            Label::B => Self::new(score_wrong, score_correct, source),
        }
    }

    pub fn score_of(&self, label: Label) -> f64 {
        match label {
            Label::A => self.score_a,
            Label::B => self.score_b,
        }
    }
}

/// Where an agent can obtain the stimulus image.
#[derive(Debug, Clone)]
pub enum ImageHandle {
    Raster(Arc<RgbImage>),
    Png(Arc<Vec<u8>>),
    File(PathBuf),
}

impl ImageHandle {
    pub fn png_bytes(&self) -> Result<Vec<u8>, AgentError> {
        match self {
            ImageHandle::Raster(img) => encode_png(img).map_err(|e| AgentError::Image(e.to_string())),
            ImageHandle::Png(bytes) => Ok(bytes.as_ref().clone()),
            ImageHandle::File(path) => std::fs::read(path)
                .map_err(|e| AgentError::Image(format!("{}: {e}", path.display()))),
        }
    }
}

/// Everything an agent needs to answer one trial.
#[derive(Debug, Clone)]
pub struct EvalRequest {
    pub correlation_id: String,
    pub stimulus_id: String,
    pub image: ImageHandle,
    pub prompt: RenderedPrompt,
    pub correct_label: Label,
    pub condition: Condition,
    /// Stimulus difficulty rescaled to [0, 1].
    pub difficulty_norm: f64,
}

pub trait Agent: Send + Sync {
    fn evaluate(&self, req: &EvalRequest) -> Result<TokenScores, AgentError>;
}

impl<T: Agent + ?Sized> Agent for Box<T> {
    fn evaluate(&self, req: &EvalRequest) -> Result<TokenScores, AgentError> {
        (**self).evaluate(req)
    }
}

impl<T: Agent + ?Sized> Agent for Arc<T> {
    fn evaluate(&self, req: &EvalRequest) -> Result<TokenScores, AgentError> {
        (**self).evaluate(req)
    }
}
