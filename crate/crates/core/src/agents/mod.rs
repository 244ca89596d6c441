//! Agent profiles, the backend contract, and the wire protocol spoken with
//! external agent servers.

pub mod contract;
mod remote;
mod server;
mod stub;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use remote::{Called, RemoteBackend, RemoteClient, RetryPolicy};
pub use server::BackendServer;
pub use stub::{parse_stance_tag, StubOpinionAgent, StubPopulation, STUB_EPSILON};

/// Author label used for posts injected by the news agent.
pub const NEWS_AUTHOR: &str = "news";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub agent_id: usize,
    /// Persona cluster / adapter index.
    pub cluster_id: usize,
    pub display_name: String,
    pub persona: String,
    /// Question id → baseline answer distribution.
    pub baseline_opinions: BTreeMap<String, Vec<f64>>,
}

impl AgentProfile {
    pub fn validate(&self) -> Result<(), String> {
        for (q, dist) in &self.baseline_opinions {
            let sum: f64 = dist.iter().sum();
            if dist.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
                return Err(format!(
                    "agent {}: baseline for {q} is not a distribution ({dist:?})",
                    self.agent_id
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextItem {
    pub author: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActRequest {
    pub agent_id: usize,
    pub cluster_id: usize,
    pub persona: String,
    pub context: Vec<ContextItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyRequest {
    pub agent_id: usize,
    pub cluster_id: usize,
    pub persona: String,
    pub context: Vec<ContextItem>,
    pub question: String,
    pub options: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyResponse {
    pub log_scores: Vec<f64>,
}

impl SurveyResponse {
    /// Arity and finiteness check against the question that was asked.
    pub fn validate(&self, option_count: usize) -> Result<(), BackendError> {
        if self.log_scores.len() != option_count {
            return Err(BackendError::Protocol(format!(
                "expected {option_count} log scores, got {}",
                self.log_scores.len()
            )));
        }
        if let Some(bad) = self.log_scores.iter().find(|s| !s.is_finite()) {
            return Err(BackendError::Protocol(format!("non-finite log score {bad}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub model: String,
    pub adapters: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendRequest {
    Act(ActRequest),
    Survey(SurveyRequest),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendResponse {
    Act(ActResponse),
    Survey(SurveyResponse),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    /// 5xx from the server; treated like a transport failure.
    #[error("server error {status}: {body}")]
    Server { status: u16, body: String },
    /// 4xx from the server, or a stub refusing a request.
    #[error("application error {status}: {message}")]
    Application { status: u16, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl BackendError {
    pub fn is_transport_class(&self) -> bool {
        matches!(
            self,
            BackendError::Transport(_) | BackendError::Timeout | BackendError::Server { .. }
        )
    }

    pub(crate) fn application(message: impl Into<String>) -> Self {
        BackendError::Application {
            status: 400,
            message: message.into(),
        }
    }
}

/// What the engine needs from whatever drives the agents. Requests carry the
/// agent id, so one implementation may serve a whole population.
pub trait Backend {
    fn act(&mut self, request: &ActRequest) -> Result<ActResponse, BackendError>;
    fn survey(&mut self, request: &SurveyRequest) -> Result<SurveyResponse, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn act(&mut self, request: &ActRequest) -> Result<ActResponse, BackendError> {
        (**self).act(request)
    }
    fn survey(&mut self, request: &SurveyRequest) -> Result<SurveyResponse, BackendError> {
        (**self).survey(request)
    }
}

/// Index of the largest score; the lowest index wins ties.
pub fn argmax_lowest(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// Softmax of log scores, shifted by the max for stability.
pub fn softmax(log_scores: &[f64]) -> Vec<f64> {
    let max = log_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = log_scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
