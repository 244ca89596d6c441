//! Blocking HTTP client for agent servers speaking the `/v1` protocol.

use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{
    ActRequest, ActResponse, Backend, BackendError, BackendRequest, BackendResponse, ErrorBody,
    HealthResponse, SurveyRequest, SurveyResponse,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Extra attempts after the first one.
    pub retries: u32,
    /// Sleep before retry `k` is `backoff · 2^k`.
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            retries: 2,
            backoff: Duration::from_millis(100),
        }
    }
}

/// A successful call and how many retries it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Called<T> {
    pub response: T,
    pub retries: u32,
}

/// Thread-safe client; the underlying agent pools connections per host.
#[derive(Debug, Clone)]
pub struct RemoteClient {
    endpoint: String,
    agent: ureq::Agent,
    policy: RetryPolicy,
}

impl RemoteClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration, policy: RetryPolicy) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteClient {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            agent,
            policy,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Sends one request. Surveys are idempotent and are retried on any
    /// transport-class or protocol failure; acts are retried only on
    /// transport-class failures so a server-side success is never duplicated
    /// by a client-side parse problem. 4xx responses are never retried.
    pub fn call(&self, request: &BackendRequest) -> Result<Called<BackendResponse>, BackendError> {
        let mut attempt = 0u32;
        loop {
            let result = match request {
                BackendRequest::Act(req) => self
                    .post::<_, ActResponse>("/v1/act", req)
                    .map(BackendResponse::Act),
                BackendRequest::Survey(req) => self
                    .post::<_, SurveyResponse>("/v1/survey", req)
                    .and_then(|resp| {
                        resp.validate(req.options.len())?;
                        Ok(BackendResponse::Survey(resp))
                    }),
            };
            match result {
                Ok(response) => {
                    return Ok(Called {
                        response,
                        retries: attempt,
                    })
                }
                Err(err) => {
                    let retryable = match request {
                        BackendRequest::Survey(_) => {
                            err.is_transport_class() || matches!(err, BackendError::Protocol(_))
                        }
                        BackendRequest::Act(_) => err.is_transport_class(),
                    };
                    if !retryable || attempt >= self.policy.retries {
                        return Err(err);
                    }
                    log::debug!("retrying {} after: {err}", self.endpoint);
                    thread::sleep(self.policy.backoff * 2u32.saturating_pow(attempt));
                    attempt += 1;
                }
            }
        }
    }

    pub fn health(&self) -> Result<HealthResponse, BackendError> {
        let mut resp = self
            .agent
            .get(format!("{}/v1/health", self.endpoint))
            .call()
            .map_err(map_transport)?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(map_transport)?;
        decode(status, &body)
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        request: &Req,
    ) -> Result<Resp, BackendError> {
        let payload =
            serde_json::to_string(request).map_err(|e| BackendError::Protocol(e.to_string()))?;
        let mut resp = self
            .agent
            .post(format!("{}{path}", self.endpoint))
            .header("Content-Type", "application/json")
            .send(payload.as_bytes())
            .map_err(map_transport)?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(map_transport)?;
        decode(status, &body)
    }
}

fn map_transport(err: ureq::Error) -> BackendError {
    match err {
        ureq::Error::Timeout(_) => BackendError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => BackendError::Timeout,
        other => BackendError::Transport(other.to_string()),
    }
}

fn decode<T: DeserializeOwned>(status: u16, body: &str) -> Result<T, BackendError> {
    match status {
        200..=299 => serde_json::from_str(body)
            .map_err(|e| BackendError::Protocol(format!("bad response body: {e}"))),
        400..=499 => {
            let message = serde_json::from_str::<ErrorBody>(body)
                .map(|b| b.error)
                .unwrap_or_else(|_| body.to_string());
            Err(BackendError::Application { status, message })
        }
        500..=599 => Err(BackendError::Server {
            status,
            body: body.to_string(),
        }),
        _ => Err(BackendError::Protocol(format!("unexpected status {status}"))),
    }
}

/// Adapts [`RemoteClient`] to the engine's backend trait and tallies retries.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    client: RemoteClient,
    pub total_retries: u64,
}

impl RemoteBackend {
    pub fn new(client: RemoteClient) -> Self {
        RemoteBackend {
            client,
            total_retries: 0,
        }
    }
}

impl Backend for RemoteBackend {
    fn act(&mut self, request: &ActRequest) -> Result<ActResponse, BackendError> {
        let called = self.client.call(&BackendRequest::Act(request.clone()))?;
        self.total_retries += u64::from(called.retries);
        match called.response {
            BackendResponse::Act(resp) => Ok(resp),
            BackendResponse::Survey(_) => unreachable!("act call decoded as survey"),
        }
    }

    fn survey(&mut self, request: &SurveyRequest) -> Result<SurveyResponse, BackendError> {
        let called = self.client.call(&BackendRequest::Survey(request.clone()))?;
        self.total_retries += u64::from(called.retries);
        match called.response {
            BackendResponse::Survey(resp) => Ok(resp),
            BackendResponse::Act(_) => unreachable!("survey call decoded as act"),
        }
    }
}
