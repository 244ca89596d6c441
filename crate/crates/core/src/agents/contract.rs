//! Loopback contract suite for agent servers. Any server the engine talks to
//! must pass it unmodified.

use std::time::Duration;

use serde::Serialize;

use super::{
    ActRequest, BackendError, BackendRequest, BackendResponse, ContextItem, RemoteClient,
    RetryPolicy, SurveyRequest,
};

#[derive(Debug, Clone, Serialize)]
pub struct ContractCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Identity and question used to exercise the server.
#[derive(Debug, Clone)]
pub struct ContractProbe {
    pub agent_id: usize,
    pub cluster_id: usize,
    pub persona: String,
    pub question: String,
    pub options: Vec<String>,
}

impl Default for ContractProbe {
    fn default() -> Self {
        ContractProbe {
            agent_id: 0,
            cluster_id: 0,
            persona: String::new(),
            question: "Should the government provide free healthcare for all citizens? You may only answer with 'Yes' or 'No'.".into(),
            options: vec!["Yes".into(), "No".into()],
        }
    }
}

fn check(name: &'static str, outcome: Result<String, String>) -> ContractCheck {
    match outcome {
        Ok(detail) => ContractCheck { name, passed: true, detail },
        Err(detail) => ContractCheck { name, passed: false, detail },
    }
}

pub fn run_contract_suite(endpoint: &str, probe: &ContractProbe, timeout: Duration) -> Vec<ContractCheck> {
    let client = RemoteClient::new(endpoint, timeout, RetryPolicy { retries: 0, backoff: Duration::ZERO });
    let context = vec![ContextItem {
        author: "contract".into(),
        text: "Just checking in, nothing to see here.".into(),
    }];
    let survey = SurveyRequest {
        agent_id: probe.agent_id,
        cluster_id: probe.cluster_id,
        persona: probe.persona.clone(),
        context: context.clone(),
        question: probe.question.clone(),
        options: probe.options.clone(),
    };
    let mut checks = Vec::new();

    checks.push(check(
        "health",
        client
            .health()
            .map_err(|e| e.to_string())
            .and_then(|h| {
                if h.model.is_empty() {
                    Err("empty model name".into())
                } else {
                    Ok(format!("model={} adapters={}", h.model, h.adapters.len()))
                }
            }),
    ));

    let act = ActRequest {
        agent_id: probe.agent_id,
        cluster_id: probe.cluster_id,
        persona: probe.persona.clone(),
        context,
    };
    checks.push(check(
        "act-schema",
        match client.call(&BackendRequest::Act(act)) {
            Ok(c) => match c.response {
                BackendResponse::Act(a) => Ok(format!("{} chars", a.text.len())),
                other => Err(format!("unexpected {other:?}")),
            },
            Err(e) => Err(e.to_string()),
        },
    ));

    let scores = |req: &SurveyRequest| -> Result<Vec<f64>, String> {
        match client.call(&BackendRequest::Survey(req.clone())) {
            Ok(c) => match c.response {
                BackendResponse::Survey(s) => Ok(s.log_scores),
                other => Err(format!("unexpected {other:?}")),
            },
            Err(e) => Err(e.to_string()),
        }
    };
    let first = scores(&survey);
    checks.push(check(
        "survey-arity",
        first.clone().map(|s| format!("{} finite scores", s.len())),
    ));
    checks.push(check(
        "survey-deterministic",
        match (first, scores(&survey)) {
            (Ok(a), Ok(b)) if a == b => Ok("repeated call identical".into()),
            (Ok(a), Ok(b)) => Err(format!("{a:?} != {b:?}")),
            (Err(e), _) | (_, Err(e)) => Err(e),
        },
    ));

    let mut unknown = survey.clone();
    unknown.agent_id = 999_999_999;
    unknown.cluster_id = 999_999;
    checks.push(check(
        "unknown-identity-4xx",
        match client.call(&BackendRequest::Survey(unknown)) {
            Err(BackendError::Application { status, .. }) => Ok(format!("status {status}")),
            Err(e) => Err(format!("expected 4xx, got {e}")),
            Ok(_) => Err("expected 4xx, got success".into()),
        },
    ));

    let raw: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into();
    checks.push(check(
        "malformed-body-4xx",
        raw.post(format!("{}/v1/survey", client.endpoint()))
            .header("Content-Type", "application/json")
            .send("{not json".as_bytes())
            .map_err(|e| e.to_string())
            .and_then(|r| {
                let status = r.status().as_u16();
                if (400..500).contains(&status) {
                    Ok(format!("status {status}"))
                } else {
                    Err(format!("expected 4xx, got {status}"))
                }
            }),
    ));
    checks
}
