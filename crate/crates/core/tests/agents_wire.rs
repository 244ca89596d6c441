use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use silsim_core::agents::{
    softmax, ActRequest, ActResponse, Backend, BackendError, BackendRequest, BackendResponse,
    BackendServer, HealthResponse, RemoteBackend, RemoteClient, RetryPolicy, StubOpinionAgent,
    StubPopulation, SurveyRequest, SurveyResponse,
};
use silsim_core::agents::contract::{run_contract_suite, ContractProbe};
use silsim_core::harness::{run_to_dir, SweepSpace, Transport};
use silsim_core::surveys::{builtin_bank, probe_opinion_matrix, ProbeIdentity};

/// Scores option i as −(i+1) and echoes the agent id when acting.
struct Echo;

impl Backend for Echo {
    fn act(&mut self, request: &ActRequest) -> Result<ActResponse, BackendError> {
        Ok(ActResponse { text: format!("agent {} says hi", request.agent_id) })
    }
    fn survey(&mut self, request: &SurveyRequest) -> Result<SurveyResponse, BackendError> {
        Ok(SurveyResponse {
            log_scores: (0..request.options.len()).map(|i| -(i as f64) - 1.0).collect(),
        })
    }
}

/// Fails the first `failures` calls with `error`, then behaves like [`Echo`].
struct Flaky {
    failures: usize,
    error: BackendError,
    calls: Arc<AtomicUsize>,
}

impl Flaky {
    fn tick(&mut self) -> Result<(), BackendError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if n < self.failures {
            Err(self.error.clone())
        } else {
            Ok(())
        }
    }
}

impl Backend for Flaky {
    fn act(&mut self, request: &ActRequest) -> Result<ActResponse, BackendError> {
        self.tick()?;
        Echo.act(request)
    }
    fn survey(&mut self, request: &SurveyRequest) -> Result<SurveyResponse, BackendError> {
        self.tick()?;
        Echo.survey(request)
    }
}

/// Always returns one more score than there are options.
struct WrongArity;

impl Backend for WrongArity {
    fn act(&mut self, _: &ActRequest) -> Result<ActResponse, BackendError> {
        Ok(ActResponse { text: String::new() })
    }
    fn survey(&mut self, request: &SurveyRequest) -> Result<SurveyResponse, BackendError> {
        Ok(SurveyResponse { log_scores: vec![-1.0; request.options.len() + 1] })
    }
}

struct Slow(Duration);

impl Backend for Slow {
    fn act(&mut self, request: &ActRequest) -> Result<ActResponse, BackendError> {
        std::thread::sleep(self.0);
        Echo.act(request)
    }
    fn survey(&mut self, request: &SurveyRequest) -> Result<SurveyResponse, BackendError> {
        std::thread::sleep(self.0);
        Echo.survey(request)
    }
}

fn health() -> HealthResponse {
    HealthResponse { model: "test".into(), adapters: vec![] }
}

fn serve<B: Backend + Send + 'static>(backend: B) -> BackendServer {
    BackendServer::start(backend, health(), "127.0.0.1:0").unwrap()
}

fn client(url: &str, retries: u32) -> RemoteClient {
    RemoteClient::new(
        url,
        Duration::from_secs(5),
        RetryPolicy { retries, backoff: Duration::from_millis(1) },
    )
}

fn survey_request(options: usize) -> SurveyRequest {
    SurveyRequest {
        agent_id: 3,
        cluster_id: 1,
        persona: "p".into(),
        context: vec![],
        question: "Q?".into(),
        options: (0..options).map(|i| format!("o{i}")).collect(),
    }
}

#[test]
fn loopback_echo_probe_gives_softmax_rows() {
    let server = serve(Echo);
    let mut backend = RemoteBackend::new(client(&server.url(), 0));
    let bank = builtin_bank();
    let matrix = probe_opinion_matrix(&mut backend, &ProbeIdentity::default(), &bank).unwrap();
    for i in 0..matrix.num_questions() {
        let row = matrix.row_at(i);
        assert!((row[0] - 0.7310585786300049).abs() < 1e-4);
        assert!((row[1] - 0.2689414213699951).abs() < 1e-4);
    }
    assert_eq!(softmax(&[-1.0, -2.0]), matrix.row_at(0).to_vec());
}

#[test]
fn health_round_trips() {
    let server = serve(Echo);
    assert_eq!(client(&server.url(), 0).health().unwrap(), health());
}

#[test]
fn act_round_trips() {
    let server = serve(Echo);
    let resp = client(&server.url(), 0)
        .call(&BackendRequest::Act(ActRequest {
            agent_id: 17,
            cluster_id: 0,
            persona: String::new(),
            context: vec![],
        }))
        .unwrap();
    assert_eq!(resp.retries, 0);
    assert_eq!(
        resp.response,
        BackendResponse::Act(ActResponse { text: "agent 17 says hi".into() })
    );
}

#[test]
fn server_error_once_then_success_takes_one_retry() {
    let calls = Arc::new(AtomicUsize::new(0));
    let server = serve(Flaky {
        failures: 1,
        error: BackendError::Transport("injected".into()),
        calls: Arc::clone(&calls),
    });
    let called = client(&server.url(), 2)
        .call(&BackendRequest::Survey(survey_request(2)))
        .unwrap();
    assert_eq!(called.retries, 1);
    assert_eq!(calls.load(Ordering::SeqCst), 2);

    let mut backend = RemoteBackend::new(client(&server.url(), 2));
    backend.survey(&survey_request(2)).unwrap();
    assert_eq!(backend.total_retries, 0);
}

#[test]
fn retries_are_bounded() {
    let calls = Arc::new(AtomicUsize::new(0));
    let server = serve(Flaky {
        failures: 10,
        error: BackendError::Timeout,
        calls: Arc::clone(&calls),
    });
    let err = client(&server.url(), 2)
        .call(&BackendRequest::Survey(survey_request(2)))
        .unwrap_err();
    assert!(matches!(err, BackendError::Server { status: 500, .. }), "{err:?}");
    assert_eq!(calls.load(Ordering::SeqCst), 3);
}

#[test]
fn application_errors_are_not_retried() {
    let calls = Arc::new(AtomicUsize::new(0));
    let server = serve(Flaky {
        failures: 10,
        error: BackendError::Application { status: 422, message: "no such adapter".into() },
        calls: Arc::clone(&calls),
    });
    let c = client(&server.url(), 2);
    let err = c.call(&BackendRequest::Survey(survey_request(2))).unwrap_err();
    assert_eq!(err, BackendError::Application { status: 422, message: "no such adapter".into() });
    let act = ActRequest { agent_id: 0, cluster_id: 0, persona: String::new(), context: vec![] };
    assert!(c.call(&BackendRequest::Act(act)).is_err());
    assert_eq!(calls.load(Ordering::SeqCst), 2);
}

#[test]
fn wrong_arity_is_a_protocol_error() {
    let server = serve(WrongArity);
    let mut backend = RemoteBackend::new(client(&server.url(), 1));
    let err = backend.survey(&survey_request(2)).unwrap_err();
    assert!(matches!(err, BackendError::Protocol(_)), "{err:?}");
}

#[test]
fn unknown_route_is_404() {
    let server = serve(Echo);
    let c = client(&format!("{}/nope", server.url()), 0);
    let err = c.call(&BackendRequest::Survey(survey_request(2))).unwrap_err();
    assert!(matches!(err, BackendError::Application { status: 404, .. }), "{err:?}");
}

#[test]
fn slow_server_times_out() {
    let server = serve(Slow(Duration::from_millis(500)));
    let c = RemoteClient::new(
        server.url(),
        Duration::from_millis(50),
        RetryPolicy { retries: 0, backoff: Duration::ZERO },
    );
    let err = c.call(&BackendRequest::Survey(survey_request(2))).unwrap_err();
    assert!(err.is_transport_class(), "{err:?}");
}

#[test]
fn refused_connection_is_a_transport_error() {
    let url = {
        let server = serve(Echo);
        server.url()
    };
    let err = client(&url, 1)
        .call(&BackendRequest::Survey(survey_request(2)))
        .unwrap_err();
    assert!(err.is_transport_class(), "{err:?}");
}

#[test]
fn stub_server_passes_contract_suite() {
    let probe = ContractProbe::default();
    let mut population = StubPopulation::new();
    population.insert(probe.agent_id, StubOpinionAgent::new(probe.question.clone(), 0.7, 0.3, 1));
    let server = serve(population);
    let checks = run_contract_suite(&server.url(), &probe, Duration::from_secs(5));
    assert_eq!(checks.len(), 6);
    for c in &checks {
        assert!(c.passed, "{}: {}", c.name, c.detail);
    }
}

#[test]
fn contract_suite_flags_a_bad_server() {
    let probe = ContractProbe::default();
    let server = serve(WrongArity);
    let checks = run_contract_suite(&server.url(), &probe, Duration::from_secs(5));
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    assert!(failed.contains(&"survey-arity"));
    assert!(failed.contains(&"unknown-identity-4xx"));
}

#[test]
fn loopback_run_matches_in_process_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = SweepSpace::default_grid().base;
    config.num_agents = 32;
    config.steps = 120;
    config.survey_interval = 30;
    config.backend_id = "stub-conformist".into();
    config.news_agents = 1;
    config.survey_in_context = true;
    config.seed = 11;
    let local = tmp.path().join("local");
    run_to_dir(&config, &local).unwrap();
    config.backend.transport = Transport::Loopback;
    let wire = tmp.path().join("wire");
    run_to_dir(&config, &wire).unwrap();
    for file in ["surveys.jsonl", "events.jsonl", "final_state.json"] {
        assert_eq!(
            std::fs::read(local.join(file)).unwrap(),
            std::fs::read(wire.join(file)).unwrap(),
            "{file}"
        );
    }
}
