use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use silsim_core::agents::{
    parse_stance_tag, ActRequest, ActResponse, Backend, BackendError, SurveyRequest, SurveyResponse,
};
use silsim_core::engine::{
    build_activation, read_jsonl, replay_store, run_simulation, write_jsonl, Actor, EngineConfig, Event,
    EventKind, RunOutput, SURVEY_AUTHOR,
};
use silsim_core::harness::{prepare_run, resolve_backend, RunConfig, SweepSpace};

/// Forwards to another backend and keeps every act request.
struct Recording<B> {
    inner: B,
    acts: Vec<ActRequest>,
    surveys: usize,
}

impl<B: Backend> Backend for Recording<B> {
    fn act(&mut self, request: &ActRequest) -> Result<ActResponse, BackendError> {
        self.acts.push(request.clone());
        self.inner.act(request)
    }
    fn survey(&mut self, request: &SurveyRequest) -> Result<SurveyResponse, BackendError> {
        self.surveys += 1;
        self.inner.survey(request)
    }
}

fn config(seed: u64) -> RunConfig {
    let mut c = SweepSpace::default_grid().base;
    c.num_agents = 48;
    c.steps = 300;
    c.survey_interval = 100;
    c.backend_id = "stub-conformist".into();
    c.seed = seed;
    c
}

fn simulate(config: &RunConfig) -> (RunOutput, Vec<ActRequest>, usize) {
    let prepared = prepare_run(config).unwrap();
    let resolved = resolve_backend(config, &prepared.question, &prepared.profiles).unwrap();
    let mut backend = Recording { inner: resolved.backend, acts: Vec::new(), surveys: 0 };
    let output = run_simulation(
        &config.engine_config(),
        &prepared.graph,
        &prepared.profiles,
        &prepared.question,
        &prepared.news,
        &mut backend,
    )
    .unwrap();
    (output, backend.acts, backend.surveys)
}

#[test]
fn top_ranked_agent_is_drawn_at_the_zipf_rate() {
    let agents: Vec<usize> = (0..100).collect();
    let schedule = build_activation(&agents, 1.0, 17).unwrap();
    let harmonic: f64 = (1..=100).map(|r| 1.0 / r as f64).sum();
    assert!((schedule.weights[0] - 1.0 / harmonic).abs() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draws = 1_000_000;
    let hits = (0..draws)
        .filter(|_| schedule.sample(1, &mut rng)[0] == schedule.ranked[0])
        .count();
    let p = 1.0 / harmonic;
    let freq = hits as f64 / draws as f64;
    let sd = (p * (1.0 - p) / draws as f64).sqrt();
    assert!((freq - p).abs() < 5.0 * sd, "{freq} vs {p}");
}

#[test]
fn sampling_without_replacement_gives_distinct_agents() {
    let agents: Vec<usize> = (0..30).collect();
    let schedule = build_activation(&agents, 1.2, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let mut drawn = schedule.sample(10, &mut rng);
        drawn.sort_unstable();
        drawn.dedup();
        assert_eq!(drawn.len(), 10);
    }
    assert_eq!(schedule.sample(50, &mut rng).len(), 30);
}

#[test]
fn snapshots_fall_on_the_survey_cadence() {
    let mut c = config(1);
    c.steps = 7;
    c.survey_interval = 3;
    let (output, _, surveys) = simulate(&c);
    let steps: Vec<u64> = output.snapshots.iter().map(|s| s.step).collect();
    assert_eq!(steps, vec![0, 3, 6, 7]);
    assert_eq!(c.engine_config().snapshot_count(), 4);
    assert_eq!(surveys, 4 * 48);
}

#[test]
fn survey_answers_stay_out_of_context_unless_enabled() {
    let (_, acts, _) = simulate(&config(2));
    assert!(acts.iter().flat_map(|r| &r.context).all(|c| c.author != SURVEY_AUTHOR));

    let mut c = config(2);
    c.survey_in_context = true;
    let (_, acts, _) = simulate(&c);
    assert!(acts.iter().flat_map(|r| &r.context).any(|c| c.author == SURVEY_AUTHOR));
}

#[test]
fn context_never_exceeds_capacity() {
    let mut c = config(3);
    c.survey_in_context = true;
    c.engine.context_capacity = 4;
    let (output, acts, _) = simulate(&c);
    assert!(acts.iter().all(|r| r.context.len() <= 4));
    assert!(output.final_state.contexts.values().all(|ctx| ctx.len() <= 4));
}

#[test]
fn news_posts_arrive_on_schedule_without_tags() {
    let mut c = config(4);
    c.news_agents = 1;
    c.engine.news_interval = 25;
    let (output, _, _) = simulate(&c);
    let news: Vec<&Event> = output.events.iter().filter(|e| e.kind == EventKind::News).collect();
    assert_eq!(news.len(), 12);
    for (i, e) in news.iter().enumerate() {
        assert_eq!(e.step, 25 * i as u64);
        assert_eq!(e.agent, Actor::News);
        assert_eq!(parse_stance_tag(e.text.as_deref().unwrap()), None);
    }
    // News opens each step it appears in.
    for e in &news {
        let first = output.events.iter().find(|x| x.step == e.step).unwrap();
        assert_eq!(first.kind, EventKind::News);
    }
}

#[test]
fn replaying_events_rebuilds_the_store() {
    let mut c = config(5);
    c.news_agents = 1;
    let prepared = prepare_run(&c).unwrap();
    let (output, _, _) = simulate(&c);
    let rebuilt = replay_store(&output.events, &prepared.graph).unwrap();
    assert_eq!(rebuilt, output.store);
    assert_eq!(output.final_state.posts, output.store.posts().len());
}

#[test]
fn event_log_round_trips_through_jsonl() {
    let (output, _, _) = simulate(&config(6));
    let mut buf = Vec::new();
    write_jsonl(&output.events, &mut buf).unwrap();
    let back: Vec<Event> = read_jsonl(std::str::from_utf8(&buf).unwrap()).unwrap();
    assert_eq!(back, output.events);
}

#[test]
fn runs_are_deterministic_and_seed_sensitive() {
    let (a, _, _) = simulate(&config(7));
    let (b, _, _) = simulate(&config(7));
    let (c, _, _) = simulate(&config(8));
    assert_eq!(a.events, b.events);
    assert_eq!(a.snapshots, b.snapshots);
    assert_ne!(a.events, c.events);
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(EngineConfig { survey_interval: 0, ..Default::default() }.validate().is_err());
    assert!(EngineConfig { agents_per_step: 0, ..Default::default() }.validate().is_err());
    assert!(EngineConfig { new_thread_prob: 1.5, ..Default::default() }.validate().is_err());
    assert!(EngineConfig::default().validate().is_ok());
}
