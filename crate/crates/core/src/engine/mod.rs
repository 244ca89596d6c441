//! The discrete-step simulation loop.
//!
//! Each step draws up to ten distinct agents by Zipfian weight. All but the
//! last observe a recent thread from someone they follow; the last one posts,
//! opening a new thread with probability 1/3 and otherwise replying. A news
//! agent, when present, opens a thread every `news_interval` steps. The whole
//! population is surveyed at step 0, every `survey_interval` steps, and after
//! the final step.

mod activation;
mod store;

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use activation::{build_activation, ActivationSchedule};
pub use store::{Actor, Post, ThreadStore};

use crate::agents::{
    argmax_lowest, parse_stance_tag, ActRequest, AgentProfile, Backend, ContextItem, SurveyRequest,
    NEWS_AUTHOR,
};
use crate::metrics::{Answer, SurveySnapshot};
use crate::netgen::FollowGraph;
use crate::rng::{child_rng, derive_seed};
use crate::surveys::Question;

pub const SURVEY_AUTHOR: &str = "survey";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub steps: u64,
    pub survey_interval: u64,
    pub agents_per_step: usize,
    /// R: how many recent threads are candidates when picking one.
    pub recency_window: usize,
    /// C: posts copied into context per observation.
    pub context_depth: usize,
    /// M: context deque capacity.
    pub context_capacity: usize,
    pub new_thread_prob: f64,
    pub zipf_exponent: f64,
    pub news_interval: u64,
    pub survey_in_context: bool,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            steps: 2500,
            survey_interval: 250,
            agents_per_step: 10,
            recency_window: 20,
            context_depth: 5,
            context_capacity: 10,
            new_thread_prob: 1.0 / 3.0,
            zipf_exponent: 1.0,
            news_interval: 25,
            survey_in_context: false,
            seed: 0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::InvalidConfig(m.into()));
        if self.survey_interval == 0 {
            return bad("survey_interval must be at least 1");
        }
        if self.agents_per_step == 0 {
            return bad("agents_per_step must be at least 1");
        }
        if self.recency_window == 0 || self.context_depth == 0 || self.context_capacity == 0 {
            return bad("recency window, context depth and capacity must be positive");
        }
        if !(0.0..=1.0).contains(&self.new_thread_prob) {
            return bad("new_thread_prob must be a probability");
        }
        if self.news_interval == 0 {
            return bad("news_interval must be at least 1");
        }
        Ok(())
    }

    /// Number of survey snapshots a run produces: `⌈T/i⌉ + 1`.
    pub fn snapshot_count(&self) -> u64 {
        self.steps.div_ceil(self.survey_interval) + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Observe,
    ActNew,
    ActReply,
    News,
    BackendError,
}

/// One line of `events.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub step: u64,
    pub kind: EventKind,
    pub agent: Actor,
    pub thread: Option<usize>,
    pub post: Option<usize>,
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stance: Option<usize>,
}

/// One line of a news corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsItem {
    pub text: String,
    #[serde(default)]
    pub stance: Option<usize>,
}

pub fn parse_news_corpus(jsonl: &str) -> Result<Vec<NewsItem>, EngineError> {
    jsonl
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(EngineError::from))
        .collect()
}

#[derive(Debug, Clone)]
struct Member {
    cluster_id: usize,
    display_name: String,
    persona: String,
    node: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FinalState {
    pub step: u64,
    pub threads: usize,
    pub posts: usize,
    pub contexts: BTreeMap<usize, Vec<ContextItem>>,
}

pub struct RunState {
    config: EngineConfig,
    graph: FollowGraph,
    members: BTreeMap<usize, Member>,
    activation: ActivationSchedule,
    store: ThreadStore,
    contexts: BTreeMap<usize, VecDeque<ContextItem>>,
    rng: ChaCha8Rng,
    step: u64,
    news_cursor: usize,
    events: Vec<Event>,
    snapshots: Vec<SurveySnapshot>,
}

impl RunState {
    /// The population is every agent placed on a graph node; an agent
    /// displaced by the news agent takes no part.
    pub fn new(config: EngineConfig, graph: FollowGraph, profiles: &[AgentProfile]) -> Result<Self, EngineError> {
        config.validate()?;
        let by_id: BTreeMap<usize, &AgentProfile> = profiles.iter().map(|p| (p.agent_id, p)).collect();
        let mut members = BTreeMap::new();
        for (node, agent) in graph.assignment.iter().enumerate() {
            let Some(agent) = agent else { continue };
            let profile = by_id.get(agent).ok_or_else(|| {
                EngineError::InvalidConfig(format!("agent {agent} placed on node {node} has no profile"))
            })?;
            members.insert(
                *agent,
                Member {
                    cluster_id: profile.cluster_id,
                    display_name: profile.display_name.clone(),
                    persona: profile.persona.clone(),
                    node,
                },
            );
        }
        let ids: Vec<usize> = members.keys().copied().collect();
        let activation = build_activation(&ids, config.zipf_exponent, derive_seed(config.seed, "activation"))?;
        let contexts = ids.iter().map(|&a| (a, VecDeque::new())).collect();
        Ok(RunState {
            rng: child_rng(config.seed, "steps"),
            config,
            graph,
            members,
            activation,
            store: ThreadStore::new(),
            contexts,
            step: 0,
            news_cursor: 0,
            events: Vec::new(),
            snapshots: Vec::new(),
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn store(&self) -> &ThreadStore {
        &self.store
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn snapshots(&self) -> &[SurveySnapshot] {
        &self.snapshots
    }

    pub fn activation(&self) -> &ActivationSchedule {
        &self.activation
    }

    pub fn context(&self, agent: usize) -> Option<&VecDeque<ContextItem>> {
        self.contexts.get(&agent)
    }

    pub fn agents(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.keys().copied()
    }

    fn author_label(&self, actor: Actor) -> String {
        match actor {
            Actor::Agent(a) => self.members[&a].display_name.clone(),
            Actor::News => NEWS_AUTHOR.to_string(),
        }
    }

    fn push_context(&mut self, agent: usize, item: ContextItem) {
        let deque = self.contexts.get_mut(&agent).expect("member has a context");
        if deque.len() == self.config.context_capacity {
            deque.pop_front();
        }
        deque.push_back(item);
    }

    fn pick_followed_thread(&mut self, agent: usize) -> Option<usize> {
        let node = self.members[&agent].node;
        let candidates = self
            .store
            .recent_followed(self.graph.followees(node), self.config.recency_window);
        if candidates.is_empty() {
            None
        } else {
            Some(candidates[self.rng.random_range(0..candidates.len())])
        }
    }

    fn observe(&mut self, agent: usize) {
        let thread = self.pick_followed_thread(agent);
        if let Some(t) = thread {
            let items: Vec<ContextItem> = self
                .store
                .tail(t, self.config.context_depth)
                .map(|p| ContextItem {
                    author: self.author_label(p.author),
                    text: p.text.clone(),
                })
                .collect();
            for item in items {
                self.push_context(agent, item);
            }
        }
        self.events.push(Event {
            step: self.step,
            kind: EventKind::Observe,
            agent: Actor::Agent(agent),
            thread,
            post: None,
            text: None,
            stance: None,
        });
    }

    fn act(&mut self, agent: usize, backend: &mut dyn Backend) {
        let wants_new = self.rng.random::<f64>() < self.config.new_thread_prob;
        let target = if wants_new || self.store.num_threads() == 0 {
            None
        } else {
            self.pick_followed_thread(agent).or_else(|| {
                let recent = self.store.recent(self.config.recency_window);
                Some(recent[self.rng.random_range(0..recent.len())])
            })
        };
        let member = &self.members[&agent];
        let request = ActRequest {
            agent_id: agent,
            cluster_id: member.cluster_id,
            persona: member.persona.clone(),
            context: self.contexts[&agent].iter().cloned().collect(),
        };
        let node = member.node;
        let event = match backend.act(&request) {
            Ok(response) => {
                let stance = parse_stance_tag(&response.text);
                let (thread, post) = self
                    .store
                    .append(target, Actor::Agent(agent), node, self.step, response.text.clone(), stance)
                    .expect("reply target exists");
                Event {
                    step: self.step,
                    kind: if target.is_none() { EventKind::ActNew } else { EventKind::ActReply },
                    agent: Actor::Agent(agent),
                    thread: Some(thread),
                    post: Some(post),
                    text: Some(response.text),
                    stance,
                }
            }
            Err(e) => {
                log::warn!("step {}: act for agent {agent} failed: {e}", self.step);
                Event {
                    step: self.step,
                    kind: EventKind::BackendError,
                    agent: Actor::Agent(agent),
                    thread: target,
                    post: None,
                    text: Some(e.to_string()),
                    stance: None,
                }
            }
        };
        self.events.push(event);
    }

    fn post_news(&mut self, corpus: &[NewsItem]) {
        let (Some(node), false) = (self.graph.news_node, corpus.is_empty()) else {
            return;
        };
        let item = &corpus[self.news_cursor % corpus.len()];
        self.news_cursor += 1;
        let (thread, post) = self
            .store
            .append(None, Actor::News, node, self.step, item.text.clone(), item.stance)
            .expect("new thread");
        self.events.push(Event {
            step: self.step,
            kind: EventKind::News,
            agent: Actor::News,
            thread: Some(thread),
            post: Some(post),
            text: Some(item.text.clone()),
            stance: item.stance,
        });
    }

    /// Advances one step.
    pub fn run_step(&mut self, backend: &mut dyn Backend, news: &[NewsItem]) {
        if self.step % self.config.news_interval == 0 {
            self.post_news(news);
        }
        let drawn = self.activation.sample(self.config.agents_per_step, &mut self.rng);
        if let Some((&actor, observers)) = drawn.split_last() {
            for &agent in observers {
                self.observe(agent);
            }
            self.act(actor, backend);
        }
        self.step += 1;
    }

    /// Surveys every member in agent-id order; failed calls become abstentions.
    pub fn survey_population(&mut self, question: &Question, backend: &mut dyn Backend) -> SurveySnapshot {
        let mut answers = BTreeMap::new();
        let ids: Vec<usize> = self.members.keys().copied().collect();
        for agent in ids {
            let member = &self.members[&agent];
            let request = SurveyRequest {
                agent_id: agent,
                cluster_id: member.cluster_id,
                persona: member.persona.clone(),
                context: self.contexts[&agent].iter().cloned().collect(),
                question: question.text.clone(),
                options: question.options.clone(),
            };
            let answer = backend
                .survey(&request)
                .and_then(|r| r.validate(question.options.len()).map(|_| r))
                .map(|r| argmax_lowest(&r.log_scores).expect("at least two options"));
            let answer = match answer {
                Ok(option) => {
                    if self.config.survey_in_context {
                        let text = format!("{} {}", question.text, question.options[option]);
                        self.push_context(agent, ContextItem { author: SURVEY_AUTHOR.into(), text });
                    }
                    Answer::Option(option)
                }
                Err(e) => {
                    log::warn!("step {}: survey for agent {agent} failed: {e}", self.step);
                    Answer::Abstain
                }
            };
            answers.insert(agent, answer);
        }
        let snapshot = SurveySnapshot {
            step: self.step,
            question_id: question.question_id.clone(),
            answers,
        };
        self.snapshots.push(snapshot.clone());
        snapshot
    }

    pub fn final_state(&self) -> FinalState {
        FinalState {
            step: self.step,
            threads: self.store.num_threads(),
            posts: self.store.posts().len(),
            contexts: self
                .contexts
                .iter()
                .map(|(&a, d)| (a, d.iter().cloned().collect()))
                .collect(),
        }
    }
}

pub struct RunOutput {
    pub events: Vec<Event>,
    pub snapshots: Vec<SurveySnapshot>,
    pub final_state: FinalState,
    pub store: ThreadStore,
}

/// Runs steps `0..T`, surveying at step 0, after every `survey_interval`
/// steps and after the last step.
pub fn run_simulation(
    config: &EngineConfig,
    graph: &FollowGraph,
    profiles: &[AgentProfile],
    question: &Question,
    news: &[NewsItem],
    backend: &mut dyn Backend,
) -> Result<RunOutput, EngineError> {
    question
        .validate()
        .map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
    if graph.news_node.is_some() && news.is_empty() {
        return Err(EngineError::InvalidConfig("news agent placed but the corpus is empty".into()));
    }
    let mut state = RunState::new(config.clone(), graph.clone(), profiles)?;
    state.survey_population(question, backend);
    while state.step < config.steps {
        state.run_step(backend, news);
        if state.step % config.survey_interval == 0 || state.step == config.steps {
            state.survey_population(question, backend);
        }
    }
    let final_state = state.final_state();
    Ok(RunOutput {
        events: state.events,
        snapshots: state.snapshots,
        final_state,
        store: state.store,
    })
}

/// Rebuilds the thread store from an event log.
pub fn replay_store(events: &[Event], graph: &FollowGraph) -> Result<ThreadStore, EngineError> {
    let node_of = graph.node_of_agent();
    let mut store = ThreadStore::new();
    for e in events {
        let (new_thread, node) = match (e.kind, e.agent) {
            (EventKind::ActNew, Actor::Agent(a)) => (true, node_of.get(a).copied().flatten()),
            (EventKind::ActReply, Actor::Agent(a)) => (false, node_of.get(a).copied().flatten()),
            (EventKind::News, Actor::News) => (true, graph.news_node),
            _ => continue,
        };
        let bad = || EngineError::InvalidConfig(format!("unreplayable event at step {}", e.step));
        let node = node.ok_or_else(bad)?;
        let target = if new_thread { None } else { Some(e.thread.ok_or_else(bad)?) };
        let (thread, post) = store
            .append(target, e.agent, node, e.step, e.text.clone().ok_or_else(bad)?, e.stance)
            .ok_or_else(bad)?;
        if Some(thread) != e.thread || Some(post) != e.post {
            return Err(bad());
        }
    }
    Ok(store)
}

pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut out: W) -> Result<(), EngineError> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, EngineError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(EngineError::from))
        .collect()
}
