//! Deterministic opinion agents standing in for language models.
//!
//! A stub holds a probability `p` of favouring option 1 on its topic
//! question. Its posts carry a machine-readable stance tag, and whenever it
//! is asked to act or answer it first absorbs the tagged posts in its
//! context it has not seen before, pulling `p` toward their mean stance
//! (linear opinion averaging with rate λ). Because everything it knows
//! arrives through request context, an in-process stub and one behind the
//! HTTP protocol behave identically.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use super::{
    ActRequest, ActResponse, Backend, BackendError, ContextItem, SurveyRequest, SurveyResponse,
};
use crate::rng::rng_from_seed;

/// Smoothing added before taking logs so p ∈ {0, 1} stays finite.
pub const STUB_EPSILON: f64 = 1e-9;

const STANCE_MARKER: &str = "[stance:";

const PHRASES: [&str; 2] = [
    "Not convinced at all, I'm firmly on the first side of this.",
    "Honestly the second option makes more sense to me.",
];

/// Extracts the option index embedded by a stub post, if any.
pub fn parse_stance_tag(text: &str) -> Option<usize> {
    let start = text.find(STANCE_MARKER)? + STANCE_MARKER.len();
    let digits: String = text[start..].chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

#[derive(Debug, Clone)]
pub struct StubOpinionAgent {
    /// Question text → probability of answering option 1.
    pub stance: BTreeMap<String, f64>,
    /// Question whose stance drives posting and absorbs observations.
    pub topic: String,
    pub lambda: f64,
    rng: ChaCha8Rng,
    seen: HashSet<ContextItem>,
}

impl StubOpinionAgent {
    pub fn new(topic: impl Into<String>, p: f64, lambda: f64, seed: u64) -> Self {
        let topic = topic.into();
        let mut stance = BTreeMap::new();
        stance.insert(topic.clone(), p.clamp(0.0, 1.0));
        StubOpinionAgent {
            stance,
            topic,
            lambda: lambda.clamp(-1.0, 1.0),
            rng: rng_from_seed(seed),
            seen: HashSet::new(),
        }
    }

    pub fn with_stance(mut self, question: impl Into<String>, p: f64) -> Self {
        self.stance.insert(question.into(), p.clamp(0.0, 1.0));
        self
    }

    pub fn p(&self) -> f64 {
        self.stance[&self.topic]
    }

    /// `p ← clamp(p + λ(s̄ − p))` over the tagged posts; untagged posts are ignored.
    pub fn observe<I: IntoIterator<Item = Option<usize>>>(&mut self, tags: I) {
        let (sum, count) = tags
            .into_iter()
            .flatten()
            .fold((0.0, 0usize), |(s, c), tag| (s + tag.min(1) as f64, c + 1));
        if count == 0 {
            return;
        }
        let mean = sum / count as f64;
        let p = self.p();
        let updated = (p + self.lambda * (mean - p)).clamp(0.0, 1.0);
        self.stance.insert(self.topic.clone(), updated);
    }

    /// Writes a post whose stance tag is a Bernoulli(p) draw.
    pub fn act(&mut self) -> String {
        let tag = usize::from(self.rng.random_bool(self.p()));
        let nonce = self.rng.next_u64();
        format!("{} {STANCE_MARKER}{tag} ref:{nonce:016x}]", PHRASES[tag])
    }

    /// `(log(1−p+ε), log(p+ε))` for a known binary question.
    pub fn survey(&self, question: &str, options: usize) -> Result<Vec<f64>, BackendError> {
        if options != 2 {
            return Err(BackendError::application(format!(
                "stub agents answer binary questions only, got {options} options"
            )));
        }
        let p = *self
            .stance
            .get(question)
            .ok_or_else(|| BackendError::application(format!("no stance on {question:?}")))?;
        Ok(vec![(1.0 - p + STUB_EPSILON).ln(), (p + STUB_EPSILON).ln()])
    }

    /// Absorbs context entries not seen before as a single observation batch.
    pub fn absorb(&mut self, context: &[ContextItem]) {
        let mut fresh = Vec::new();
        for item in context {
            if let Some(tag) = parse_stance_tag(&item.text) {
                if self.seen.insert(item.clone()) {
                    fresh.push(Some(tag));
                }
            }
        }
        self.observe(fresh);
    }
}

/// One stub per agent id.
#[derive(Debug, Clone, Default)]
pub struct StubPopulation {
    agents: BTreeMap<usize, StubOpinionAgent>,
}

impl StubPopulation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, agent_id: usize, agent: StubOpinionAgent) {
        self.agents.insert(agent_id, agent);
    }

    pub fn get(&self, agent_id: usize) -> Option<&StubOpinionAgent> {
        self.agents.get(&agent_id)
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    fn agent_mut(&mut self, agent_id: usize) -> Result<&mut StubOpinionAgent, BackendError> {
        self.agents
            .get_mut(&agent_id)
            .ok_or_else(|| BackendError::application(format!("unknown agent {agent_id}")))
    }
}

impl Backend for StubPopulation {
    fn act(&mut self, request: &ActRequest) -> Result<ActResponse, BackendError> {
        let agent = self.agent_mut(request.agent_id)?;
        agent.absorb(&request.context);
        Ok(ActResponse { text: agent.act() })
    }

    fn survey(&mut self, request: &SurveyRequest) -> Result<SurveyResponse, BackendError> {
        let agent = self.agent_mut(request.agent_id)?;
        agent.absorb(&request.context);
        let log_scores = agent.survey(&request.question, request.options.len())?;
        Ok(SurveyResponse { log_scores })
    }
}
