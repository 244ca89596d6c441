use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::EngineConfig;
use crate::rng::{child_rng, derive_seed};

use super::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;
pub const GRID_SIZES: [usize; 4] = [64, 256, 1024, 4096];
/// Population size at which `normalize_cadence` leaves the schedule alone.
pub const CADENCE_REFERENCE_AGENTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphType {
    Random,
    PowerlawCluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proportions {
    Uniform,
    Blueprint,
    Distribution,
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    /// Stub backends called directly.
    #[default]
    InProcess,
    /// Stub backends served over HTTP on 127.0.0.1 for the run.
    Loopback,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineParams {
    pub agents_per_step: usize,
    pub recency_window: usize,
    pub context_depth: usize,
    pub context_capacity: usize,
    pub new_thread_prob: f64,
    pub zipf_exponent: f64,
    pub news_interval: u64,
}

impl Default for EngineParams {
    fn default() -> Self {
        let e = EngineConfig::default();
        EngineParams {
            agents_per_step: e.agents_per_step,
            recency_window: e.recency_window,
            context_depth: e.context_depth,
            context_capacity: e.context_capacity,
            new_thread_prob: e.new_thread_prob,
            zipf_exponent: e.zipf_exponent,
            news_interval: e.news_interval,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphParams {
    /// Defaults to `4/(n−1)`, a mean out-degree of 4.
    pub er_edge_prob: Option<f64>,
    pub pc_new_edges: usize,
    pub pc_triangle_prob: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams {
            er_edge_prob: None,
            pc_new_edges: 2,
            pc_triangle_prob: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendParams {
    pub transport: Transport,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for BackendParams {
    fn default() -> Self {
        BackendParams {
            transport: Transport::InProcess,
            endpoint: None,
            timeout_ms: 30_000,
            retries: 2,
            backoff_ms: 200,
        }
    }
}

/// Optional data files; anything missing falls back to built-in data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub question_bank: Option<PathBuf>,
    pub news_corpus: Option<PathBuf>,
    /// Human opinion matrix (CSV) used by distribution/average proportions.
    pub human_target: Option<PathBuf>,
    /// JSON array of per-cluster frequencies.
    pub blueprint_frequencies: Option<PathBuf>,
    /// One opinion-matrix CSV per cluster, in cluster order.
    pub cluster_matrices: Vec<PathBuf>,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}
fn default_steps() -> u64 {
    2500
}
fn default_interval() -> u64 {
    250
}
fn default_clusters() -> usize {
    25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub num_agents: usize,
    pub backend_id: String,
    pub graph_type: GraphType,
    pub homophily: bool,
    pub survey_in_context: bool,
    pub news_agents: u8,
    pub proportions: Proportions,
    pub question_id: String,
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default = "default_interval")]
    pub survey_interval: u64,
    pub seed: u64,
    #[serde(default = "default_clusters")]
    pub num_clusters: usize,
    /// Scales steps and survey interval by `num_agents / 64`.
    #[serde(default)]
    pub normalize_cadence: bool,
    #[serde(default)]
    pub grid_sizes_only: bool,
    #[serde(default)]
    pub engine: EngineParams,
    #[serde(default)]
    pub graph: GraphParams,
    #[serde(default)]
    pub backend: BackendParams,
    #[serde(default)]
    pub data: DataPaths,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidConfig(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.num_agents < 2 {
            return bad("num_agents must be at least 2".into());
        }
        if self.grid_sizes_only && !GRID_SIZES.contains(&self.num_agents) {
            return bad(format!("num_agents {} is not one of {GRID_SIZES:?}", self.num_agents));
        }
        if self.news_agents > 1 {
            return bad("news_agents must be 0 or 1".into());
        }
        if self.survey_interval == 0 {
            return bad("survey_interval must be at least 1".into());
        }
        if self.num_clusters == 0 {
            return bad("num_clusters must be positive".into());
        }
        self.engine_config().validate()?;
        Ok(())
    }

    pub fn engine_config(&self) -> EngineConfig {
        let (steps, survey_interval) = if self.normalize_cadence {
            let f = self.num_agents as f64 / CADENCE_REFERENCE_AGENTS as f64;
            (
                (self.steps as f64 * f).round() as u64,
                ((self.survey_interval as f64 * f).round() as u64).max(1),
            )
        } else {
            (self.steps, self.survey_interval)
        };
        EngineConfig {
            steps,
            survey_interval,
            agents_per_step: self.engine.agents_per_step,
            recency_window: self.engine.recency_window,
            context_depth: self.engine.context_depth,
            context_capacity: self.engine.context_capacity,
            new_thread_prob: self.engine.new_thread_prob,
            zipf_exponent: self.engine.zipf_exponent,
            news_interval: self.engine.news_interval,
            survey_in_context: self.survey_in_context,
            seed: derive_seed(self.seed, "engine"),
        }
    }

    /// Design-variable values as `(factor, level)` strings, in table order.
    pub fn factors(&self) -> Vec<(&'static str, String)> {
        vec![
            ("num_agents", self.num_agents.to_string()),
            ("backend_id", self.backend_id.clone()),
            ("graph_type", label(&self.graph_type)),
            ("homophily", self.homophily.to_string()),
            ("survey_in_context", self.survey_in_context.to_string()),
            ("news_agents", self.news_agents.to_string()),
            ("proportions", label(&self.proportions)),
            ("question_id", self.question_id.clone()),
        ]
    }
}

fn label<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

pub const FACTORS: [&str; 8] = [
    "num_agents",
    "backend_id",
    "graph_type",
    "homophily",
    "survey_in_context",
    "news_agents",
    "proportions",
    "question_id",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Every run draws each variable independently and uniformly.
    #[default]
    Uniform,
    /// Runs cycle through a seeded shuffle of all combinations, so counts per
    /// combination differ by at most one.
    Quota,
}

/// Option grid for a sweep. The question is drawn per run alongside the
/// seed and is not counted as a design setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpace {
    pub num_agents: Vec<usize>,
    pub backend_id: Vec<String>,
    pub graph_type: Vec<GraphType>,
    pub homophily: Vec<bool>,
    pub survey_in_context: Vec<bool>,
    pub news_agents: Vec<u8>,
    pub proportions: Vec<Proportions>,
    pub question_id: Vec<String>,
    #[serde(default)]
    pub mode: SweepMode,
    /// Template for everything the grid does not vary. Its grid fields and
    /// seed are overwritten per run.
    pub base: RunConfig,
}

pub const STUB_BACKENDS: [&str; 4] = ["stub-frozen", "stub-conformist", "stub-contrarian", "stub-volatile"];

impl SweepSpace {
    /// Seven-variable grid with the four stub backends in the model slot.
    pub fn default_grid() -> Self {
        SweepSpace {
            num_agents: GRID_SIZES.to_vec(),
            backend_id: STUB_BACKENDS.iter().map(|s| s.to_string()).collect(),
            graph_type: vec![GraphType::Random, GraphType::PowerlawCluster],
            homophily: vec![false, true],
            survey_in_context: vec![false, true],
            news_agents: vec![0, 1],
            proportions: vec![
                Proportions::Uniform,
                Proportions::Blueprint,
                Proportions::Distribution,
                Proportions::Average,
            ],
            question_id: vec!["Q25".into(), "Q28".into(), "Q29".into()],
            mode: SweepMode::Uniform,
            base: RunConfig {
                schema_version: SCHEMA_VERSION,
                num_agents: 64,
                backend_id: STUB_BACKENDS[0].into(),
                graph_type: GraphType::Random,
                homophily: false,
                survey_in_context: false,
                news_agents: 0,
                proportions: Proportions::Uniform,
                question_id: "Q28".into(),
                steps: default_steps(),
                survey_interval: default_interval(),
                seed: 0,
                num_clusters: default_clusters(),
                normalize_cadence: false,
                grid_sizes_only: false,
                engine: EngineParams::default(),
                graph: GraphParams::default(),
                backend: BackendParams::default(),
                data: DataPaths::default(),
            },
        }
    }

    fn dims(&self) -> [usize; 7] {
        [
            self.num_agents.len(),
            self.backend_id.len(),
            self.graph_type.len(),
            self.homophily.len(),
            self.survey_in_context.len(),
            self.news_agents.len(),
            self.proportions.len(),
        ]
    }

    /// Number of distinct design settings (question and seed excluded).
    pub fn combinations(&self) -> usize {
        self.dims().iter().product()
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.dims().contains(&0) || self.question_id.is_empty() {
            return Err(HarnessError::InvalidConfig("every sweep dimension needs at least one value".into()));
        }
        Ok(())
    }

    /// Config for combination `index` (mixed radix over the seven variables).
    fn config_at(&self, mut index: usize, question: &str, seed: u64) -> RunConfig {
        let mut pick = |len: usize| {
            let i = index % len;
            index /= len;
            i
        };
        let mut c = self.base.clone();
        c.num_agents = self.num_agents[pick(self.num_agents.len())];
        c.backend_id = self.backend_id[pick(self.backend_id.len())].clone();
        c.graph_type = self.graph_type[pick(self.graph_type.len())];
        c.homophily = self.homophily[pick(self.homophily.len())];
        c.survey_in_context = self.survey_in_context[pick(self.survey_in_context.len())];
        c.news_agents = self.news_agents[pick(self.news_agents.len())];
        c.proportions = self.proportions[pick(self.proportions.len())];
        c.question_id = question.to_string();
        c.seed = seed;
        c
    }

    /// All distinct design settings, as configs with seed 0 and the first question.
    pub fn enumerate(&self) -> Vec<RunConfig> {
        (0..self.combinations())
            .map(|i| self.config_at(i, &self.question_id[0], 0))
            .collect()
    }
}

/// Draws `n_runs` configs from the grid. Seeds and draws derive from
/// `master_seed` only.
pub fn random_sweep(space: &SweepSpace, n_runs: usize, master_seed: u64) -> Result<Vec<RunConfig>, HarnessError> {
    space.validate()?;
    let total = space.combinations();
    let mut rng = child_rng(master_seed, "sweep");
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng);
    let configs = (0..n_runs)
        .map(|i| {
            let combo = match space.mode {
                SweepMode::Uniform => rng.random_range(0..total),
                SweepMode::Quota => order[i % total],
            };
            let question = &space.question_id[rng.random_range(0..space.question_id.len())];
            let seed = derive_seed(master_seed, &format!("run/{i}"));
            space.config_at(combo, question, seed)
        })
        .collect::<Vec<_>>();
    let distinct: BTreeSet<u64> = configs.iter().map(|c| c.seed).collect();
    debug_assert_eq!(distinct.len(), configs.len());
    Ok(configs)
}
