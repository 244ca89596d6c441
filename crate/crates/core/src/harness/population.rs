use std::fs;
use std::time::Duration;

use rand::Rng;

use crate::agents::{
    AgentProfile, Backend, BackendServer, HealthResponse, RemoteBackend, RemoteClient, RetryPolicy,
    StubOpinionAgent, StubPopulation,
};
use crate::engine::{parse_news_corpus, NewsItem};
use crate::mixing::{allocate_mix, solve_mix, MixProblem, MixVariant, DEFAULT_MAX_ITERS, DEFAULT_TOLERANCE};
use crate::netgen::{
    generate_graph, place_agents_homophily, place_agents_random, place_news_agent, FollowGraph, GraphKind,
    GraphSpec,
};
use crate::opinion::{OpinionMatrix, PopulationMix};
use crate::rng::{child_rng, derive_seed};
use crate::surveys::{builtin_bank, find_question, parse_bank, Question};

use super::config::{GraphType, Proportions, RunConfig, Transport};
use super::HarnessError;

/// Environment variable overriding the remote backend endpoint.
pub const ENDPOINT_ENV: &str = "SILSIM_BACKEND_ENDPOINT";

/// Persuasion rate of each built-in stub backend.
pub fn stub_lambda(backend_id: &str) -> Option<f64> {
    match backend_id {
        "stub-frozen" => Some(0.0),
        "stub-conformist" => Some(0.3),
        "stub-contrarian" => Some(-0.3),
        "stub-volatile" => Some(0.9),
        _ => None,
    }
}

fn random_distribution<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

fn random_matrix(bank: &[Question], seed_label: &str) -> OpinionMatrix {
    let mut rng = child_rng(0, seed_label);
    let rows = bank.iter().map(|q| random_distribution(&mut rng, q.options.len())).collect();
    OpinionMatrix::new(bank.iter().map(|q| q.question_id.clone()).collect(), rows)
        .expect("random rows are distributions")
}

/// Built-in per-cluster opinion matrices, distinct for every backend id.
pub fn synthetic_cluster_matrices(backend_id: &str, bank: &[Question], clusters: usize) -> Vec<OpinionMatrix> {
    (0..clusters)
        .map(|c| random_matrix(bank, &format!("clusters/{backend_id}/{c}")))
        .collect()
}

/// Built-in stand-in for a human opinion matrix over the bank.
pub fn synthetic_human_target(bank: &[Question]) -> OpinionMatrix {
    random_matrix(bank, "human-target")
}

/// Built-in stand-in for dataset cluster frequencies.
pub fn synthetic_blueprint_frequencies(clusters: usize) -> Vec<f64> {
    random_distribution(&mut child_rng(0, "blueprint"), clusters)
}

fn read(path: &std::path::Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}

pub fn load_bank(config: &RunConfig) -> Result<Vec<Question>, HarnessError> {
    match &config.data.question_bank {
        Some(p) => parse_bank(&read(p)?).map_err(|e| HarnessError::Data(e.to_string())),
        None => Ok(builtin_bank()),
    }
}

pub fn load_news(config: &RunConfig) -> Result<Vec<NewsItem>, HarnessError> {
    let text = match &config.data.news_corpus {
        Some(p) => read(p)?,
        None => include_str!("../../data/news.jsonl").to_string(),
    };
    parse_news_corpus(&text).map_err(|e| HarnessError::Data(e.to_string()))
}

fn cluster_matrices(config: &RunConfig, bank: &[Question]) -> Result<Vec<OpinionMatrix>, HarnessError> {
    if config.data.cluster_matrices.is_empty() {
        return Ok(synthetic_cluster_matrices(&config.backend_id, bank, config.num_clusters));
    }
    if config.data.cluster_matrices.len() != config.num_clusters {
        return Err(HarnessError::Data(format!(
            "{} cluster matrices for {} clusters",
            config.data.cluster_matrices.len(),
            config.num_clusters
        )));
    }
    config
        .data
        .cluster_matrices
        .iter()
        .map(|p| OpinionMatrix::read_csv(read(p)?.as_bytes()).map_err(|e| HarnessError::Data(e.to_string())))
        .collect()
}

fn cluster_labels(n: usize) -> Vec<String> {
    (0..n).map(|c| format!("cluster-{c}")).collect()
}

/// Cluster shares for the configured proportions rule.
pub fn population_mix(
    config: &RunConfig,
    bank: &[Question],
    matrices: &[OpinionMatrix],
) -> Result<PopulationMix, HarnessError> {
    let labels = cluster_labels(matrices.len());
    let data = |e: crate::opinion::OpinionError| HarnessError::Data(e.to_string());
    match config.proportions {
        Proportions::Uniform => Ok(PopulationMix::uniform(labels)),
        Proportions::Blueprint => {
            let freqs = match &config.data.blueprint_frequencies {
                Some(p) => serde_json::from_str::<Vec<f64>>(&read(p)?)?,
                None => synthetic_blueprint_frequencies(matrices.len()),
            };
            PopulationMix::from_frequencies(labels, &freqs).map_err(data)
        }
        Proportions::Distribution | Proportions::Average => {
            let target = match &config.data.human_target {
                Some(p) => OpinionMatrix::read_csv(read(p)?.as_bytes()).map_err(data)?,
                None => synthetic_human_target(bank),
            };
            let variant = if config.proportions == Proportions::Average {
                MixVariant::Average
            } else {
                MixVariant::Distribution
            };
            let problem = MixProblem {
                target,
                models: labels.into_iter().zip(matrices.iter().cloned()).collect(),
                variant,
            };
            let solution = solve_mix(&problem, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERS)
                .map_err(|e| HarnessError::Data(e.to_string()))?;
            Ok(solution.mix)
        }
    }
}

/// Agent profiles: agents `0..n` are dealt to clusters in cluster order by
/// largest-remainder apportionment, each carrying its cluster's answer row
/// for the run's question.
pub fn build_profiles(
    config: &RunConfig,
    question: &Question,
    matrices: &[OpinionMatrix],
    mix: &PopulationMix,
) -> Result<Vec<AgentProfile>, HarnessError> {
    let counts = allocate_mix(mix, config.num_agents).map_err(|e| HarnessError::Data(e.to_string()))?;
    let mut profiles = Vec::with_capacity(config.num_agents);
    for (cluster, (_, count)) in counts.iter().enumerate() {
        let row = matrices[cluster].row(&question.question_id).ok_or_else(|| {
            HarnessError::Data(format!("cluster {cluster} has no row for {}", question.question_id))
        })?;
        for _ in 0..*count {
            let id = profiles.len();
            profiles.push(AgentProfile {
                agent_id: id,
                cluster_id: cluster,
                display_name: format!("user{id}"),
                persona: format!("persona cluster {cluster}"),
                baseline_opinions: [(question.question_id.clone(), row.to_vec())].into_iter().collect(),
            });
        }
    }
    Ok(profiles)
}

pub fn build_graph(config: &RunConfig, profiles: &[AgentProfile]) -> Result<FollowGraph, HarnessError> {
    let n = config.num_agents;
    let kind = match config.graph_type {
        GraphType::Random => GraphKind::RandomEr {
            edge_prob: config.graph.er_edge_prob.unwrap_or((4.0 / (n - 1) as f64).min(1.0)),
        },
        GraphType::PowerlawCluster => GraphKind::PowerlawCluster {
            new_edges: config.graph.pc_new_edges,
            triangle_prob: config.graph.pc_triangle_prob,
        },
    };
    let spec = GraphSpec {
        kind,
        num_nodes: n,
        seed: derive_seed(config.seed, "graph"),
    };
    let graph = generate_graph(&spec)?;
    for w in &graph.warnings {
        log::warn!("graph: {w}");
    }
    let placed = if config.homophily {
        place_agents_homophily(&graph, profiles, &config.question_id, derive_seed(config.seed, "layout"))?
    } else {
        place_agents_random(&graph, profiles, derive_seed(config.seed, "placement"))?
    };
    Ok(if config.news_agents == 1 {
        place_news_agent(&placed)
    } else {
        placed
    })
}

pub fn stub_population(
    config: &RunConfig,
    lambda: f64,
    question: &Question,
    profiles: &[AgentProfile],
) -> Result<StubPopulation, HarnessError> {
    if question.options.len() != 2 {
        return Err(HarnessError::InvalidConfig(format!(
            "stub backends answer binary questions only; {} has {} options",
            question.question_id,
            question.options.len()
        )));
    }
    let mut stubs = StubPopulation::new();
    for p in profiles {
        let p1 = p.baseline_opinions[&question.question_id][1];
        let seed = derive_seed(config.seed, &format!("stub/{}", p.agent_id));
        stubs.insert(p.agent_id, StubOpinionAgent::new(question.text.clone(), p1, lambda, seed));
    }
    Ok(stubs)
}

/// A backend plus whatever must stay alive while it is used.
pub struct ResolvedBackend {
    pub backend: Box<dyn Backend + Send>,
    pub server: Option<BackendServer>,
}

pub fn resolve_backend(
    config: &RunConfig,
    question: &Question,
    profiles: &[AgentProfile],
) -> Result<ResolvedBackend, HarnessError> {
    let params = &config.backend;
    let client = |endpoint: String| {
        RemoteBackend::new(RemoteClient::new(
            endpoint,
            Duration::from_millis(params.timeout_ms),
            RetryPolicy {
                retries: params.retries,
                backoff: Duration::from_millis(params.backoff_ms),
            },
        ))
    };
    let lambda = stub_lambda(&config.backend_id);
    match (lambda, params.transport) {
        (Some(lambda), Transport::InProcess) => Ok(ResolvedBackend {
            backend: Box::new(stub_population(config, lambda, question, profiles)?),
            server: None,
        }),
        (Some(lambda), Transport::Loopback) => {
            let stubs = stub_population(config, lambda, question, profiles)?;
            let health = HealthResponse {
                model: config.backend_id.clone(),
                adapters: cluster_labels(config.num_clusters),
            };
            let server = BackendServer::start(stubs, health, "127.0.0.1:0")?;
            Ok(ResolvedBackend {
                backend: Box::new(client(server.url())),
                server: Some(server),
            })
        }
        (_, Transport::Remote) | (None, _) => {
            let endpoint = std::env::var(ENDPOINT_ENV)
                .ok()
                .filter(|s| !s.is_empty())
                .or_else(|| params.endpoint.clone())
                .ok_or_else(|| {
                    HarnessError::InvalidConfig(format!(
                        "backend {} needs an endpoint (config or {ENDPOINT_ENV})",
                        config.backend_id
                    ))
                })?;
            Ok(ResolvedBackend {
                backend: Box::new(client(endpoint)),
                server: None,
            })
        }
    }
}

/// Everything a run needs before the first step.
pub struct PreparedRun {
    pub question: Question,
    pub mix: PopulationMix,
    pub profiles: Vec<AgentProfile>,
    pub graph: FollowGraph,
    pub news: Vec<NewsItem>,
}

pub fn prepare_run(config: &RunConfig) -> Result<PreparedRun, HarnessError> {
    config.validate()?;
    let bank = load_bank(config)?;
    let question = find_question(&bank, &config.question_id)
        .ok_or_else(|| HarnessError::InvalidConfig(format!("question {} not in bank", config.question_id)))?
        .clone();
    let matrices = cluster_matrices(config, &bank)?;
    let mix = population_mix(config, &bank, &matrices)?;
    let profiles = build_profiles(config, &question, &matrices, &mix)?;
    let graph = build_graph(config, &profiles)?;
    let news = if config.news_agents == 1 { load_news(config)? } else { Vec::new() };
    Ok(PreparedRun {
        question,
        mix,
        profiles,
        graph,
        news,
    })
}
