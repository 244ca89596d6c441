//! Follower-graph generation and agent placement.
//!
//! Edges point from follower to followee. A node hosts at most one agent;
//! the node chosen for the news agent loses its regular occupant.

mod io;
mod layout;

use std::cmp::Ordering;
use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::AgentProfile;
use crate::rng::rng_from_seed;

pub use io::{read_edge_list, write_edge_list, EdgeListError};
pub use layout::{fruchterman_reingold, LAYOUT_ITERATIONS};

/// Fraction of nodes the largest weakly connected component must reach
/// before an isolation warning is attached to a generated graph.
pub const CONNECTED_FRACTION: f64 = 0.9;

#[derive(Debug, Error, PartialEq)]
pub enum NetgenError {
    #[error("invalid graph spec: {0}")]
    InvalidSpec(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphKind {
    /// Directed Erdős–Rényi: every ordered pair is an edge independently.
    RandomEr { edge_prob: f64 },
    /// Holme–Kim powerlaw-cluster graph, each undirected edge doubled.
    PowerlawCluster { new_edges: usize, triangle_prob: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    #[serde(flatten)]
    pub kind: GraphKind,
    pub num_nodes: usize,
    pub seed: u64,
}

impl GraphSpec {
    pub fn validate(&self) -> Result<(), NetgenError> {
        if self.num_nodes < 2 {
            return Err(NetgenError::InvalidSpec(format!(
                "need at least 2 nodes, got {}",
                self.num_nodes
            )));
        }
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        match self.kind {
            GraphKind::RandomEr { edge_prob } if !prob_ok(edge_prob) => Err(
                NetgenError::InvalidSpec(format!("edge probability {edge_prob} outside [0,1]")),
            ),
            GraphKind::PowerlawCluster { triangle_prob, .. } if !prob_ok(triangle_prob) => {
                Err(NetgenError::InvalidSpec(format!(
                    "triangle probability {triangle_prob} outside [0,1]"
                )))
            }
            GraphKind::PowerlawCluster { new_edges, .. }
                if new_edges < 1 || new_edges >= self.num_nodes =>
            {
                Err(NetgenError::InvalidSpec(format!(
                    "powerlaw-cluster needs 1 <= m < n, got m={new_edges} n={}",
                    self.num_nodes
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Directed follower graph plus the node → agent placement.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowGraph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    followees: Vec<Vec<usize>>,
    followers: Vec<Vec<usize>>,
    /// `assignment[node]` is the agent living there, `None` when unplaced
    /// or taken over by the news agent.
    pub assignment: Vec<Option<usize>>,
    pub news_node: Option<usize>,
    /// Agent evicted from the news node, if any.
    pub displaced_agent: Option<usize>,
    pub warnings: Vec<String>,
}

impl FollowGraph {
    /// Builds a graph from `follower followee` pairs. Edges are stored sorted.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self, NetgenError> {
        let mut sorted = edges.to_vec();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(NetgenError::InvalidInput(format!(
                    "duplicate edge {} -> {}",
                    w[0].0, w[0].1
                )));
            }
        }
        let mut followees = vec![Vec::new(); num_nodes];
        let mut followers = vec![Vec::new(); num_nodes];
        for &(u, v) in &sorted {
            if u == v {
                return Err(NetgenError::InvalidInput(format!("self-loop on node {u}")));
            }
            if u >= num_nodes || v >= num_nodes {
                return Err(NetgenError::InvalidInput(format!(
                    "edge {u} -> {v} outside 0..{num_nodes}"
                )));
            }
            followees[u].push(v);
            followers[v].push(u);
        }
        Ok(FollowGraph {
            num_nodes,
            edges: sorted,
            followees,
            followers,
            assignment: vec![None; num_nodes],
            news_node: None,
            displaced_agent: None,
            warnings: Vec::new(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn followees(&self, node: usize) -> &[usize] {
        &self.followees[node]
    }

    pub fn followers(&self, node: usize) -> &[usize] {
        &self.followers[node]
    }

    pub fn in_degree(&self, node: usize) -> usize {
        self.followers[node].len()
    }

    /// Places agent `i` on node `i`.
    pub fn with_identity_assignment(mut self) -> Self {
        self.assignment = (0..self.num_nodes).map(Some).collect();
        self
    }

    /// Inverse of `assignment`: agent id → node. Agents are indexed densely.
    pub fn node_of_agent(&self) -> Vec<Option<usize>> {
        let max_agent = self
            .assignment
            .iter()
            .flatten()
            .copied()
            .max()
            .map_or(0, |m| m + 1);
        let mut inverse = vec![None; max_agent.max(self.displaced_agent.map_or(0, |a| a + 1))];
        for (node, agent) in self.assignment.iter().enumerate() {
            if let Some(a) = agent {
                inverse[*a] = Some(node);
            }
        }
        inverse
    }

    /// Agents followed by the agent at `node` (news node excluded).
    pub fn followee_agents(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.followees[node]
            .iter()
            .filter_map(move |&v| self.assignment[v])
    }

    /// Size of the largest weakly connected component.
    pub fn largest_weak_component(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.num_nodes).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(u, v) in &self.edges {
            let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
            if ru != rv {
                parent[ru] = rv;
            }
        }
        let mut sizes = vec![0usize; self.num_nodes];
        for x in 0..self.num_nodes {
            let r = find(&mut parent, x);
            sizes[r] += 1;
        }
        sizes.into_iter().max().unwrap_or(0)
    }
}

/// Generates the follower graph described by `spec`. Pure in `spec`.
pub fn generate_graph(spec: &GraphSpec) -> Result<FollowGraph, NetgenError> {
    spec.validate()?;
    let n = spec.num_nodes;
    let mut rng = rng_from_seed(spec.seed);
    let edges = match spec.kind {
        GraphKind::RandomEr { edge_prob } => {
            let mut edges = Vec::new();
            for u in 0..n {
                for v in 0..n {
                    if u != v && rng.random::<f64>() < edge_prob {
                        edges.push((u, v));
                    }
                }
            }
            edges
        }
        GraphKind::PowerlawCluster {
            new_edges,
            triangle_prob,
        } => powerlaw_cluster_edges(n, new_edges, triangle_prob, &mut rng),
    };
    let mut graph = FollowGraph::from_edges(n, &edges)?;
    if graph.edges.is_empty() {
        graph.warnings.push("generated graph has no edges".to_string());
    }
    let giant = graph.largest_weak_component();
    if (giant as f64) < CONNECTED_FRACTION * n as f64 {
        let msg = format!("largest weakly connected component covers {giant} of {n} nodes");
        log::warn!("{msg}");
        graph.warnings.push(msg);
    }
    Ok(graph)
}

/// Holme–Kim growth: each new node attaches `m` edges by preferential
/// attachment, each follow-up edge closing a triangle with probability `pt`.
fn powerlaw_cluster_edges<R: Rng>(n: usize, m: usize, pt: f64, rng: &mut R) -> Vec<(usize, usize)> {
    struct Builder {
        adj: Vec<Vec<usize>>,
        present: HashSet<(usize, usize)>,
        edges: Vec<(usize, usize)>,
    }
    impl Builder {
        /// No-op when the edge already exists.
        fn add(&mut self, a: usize, b: usize) {
            if self.has(a, b) {
                return;
            }
            self.adj[a].push(b);
            self.adj[b].push(a);
            self.present.insert((a.min(b), a.max(b)));
            self.edges.push((a, b));
        }
        fn has(&self, a: usize, b: usize) -> bool {
            self.present.contains(&(a.min(b), a.max(b)))
        }
    }
    let mut g = Builder {
        adj: vec![Vec::new(); n],
        present: HashSet::new(),
        edges: Vec::new(),
    };
    // Degree-proportional urn.
    let mut repeated: Vec<usize> = (0..m).collect();
    for source in m..n {
        let mut targets: Vec<usize> = Vec::with_capacity(m);
        while targets.len() < m {
            let x = *repeated.choose(rng).expect("urn is never empty");
            if !targets.contains(&x) {
                targets.push(x);
            }
        }
        let mut target = targets.pop().expect("m >= 1");
        g.add(source, target);
        repeated.push(target);
        let mut count = 1;
        while count < m {
            if rng.random::<f64>() < pt {
                let neighborhood: Vec<usize> = g.adj[target]
                    .iter()
                    .copied()
                    .filter(|&nb| nb != source && !g.has(source, nb))
                    .collect();
                if let Some(&nb) = neighborhood.choose(rng) {
                    g.add(source, nb);
                    repeated.push(nb);
                    count += 1;
                    continue;
                }
            }
            target = targets.pop().expect("enough preferential targets remain");
            g.add(source, target);
            repeated.push(target);
            count += 1;
        }
        repeated.extend(std::iter::repeat_n(source, m));
    }
    g.edges
        .into_iter()
        .flat_map(|(a, b)| [(a, b), (b, a)])
        .collect()
}

fn check_population(graph: &FollowGraph, agents: usize) -> Result<(), NetgenError> {
    if agents != graph.num_nodes {
        return Err(NetgenError::InvalidInput(format!(
            "{agents} agents for {} nodes",
            graph.num_nodes
        )));
    }
    Ok(())
}

/// Expected option index under an agent's baseline distribution.
pub fn expected_opinion(distribution: &[f64]) -> f64 {
    distribution
        .iter()
        .enumerate()
        .map(|(i, p)| i as f64 * p)
        .sum()
}

/// Homophily placement: lay the graph out in 2-D, order nodes left to
/// right, order agents by expected opinion on `question_id`, and zip.
pub fn place_agents_homophily(
    graph: &FollowGraph,
    agents: &[AgentProfile],
    question_id: &str,
    layout_seed: u64,
) -> Result<FollowGraph, NetgenError> {
    check_population(graph, agents.len())?;
    let mut scored = Vec::with_capacity(agents.len());
    for agent in agents {
        let dist = agent.baseline_opinions.get(question_id).ok_or_else(|| {
            NetgenError::InvalidInput(format!(
                "agent {} has no baseline for question {question_id}",
                agent.agent_id
            ))
        })?;
        scored.push((expected_opinion(dist), agent.cluster_id, agent.agent_id));
    }
    // Agents of one cluster share a baseline, so the cluster key keeps them contiguous.
    scored.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let positions = fruchterman_reingold(graph, LAYOUT_ITERATIONS, layout_seed);
    let mut nodes: Vec<usize> = (0..graph.num_nodes).collect();
    nodes.sort_by(|&a, &b| {
        positions[a][0]
            .partial_cmp(&positions[b][0])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut placed = graph.clone();
    placed.assignment = vec![None; graph.num_nodes];
    for (node, (_, _, agent_id)) in nodes.into_iter().zip(scored) {
        placed.assignment[node] = Some(agent_id);
    }
    Ok(placed)
}

/// Uniformly random bijection between agents and nodes.
pub fn place_agents_random(
    graph: &FollowGraph,
    agents: &[AgentProfile],
    seed: u64,
) -> Result<FollowGraph, NetgenError> {
    check_population(graph, agents.len())?;
    let mut ids: Vec<usize> = agents.iter().map(|a| a.agent_id).collect();
    let mut rng = rng_from_seed(seed);
    rand::seq::SliceRandom::shuffle(ids.as_mut_slice(), &mut rng);
    let mut placed = graph.clone();
    placed.assignment = ids.into_iter().map(Some).collect();
    Ok(placed)
}

/// Marks the most-followed node (lowest id on ties) as the news node and
/// evicts its occupant.
pub fn place_news_agent(graph: &FollowGraph) -> FollowGraph {
    let mut placed = graph.clone();
    if graph.num_nodes == 0 {
        return placed;
    }
    let news = (0..graph.num_nodes)
        .max_by(|&a, &b| graph.in_degree(a).cmp(&graph.in_degree(b)).then(b.cmp(&a)))
        .expect("graph is nonempty");
    placed.displaced_agent = placed.assignment[news].take();
    placed.news_node = Some(news);
    placed
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn profile(id: usize, p1: f64) -> AgentProfile {
        let mut baseline = BTreeMap::new();
        baseline.insert("q".to_string(), vec![1.0 - p1, p1]);
        AgentProfile {
            agent_id: id,
            cluster_id: 0,
            display_name: format!("a{id}"),
            persona: String::new(),
            baseline_opinions: baseline,
        }
    }

    #[test]
    fn complete_er_at_p_one() {
        let g = generate_graph(&GraphSpec {
            kind: GraphKind::RandomEr { edge_prob: 1.0 },
            num_nodes: 4,
            seed: 99,
        })
        .unwrap();
        assert_eq!(g.edges().len(), 12);
    }

    #[test]
    fn rejects_tiny_and_bad_specs() {
        let bad = |kind, n| generate_graph(&GraphSpec { kind, num_nodes: n, seed: 0 });
        assert!(matches!(
            bad(GraphKind::RandomEr { edge_prob: 0.5 }, 1),
            Err(NetgenError::InvalidSpec(_))
        ));
        assert!(bad(GraphKind::RandomEr { edge_prob: 1.5 }, 10).is_err());
        assert!(bad(GraphKind::PowerlawCluster { new_edges: 0, triangle_prob: 0.1 }, 10).is_err());
        assert!(bad(GraphKind::PowerlawCluster { new_edges: 10, triangle_prob: 0.1 }, 10).is_err());
    }

    #[test]
    fn empty_er_warns_without_failing() {
        let g = generate_graph(&GraphSpec {
            kind: GraphKind::RandomEr { edge_prob: 0.0 },
            num_nodes: 5,
            seed: 1,
        })
        .unwrap();
        assert!(g.edges().is_empty());
        assert!(!g.warnings.is_empty());
    }

    #[test]
    fn from_edges_rejects_loops_and_duplicates() {
        assert!(FollowGraph::from_edges(3, &[(1, 1)]).is_err());
        assert!(FollowGraph::from_edges(3, &[(0, 1), (0, 1)]).is_err());
        assert!(FollowGraph::from_edges(3, &[(0, 3)]).is_err());
    }

    #[test]
    fn news_goes_to_star_center() {
        let edges: Vec<_> = (1..5).map(|u| (u, 0)).collect();
        let g = FollowGraph::from_edges(5, &edges).unwrap().with_identity_assignment();
        let placed = place_news_agent(&g);
        assert_eq!(placed.news_node, Some(0));
        assert_eq!(placed.displaced_agent, Some(0));
        assert_eq!(placed.assignment[0], None);
    }

    #[test]
    fn news_tie_breaks_to_lowest_id() {
        // Nodes 2 and 7 each have three followers.
        let edges = vec![(0, 2), (1, 2), (3, 2), (4, 7), (5, 7), (6, 7), (8, 1)];
        let g = FollowGraph::from_edges(9, &edges).unwrap();
        assert_eq!(place_news_agent(&g).news_node, Some(2));
    }

    #[test]
    fn random_placement_single_agent() {
        let g = FollowGraph::from_edges(1, &[]).unwrap();
        let placed = place_agents_random(&g, &[profile(0, 0.3)], 5).unwrap();
        assert_eq!(placed.assignment, vec![Some(0)]);
    }

    #[test]
    fn placement_count_mismatch() {
        let g = FollowGraph::from_edges(3, &[(0, 1)]).unwrap();
        let agents = vec![profile(0, 0.1), profile(1, 0.2)];
        assert!(matches!(
            place_agents_random(&g, &agents, 1),
            Err(NetgenError::InvalidInput(_))
        ));
        assert!(place_agents_homophily(&g, &agents, "q", 1).is_err());
    }

    #[test]
    fn path_middle_node_gets_middle_score() {
        let g = FollowGraph::from_edges(3, &[(0, 1), (1, 0), (1, 2), (2, 1)]).unwrap();
        // Agent ids deliberately out of score order.
        let agents = vec![profile(0, 1.0), profile(1, 0.0), profile(2, 0.5)];
        let placed = place_agents_homophily(&g, &agents, "q", 11).unwrap();
        let pos = fruchterman_reingold(&g, LAYOUT_ITERATIONS, 11);
        let mut by_x: Vec<usize> = (0..3).collect();
        by_x.sort_by(|&a, &b| pos[a][0].total_cmp(&pos[b][0]));
        assert_eq!(placed.assignment[by_x[0]], Some(1));
        assert_eq!(placed.assignment[by_x[1]], Some(2));
        assert_eq!(placed.assignment[by_x[2]], Some(0));
        // The layout itself keeps the path's middle node between its ends.
        assert_eq!(by_x[1], 1);
    }

    #[test]
    fn identical_opinions_still_place_everyone() {
        let g = generate_graph(&GraphSpec {
            kind: GraphKind::PowerlawCluster { new_edges: 2, triangle_prob: 0.3 },
            num_nodes: 20,
            seed: 4,
        })
        .unwrap();
        let agents: Vec<_> = (0..20).map(|i| profile(i, 0.5)).collect();
        let placed = place_agents_homophily(&g, &agents, "q", 4).unwrap();
        let mut seen: Vec<usize> = placed.assignment.iter().map(|a| a.unwrap()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..20).collect::<Vec<_>>());
        assert_eq!(placed.edges(), g.edges());
    }
}
