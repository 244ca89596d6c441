//! Opinion-dynamics metrics over survey snapshots and the follower graph.
//!
//! Every metric is a ratio of integer counts divided once at the end, except
//! local agreement, which averages per-agent fractions in ascending agent
//! order. Abstaining agents are left out of every count. Undefined values
//! come back as `None` and are skipped by aggregates.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::netgen::FollowGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Answer {
    Option(usize),
    Abstain,
}

impl Answer {
    pub fn option(self) -> Option<usize> {
        match self {
            Answer::Option(i) => Some(i),
            Answer::Abstain => None,
        }
    }
}

impl Serialize for Answer {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Answer::Option(i) => s.serialize_u64(*i as u64),
            Answer::Abstain => s.serialize_str("abstain"),
        }
    }
}

impl<'de> Deserialize<'de> for Answer {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct AnswerVisitor;
        impl Visitor<'_> for AnswerVisitor {
            type Value = Answer;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an option index or \"abstain\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Answer, E> {
                Ok(Answer::Option(v as usize))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Answer, E> {
                usize::try_from(v)
                    .map(Answer::Option)
                    .map_err(|_| E::custom("negative option index"))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Answer, E> {
                if v == "abstain" {
                    Ok(Answer::Abstain)
                } else {
                    Err(E::custom(format!("unexpected answer {v:?}")))
                }
            }
        }
        d.deserialize_any(AnswerVisitor)
    }
}

/// One survey round: agent id → chosen option or abstain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveySnapshot {
    pub step: u64,
    pub question_id: String,
    pub answers: BTreeMap<usize, Answer>,
}

impl SurveySnapshot {
    pub fn answered(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.answers
            .iter()
            .filter_map(|(&a, ans)| ans.option().map(|o| (a, o)))
    }

    pub fn get(&self, agent: usize) -> Option<usize> {
        self.answers.get(&agent).and_then(|a| a.option())
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn option_counts<I: IntoIterator<Item = usize>>(options: I) -> Vec<u64> {
    let mut counts = Vec::new();
    for o in options {
        if counts.len() <= o {
            counts.resize(o + 1, 0);
        }
        counts[o] += 1;
    }
    counts
}

/// The option with the strictly largest count, if there is one.
fn unique_plurality(counts: &[u64]) -> Option<usize> {
    let max = *counts.iter().max()?;
    if max == 0 {
        return None;
    }
    let mut winners = counts.iter().enumerate().filter(|(_, &c)| c == max);
    let first = winners.next().map(|(i, _)| i);
    if winners.next().is_some() {
        None
    } else {
        first
    }
}

/// Follow edges between placed agents, as (follower agent, followee agent).
pub fn agent_edges(graph: &FollowGraph) -> Vec<(usize, usize)> {
    graph
        .edges()
        .iter()
        .filter_map(|&(u, v)| Some((graph.assignment[u]?, graph.assignment[v]?)))
        .collect()
}

/// Agent id → followee agent ids, in edge order.
pub fn followee_map(graph: &FollowGraph) -> BTreeMap<usize, Vec<usize>> {
    let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for agent in graph.assignment.iter().flatten() {
        map.entry(*agent).or_default();
    }
    for (a, b) in agent_edges(graph) {
        map.entry(a).or_default().push(b);
    }
    map
}

/// Share of answering agents holding the most common option.
pub fn consensus(snapshot: &SurveySnapshot) -> Option<f64> {
    let counts = option_counts(snapshot.answered().map(|(_, o)| o));
    let total: u64 = counts.iter().sum();
    ratio(counts.iter().copied().max().unwrap_or(0), total)
}

pub fn net_consensus_change(snapshots: &[SurveySnapshot]) -> Option<f64> {
    let first = consensus(snapshots.first()?)?;
    let last = consensus(snapshots.last()?)?;
    Some(last - first)
}

fn both_answered<'a>(
    prev: &'a SurveySnapshot,
    next: &'a SurveySnapshot,
) -> impl Iterator<Item = (usize, usize, usize)> + 'a {
    prev.answered()
        .filter_map(move |(a, p)| next.get(a).map(|n| (a, p, n)))
}

pub fn opinion_shift_rate(prev: &SurveySnapshot, next: &SurveySnapshot) -> Option<f64> {
    let (mut changed, mut total) = (0, 0);
    for (_, p, n) in both_answered(prev, next) {
        total += 1;
        changed += u64::from(p != n);
    }
    ratio(changed, total)
}

/// Among agents who changed, the share moving to the previous snapshot's
/// unique plurality option. Undefined with no changers or a tied plurality.
pub fn majority_follow_rate(prev: &SurveySnapshot, next: &SurveySnapshot) -> Option<f64> {
    let majority = unique_plurality(&option_counts(prev.answered().map(|(_, o)| o)))?;
    let (mut followed, mut changers) = (0, 0);
    for (_, p, n) in both_answered(prev, next) {
        if p != n {
            changers += 1;
            followed += u64::from(n == majority);
        }
    }
    ratio(followed, changers)
}

/// Share of agents answering both rounds who changed to the unique plurality
/// of their followees' previous answers.
pub fn neighbor_alignment_shift_rate(
    prev: &SurveySnapshot,
    next: &SurveySnapshot,
    graph: &FollowGraph,
) -> Option<f64> {
    let followees = followee_map(graph);
    let (mut aligned, mut total) = (0, 0);
    for (agent, p, n) in both_answered(prev, next) {
        total += 1;
        if p == n {
            continue;
        }
        let neighbours = followees.get(&agent).map(Vec::as_slice).unwrap_or(&[]);
        let counts = option_counts(neighbours.iter().filter_map(|&b| prev.get(b)));
        if unique_plurality(&counts) == Some(n) {
            aligned += 1;
        }
    }
    ratio(aligned, total)
}

/// Newman's categorical assortativity from a table of edge counts,
/// `counts[x][y]` = edges from category x to category y. Computed as
/// `(T·E − S) / (E² − S)` with `T` the diagonal sum, `E` the total and
/// `S = Σ rowᵢ·colᵢ`, so the only rounding is the final division.
pub fn assortativity_from_counts(counts: &[Vec<u64>]) -> Option<f64> {
    let k = counts.len();
    let mut rows = vec![0i128; k];
    let mut cols = vec![0i128; k];
    let mut trace = 0i128;
    for (x, row) in counts.iter().enumerate() {
        for (y, &c) in row.iter().enumerate() {
            rows[x] += c as i128;
            cols[y] += c as i128;
            if x == y {
                trace += c as i128;
            }
        }
    }
    let total: i128 = rows.iter().sum();
    let s: i128 = rows.iter().zip(&cols).map(|(a, b)| a * b).sum();
    let den = total * total - s;
    if total == 0 || den == 0 {
        return None;
    }
    Some((trace * total - s) as f64 / den as f64)
}

/// Categorical assortativity of `category` (agent → label) over follow edges
/// whose endpoints both carry a label.
pub fn categorical_assortativity<F>(graph: &FollowGraph, category: F) -> Option<f64>
where
    F: Fn(usize) -> Option<usize>,
{
    let pairs: Vec<(usize, usize)> = agent_edges(graph)
        .into_iter()
        .filter_map(|(a, b)| Some((category(a)?, category(b)?)))
        .collect();
    let k = pairs.iter().map(|&(x, y)| x.max(y) + 1).max().unwrap_or(0);
    let mut counts = vec![vec![0u64; k]; k];
    for (x, y) in pairs {
        counts[x][y] += 1;
    }
    assortativity_from_counts(&counts)
}

pub fn opinion_assortativity(snapshot: &SurveySnapshot, graph: &FollowGraph) -> Option<f64> {
    categorical_assortativity(graph, |a| snapshot.get(a))
}

/// Mean over answering agents with at least one answering followee of the
/// share of those followees giving the same answer.
pub fn local_agreement(snapshot: &SurveySnapshot, graph: &FollowGraph) -> Option<f64> {
    let followees = followee_map(graph);
    let mut sum = 0.0;
    let mut agents = 0u64;
    for (agent, option) in snapshot.answered() {
        let Some(neighbours) = followees.get(&agent) else {
            continue;
        };
        let (mut same, mut degree) = (0u64, 0u64);
        for o in neighbours.iter().filter_map(|&b| snapshot.get(b)) {
            degree += 1;
            same += u64::from(o == option);
        }
        if degree > 0 {
            sum += same as f64 / degree as f64;
            agents += 1;
        }
    }
    (agents > 0).then(|| sum / agents as f64)
}

/// Share of follow edges between answering agents whose answers differ.
pub fn cross_cutting_fraction(snapshot: &SurveySnapshot, graph: &FollowGraph) -> Option<f64> {
    let (mut cut, mut total) = (0, 0);
    for (a, b) in agent_edges(graph) {
        if let (Some(x), Some(y)) = (snapshot.get(a), snapshot.get(b)) {
            total += 1;
            cut += u64::from(x != y);
        }
    }
    ratio(cut, total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMetrics {
    pub step: u64,
    pub consensus: Option<f64>,
    pub assortativity: Option<f64>,
    pub local_agreement: Option<f64>,
    pub cross_cutting_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMetrics {
    pub from_step: u64,
    pub to_step: u64,
    pub osr: Option<f64>,
    pub mfr: Option<f64>,
    pub nasr: Option<f64>,
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub question_id: String,
    pub snapshots: Vec<SnapshotMetrics>,
    pub transitions: Vec<TransitionMetrics>,
    pub initial_consensus: Option<f64>,
    pub final_consensus: Option<f64>,
    pub ncc: Option<f64>,
    pub delta_assortativity: Option<f64>,
    pub mean_osr: Option<f64>,
    pub mean_mfr: Option<f64>,
    pub mean_nasr: Option<f64>,
    /// Filled in externally; never computed here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bert_accuracy: Option<f64>,
}

impl MetricsReport {
    /// Scalar per-run value by column name, as used in aggregate tables.
    pub fn scalar(&self, name: &str) -> Option<f64> {
        match name {
            "initial_consensus" => self.initial_consensus,
            "final_consensus" => self.final_consensus,
            "ncc" => self.ncc,
            "delta_assortativity" => self.delta_assortativity,
            "mean_osr" => self.mean_osr,
            "mean_mfr" => self.mean_mfr,
            "mean_nasr" => self.mean_nasr,
            "bert_accuracy" => self.bert_accuracy,
            _ => None,
        }
    }
}

pub const SCALAR_METRICS: [&str; 7] = [
    "initial_consensus",
    "final_consensus",
    "ncc",
    "delta_assortativity",
    "mean_osr",
    "mean_mfr",
    "mean_nasr",
];

fn mean_defined<I: IntoIterator<Item = Option<f64>>>(values: I) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn compute_report(snapshots: &[SurveySnapshot], graph: &FollowGraph) -> MetricsReport {
    let per_snapshot: Vec<SnapshotMetrics> = snapshots
        .iter()
        .map(|s| SnapshotMetrics {
            step: s.step,
            consensus: consensus(s),
            assortativity: opinion_assortativity(s, graph),
            local_agreement: local_agreement(s, graph),
            cross_cutting_fraction: cross_cutting_fraction(s, graph),
        })
        .collect();
    let transitions: Vec<TransitionMetrics> = snapshots
        .windows(2)
        .map(|w| TransitionMetrics {
            from_step: w[0].step,
            to_step: w[1].step,
            osr: opinion_shift_rate(&w[0], &w[1]),
            mfr: majority_follow_rate(&w[0], &w[1]),
            nasr: neighbor_alignment_shift_rate(&w[0], &w[1], graph),
        })
        .collect();
    let first = per_snapshot.first();
    let last = per_snapshot.last();
    let delta = |f: fn(&SnapshotMetrics) -> Option<f64>| Some(f(last?)? - f(first?)?);
    MetricsReport {
        question_id: snapshots
            .first()
            .map(|s| s.question_id.clone())
            .unwrap_or_default(),
        initial_consensus: first.and_then(|m| m.consensus),
        final_consensus: last.and_then(|m| m.consensus),
        ncc: delta(|m| m.consensus),
        delta_assortativity: delta(|m| m.assortativity),
        mean_osr: mean_defined(transitions.iter().map(|t| t.osr)),
        mean_mfr: mean_defined(transitions.iter().map(|t| t.mfr)),
        mean_nasr: mean_defined(transitions.iter().map(|t| t.nasr)),
        snapshots: per_snapshot,
        transitions,
        bert_accuracy: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(answers: &[Option<usize>]) -> SurveySnapshot {
        SurveySnapshot {
            step: 0,
            question_id: "q".into(),
            answers: answers
                .iter()
                .enumerate()
                .map(|(i, a)| (i, a.map_or(Answer::Abstain, Answer::Option)))
                .collect(),
        }
    }

    fn graph(n: usize, edges: &[(usize, usize)]) -> FollowGraph {
        FollowGraph::from_edges(n, edges).unwrap().with_identity_assignment()
    }

    #[test]
    fn consensus_examples() {
        assert_eq!(consensus(&snap(&[Some(0), Some(0), Some(0), Some(1)])), Some(0.75));
        assert_eq!(consensus(&snap(&[Some(1); 3])), Some(1.0));
        assert_eq!(consensus(&snap(&[Some(0), Some(0), Some(1), Some(1)])), Some(0.5));
        assert_eq!(consensus(&snap(&[None, Some(1)])), Some(1.0));
        assert_eq!(consensus(&snap(&[None])), None);
    }

    #[test]
    fn ncc_examples() {
        let a = snap(&[Some(0); 4]);
        let b = snap(&[Some(0), Some(0), Some(0), Some(1)]);
        assert_eq!(net_consensus_change(&[a.clone(), b]), Some(-0.25));
        assert_eq!(net_consensus_change(&[a.clone(), a]), Some(0.0));
    }

    #[test]
    fn shift_and_follow_rates() {
        let prev = snap(&[Some(0), Some(0), Some(0), Some(1)]);
        let next = snap(&[Some(0), Some(0), Some(0), Some(0)]);
        assert_eq!(opinion_shift_rate(&prev, &prev), Some(0.0));
        assert_eq!(opinion_shift_rate(&prev, &next), Some(0.25));

        let prev = snap(&[Some(0), Some(0), Some(0), Some(1), Some(1)]);
        let next = snap(&[Some(0), Some(1), Some(0), Some(0), Some(1)]);
        assert_eq!(majority_follow_rate(&prev, &next), Some(0.5));
        let tied = snap(&[Some(0), Some(1)]);
        assert_eq!(majority_follow_rate(&tied, &snap(&[Some(1), Some(0)])), None);
        assert_eq!(majority_follow_rate(&prev, &prev), None);
    }

    #[test]
    fn nasr_examples() {
        let g = graph(3, &[(0, 1), (1, 2)]);
        let prev = snap(&[Some(0), Some(1), Some(1)]);
        assert_eq!(neighbor_alignment_shift_rate(&prev, &prev, &g), Some(0.0));
        let next = snap(&[Some(1), Some(1), Some(1)]);
        assert_eq!(neighbor_alignment_shift_rate(&prev, &next, &g), Some(1.0 / 3.0));
    }

    #[test]
    fn assortativity_examples() {
        let within = graph(4, &[(0, 1), (1, 0), (2, 3), (3, 2)]);
        let s = snap(&[Some(0), Some(0), Some(1), Some(1)]);
        assert_eq!(opinion_assortativity(&s, &within), Some(1.0));
        let across = graph(4, &[(0, 2), (2, 0), (1, 3), (3, 1)]);
        assert_eq!(opinion_assortativity(&s, &across), Some(-1.0));
        assert_eq!(opinion_assortativity(&snap(&[Some(0); 4]), &within), None);
    }

    #[test]
    fn local_and_cross_cutting() {
        let pair = graph(2, &[(0, 1), (1, 0)]);
        let s = snap(&[Some(0), Some(1)]);
        assert_eq!(local_agreement(&s, &pair), Some(0.0));
        assert_eq!(cross_cutting_fraction(&s, &pair), Some(1.0));
        let same = snap(&[Some(1), Some(1)]);
        assert_eq!(local_agreement(&same, &pair), Some(1.0));
        assert_eq!(cross_cutting_fraction(&same, &pair), Some(0.0));
    }

    #[test]
    fn answers_serialize_as_index_or_abstain() {
        let s = snap(&[Some(1), None]);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"step":0,"question_id":"q","answers":{"0":1,"1":"abstain"}}"#);
        assert_eq!(serde_json::from_str::<SurveySnapshot>(&json).unwrap(), s);
    }

    #[test]
    fn report_round_trips_and_omits_missing_bert() {
        let g = graph(2, &[(0, 1)]);
        let mut b = snap(&[Some(1), Some(1)]);
        b.step = 5;
        let report = compute_report(&[snap(&[Some(0), Some(1)]), b], &g);
        assert_eq!(report.ncc, Some(0.5));
        assert_eq!(report.mean_osr, Some(0.5));
        let json = serde_json::to_string(&report).unwrap();
        assert!(!json.contains("bert_accuracy"));
        assert_eq!(serde_json::from_str::<MetricsReport>(&json).unwrap(), report);
    }
}
