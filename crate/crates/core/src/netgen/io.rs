//! Plain-text edge lists: a `#nodes=<n> news=<id|none>` header followed by
//! one `follower followee` pair per line.

use std::io::{BufRead, Write};

use thiserror::Error;

use super::FollowGraph;

#[derive(Debug, Error)]
pub enum EdgeListError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub fn write_edge_list<W: Write>(graph: &FollowGraph, mut out: W) -> std::io::Result<()> {
    let news = graph
        .news_node
        .map_or_else(|| "none".to_string(), |n| n.to_string());
    writeln!(out, "#nodes={} news={}", graph.num_nodes(), news)?;
    for (u, v) in graph.edges() {
        writeln!(out, "{u} {v}")?;
    }
    Ok(())
}

/// Reads a graph back. Node assignment is not part of the format, so the
/// returned graph has none.
pub fn read_edge_list<R: BufRead>(input: R) -> Result<FollowGraph, EdgeListError> {
    let mut lines = input.lines().enumerate();
    let (_, header) = lines.next().ok_or(EdgeListError::Parse {
        line: 1,
        msg: "missing header".into(),
    })?;
    let header = header?;
    let bad_header = || EdgeListError::Parse {
        line: 1,
        msg: format!("malformed header {header:?}"),
    };
    let rest = header.strip_prefix("#nodes=").ok_or_else(bad_header)?;
    let (nodes, news) = rest.split_once(" news=").ok_or_else(bad_header)?;
    let num_nodes: usize = nodes.trim().parse().map_err(|_| bad_header())?;
    let news = match news.trim() {
        "none" => None,
        id => Some(id.parse::<usize>().map_err(|_| bad_header())?),
    };

    let mut edges = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: String| EdgeListError::Parse { line: idx + 1, msg };
        let mut parts = line.split_whitespace();
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(format!("expected two node ids, got {line:?}")));
        };
        let a = a.parse().map_err(|_| parse_err(format!("bad node id {a:?}")))?;
        let b = b.parse().map_err(|_| parse_err(format!("bad node id {b:?}")))?;
        edges.push((a, b));
    }
    let mut graph = FollowGraph::from_edges(num_nodes, &edges).map_err(|e| EdgeListError::Parse {
        line: 0,
        msg: e.to_string(),
    })?;
    if let Some(n) = news {
        if n >= num_nodes {
            return Err(EdgeListError::Parse {
                line: 1,
                msg: format!("news node {n} outside graph"),
            });
        }
    }
    graph.news_node = news;
    Ok(graph)
}
