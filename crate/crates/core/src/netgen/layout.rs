//! Fruchterman–Reingold spring layout, following the networkx update rule
//! (optimal distance k = 1/sqrt(n), linearly cooled temperature, 0.01 floor
//! on pair distances and displacement lengths).

use rand::Rng;

use super::FollowGraph;
use crate::rng::rng_from_seed;

pub const LAYOUT_ITERATIONS: usize = 50;

const MIN_DISTANCE: f64 = 0.01;

/// Returns one `[x, y]` per node. Edge direction is ignored.
pub fn fruchterman_reingold(graph: &FollowGraph, iterations: usize, seed: u64) -> Vec<[f64; 2]> {
    let n = graph.num_nodes();
    let mut rng = rng_from_seed(seed);
    let mut pos: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    if n <= 1 {
        return pos;
    }

    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(u, v) in graph.edges() {
        neighbors[u].push(v);
        neighbors[v].push(u);
    }
    for list in &mut neighbors {
        list.sort_unstable();
        list.dedup();
    }

    let k = (1.0 / n as f64).sqrt();
    let span = |axis: usize| {
        let (lo, hi) = pos
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[axis]), hi.max(p[axis])));
        hi - lo
    };
    let mut temperature = span(0).max(span(1)) * 0.1;
    let cooling = temperature / (iterations as f64 + 1.0);

    let mut disp = vec![[0.0f64; 2]; n];
    for _ in 0..iterations {
        for (i, d) in disp.iter_mut().enumerate() {
            let (xi, yi) = (pos[i][0], pos[i][1]);
            let (mut dx, mut dy) = (0.0, 0.0);
            for (j, pj) in pos.iter().enumerate() {
                if i == j {
                    continue;
                }
                let (ex, ey) = (xi - pj[0], yi - pj[1]);
                let dist = (ex * ex + ey * ey).sqrt().max(MIN_DISTANCE);
                let repulse = k * k / (dist * dist);
                dx += ex * repulse;
                dy += ey * repulse;
            }
            for &j in &neighbors[i] {
                let (ex, ey) = (xi - pos[j][0], yi - pos[j][1]);
                let dist = (ex * ex + ey * ey).sqrt().max(MIN_DISTANCE);
                let attract = dist / k;
                dx -= ex * attract;
                dy -= ey * attract;
            }
            *d = [dx, dy];
        }
        for (p, d) in pos.iter_mut().zip(&disp) {
            let length = (d[0] * d[0] + d[1] * d[1]).sqrt().max(MIN_DISTANCE);
            p[0] += d[0] * temperature / length;
            p[1] += d[1] * temperature / length;
        }
        temperature -= cooling;
    }
    pos
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let g = FollowGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(fruchterman_reingold(&g, 50, 3), fruchterman_reingold(&g, 50, 3));
        assert_ne!(fruchterman_reingold(&g, 50, 3), fruchterman_reingold(&g, 50, 4));
    }

    #[test]
    fn connected_pairs_end_closer_than_strangers() {
        // Two 5-cliques joined by nothing: intra-clique distances shrink.
        let mut edges = Vec::new();
        for base in [0, 5] {
            for a in 0..5 {
                for b in 0..5 {
                    if a != b {
                        edges.push((base + a, base + b));
                    }
                }
            }
        }
        let g = FollowGraph::from_edges(10, &edges).unwrap();
        let p = fruchterman_reingold(&g, 50, 7);
        let d = |a: usize, b: usize| ((p[a][0] - p[b][0]).powi(2) + (p[a][1] - p[b][1]).powi(2)).sqrt();
        let mut intra = 0.0;
        let mut inter = 0.0;
        for a in 0..5 {
            for b in 0..5 {
                intra += d(a, b) + d(a + 5, b + 5);
                inter += 2.0 * d(a, b + 5);
            }
        }
        assert!(intra < inter);
    }
}
