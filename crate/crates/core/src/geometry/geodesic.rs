use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use rayon::prelude::*;

use super::graph::SurfaceGraph;
use crate::error::{Error, Result};

/// Guard for the cubic all-pairs oracle.
pub const ORACLE_NODE_LIMIT: usize = 2000;

/// Shortest-path lengths from a list of source nodes to every node.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    sources: Vec<usize>,
    node_count: usize,
    distances: Vec<f64>,
}

impl DistanceMatrix {
    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Distances from the `row`-th source.
    pub fn row(&self, row: usize) -> &[f64] {
        &self.distances[row * self.node_count..(row + 1) * self.node_count]
    }

    /// Row index of `source`, if it was one of the sources.
    pub fn row_of(&self, source: usize) -> Option<usize> {
        self.sources.iter().position(|&s| s == source)
    }

    /// Distance between a source node and any node.
    pub fn between(&self, source: usize, node: usize) -> Option<f64> {
        self.row_of(source).map(|r| self.row(r)[node])
    }

    /// CSV with header `source,node,distance`; distances carry 16
    /// significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("source,node,distance\n");
        for (r, &s) in self.sources.iter().enumerate() {
            for (node, d) in self.row(r).iter().enumerate() {
                let _ = writeln!(out, "{s},{node},{d:.15e}");
            }
        }
        out
    }
}

#[derive(Copy, Clone, PartialEq)]
struct Frontier {
    dist: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(graph: &SurfaceGraph, source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; graph.node_count()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Frontier {
        dist: 0.0,
        node: source,
    });
    while let Some(Frontier { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        for &(next, w) in graph.neighbors(node) {
            let nd = d + w;
            if nd < dist[next] {
                dist[next] = nd;
                heap.push(Frontier { dist: nd, node: next });
            }
        }
    }
    dist
}

/// Single-source shortest paths from each source, computed in parallel.
pub fn geodesics_from(graph: &SurfaceGraph, sources: &[usize]) -> Result<DistanceMatrix> {
    let n = graph.node_count();
    if let Some(&bad) = sources.iter().find(|&&s| s >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    let rows: Vec<Vec<f64>> = sources.par_iter().map(|&s| dijkstra(graph, s)).collect();
    if rows.iter().flatten().any(|d| !d.is_finite()) {
        return Err(Error::InvalidArgument(
            "graph is disconnected; some distances are infinite".into(),
        ));
    }
    Ok(DistanceMatrix {
        sources: sources.to_vec(),
        node_count: n,
        distances: rows.concat(),
    })
}

/// Floyd-Warshall over all node pairs. Reference implementation only.
pub fn all_pairs_oracle(graph: &SurfaceGraph) -> Result<DistanceMatrix> {
    let n = graph.node_count();
    if n > ORACLE_NODE_LIMIT {
        return Err(Error::TooLarge {
            nodes: n,
            limit: ORACLE_NODE_LIMIT,
        });
    }
    let mut d = vec![f64::INFINITY; n * n];
    for i in 0..n {
        d[i * n + i] = 0.0;
    }
    for e in graph.edges() {
        let (a, b) = (e.a, e.b);
        if e.weight < d[a * n + b] {
            d[a * n + b] = e.weight;
            d[b * n + a] = e.weight;
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[i * n + k];
            if dik.is_infinite() {
                continue;
            }
            for j in 0..n {
                let cand = dik + d[k * n + j];
                if cand < d[i * n + j] {
                    d[i * n + j] = cand;
                }
            }
        }
    }
    Ok(DistanceMatrix {
        sources: (0..n).collect(),
        node_count: n,
        distances: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_graph() {
        let g = SurfaceGraph::from_weighted_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let d = geodesics_from(&g, &[0]).unwrap();
        assert_eq!(d.row(0), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn triangle_oracle() {
        let g = SurfaceGraph::from_weighted_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let d = all_pairs_oracle(&g).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(d.row(i)[j], if i == j { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn star_oracle() {
        let g = SurfaceGraph::from_weighted_edges(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)]).unwrap();
        let d = all_pairs_oracle(&g).unwrap();
        assert_eq!(d.row(1)[2], 2.0);
        assert_eq!(d.row(3)[1], 2.0);
    }

    #[test]
    fn invalid_source() {
        let g = SurfaceGraph::from_weighted_edges(2, &[(0, 1, 1.0)]).unwrap();
        assert!(matches!(
            geodesics_from(&g, &[2]),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn oracle_guard() {
        let n = ORACLE_NODE_LIMIT + 1;
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i, 1.0)).collect();
        let g = SurfaceGraph::from_weighted_edges(n, &edges).unwrap();
        assert!(matches!(all_pairs_oracle(&g), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn csv_layout() {
        let g = SurfaceGraph::from_weighted_edges(2, &[(0, 1, 0.5)]).unwrap();
        let csv = geodesics_from(&g, &[1]).unwrap().to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "source,node,distance");
        assert_eq!(lines[1], "1,0,5.000000000000000e-1");
        assert_eq!(lines[2], "1,1,0.000000000000000e0");
    }
}
