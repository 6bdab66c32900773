use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Vector3;
use rayon::prelude::*;

use super::mesh::Mesh;
use super::sampling::PointCloud;
use crate::error::{Error, Result};

/// Edge weights are rounded up to a multiple of this quantum. Path sums of
/// quantized weights are exact in f64 while they stay below 2^20, so every
/// shortest-path algorithm over the same graph returns bit-identical lengths.
pub const WEIGHT_QUANTUM: f64 = 1.0 / 4_294_967_296.0;

pub const DEFAULT_NEIGHBORS: usize = 8;

pub fn quantize_weight(w: f64) -> f64 {
    ((w / WEIGHT_QUANTUM).ceil() * WEIGHT_QUANTUM).max(WEIGHT_QUANTUM)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Undirected weighted graph used as the geodesic carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
    edges: Vec<Edge>,
    bridges: Vec<Edge>,
}

impl SurfaceGraph {
    /// Builds a graph from explicit edges. Duplicate edges keep the lighter
    /// weight. The graph must already be connected.
    pub fn from_weighted_edges(node_count: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidArgument("graph has no nodes".into()));
        }
        let mut unique = BTreeMap::new();
        for &(a, b, w) in edges {
            for idx in [a, b] {
                if idx >= node_count {
                    return Err(Error::IndexOutOfRange {
                        index: idx,
                        len: node_count,
                    });
                }
            }
            if a == b {
                continue;
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a},{b}) has invalid weight {w}"
                )));
            }
            let key = (a.min(b), a.max(b));
            let w = quantize_weight(w);
            unique
                .entry(key)
                .and_modify(|old: &mut f64| *old = old.min(w))
                .or_insert(w);
        }
        let graph = Self::assemble(node_count, unique, Vec::new());
        if graph.component_count() != 1 {
            return Err(Error::InvalidArgument(
                "graph is disconnected and has no positions for bridging".into(),
            ));
        }
        Ok(graph)
    }

    fn assemble(node_count: usize, unique: BTreeMap<(usize, usize), f64>, bridges: Vec<Edge>) -> Self {
        let mut adjacency = vec![Vec::new(); node_count];
        let mut edges = Vec::with_capacity(unique.len() + bridges.len());
        for ((a, b), weight) in unique {
            edges.push(Edge { a, b, weight });
        }
        edges.extend(bridges.iter().copied());
        for e in &edges {
            adjacency[e.a].push((e.b, e.weight));
            adjacency[e.b].push((e.a, e.weight));
        }
        SurfaceGraph {
            adjacency,
            edges,
            bridges,
        }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    /// All edges, bridges included.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn component_bridges(&self) -> &[Edge] {
        &self.bridges
    }

    pub fn component_count(&self) -> usize {
        component_labels(self.node_count(), self.edges.iter().map(|e| (e.a, e.b))).1
    }
}

fn component_labels(node_count: usize, edges: impl Iterator<Item = (usize, usize)>) -> (Vec<usize>, usize) {
    let mut parent: Vec<usize> = (0..node_count).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut label = vec![usize::MAX; node_count];
    let mut count = 0;
    let mut root_label = BTreeMap::new();
    for (v, slot) in label.iter_mut().enumerate() {
        let r = find(&mut parent, v);
        *slot = *root_label.entry(r).or_insert_with(|| {
            count += 1;
            count - 1
        });
    }
    (label, count)
}

/// Connects components by repeatedly adding the shortest point pair between
/// the component grown from node 0 and any other component. Returns the
/// bridge edges, exactly `components - 1` of them.
fn bridge_components(positions: &[Vector3<f64>], unique: &BTreeMap<(usize, usize), f64>) -> Vec<Edge> {
    let n = positions.len();
    let (label, count) = component_labels(n, unique.keys().copied());
    if count <= 1 {
        return Vec::new();
    }
    let mut members = vec![Vec::new(); count];
    for (v, &l) in label.iter().enumerate() {
        members[l].push(v);
    }
    let mut in_tree = vec![false; count];
    let mut best = vec![(f64::INFINITY, usize::MAX); n];
    let mut bridges = Vec::with_capacity(count - 1);

    let absorb = |comp: usize, in_tree: &mut Vec<bool>, best: &mut Vec<(f64, usize)>| {
        in_tree[comp] = true;
        for &u in &members[comp] {
            for v in 0..n {
                if in_tree[label[v]] {
                    continue;
                }
                let d = (positions[u] - positions[v]).norm();
                if d < best[v].0 || (d == best[v].0 && u < best[v].1) {
                    best[v] = (d, u);
                }
            }
        }
    };
    absorb(label[0], &mut in_tree, &mut best);
    for _ in 1..count {
        let (v, &(d, u)) = best
            .iter()
            .enumerate()
            .filter(|(v, _)| !in_tree[label[*v]])
            .min_by(|x, y| x.1 .0.total_cmp(&y.1 .0).then(x.0.cmp(&y.0)))
            .expect("an outside component remains");
        bridges.push(Edge {
            a: u.min(v),
            b: u.max(v),
            weight: quantize_weight(d),
        });
        absorb(label[v], &mut in_tree, &mut best);
    }
    bridges
}

/// Symmetrized k-nearest-neighbor graph over a point cloud, bridged to a
/// single component.
pub fn build_cloud_graph(cloud: &PointCloud, k: usize) -> Result<SurfaceGraph> {
    let pts = cloud.points();
    if pts.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "cloud graph needs at least 2 points, got {}",
            pts.len()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let k = k.min(pts.len() - 1);
    let lists: Vec<Vec<(usize, f64)>> = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(usize, f64)> = pts
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, q)| (j, (pts[i] - q).norm()))
                .collect();
            let cmp = |x: &(usize, f64), y: &(usize, f64)| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0));
            cand.select_nth_unstable_by(k - 1, cmp);
            cand.truncate(k);
            cand.sort_by(cmp);
            cand
        })
        .collect();
    let mut unique = BTreeMap::new();
    for (i, list) in lists.iter().enumerate() {
        for &(j, d) in list {
            unique.insert((i.min(j), i.max(j)), quantize_weight(d));
        }
    }
    let bridges = bridge_components(pts, &unique);
    Ok(SurfaceGraph::assemble(pts.len(), unique, bridges))
}

/// Mesh edge graph augmented with the diagonal across every pair of
/// triangles sharing an edge. The diagonals remove most of the directional
/// bias of pure edge paths on regular triangulations.
pub fn build_mesh_graph(mesh: &Mesh) -> Result<SurfaceGraph> {
    let verts = mesh.vertices();
    if mesh.faces().is_empty() {
        return Err(Error::InvalidArgument(format!(
            "mesh `{}` has no edges",
            mesh.model_id()
        )));
    }
    let mut opposite: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for f in mesh.faces() {
        for (u, v, o) in [(f[0], f[1], f[2]), (f[1], f[2], f[0]), (f[2], f[0], f[1])] {
            opposite.entry((u.min(v), u.max(v))).or_default().push(o);
        }
    }
    let mut pairs: BTreeSet<(usize, usize)> = opposite.keys().copied().collect();
    for opp in opposite.values() {
        if let [x, y] = opp[..] {
            if x != y {
                pairs.insert((x.min(y), x.max(y)));
            }
        }
    }
    let unique: BTreeMap<(usize, usize), f64> = pairs
        .into_iter()
        .map(|(a, b)| ((a, b), quantize_weight((verts[a] - verts[b]).norm())))
        .collect();
    let bridges = bridge_components(verts, &unique);
    Ok(SurfaceGraph::assemble(verts.len(), unique, bridges))
}
