use std::collections::HashMap;
use std::f64::consts::PI;

use densecorr::geometry::{
    all_pairs_oracle, build_cloud_graph, build_mesh_graph, geodesics_from, normalize_unit_sphere, parse_obj,
    sample_cloud, write_obj, Mesh, Point3, SurfaceGraph,
};
use proptest::prelude::*;

/// Random connected graph: a random spanning tree plus extra edges.
fn connected_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>)> {
    (2usize..=200).prop_flat_map(|n| {
        let tree = proptest::collection::vec((any::<prop::sample::Index>(), 0.01f64..2.0), n - 1);
        let extra = proptest::collection::vec((0..n, 0..n, 0.01f64..2.0), 0..2 * n);
        (Just(n), tree, extra).prop_map(|(n, tree, extra)| {
            let mut edges: Vec<(usize, usize, f64)> = tree
                .into_iter()
                .enumerate()
                .map(|(i, (parent, w))| (i + 1, parent.index(i + 1), w))
                .collect();
            edges.extend(extra);
            (n, edges)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn dijkstra_equals_floyd_warshall((n, edges) in connected_graph()) {
        let g = SurfaceGraph::from_weighted_edges(n, &edges).unwrap();
        let sources: Vec<usize> = (0..n).collect();
        let fast = geodesics_from(&g, &sources).unwrap();
        let oracle = all_pairs_oracle(&g).unwrap();
        for s in 0..n {
            prop_assert_eq!(fast.row(s), oracle.row(s));
        }
    }

    #[test]
    fn distances_are_symmetric_metrics((n, edges) in connected_graph()) {
        let g = SurfaceGraph::from_weighted_edges(n, &edges).unwrap();
        let d = geodesics_from(&g, &(0..n).collect::<Vec<_>>()).unwrap();
        for a in 0..n.min(20) {
            prop_assert_eq!(d.row(a)[a], 0.0);
            for b in 0..n.min(20) {
                prop_assert_eq!(d.row(a)[b], d.row(b)[a]);
                for c in 0..n.min(20) {
                    prop_assert!(d.row(a)[c] <= d.row(a)[b] + d.row(b)[c]);
                }
            }
        }
    }

    #[test]
    fn normalization_reaches_the_unit_sphere(
        pts in proptest::collection::vec(prop::array::uniform3(-5.0f64..5.0), 10)
    ) {
        let vertices: Vec<Point3> = pts.iter().map(|p| Point3::from(*p)).collect();
        let faces = (0..8).map(|i| [i, i + 1, i + 2]).collect();
        let mesh = Mesh::new("r", vertices.clone(), faces).unwrap();
        let out = normalize_unit_sphere(&mesh).unwrap();
        let centroid = vertices.iter().sum::<Point3>() / 10.0;
        let radius = vertices.iter().map(|v| (v - centroid).norm()).fold(0.0, f64::max);
        let max = out.vertices().iter().map(|v| v.norm()).fold(0.0, f64::max);
        prop_assert!((max - 1.0).abs() < 1e-12);
        for (a, b) in out.vertices().iter().zip(&vertices) {
            prop_assert!((a - (b - centroid) / radius).norm() < 1e-12);
        }
    }
}

#[rustfmt::skip]
fn icosahedron() -> (Vec<Point3>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let v = [
        [-1.0, t, 0.0], [1.0, t, 0.0], [-1.0, -t, 0.0], [1.0, -t, 0.0],
        [0.0, -1.0, t], [0.0, 1.0, t], [0.0, -1.0, -t], [0.0, 1.0, -t],
        [t, 0.0, -1.0], [t, 0.0, 1.0], [-t, 0.0, -1.0], [-t, 0.0, 1.0],
    ];
    let f = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    (v.iter().map(|p| Point3::from(*p).normalize()).collect(), f)
}

fn icosphere(subdivisions: usize) -> Mesh {
    let (mut v, mut f) = icosahedron();
    for _ in 0..subdivisions {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(f.len() * 4);
        for [a, b, c] in f {
            let mut m = |i: usize, j: usize| {
                *mid.entry((i.min(j), i.max(j))).or_insert_with(|| {
                    v.push(((v[i] + v[j]) / 2.0).normalize());
                    v.len() - 1
                })
            };
            let (ab, bc, ca) = (m(a, b), m(b, c), m(c, a));
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        f = next;
    }
    Mesh::new("sphere", v, f).unwrap()
}

#[test]
fn icosahedron_file_counts() {
    let (v, f) = icosahedron();
    let text = write_obj(&Mesh::new("ico", v, f).unwrap());
    let mesh = parse_obj(&text, "ico").unwrap();
    assert_eq!(mesh.vertices().len(), 12);
    assert_eq!(mesh.faces().len(), 20);
    // closed surface: V - E + F = 2
    let mut edges = std::collections::BTreeSet::new();
    for [a, b, c] in mesh.faces() {
        for (i, j) in [(a, b), (b, c), (c, a)] {
            edges.insert((*i.min(j), *i.max(j)));
        }
    }
    assert_eq!(12 - edges.len() as i64 + 20, 2);
}

fn pole_indices(points: &[Point3]) -> (usize, usize) {
    let by = |sign: f64| {
        (0..points.len())
            .max_by(|&a, &b| (sign * points[a].z).total_cmp(&(sign * points[b].z)))
            .unwrap()
    };
    (by(1.0), by(-1.0))
}

#[test]
fn sphere_mesh_poles_are_pi_apart() {
    let sphere = normalize_unit_sphere(&icosphere(4)).unwrap();
    let (top, bottom) = pole_indices(sphere.vertices());
    let g = build_mesh_graph(&sphere).unwrap();
    let d = geodesics_from(&g, &[top]).unwrap().row(0)[bottom];
    let chord = (sphere.vertices()[top] - sphere.vertices()[bottom]).norm();
    let exact = PI * chord / 2.0;
    assert!((d - exact).abs() / exact < 0.05, "pole distance {d} vs {exact}");
    assert!(d >= chord);
}

#[test]
fn sphere_cloud_poles_are_pi_apart() {
    let sphere = normalize_unit_sphere(&icosphere(4)).unwrap();
    let cloud = sample_cloud(&sphere, 2048, &[], 1).unwrap();
    let (top, bottom) = pole_indices(cloud.points());
    let g = build_cloud_graph(&cloud, 8).unwrap();
    let d = geodesics_from(&g, &[top]).unwrap().row(0)[bottom];
    let a = cloud.points()[top].normalize();
    let b = cloud.points()[bottom].normalize();
    let exact = a.dot(&b).clamp(-1.0, 1.0).acos();
    assert!(
        (d - exact).abs() / exact < 0.05,
        "cloud pole distance {d} vs {exact}"
    );
}
