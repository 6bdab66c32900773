//! Surface geometry: OBJ meshes, normalization, area-weighted sampling,
//! surface graphs and graph-geodesic distances.

mod geodesic;
mod graph;
mod mesh;
mod sampling;

pub use geodesic::{all_pairs_oracle, geodesics_from, DistanceMatrix, ORACLE_NODE_LIMIT};
pub use graph::{
    build_cloud_graph, build_mesh_graph, quantize_weight, Edge, SurfaceGraph, DEFAULT_NEIGHBORS,
    WEIGHT_QUANTUM,
};
pub use mesh::{
    closest_point_on_triangle, load_mesh, normalize_unit_sphere, parse_obj, parse_obj_bytes,
    unit_sphere_normalization, write_obj, Mesh, Normalization,
};
pub use sampling::{sample_cloud, PointCloud, SurfacePoint};

pub type Point3 = nalgebra::Vector3<f64>;
