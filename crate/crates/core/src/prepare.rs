//! Per-model preprocessing shared by training, evaluation and matching:
//! sample a cloud with the annotations pinned, attach the annotations,
//! build the surface graph and compute geodesics from every annotated
//! point.

use rayon::prelude::*;

use crate::corrset::{attach_to_cloud, Dataset};
use crate::error::Result;
use crate::geometry::{
    build_cloud_graph, geodesics_from, sample_cloud, DistanceMatrix, PointCloud, SurfaceGraph,
    DEFAULT_NEIGHBORS,
};

pub const DEFAULT_POINTS: usize = 2048;

/// SplitMix64 finalizer over `seed + stream`; gives independent
/// per-stream seeds from one user seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepareConfig {
    pub points: usize,
    pub neighbors: usize,
    pub seed: u64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            points: DEFAULT_POINTS,
            neighbors: DEFAULT_NEIGHBORS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PreparedModel {
    pub cloud: PointCloud,
    pub graph: SurfaceGraph,
    /// Geodesics from every pinned cloud point.
    pub geodesics: DistanceMatrix,
}

/// A dataset whose annotations are attached to sampled clouds.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub models: Vec<PreparedModel>,
}

impl Prepared {
    pub fn clouds(&self) -> Vec<&PointCloud> {
        self.models.iter().map(|m| &m.cloud).collect()
    }

    pub fn geodesics(&self) -> Vec<DistanceMatrix> {
        self.models.iter().map(|m| m.geodesics.clone()).collect()
    }
}

pub fn prepare(dataset: &Dataset, config: &PrepareConfig) -> Result<Prepared> {
    let clouds = dataset
        .models()
        .par_iter()
        .enumerate()
        .map(|(i, model)| {
            sample_cloud(
                &model.mesh,
                config.points,
                &dataset.pins_for(i),
                derive_seed(config.seed, i as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = attach_to_cloud(dataset, &clouds)?;
    let models = clouds
        .into_par_iter()
        .map(|cloud| {
            let graph = build_cloud_graph(&cloud, config.neighbors)?;
            let mut sources = cloud.pinned().to_vec();
            sources.sort_unstable();
            sources.dedup();
            let geodesics = geodesics_from(&graph, &sources)?;
            Ok(PreparedModel {
                cloud,
                graph,
                geodesics,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared { dataset, models })
}
