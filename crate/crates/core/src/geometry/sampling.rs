use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mesh::Mesh;
use crate::error::{Error, Result};

/// A point on a mesh surface, optionally tagged with its face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub position: Vector3<f64>,
    pub face: Option<usize>,
}

/// Sampled points of one model. The first entries listed in `pinned` are
/// annotation locations copied verbatim from the input.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    model_id: String,
    points: Vec<Vector3<f64>>,
    source_face: Vec<Option<usize>>,
    pinned: Vec<usize>,
}

impl PointCloud {
    pub fn new(
        model_id: impl Into<String>,
        points: Vec<Vector3<f64>>,
        source_face: Vec<Option<usize>>,
        pinned: Vec<usize>,
    ) -> Result<Self> {
        if source_face.len() != points.len() {
            return Err(Error::ShapeMismatch {
                expected: points.len(),
                actual: source_face.len(),
            });
        }
        if let Some(&bad) = pinned.iter().find(|&&i| i >= points.len()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: points.len(),
            });
        }
        Ok(PointCloud {
            model_id: model_id.into(),
            points,
            source_face,
            pinned,
        })
    }

    /// A bare cloud with no provenance and no pins.
    pub fn from_points(model_id: impl Into<String>, points: Vec<Vector3<f64>>) -> Self {
        let n = points.len();
        PointCloud {
            model_id: model_id.into(),
            points,
            source_face: vec![None; n],
            pinned: Vec::new(),
        }
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn source_face(&self) -> &[Option<usize>] {
        &self.source_face
    }

    pub fn pinned(&self) -> &[usize] {
        &self.pinned
    }

    pub fn map_points(&self, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> PointCloud {
        PointCloud {
            model_id: self.model_id.clone(),
            points: self.points.iter().map(f).collect(),
            source_face: self.source_face.clone(),
            pinned: self.pinned.clone(),
        }
    }

    /// Keeps the listed point indices in order; pins are remapped.
    pub fn subset(&self, keep: &[usize]) -> PointCloud {
        let mut remap = vec![usize::MAX; self.points.len()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        PointCloud {
            model_id: self.model_id.clone(),
            points: keep.iter().map(|&i| self.points[i]).collect(),
            source_face: keep.iter().map(|&i| self.source_face[i]).collect(),
            pinned: self
                .pinned
                .iter()
                .filter_map(|&p| (remap[p] != usize::MAX).then_some(remap[p]))
                .collect(),
        }
    }
}

/// Area-weighted uniform surface sample with the pinned points prepended.
pub fn sample_cloud(mesh: &Mesh, n: usize, pinned_points: &[SurfacePoint], seed: u64) -> Result<PointCloud> {
    if n < pinned_points.len() {
        return Err(Error::InvalidArgument(format!(
            "cloud size {n} is smaller than the {} pinned points",
            pinned_points.len()
        )));
    }
    let mut cumulative = Vec::with_capacity(mesh.faces().len());
    let mut total = 0.0;
    for f in 0..mesh.faces().len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    let free = n - pinned_points.len();
    if free > 0 && !(total > 0.0) {
        return Err(Error::Degenerate(format!(
            "mesh `{}` has zero surface area",
            mesh.model_id()
        )));
    }
    for p in pinned_points {
        if let Some(face) = p.face {
            if face >= mesh.faces().len() {
                return Err(Error::IndexOutOfRange {
                    index: face,
                    len: mesh.faces().len(),
                });
            }
        }
    }

    let mut points = Vec::with_capacity(n);
    let mut source_face = Vec::with_capacity(n);
    for p in pinned_points {
        points.push(p.position);
        source_face.push(p.face);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..free {
        let target = rng.gen::<f64>() * total;
        let face = cumulative
            .partition_point(|&c| c <= target)
            .min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangle(face);
        let s = rng.gen::<f64>().sqrt();
        let r = rng.gen::<f64>();
        points.push(a * (1.0 - s) + b * (s * (1.0 - r)) + c * (s * r));
        source_face.push(Some(face));
    }

    PointCloud::new(
        mesh.model_id(),
        points,
        source_face,
        (0..pinned_points.len()).collect(),
    )
}
