//! Rigid registration from embedding correspondences: RANSAC over Kabsch
//! solves, ICP refinement and pose-hypothesis search.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, Unit};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingModel, Embeddings, ModelKind};
use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::metrics::retrieve;

/// `x -> rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Point3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Point3::zeros(),
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &RigidTransform) -> Self {
        RigidTransform {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }

    /// Orthonormal with determinant +1 within `tol`.
    pub fn is_proper(&self, tol: f64) -> bool {
        let r = &self.rotation;
        (r.transpose() * r - Matrix3::identity()).abs().max() <= tol && (r.determinant() - 1.0).abs() <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationLevel {
    Easy,
    Medium,
    Hard,
}

impl PerturbationLevel {
    pub const ALL: [PerturbationLevel; 3] = [
        PerturbationLevel::Easy,
        PerturbationLevel::Medium,
        PerturbationLevel::Hard,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationLevel::Easy => "easy",
            PerturbationLevel::Medium => "medium",
            PerturbationLevel::Hard => "hard",
        }
    }

    pub fn max_angle_deg(self) -> f64 {
        match self {
            PerturbationLevel::Easy => 10.0,
            PerturbationLevel::Medium => 20.0,
            PerturbationLevel::Hard => 45.0,
        }
    }

    pub fn max_translation(self) -> f64 {
        match self {
            PerturbationLevel::Easy => 0.1,
            PerturbationLevel::Medium => 0.3,
            PerturbationLevel::Hard => 0.5,
        }
    }
}

impl fmt::Display for PerturbationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PerturbationLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PerturbationLevel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown perturbation level `{s}` (expected easy, medium or hard)"
                ))
            })
    }
}

fn unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Point3 {
    loop {
        let v = Point3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-6 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Random rotation about a uniform axis by an angle uniform in
/// `[0, max_angle]`, then a translation uniform in the ball of radius
/// `max_translation`.
pub fn perturb<R: Rng + ?Sized>(
    cloud: &PointCloud,
    level: PerturbationLevel,
    rng: &mut R,
) -> (PointCloud, RigidTransform) {
    let axis = Unit::new_normalize(unit_vector(rng));
    let angle = rng.gen_range(0.0..=level.max_angle_deg()).to_radians();
    let dir = unit_vector(rng);
    let radius = level.max_translation() * rng.gen_range(0.0f64..=1.0).cbrt();
    let t = RigidTransform {
        rotation: Rotation3::from_axis_angle(&axis, angle).into_inner(),
        translation: dir * radius,
    };
    (cloud.map_points(|p| t.apply(p)), t)
}

/// Rotation angle between the two rotations in degrees and distance
/// between the translations.
pub fn registration_errors(estimated: &RigidTransform, ground_truth: &RigidTransform) -> (f64, f64) {
    let rel = estimated.rotation * ground_truth.rotation.transpose();
    let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    (
        c.acos().to_degrees(),
        (estimated.translation - ground_truth.translation).norm(),
    )
}

/// Least-squares rigid map from `src` to `tgt` (Kabsch). `None` if fewer
/// than three points are given.
pub fn kabsch(src: &[Point3], tgt: &[Point3]) -> Option<RigidTransform> {
    if src.len() != tgt.len() || src.len() < 3 {
        return None;
    }
    let n = src.len() as f64;
    let cs = src.iter().sum::<Point3>() / n;
    let ct = tgt.iter().sum::<Point3>() / n;
    let mut h = Matrix3::zeros();
    for (s, t) in src.iter().zip(tgt) {
        h += (s - cs) * (t - ct).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u?;
    let v = svd.v_t?.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Point3::new(1.0, 1.0, d)) * u.transpose();
    // project back onto SO(3) to shed rounding drift
    let rotation = Rotation3::from_matrix_unchecked(rotation);
    let rotation = Rotation3::from_matrix_eps(rotation.matrix(), 1e-15, 20, rotation).into_inner();
    Some(RigidTransform {
        rotation,
        translation: ct - rotation * cs,
    })
}

fn collinear(a: &Point3, b: &Point3, c: &Point3) -> bool {
    let scale = (b - a).norm().max((c - a).norm());
    (b - a).cross(&(c - a)).norm() <= 1e-9 * scale.max(1e-300) * scale.max(1e-300)
}

/// Mutually nearest pairs in embedding space; ties go to the lowest index.
pub fn mutual_nearest(src: &Embeddings, tgt: &Embeddings) -> Result<Vec<(usize, usize)>> {
    if src.is_empty() || tgt.is_empty() {
        return Err(Error::Registration("empty cloud".into()));
    }
    if src.dimension() != tgt.dimension() {
        return Err(Error::ShapeMismatch {
            expected: src.dimension(),
            actual: tgt.dimension(),
        });
    }
    let forward: Vec<usize> = (0..src.len())
        .into_par_iter()
        .map(|i| retrieve(src.row(i), tgt))
        .collect();
    let backward: Vec<usize> = (0..tgt.len())
        .into_par_iter()
        .map(|j| retrieve(tgt.row(j), src))
        .collect();
    Ok(forward
        .iter()
        .enumerate()
        .filter(|&(i, &j)| backward[j] == i)
        .map(|(i, &j)| (i, j))
        .collect())
}

/// Embeds both clouds with a coordinate network and pairs mutual nearest
/// neighbours.
pub fn embedding_correspondences(
    src: &PointCloud,
    tgt: &PointCloud,
    model: &EmbeddingModel,
) -> Result<Vec<(usize, usize)>> {
    require_network(model)?;
    mutual_nearest(&model.embed_cloud(0, src)?, &model.embed_cloud(0, tgt)?)
}

fn require_network(model: &EmbeddingModel) -> Result<()> {
    if model.kind() != ModelKind::CoordMlp {
        return Err(Error::Registration(format!(
            "registration needs a coord_mlp model, got {}",
            model.kind()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacConfig {
    pub iterations: usize,
    pub inlier_threshold: f64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            iterations: 1000,
            inlier_threshold: 0.05,
        }
    }
}

fn count_inliers(
    t: &RigidTransform,
    corr: &[(usize, usize)],
    src: &[Point3],
    tgt: &[Point3],
    threshold: f64,
) -> Vec<usize> {
    corr.iter()
        .enumerate()
        .filter(|(_, &(i, j))| (t.apply(&src[i]) - tgt[j]).norm() < threshold)
        .map(|(k, _)| k)
        .collect()
}

/// Best transform over `iterations` random three-correspondence samples,
/// ranked by inlier count (earliest sample on ties), then refit on its
/// inliers when that does not lose any.
pub fn ransac_align<R: Rng + ?Sized>(
    corr: &[(usize, usize)],
    src: &PointCloud,
    tgt: &PointCloud,
    config: &RansacConfig,
    rng: &mut R,
) -> Result<(RigidTransform, usize)> {
    if corr.len() < 3 {
        return Err(Error::Registration(format!(
            "RANSAC needs at least 3 correspondences, got {}",
            corr.len()
        )));
    }
    let (sp, tp) = (src.points(), tgt.points());
    if let Some(&(i, j)) = corr.iter().find(|&&(i, j)| i >= sp.len() || j >= tp.len()) {
        return Err(Error::IndexOutOfRange {
            index: i.max(j),
            len: sp.len().min(tp.len()),
        });
    }
    let samples: Vec<Vec<usize>> = (0..config.iterations)
        .map(|_| sample(rng, corr.len(), 3).into_vec())
        .collect();
    let scored: Vec<Option<(usize, RigidTransform)>> = samples
        .par_iter()
        .map(|s| {
            let a: Vec<Point3> = s.iter().map(|&k| sp[corr[k].0]).collect();
            let b: Vec<Point3> = s.iter().map(|&k| tp[corr[k].1]).collect();
            if collinear(&a[0], &a[1], &a[2]) || collinear(&b[0], &b[1], &b[2]) {
                return None;
            }
            let t = kabsch(&a, &b)?;
            Some((count_inliers(&t, corr, sp, tp, config.inlier_threshold).len(), t))
        })
        .collect();
    let mut best: Option<(usize, RigidTransform)> = None;
    for (n, t) in scored.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| n > b.0) {
            best = Some((n, t));
        }
    }
    let (count, t) = best.ok_or_else(|| Error::Registration("every RANSAC sample was degenerate".into()))?;
    let inliers = count_inliers(&t, corr, sp, tp, config.inlier_threshold);
    if inliers.len() >= 3 {
        let a: Vec<Point3> = inliers.iter().map(|&k| sp[corr[k].0]).collect();
        let b: Vec<Point3> = inliers.iter().map(|&k| tp[corr[k].1]).collect();
        if let Some(refit) = kabsch(&a, &b) {
            let n = count_inliers(&refit, corr, sp, tp, config.inlier_threshold).len();
            if n >= count {
                return Ok((refit, n));
            }
        }
    }
    Ok((t, count))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcpConfig {
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        IcpConfig {
            max_iters: 50,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform,
    pub iterations: usize,
    /// Mean squared nearest-neighbour distance, starting with the initial
    /// transform; non-increasing.
    pub residuals: Vec<f64>,
}

fn nearest_point(p: &Point3, cloud: &[Point3]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (j, q) in cloud.iter().enumerate() {
        let d = (p - q).norm_squared();
        if d < best.0 {
            best = (d, j);
        }
    }
    best.1
}

fn match_cloud(t: &RigidTransform, src: &[Point3], tgt: &[Point3]) -> (Vec<usize>, f64) {
    let (idx, d): (Vec<usize>, Vec<f64>) = src
        .par_iter()
        .map(|p| {
            let q = t.apply(p);
            let j = nearest_point(&q, tgt);
            (j, (q - tgt[j]).norm_squared())
        })
        .unzip();
    let residual = crate::embedding::pairwise_sum(&d) / src.len() as f64;
    (idx, residual)
}

/// Point-to-point ICP. A step is accepted only if it lowers the mean
/// squared residual; iteration stops when the gain drops below
/// `tolerance` or after `max_iters` steps.
pub fn icp_refine(
    src: &PointCloud,
    tgt: &PointCloud,
    initial: &RigidTransform,
    config: &IcpConfig,
) -> Result<IcpResult> {
    if src.is_empty() || tgt.is_empty() {
        return Err(Error::Registration("empty cloud".into()));
    }
    let (sp, tp) = (src.points(), tgt.points());
    let mut t = *initial;
    let (mut matches, mut residual) = match_cloud(&t, sp, tp);
    let mut residuals = vec![residual];
    let mut iterations = 0;
    while iterations < config.max_iters {
        iterations += 1;
        let matched: Vec<Point3> = matches.iter().map(|&j| tp[j]).collect();
        let Some(next) = kabsch(sp, &matched) else { break };
        let (next_matches, next_residual) = match_cloud(&next, sp, tp);
        if !(next_residual < residual) {
            break;
        }
        let gain = residual - next_residual;
        t = next;
        matches = next_matches;
        residual = next_residual;
        residuals.push(residual);
        if gain < config.tolerance {
            break;
        }
    }
    Ok(IcpResult {
        transform: t,
        iterations,
        residuals,
    })
}

/// The 24 rotations of the cube, identity first, then in lexicographic
/// order of their signed-permutation matrices.
pub fn octahedral_rotations() -> Vec<Matrix3<f64>> {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::with_capacity(24);
    for p in perms {
        for signs in 0..8 {
            let mut m = Matrix3::zeros();
            for (row, &col) in p.iter().enumerate() {
                m[(row, col)] = if signs >> row & 1 == 1 { -1.0 } else { 1.0 };
            }
            if m.determinant() > 0.0 {
                out.push(m);
            }
        }
    }
    out
}

/// De-rotations of the target tried before embedding it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HypothesisSearch {
    /// All 24 rotations of the cube.
    #[default]
    Octahedral,
    /// The target as given.
    Identity,
}

impl HypothesisSearch {
    pub fn rotations(self) -> Vec<Matrix3<f64>> {
        match self {
            HypothesisSearch::Octahedral => octahedral_rotations(),
            HypothesisSearch::Identity => vec![Matrix3::identity()],
        }
    }
}

impl FromStr for HypothesisSearch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "octahedral" => Ok(HypothesisSearch::Octahedral),
            "identity" => Ok(HypothesisSearch::Identity),
            other => Err(Error::InvalidArgument(format!(
                "unknown hypothesis search `{other}` (expected octahedral or identity)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegistrationConfig {
    pub ransac: RansacConfig,
    pub icp: IcpConfig,
    pub hypotheses: HypothesisSearch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub transform: RigidTransform,
    pub inliers: usize,
    pub correspondences: usize,
    /// Index of the winning de-rotation in `HypothesisSearch::rotations`.
    pub hypothesis: usize,
    pub icp_iterations: usize,
}

/// Full pipeline from `src` to `tgt`: for every de-rotation hypothesis,
/// embed the de-rotated target, pair mutual nearest neighbours and run
/// RANSAC on the original coordinates; the hypothesis with the most
/// inliers (lowest index on ties) is refined with ICP.
pub fn align_with_model<R: Rng + ?Sized>(
    model: &EmbeddingModel,
    src: &PointCloud,
    tgt: &PointCloud,
    config: &RegistrationConfig,
    rng: &mut R,
) -> Result<Alignment> {
    require_network(model)?;
    let src_emb = model.embed_cloud(0, src)?;
    let rotations = config.hypotheses.rotations();
    let seeds: Vec<u64> = rotations.iter().map(|_| rng.gen()).collect();
    let candidates = rotations
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(q, &seed)| {
            let derotated = tgt.map_points(|p| q * p);
            let corr = mutual_nearest(&src_emb, &model.embed_cloud(0, &derotated)?)?;
            if corr.len() < 3 {
                return Ok(None);
            }
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
            match ransac_align(&corr, src, tgt, &config.ransac, &mut rng) {
                Ok((t, n)) => Ok(Some((t, n, corr.len()))),
                Err(Error::Registration(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<(usize, RigidTransform, usize, usize)> = None;
    for (h, c) in candidates.into_iter().enumerate() {
        if let Some((t, n, m)) = c {
            if best.as_ref().is_none_or(|b| n > b.2) {
                best = Some((h, t, n, m));
            }
        }
    }
    let (hypothesis, t, inliers, correspondences) =
        best.ok_or_else(|| Error::Registration("no hypothesis produced enough correspondences".into()))?;
    let icp = icp_refine(src, tgt, &t, &config.icp)?;
    Ok(Alignment {
        transform: icp.transform,
        inliers,
        correspondences,
        hypothesis,
        icp_iterations: icp.iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    pub estimated: RigidTransform,
    pub ground_truth: RigidTransform,
    pub rot_error: f64,
    pub trans_error: f64,
    pub inlier_count: usize,
}

impl RegistrationResult {
    pub fn new(estimated: RigidTransform, ground_truth: RigidTransform, inlier_count: usize) -> Self {
        let (rot_error, trans_error) = registration_errors(&estimated, &ground_truth);
        RegistrationResult {
            estimated,
            ground_truth,
            rot_error,
            trans_error,
            inlier_count,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn blob(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::from_points(
            "blob",
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-0.6..0.6),
                        rng.gen_range(-0.3..0.3),
                    )
                })
                .collect(),
        )
    }

    #[test]
    fn level_table() {
        let got: Vec<(f64, f64)> = PerturbationLevel::ALL
            .iter()
            .map(|l| (l.max_angle_deg(), l.max_translation()))
            .collect();
        assert_eq!(got, vec![(10.0, 0.1), (20.0, 0.3), (45.0, 0.5)]);
        assert!("extreme".parse::<PerturbationLevel>().is_err());
    }

    #[test]
    fn perturb_bounds_and_inverse() {
        let cloud = blob(50, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for level in PerturbationLevel::ALL {
            for _ in 0..200 {
                let (moved, t) = perturb(&cloud, level, &mut rng);
                assert!(t.is_proper(1e-9));
                let (angle, dist) = registration_errors(&t, &RigidTransform::identity());
                assert!(angle <= level.max_angle_deg() + 1e-9);
                assert!(dist <= level.max_translation() + 1e-12);
                let back = moved.map_points(|p| t.inverse().apply(p));
                for (a, b) in back.points().iter().zip(cloud.points()) {
                    assert!((a - b).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn cube_group() {
        let g = octahedral_rotations();
        assert_eq!(g.len(), 24);
        assert_eq!(g[0], Matrix3::identity());
        for (i, a) in g.iter().enumerate() {
            assert!((a.determinant() - 1.0).abs() < 1e-12);
            for b in &g[i + 1..] {
                assert_ne!(a, b);
            }
            // closed under composition
            for b in &g {
                assert!(g.contains(&(a * b)));
            }
        }
    }

    #[test]
    fn kabsch_exact() {
        let cloud = blob(20, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (moved, t) = perturb(&cloud, PerturbationLevel::Hard, &mut rng);
        let est = kabsch(cloud.points(), moved.points()).unwrap();
        let (r, d) = registration_errors(&est, &t);
        assert!(r < 1e-6 && d < 1e-9);
    }

    #[test]
    fn ransac_rejects_collinear_samples() {
        let line: Vec<Point3> = (0..5).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let cloud = PointCloud::from_points("line", line);
        let corr: Vec<(usize, usize)> = (0..5).map(|i| (i, i)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = ransac_align(&corr, &cloud, &cloud, &RansacConfig::default(), &mut rng).unwrap_err();
        assert!(err.to_string().contains("degenerate"));
    }

    #[test]
    fn icp_fixed_point() {
        let cloud = blob(100, 5);
        let r = icp_refine(&cloud, &cloud, &RigidTransform::identity(), &IcpConfig::default()).unwrap();
        assert_eq!(r.transform, RigidTransform::identity());
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn free_table_is_rejected() {
        let cloud = blob(10, 6);
        let m = EmbeddingModel::free_table(vec!["a".into()], vec![10], 4, 0).unwrap();
        let err = embedding_correspondences(&cloud, &cloud, &m).unwrap_err();
        assert!(matches!(err, Error::Registration(_)));
    }
}
