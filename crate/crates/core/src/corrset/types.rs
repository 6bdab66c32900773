use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mesh, Point3, SurfacePoint};

/// Positions may exceed the unit ball by at most this much.
pub const UNIT_BALL_TOLERANCE: f64 = 1e-6;

/// One annotated location on a model.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticPoint {
    pub position: Point3,
    pub face: Option<usize>,
    pub uv: Option<[f64; 2]>,
    pub color: Option<[f64; 3]>,
    /// Index into the model's sampled cloud, set by `attach_to_cloud`.
    pub cloud_index: Option<usize>,
}

impl SemanticPoint {
    pub fn at(position: Point3) -> Self {
        SemanticPoint {
            position,
            face: None,
            uv: None,
            color: None,
            cloud_index: None,
        }
    }

    pub fn surface_point(&self) -> SurfacePoint {
        SurfacePoint {
            position: self.position,
            face: self.face,
        }
    }
}

/// Symmetric copies of one semantic point on a single model.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperpoint {
    members: Vec<SemanticPoint>,
}

impl Hyperpoint {
    pub fn new(members: Vec<SemanticPoint>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Schema("hyperpoint has no members".into()));
        }
        Ok(Hyperpoint { members })
    }

    pub fn single(point: SemanticPoint) -> Self {
        Hyperpoint { members: vec![point] }
    }

    pub fn members(&self) -> &[SemanticPoint] {
        &self.members
    }

    pub(crate) fn members_mut(&mut self) -> &mut [SemanticPoint] {
        &mut self.members
    }

    pub fn is_singleton(&self) -> bool {
        self.members.len() == 1
    }

    /// Cloud indices of all members. Fails if the point is not attached.
    pub fn cloud_indices(&self) -> Result<Vec<usize>> {
        self.members
            .iter()
            .map(|m| {
                m.cloud_index
                    .ok_or_else(|| Error::InvalidArgument("semantic point is not attached to a cloud".into()))
            })
            .collect()
    }
}

/// Uniformly picks one member of a hyperpoint. Singletons consume no
/// randomness.
pub fn resolve_hyperpoint<'a, R: Rng + ?Sized>(h: &'a Hyperpoint, rng: &mut R) -> &'a SemanticPoint {
    if h.members.len() == 1 {
        &h.members[0]
    } else {
        &h.members[rng.gen_range(0..h.members.len())]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetEntry {
    /// Index into `Dataset::models`.
    pub model: usize,
    pub point: Hyperpoint,
}

/// Points on different models that share one semantic label.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    set_id: u32,
    entries: Vec<SetEntry>,
}

impl CorrespondenceSet {
    /// Entries are sorted by model; a model may appear only once and at
    /// least two models are required.
    pub fn new(set_id: u32, mut entries: Vec<SetEntry>) -> Result<Self> {
        entries.sort_by_key(|e| e.model);
        if entries.windows(2).any(|w| w[0].model == w[1].model) {
            return Err(Error::Schema(format!(
                "set {set_id} has more than one entry for a model"
            )));
        }
        if entries.len() < 2 {
            return Err(Error::Schema(format!(
                "set {set_id} spans {} model(s); at least 2 are required",
                entries.len()
            )));
        }
        Ok(CorrespondenceSet { set_id, entries })
    }

    pub fn set_id(&self) -> u32 {
        self.set_id
    }

    pub fn entries(&self) -> &[SetEntry] {
        &self.entries
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [SetEntry] {
        &mut self.entries
    }

    pub fn entry_for(&self, model: usize) -> Option<&Hyperpoint> {
        self.entries
            .binary_search_by_key(&model, |e| e.model)
            .ok()
            .map(|i| &self.entries[i].point)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymmetryMode {
    None,
    Central,
    Rotational,
    Both,
}

impl SymmetryMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SymmetryMode::None => "none",
            SymmetryMode::Central => "central",
            SymmetryMode::Rotational => "rotational",
            SymmetryMode::Both => "both",
        }
    }
}

impl fmt::Display for SymmetryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SymmetryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SymmetryMode::None),
            "central" => Ok(SymmetryMode::Central),
            "rotational" => Ok(SymmetryMode::Rotational),
            "both" => Ok(SymmetryMode::Both),
            other => Err(Error::Schema(format!("unknown symmetry mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelEntry {
    pub id: String,
    /// Mesh path relative to the geometry directory.
    pub mesh_path: String,
    /// Unit-sphere normalized geometry.
    pub mesh: Mesh,
}

/// All annotations of one category.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    category: String,
    symmetry_mode: SymmetryMode,
    models: Vec<ModelEntry>,
    sets: Vec<CorrespondenceSet>,
}

impl Dataset {
    pub fn new(
        category: impl Into<String>,
        symmetry_mode: SymmetryMode,
        models: Vec<ModelEntry>,
        sets: Vec<CorrespondenceSet>,
    ) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for m in &models {
            if !ids.insert(m.id.as_str()) {
                return Err(Error::Schema(format!("duplicate model id `{}`", m.id)));
            }
        }
        let mut set_ids = BTreeSet::new();
        for set in &sets {
            if !set_ids.insert(set.set_id) {
                return Err(Error::Schema(format!("duplicate set id {}", set.set_id)));
            }
            for e in &set.entries {
                let model = models.get(e.model).ok_or(Error::IndexOutOfRange {
                    index: e.model,
                    len: models.len(),
                })?;
                if symmetry_mode == SymmetryMode::None && !e.point.is_singleton() {
                    return Err(Error::Schema(format!(
                        "set {} has a hyperpoint on `{}` but symmetry mode is none",
                        set.set_id, model.id
                    )));
                }
                for p in e.point.members() {
                    if let Some(face) = p.face {
                        if face >= model.mesh.faces().len() {
                            return Err(Error::Schema(format!(
                                "set {} on `{}`: face {face} out of range ({} faces)",
                                set.set_id,
                                model.id,
                                model.mesh.faces().len()
                            )));
                        }
                    }
                    if !(p.position.norm() <= 1.0 + UNIT_BALL_TOLERANCE) {
                        return Err(Error::Schema(format!(
                            "set {} on `{}`: point {:?} lies outside the unit ball",
                            set.set_id, model.id, p.position
                        )));
                    }
                }
            }
        }
        Ok(Dataset {
            category: category.into(),
            symmetry_mode,
            models,
            sets,
        })
    }

    pub fn category(&self) -> &str {
        &self.category
    }

    pub fn symmetry_mode(&self) -> SymmetryMode {
        self.symmetry_mode
    }

    pub fn models(&self) -> &[ModelEntry] {
        &self.models
    }

    pub fn sets(&self) -> &[CorrespondenceSet] {
        &self.sets
    }

    pub(crate) fn sets_mut(&mut self) -> &mut [CorrespondenceSet] {
        &mut self.sets
    }

    pub fn model_index(&self, id: &str) -> Option<usize> {
        self.models.iter().position(|m| m.id == id)
    }

    /// `(set index, hyperpoint)` for every set annotated on `model`.
    pub fn annotations_on(&self, model: usize) -> impl Iterator<Item = (usize, &Hyperpoint)> {
        self.sets
            .iter()
            .enumerate()
            .filter_map(move |(s, set)| set.entry_for(model).map(|h| (s, h)))
    }

    /// Every annotated surface location on `model`, in set then member order.
    pub fn pins_for(&self, model: usize) -> Vec<SurfacePoint> {
        self.annotations_on(model)
            .flat_map(|(_, h)| h.members().iter().map(SemanticPoint::surface_point))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pt(x: f64) -> SemanticPoint {
        SemanticPoint::at(Point3::new(x, 0.0, 0.0))
    }

    #[test]
    fn singleton_resolves_to_member() {
        let h = Hyperpoint::single(pt(0.5));
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            assert_eq!(resolve_hyperpoint(&h, &mut rng), &pt(0.5));
        }
    }

    #[test]
    fn two_member_draws_are_balanced() {
        let h = Hyperpoint::new(vec![pt(0.1), pt(0.2)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 10_000;
        let first = (0..n)
            .filter(|_| resolve_hyperpoint(&h, &mut rng).position.x == 0.1)
            .count() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((first - 5000.0).abs() < 3.0 * sigma, "{first}");
    }

    #[test]
    fn resolution_is_deterministic() {
        let h = Hyperpoint::new(vec![pt(0.1), pt(0.2), pt(0.3)]).unwrap();
        let a = resolve_hyperpoint(&h, &mut ChaCha8Rng::seed_from_u64(4)).clone();
        let b = resolve_hyperpoint(&h, &mut ChaCha8Rng::seed_from_u64(4)).clone();
        assert_eq!(a, b);
    }

    #[test]
    fn set_needs_two_models() {
        let one = vec![SetEntry {
            model: 0,
            point: Hyperpoint::single(pt(0.0)),
        }];
        assert!(CorrespondenceSet::new(1, one).is_err());
        let dup = vec![
            SetEntry {
                model: 0,
                point: Hyperpoint::single(pt(0.0)),
            },
            SetEntry {
                model: 0,
                point: Hyperpoint::single(pt(0.1)),
            },
        ];
        assert!(CorrespondenceSet::new(1, dup).is_err());
    }

    #[test]
    fn empty_hyperpoint_rejected() {
        assert!(Hyperpoint::new(vec![]).is_err());
    }

    #[test]
    fn symmetry_mode_strings() {
        for m in [
            SymmetryMode::None,
            SymmetryMode::Central,
            SymmetryMode::Rotational,
            SymmetryMode::Both,
        ] {
            assert_eq!(m.as_str().parse::<SymmetryMode>().unwrap(), m);
        }
        assert!("spiral".parse::<SymmetryMode>().is_err());
    }
}
