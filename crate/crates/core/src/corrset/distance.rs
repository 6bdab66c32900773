use super::types::{CorrespondenceSet, Dataset, Hyperpoint};
use crate::error::{Error, Result};
use crate::geometry::DistanceMatrix;

/// Mean geodesic distance between the members of two hyperpoints on the
/// same model.
fn hyperpoint_distance(a: &Hyperpoint, b: &Hyperpoint, geo: &DistanceMatrix) -> Result<f64> {
    let ia = a.cloud_indices()?;
    let ib = b.cloud_indices()?;
    let mut sum = 0.0;
    for &p in &ia {
        let row = geo
            .row_of(p)
            .ok_or_else(|| Error::InvalidArgument(format!("cloud point {p} has no geodesic row")))?;
        let row = geo.row(row);
        for &q in &ib {
            sum += row[q];
        }
    }
    Ok(sum / (ia.len() * ib.len()) as f64)
}

/// Average geodesic distance between two correspondence sets over the
/// models (accepted by `include`) that carry both. `geodesics[m]` holds
/// distances from every annotated cloud point of model `m`.
pub fn set_distance_over(
    a: &CorrespondenceSet,
    b: &CorrespondenceSet,
    geodesics: &[DistanceMatrix],
    include: impl Fn(usize) -> bool,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut shared = 0usize;
    for entry in a.entries() {
        if !include(entry.model) {
            continue;
        }
        if let Some(other) = b.entry_for(entry.model) {
            let geo = geodesics.get(entry.model).ok_or(Error::IndexOutOfRange {
                index: entry.model,
                len: geodesics.len(),
            })?;
            sum += hyperpoint_distance(&entry.point, other, geo)?;
            shared += 1;
        }
    }
    if shared == 0 {
        return Err(Error::NoSharedModel {
            a: a.set_id(),
            b: b.set_id(),
        });
    }
    Ok(sum / shared as f64)
}

pub fn set_distance(
    a: &CorrespondenceSet,
    b: &CorrespondenceSet,
    geodesics: &[DistanceMatrix],
) -> Result<f64> {
    set_distance_over(a, b, geodesics, |_| true)
}

/// Symmetric matrix of set distances restricted to `models`; `None` where
/// two sets share no model in the subset. Diagonal entries are `Some(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SetDistances {
    n: usize,
    values: Vec<Option<f64>>,
}

impl SetDistances {
    pub fn compute(dataset: &Dataset, geodesics: &[DistanceMatrix], models: &[usize]) -> Result<Self> {
        let sets = dataset.sets();
        let n = sets.len();
        let mut include = vec![false; dataset.models().len()];
        for &m in models {
            include[m] = true;
        }
        let mut values = vec![None; n * n];
        for i in 0..n {
            values[i * n + i] = Some(0.0);
            for j in i + 1..n {
                let d = match set_distance_over(&sets[i], &sets[j], geodesics, |m| include[m]) {
                    Ok(d) => Some(d),
                    Err(Error::NoSharedModel { .. }) => None,
                    Err(e) => return Err(e),
                };
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        Ok(SetDistances { n, values })
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.n + j]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrset::{synthesize_category, SemanticPoint, SetEntry};
    use crate::geometry::{geodesics_from, Point3, SurfaceGraph};
    use crate::prepare::{prepare, PrepareConfig};

    fn at(i: usize) -> SemanticPoint {
        let mut p = SemanticPoint::at(Point3::zeros());
        p.cloud_index = Some(i);
        p
    }

    fn entry(model: usize, members: &[usize]) -> SetEntry {
        SetEntry {
            model,
            point: Hyperpoint::new(members.iter().map(|&i| at(i)).collect()).unwrap(),
        }
    }

    /// Path 0 - 1 - 2 - 3 with uniform spacing `step`.
    fn path(step: f64) -> DistanceMatrix {
        let g = SurfaceGraph::from_weighted_edges(4, &[(0, 1, step), (1, 2, step), (2, 3, step)]).unwrap();
        geodesics_from(&g, &[0, 1, 2, 3]).unwrap()
    }

    #[test]
    fn single_shared_model_is_the_geodesic() {
        let a = CorrespondenceSet::new(0, vec![entry(0, &[0]), entry(1, &[0])]).unwrap();
        let b = CorrespondenceSet::new(1, vec![entry(1, &[3]), entry(2, &[1])]).unwrap();
        let geo = vec![path(0.5), path(0.125), path(0.5)];
        assert_eq!(set_distance(&a, &b, &geo).unwrap(), 0.375);
    }

    #[test]
    fn averages_over_shared_models() {
        let a = CorrespondenceSet::new(0, vec![entry(0, &[0]), entry(1, &[0])]).unwrap();
        let b = CorrespondenceSet::new(1, vec![entry(0, &[2]), entry(1, &[2])]).unwrap();
        let geo = vec![path(0.1), path(0.2)];
        assert!((set_distance(&a, &b, &geo).unwrap() - 0.3).abs() < 1e-9);
        let only_first = set_distance_over(&a, &b, &geo, |m| m == 0).unwrap();
        assert!((only_first - 0.2).abs() < 1e-9);
    }

    #[test]
    fn hyperpoints_use_member_means() {
        let a = CorrespondenceSet::new(0, vec![entry(0, &[0, 3]), entry(1, &[0])]).unwrap();
        let b = CorrespondenceSet::new(1, vec![entry(0, &[1]), entry(2, &[0])]).unwrap();
        let geo = vec![path(1.0), path(1.0), path(1.0)];
        // members 0 and 3 lie 1 and 2 from node 1
        assert_eq!(set_distance(&a, &b, &geo).unwrap(), 1.5);
    }

    #[test]
    fn disjoint_sets_have_no_distance() {
        let a = CorrespondenceSet::new(4, vec![entry(0, &[0]), entry(1, &[0])]).unwrap();
        let b = CorrespondenceSet::new(9, vec![entry(2, &[1]), entry(3, &[1])]).unwrap();
        let geo = vec![path(1.0); 4];
        assert!(matches!(
            set_distance(&a, &b, &geo),
            Err(Error::NoSharedModel { a: 4, b: 9 })
        ));
    }

    #[test]
    fn matrix_is_symmetric_with_zero_diagonal() {
        let cat = synthesize_category("rockets", 4, 4, 3).unwrap();
        let prepared = prepare(
            &cat.dataset,
            &PrepareConfig {
                points: 200,
                ..Default::default()
            },
        )
        .unwrap();
        let geo = prepared.geodesics();
        let m = SetDistances::compute(&prepared.dataset, &geo, &[0, 1, 2, 3]).unwrap();
        assert_eq!(m.len(), 4);
        for i in 0..4 {
            assert_eq!(m.get(i, i), Some(0.0));
            for j in 0..4 {
                assert_eq!(m.get(i, j), m.get(j, i));
                if i != j {
                    assert!(m.get(i, j).unwrap() > 0.0);
                }
            }
        }
        let sets = prepared.dataset.sets();
        assert_eq!(m.get(0, 2), Some(set_distance(&sets[0], &sets[2], &geo).unwrap()));
    }
}
