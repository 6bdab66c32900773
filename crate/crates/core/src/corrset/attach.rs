use super::types::Dataset;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// Maximum distance between an annotation and the cloud point it binds to.
pub const ATTACH_LIMIT: f64 = 0.05;

/// Binds every semantic point to a cloud index: a pinned point with the
/// exact same coordinates if one exists, otherwise the nearest point.
/// `clouds[i]` belongs to `dataset.models()[i]`.
pub fn attach_to_cloud(dataset: &Dataset, clouds: &[PointCloud]) -> Result<Dataset> {
    if clouds.len() != dataset.models().len() {
        return Err(Error::ShapeMismatch {
            expected: dataset.models().len(),
            actual: clouds.len(),
        });
    }
    let mut out = dataset.clone();
    for set in out.sets_mut() {
        for entry in set.entries_mut() {
            let cloud = &clouds[entry.model];
            for member in entry.point.members_mut() {
                let pinned = cloud
                    .pinned()
                    .iter()
                    .copied()
                    .find(|&i| cloud.points()[i] == member.position);
                let index = match pinned {
                    Some(i) => i,
                    None => {
                        let (i, d) = nearest(cloud, &member.position).ok_or_else(|| {
                            Error::InvalidArgument(format!(
                                "cloud for `{}` is empty",
                                dataset.models()[entry.model].id
                            ))
                        })?;
                        if d > ATTACH_LIMIT {
                            return Err(Error::Attachment {
                                model: dataset.models()[entry.model].id.clone(),
                                distance: d,
                                limit: ATTACH_LIMIT,
                            });
                        }
                        i
                    }
                };
                member.cloud_index = Some(index);
            }
        }
    }
    Ok(out)
}

fn nearest(cloud: &PointCloud, p: &crate::geometry::Point3) -> Option<(usize, f64)> {
    cloud
        .points()
        .iter()
        .enumerate()
        .map(|(i, q)| (i, (q - p).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrset::synthesize_category;
    use crate::geometry::{sample_cloud, Point3};

    #[test]
    fn pinned_points_bind_exactly() {
        let cat = synthesize_category("tables", 3, 4, 1).unwrap();
        let ds = &cat.dataset;
        let clouds: Vec<PointCloud> = (0..3)
            .map(|m| sample_cloud(&ds.models()[m].mesh, 100, &ds.pins_for(m), m as u64).unwrap())
            .collect();
        let attached = attach_to_cloud(ds, &clouds).unwrap();
        for (m, cloud) in clouds.iter().enumerate() {
            for (_, h) in attached.annotations_on(m) {
                let p = &h.members()[0];
                assert_eq!(cloud.points()[p.cloud_index.unwrap()], p.position);
            }
        }
    }

    #[test]
    fn far_annotations_are_rejected() {
        let cat = synthesize_category("tables", 3, 2, 1).unwrap();
        let ds = &cat.dataset;
        // clouds without pins, reduced to a single far-away point
        let clouds: Vec<PointCloud> = (0..3)
            .map(|_| PointCloud::from_points("x", vec![Point3::new(5.0, 5.0, 5.0)]))
            .collect();
        assert!(matches!(
            attach_to_cloud(ds, &clouds),
            Err(Error::Attachment { .. })
        ));
        assert!(matches!(
            attach_to_cloud(ds, &clouds[..2]),
            Err(Error::ShapeMismatch {
                expected: 3,
                actual: 2
            })
        ));
    }

    #[test]
    fn unpinned_points_take_the_nearest() {
        let cat = synthesize_category("mugs", 3, 2, 4).unwrap();
        let ds = &cat.dataset;
        let clouds: Vec<PointCloud> = (0..3)
            .map(|m| {
                let pins = ds.pins_for(m);
                // nudge every pin so no cloud point matches exactly
                let pts = pins
                    .iter()
                    .map(|p| p.position + Point3::new(1e-3, 0.0, 0.0))
                    .chain([Point3::new(0.9, 0.0, 0.0)])
                    .collect();
                PointCloud::from_points("x", pts)
            })
            .collect();
        let attached = attach_to_cloud(ds, &clouds).unwrap();
        for m in 0..3 {
            for (k, (_, h)) in attached.annotations_on(m).enumerate() {
                assert_eq!(h.members()[0].cloud_index, Some(k));
            }
        }
    }
}
