use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// A cropped cloud and the original index of each surviving point.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialCloud {
    pub cloud: PointCloud,
    pub kept: Vec<usize>,
}

impl PartialCloud {
    /// New index of original point `original`, if it survived.
    pub fn new_index(&self, original: usize) -> Option<usize> {
        self.kept.binary_search(&original).ok()
    }
}

/// Removes a ball around a seeded random point until `1 - keep_fraction` of
/// the points are gone.
pub fn crop_partial(cloud: &PointCloud, keep_fraction: f64, seed: u64) -> Result<PartialCloud> {
    check_fraction(keep_fraction)?;
    if cloud.is_empty() {
        return Err(Error::InvalidArgument("cannot crop an empty cloud".into()));
    }
    let center = ChaCha8Rng::seed_from_u64(seed).gen_range(0..cloud.len());
    crop_partial_around(cloud, center, keep_fraction)
}

/// Ball crop around a chosen point. Points are removed in order of distance
/// to the center (ties by index); `round((1 - keep_fraction) * n)` go.
pub fn crop_partial_around(cloud: &PointCloud, center: usize, keep_fraction: f64) -> Result<PartialCloud> {
    check_fraction(keep_fraction)?;
    let n = cloud.len();
    if center >= n {
        return Err(Error::IndexOutOfRange {
            index: center,
            len: n,
        });
    }
    let remove = (((1.0 - keep_fraction) * n as f64).round() as usize).min(n - 1);
    let c = cloud.points()[center];
    let mut order: Vec<(usize, f64)> = cloud
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| (i, (p - c).norm()))
        .collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut kept: Vec<usize> = order[remove..].iter().map(|&(i, _)| i).collect();
    kept.sort_unstable();
    Ok(PartialCloud {
        cloud: cloud.subset(&kept),
        kept,
    })
}

fn check_fraction(keep_fraction: f64) -> Result<()> {
    if keep_fraction > 0.0 && keep_fraction < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "keep fraction {keep_fraction} is outside (0, 1)"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;

    fn line_cloud(n: usize) -> PointCloud {
        PointCloud::new(
            "line",
            (0..n).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect(),
            vec![None; n],
            vec![0, n - 1],
        )
        .unwrap()
    }

    #[test]
    fn keeps_requested_count() {
        let p = crop_partial(&line_cloud(100), 0.99, 3).unwrap();
        assert_eq!(p.cloud.len(), 99);
        let p = crop_partial(&line_cloud(100), 0.7, 3).unwrap();
        assert_eq!(p.cloud.len(), 70);
    }

    #[test]
    fn removes_ball_and_tracks_pins() {
        let p = crop_partial_around(&line_cloud(10), 0, 0.6).unwrap();
        assert_eq!(p.kept, vec![4, 5, 6, 7, 8, 9]);
        // pin 0 removed, pin 9 now at index 5
        assert_eq!(p.cloud.pinned(), &[5]);
        assert_eq!(p.new_index(9), Some(5));
        assert_eq!(p.new_index(2), None);
    }

    #[test]
    fn deterministic() {
        let a = crop_partial(&line_cloud(50), 0.5, 8).unwrap();
        let b = crop_partial(&line_cloud(50), 0.5, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fraction_bounds() {
        for f in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(crop_partial(&line_cloud(10), f, 0).is_err());
        }
    }
}
