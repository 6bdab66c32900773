use densecorr::corrset::synthesize_category;
use densecorr::embedding::Embeddings;
use densecorr::geometry::{sample_cloud, Point3, PointCloud};
use densecorr::registration::{
    icp_refine, kabsch, mutual_nearest, octahedral_rotations, perturb, ransac_align, registration_errors,
    IcpConfig, PerturbationLevel, RansacConfig, RigidTransform,
};
use nalgebra::{Matrix3, Matrix4, Rotation3, SymmetricEigen, UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mug_cloud(n: usize, seed: u64) -> PointCloud {
    let cat = synthesize_category("mugs", 3, 2, seed).unwrap();
    sample_cloud(&cat.dataset.models()[0].mesh, n, &[], seed).unwrap()
}

fn rotation(axis: [f64; 3], deg: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(
        &nalgebra::Unit::new_normalize(Vector3::from(axis)),
        deg.to_radians(),
    )
    .into_inner()
}

/// Closed-form absolute orientation with unit quaternions (Horn 1987).
fn horn(src: &[Point3], tgt: &[Point3]) -> RigidTransform {
    let n = src.len() as f64;
    let cs = src.iter().sum::<Point3>() / n;
    let ct = tgt.iter().sum::<Point3>() / n;
    let mut m = Matrix3::zeros();
    for (a, b) in src.iter().zip(tgt) {
        m += (a - cs) * (b - ct).transpose();
    }
    let (sxx, sxy, sxz) = (m[(0, 0)], m[(0, 1)], m[(0, 2)]);
    let (syx, syy, syz) = (m[(1, 0)], m[(1, 1)], m[(1, 2)]);
    let (szx, szy, szz) = (m[(2, 0)], m[(2, 1)], m[(2, 2)]);
    #[rustfmt::skip]
    let big = Matrix4::new(
        sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
        syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
        szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
        sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz,
    );
    let eig = SymmetricEigen::new(big);
    let k = eig.eigenvalues.imax();
    let q = eig.eigenvectors.column(k);
    let rot = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]))
        .to_rotation_matrix()
        .into_inner();
    RigidTransform {
        rotation: rot,
        translation: ct - rot * cs,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn kabsch_agrees_with_quaternion_solution(
        pts in proptest::collection::vec(prop::array::uniform3(-1.0f64..1.0), 4..40),
        axis in prop::array::uniform3(-1.0f64..1.0),
        deg in 0.0f64..180.0,
        shift in prop::array::uniform3(-2.0f64..2.0),
        noise in proptest::collection::vec(prop::array::uniform3(-0.02f64..0.02), 40),
    ) {
        prop_assume!(Vector3::from(axis).norm() > 0.1);
        let src: Vec<Point3> = pts.iter().map(|p| Point3::from(*p)).collect();
        let r = rotation(axis, deg);
        let tgt: Vec<Point3> = src
            .iter()
            .zip(&noise)
            .map(|(p, e)| r * p + Vector3::from(shift) + Vector3::from(*e))
            .collect();
        // a well-conditioned cross-covariance keeps the optimum unique
        let cs = src.iter().sum::<Point3>() / src.len() as f64;
        let spread = src.iter().map(|p| (p - cs) * (p - cs).transpose()).sum::<Matrix3<f64>>();
        let sv = spread.symmetric_eigenvalues();
        prop_assume!(sv.min() > 0.05 * sv.max());
        let k = kabsch(&src, &tgt).unwrap();
        let h = horn(&src, &tgt);
        prop_assert!(k.is_proper(1e-12));
        let (dr, dt) = registration_errors(&k, &h);
        prop_assert!(dr < 1e-5 && dt < 1e-7, "{dr} {dt}");
    }

    #[test]
    fn registration_errors_are_symmetric(
        a in prop::array::uniform3(-1.0f64..1.0), da in 0.0f64..180.0,
        b in prop::array::uniform3(-1.0f64..1.0), db in 0.0f64..180.0,
        ta in prop::array::uniform3(-1.0f64..1.0), tb in prop::array::uniform3(-1.0f64..1.0),
    ) {
        prop_assume!(Vector3::from(a).norm() > 0.1 && Vector3::from(b).norm() > 0.1);
        let x = RigidTransform { rotation: rotation(a, da), translation: Vector3::from(ta) };
        let y = RigidTransform { rotation: rotation(b, db), translation: Vector3::from(tb) };
        let (r1, t1) = registration_errors(&x, &y);
        let (r2, t2) = registration_errors(&y, &x);
        prop_assert!((r1 - r2).abs() < 1e-9);
        prop_assert_eq!(t1, t2);
        prop_assert!((0.0..=180.0).contains(&r1));
    }
}

#[test]
fn known_angles_are_reported() {
    let id = RigidTransform::identity();
    for deg in [0.0, 1.0, 30.0, 90.0, 179.0] {
        let t = RigidTransform {
            rotation: rotation([0.3, -1.0, 0.2], deg),
            translation: Vector3::new(0.3, 0.4, 0.0),
        };
        let (r, d) = registration_errors(&t, &id);
        assert!((r - deg).abs() < 1e-6, "{r} vs {deg}");
        assert!((d - 0.5).abs() < 1e-12);
    }
}

#[test]
fn perturbation_inverts_within_round_off() {
    let cloud = mug_cloud(500, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for level in PerturbationLevel::ALL {
        for _ in 0..20 {
            let (moved, t) = perturb(&cloud, level, &mut rng);
            let (angle, dist) = registration_errors(&t, &RigidTransform::identity());
            assert!(angle <= level.max_angle_deg() + 1e-9);
            assert!(dist <= level.max_translation() + 1e-12);
            let inv = t.inverse();
            for (a, b) in moved.points().iter().zip(cloud.points()) {
                assert!((inv.apply(a) - b).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn ransac_recovers_pose_with_half_outliers() {
    let src = mug_cloud(400, 2);
    let truth = RigidTransform {
        rotation: rotation([1.0, 2.0, -0.5], 37.0),
        translation: Vector3::new(0.2, -0.1, 0.3),
    };
    let tgt = src.map_points(|p| truth.apply(p));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut corr: Vec<(usize, usize)> = (0..100).map(|i| (i, i)).collect();
    corr.extend((100..200).map(|i| (i, rng.gen_range(0..400))));
    let (t, inliers) = ransac_align(&corr, &src, &tgt, &RansacConfig::default(), &mut rng).unwrap();
    let (r, d) = registration_errors(&t, &truth);
    assert!(r < 1e-6 && d < 1e-8, "{r} {d}");
    assert!(inliers >= 100);
    assert!(inliers < 120);
}

#[test]
fn icp_converges_from_two_degrees_with_monotone_residual() {
    let src = mug_cloud(1500, 5);
    let truth = RigidTransform {
        rotation: rotation([0.0, 0.0, 1.0], 15.0),
        translation: Vector3::new(0.05, 0.0, -0.02),
    };
    let tgt = src.map_points(|p| truth.apply(p));
    for axis in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 1.0]] {
        let start = RigidTransform {
            rotation: rotation(axis, 2.0) * truth.rotation,
            translation: truth.translation,
        };
        let res = icp_refine(&src, &tgt, &start, &IcpConfig::default()).unwrap();
        assert!(res.residuals.windows(2).all(|w| w[1] <= w[0]));
        let (r, d) = registration_errors(&res.transform, &truth);
        let (r0, _) = registration_errors(&start, &truth);
        assert!(r < 0.25 * r0, "{r} from {r0}");
        assert!(d < 0.01, "{d}");
    }
}

#[test]
fn mutual_nearest_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (dim, levels) in [(3, None), (8, None), (2, Some(3))] {
        let mut draw = |n: usize| {
            let data = (0..n * dim)
                .map(|_| match levels {
                    Some(l) => rng.gen_range(0..l) as f64,
                    None => rng.gen_range(-1.0..1.0),
                })
                .collect();
            Embeddings::new(dim, data).unwrap()
        };
        let (a, b) = (draw(150), draw(120));
        let nn = |q: &[f64], t: &Embeddings| {
            (0..t.len())
                .min_by(|&x, &y| {
                    let dx: f64 = t.row(x).iter().zip(q).map(|(u, v)| (u - v).powi(2)).sum();
                    let dy: f64 = t.row(y).iter().zip(q).map(|(u, v)| (u - v).powi(2)).sum();
                    dx.total_cmp(&dy).then(x.cmp(&y))
                })
                .unwrap()
        };
        let want: Vec<(usize, usize)> = (0..a.len())
            .map(|i| (i, nn(a.row(i), &b)))
            .filter(|&(i, j)| nn(b.row(j), &a) == i)
            .collect();
        assert_eq!(mutual_nearest(&a, &b).unwrap(), want);
    }
}

#[test]
fn octahedral_group_is_closed() {
    let g = octahedral_rotations();
    assert_eq!(g.len(), 24);
    assert_eq!(g[0], Matrix3::identity());
    for a in &g {
        assert!((a.determinant() - 1.0).abs() < 1e-15);
        for b in &g {
            assert!(g.contains(&(a * b)));
        }
    }
}
