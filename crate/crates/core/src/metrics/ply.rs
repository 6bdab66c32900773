use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::embedding::Embeddings;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// RGB per point from the top three principal components of the
/// embeddings, each rescaled to 0..=255. Component signs are fixed so the
/// largest-magnitude loading is positive.
pub fn embedding_colors(emb: &Embeddings) -> Vec<[u8; 3]> {
    let n = emb.len();
    let d = emb.dimension();
    if n == 0 {
        return Vec::new();
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(emb.row(i)) {
            *m += v / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, d, |i, j| emb.row(i)[j] - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut channels = vec![vec![0.0; n]; 3];
    for (c, channel) in channels.iter_mut().enumerate() {
        let Some(&k) = order.get(c) else { break };
        let mut axis = eig.eigenvectors.column(k).into_owned();
        let pivot = axis
            .iter()
            .copied()
            .fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        if pivot < 0.0 {
            axis = -axis;
        }
        for (i, v) in channel.iter_mut().enumerate() {
            *v = centered.row(i).iter().zip(axis.iter()).map(|(a, b)| a * b).sum();
        }
    }
    let scaled: Vec<Vec<u8>> = channels
        .iter()
        .map(|ch| {
            let lo = ch.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            ch.iter()
                .map(|v| {
                    if hi > lo {
                        ((v - lo) / (hi - lo) * 255.0).round() as u8
                    } else {
                        128
                    }
                })
                .collect()
        })
        .collect();
    (0..n)
        .map(|i| [scaled[0][i], scaled[1][i], scaled[2][i]])
        .collect()
}

/// ASCII PLY with per-vertex `x y z red green blue`, colored by the
/// cloud's own embedding components.
pub fn embedding_ply(cloud: &PointCloud, emb: &Embeddings) -> Result<String> {
    if cloud.len() != emb.len() {
        return Err(Error::ShapeMismatch {
            expected: cloud.len(),
            actual: emb.len(),
        });
    }
    colored_ply(cloud, &embedding_colors(emb))
}

pub fn colored_ply(cloud: &PointCloud, colors: &[[u8; 3]]) -> Result<String> {
    if cloud.len() != colors.len() {
        return Err(Error::ShapeMismatch {
            expected: cloud.len(),
            actual: colors.len(),
        });
    }
    let mut out = String::new();
    let _ = write!(
        out,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    );
    for (p, c) in cloud.points().iter().zip(colors) {
        let _ = writeln!(out, "{} {} {} {} {} {}", p.x, p.y, p.z, c[0], c[1], c[2]);
    }
    Ok(out)
}
