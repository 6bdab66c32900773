use rand::seq::SliceRandom;
use rand::Rng;

use super::loss::{NegativePair, PairBatch};
use super::model::PointRef;
use crate::corrset::{resolve_hyperpoint, Dataset, SetDistances};
use crate::error::{Error, Result};

/// Shuffles the pool and cuts it into groups of `batch_models`. A trailing
/// group of one model joins the group before it.
pub fn epoch_batches<R: Rng + ?Sized>(pool: &[usize], batch_models: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order = pool.to_vec();
    order.shuffle(rng);
    let mut groups: Vec<Vec<usize>> = order.chunks(batch_models.max(1)).map(|c| c.to_vec()).collect();
    if groups.len() > 1 && groups.last().is_some_and(|g| g.len() < 2) {
        let tail = groups.pop().expect("non-empty");
        groups.last_mut().expect("non-empty").extend(tail);
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups
}

/// Draws `batch_models` distinct models from `pool` (all of them if the
/// pool is smaller) and builds their batch.
pub fn draw_batch<R: Rng + ?Sized>(
    dataset: &Dataset,
    pool: &[usize],
    margins: &SetDistances,
    batch_models: usize,
    same_model_negatives: bool,
    rng: &mut R,
) -> Result<PairBatch> {
    if pool.is_empty() {
        return Err(Error::InvalidArgument("empty training pool".into()));
    }
    let mut models: Vec<usize> = pool
        .choose_multiple(rng, batch_models.min(pool.len()))
        .copied()
        .collect();
    models.sort_unstable();
    make_batch(dataset, &models, margins, same_model_negatives, rng)
}

/// Positive pairs: every cross-model pair of points sharing a set.
/// Negative candidates: every pair of points from two different sets
/// whose margin is known, on the same or different models (only the same
/// model if `same_model_negatives`). Hyperpoints are resolved once per
/// model and set.
pub fn make_batch<R: Rng + ?Sized>(
    dataset: &Dataset,
    models: &[usize],
    margins: &SetDistances,
    same_model_negatives: bool,
    rng: &mut R,
) -> Result<PairBatch> {
    let n_sets = dataset.sets().len();
    // chosen[s][k]: the point of set s on models[k], if annotated
    let mut chosen: Vec<Vec<Option<PointRef>>> = vec![vec![None; models.len()]; n_sets];
    for (k, &m) in models.iter().enumerate() {
        let mut any = false;
        for (s, h) in dataset.annotations_on(m) {
            let p = resolve_hyperpoint(h, rng);
            let index = p
                .cloud_index
                .ok_or_else(|| Error::InvalidArgument("dataset is not attached to clouds".into()))?;
            chosen[s][k] = Some(PointRef {
                model: m,
                index,
                position: p.position,
            });
            any = true;
        }
        if !any {
            return Err(Error::InvalidArgument(format!(
                "model `{}` has no annotations",
                dataset.models()[m].id
            )));
        }
    }

    let mut batch = PairBatch::default();
    for row in &chosen {
        for a in 0..row.len() {
            for b in a + 1..row.len() {
                if let (Some(p), Some(q)) = (row[a], row[b]) {
                    batch.positives.push((p, q));
                }
            }
        }
    }
    for i in 0..n_sets {
        for j in i + 1..n_sets {
            let Some(margin) = margins.get(i, j) else {
                continue;
            };
            if !(margin > 0.0) {
                continue;
            }
            for (a, p) in chosen[i].iter().enumerate() {
                for (b, q) in chosen[j].iter().enumerate() {
                    if same_model_negatives && a != b {
                        continue;
                    }
                    if let (Some(p), Some(q)) = (p, q) {
                        batch.negatives.push(NegativePair { p: *p, q: *q, margin });
                    }
                }
            }
        }
    }
    Ok(batch)
}
