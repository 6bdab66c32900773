use std::collections::HashMap;

use rayon::prelude::*;

use super::model::{EmbeddingModel, Embeddings, ModelKind, PointRef};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativePair {
    pub p: PointRef,
    pub q: PointRef,
    /// Target separation, the geodesic distance between the two sets.
    pub margin: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairBatch {
    pub positives: Vec<(PointRef, PointRef)>,
    pub negatives: Vec<NegativePair>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub pull: f64,
    pub push: f64,
    pub total: f64,
    pub lambda: f64,
    pub active_negatives: usize,
}

/// Sum in a fixed binary tree over the input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().fold(0.0, |a, b| a + b),
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

/// Elementwise sum of equally long vectors in a fixed binary tree.
fn pairwise_sum_vectors(mut parts: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop()
}

/// Distinct points of a batch, embedded once each.
struct PointTable {
    points: Vec<PointRef>,
    slots: HashMap<(usize, usize, [u64; 3]), usize>,
}

impl PointTable {
    fn new() -> Self {
        PointTable {
            points: Vec::new(),
            slots: HashMap::new(),
        }
    }

    fn slot(&mut self, p: &PointRef) -> usize {
        let key = (
            p.model,
            p.index,
            [
                p.position.x.to_bits(),
                p.position.y.to_bits(),
                p.position.z.to_bits(),
            ],
        );
        let next = self.points.len();
        *self.slots.entry(key).or_insert_with(|| {
            self.points.push(*p);
            next
        })
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Embedding distance of each pair, in order.
pub fn pair_distances(model: &EmbeddingModel, pairs: &[(PointRef, PointRef)]) -> Result<Vec<f64>> {
    let mut table = PointTable::new();
    let idx: Vec<(usize, usize)> = pairs
        .iter()
        .map(|(p, q)| (table.slot(p), table.slot(q)))
        .collect();
    let emb = model.embed_points(&table.points)?;
    Ok(idx
        .iter()
        .map(|&(a, b)| distance(emb.row(a), emb.row(b)))
        .collect())
}

/// Per-pair terms plus d(loss)/d(embedding) for one of the two losses.
struct PairTerms {
    table: PointTable,
    emb: Embeddings,
    idx: Vec<(usize, usize)>,
}

impl PairTerms {
    fn build<'a>(
        model: &EmbeddingModel,
        pairs: impl Iterator<Item = (&'a PointRef, &'a PointRef)>,
    ) -> Result<Self> {
        let mut table = PointTable::new();
        let idx: Vec<(usize, usize)> = pairs.map(|(p, q)| (table.slot(p), table.slot(q))).collect();
        let emb = model.embed_points(&table.points)?;
        Ok(PairTerms { table, emb, idx })
    }

    fn distance(&self, k: usize) -> f64 {
        let (a, b) = self.idx[k];
        distance(self.emb.row(a), self.emb.row(b))
    }

    /// Adds `scale * d||f(p) - f(q)|| / d f` of pair `k` into the per-point
    /// gradients. Coincident embeddings contribute nothing.
    fn add_norm_gradient(&self, k: usize, scale: f64, grads: &mut [Vec<f64>]) {
        let (a, b) = self.idx[k];
        let d = self.distance(k);
        if d == 0.0 || a == b {
            return;
        }
        let (ea, eb) = (self.emb.row(a), self.emb.row(b));
        for i in 0..ea.len() {
            let g = scale * (ea[i] - eb[i]) / d;
            grads[a][i] += g;
            grads[b][i] -= g;
        }
    }

    fn backprop(&self, model: &EmbeddingModel, grads: Vec<Vec<f64>>) -> Result<Vec<f64>> {
        let n = model.parameter_count();
        if model.kind() == ModelKind::FreeTable {
            // rows are disjoint, so one buffer and a fixed order suffice
            let mut out = vec![0.0; n];
            for (p, g) in self.table.points.iter().zip(&grads) {
                model.backward(p, g, &mut out)?;
            }
            return Ok(out);
        }
        let parts = self
            .table
            .points
            .par_iter()
            .zip(grads.par_iter())
            .map(|(p, g)| {
                let mut out = vec![0.0; n];
                model.backward(p, g, &mut out)?;
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(pairwise_sum_vectors(parts).unwrap_or_else(|| vec![0.0; n]))
    }

    fn zero_grads(&self) -> Vec<Vec<f64>> {
        vec![vec![0.0; self.emb.dimension()]; self.table.points.len()]
    }
}

/// Mean embedding distance over positive pairs, with its parameter gradient.
pub fn pull_loss(batch: &PairBatch, model: &EmbeddingModel) -> Result<(f64, Vec<f64>)> {
    let n = batch.positives.len();
    if n == 0 {
        return Err(Error::Embedding("batch has no positive pairs".into()));
    }
    let terms = PairTerms::build(model, batch.positives.iter().map(|(p, q)| (p, q)))?;
    let d: Vec<f64> = (0..n).map(|k| terms.distance(k)).collect();
    let mut grads = terms.zero_grads();
    for k in 0..n {
        terms.add_norm_gradient(k, 1.0 / n as f64, &mut grads);
    }
    Ok((pairwise_sum(&d) / n as f64, terms.backprop(model, grads)?))
}

/// Mean hinge `max(0, margin - ||f(p) - f(q)||)` over negative pairs, the
/// number of pairs with a positive hinge, and the parameter gradient.
pub fn push_loss(batch: &PairBatch, model: &EmbeddingModel) -> Result<(f64, usize, Vec<f64>)> {
    let n = batch.negatives.len();
    if n == 0 {
        return Err(Error::Embedding("batch has no negative pairs".into()));
    }
    let terms = PairTerms::build(model, batch.negatives.iter().map(|np| (&np.p, &np.q)))?;
    let mut hinge = Vec::with_capacity(n);
    let mut grads = terms.zero_grads();
    let mut active = 0;
    for (k, np) in batch.negatives.iter().enumerate() {
        let h = np.margin - terms.distance(k);
        if h > 0.0 {
            active += 1;
            hinge.push(h);
            terms.add_norm_gradient(k, -1.0 / n as f64, &mut grads);
        } else {
            hinge.push(0.0);
        }
    }
    Ok((
        pairwise_sum(&hinge) / n as f64,
        active,
        terms.backprop(model, grads)?,
    ))
}

/// `pull + lambda * push`; the gradient is the same combination of the two
/// parameter gradients.
pub fn total_loss(batch: &PairBatch, model: &EmbeddingModel, lambda: f64) -> Result<(LossReport, Vec<f64>)> {
    let (pull, mut grad) = pull_loss(batch, model)?;
    let (push, active_negatives, push_grad) = push_loss(batch, model)?;
    for (g, p) in grad.iter_mut().zip(&push_grad) {
        *g += lambda * p;
    }
    Ok((
        LossReport {
            pull,
            push,
            total: pull + lambda * push,
            lambda,
            active_negatives,
        },
        grad,
    ))
}

/// Indices of the `n_keep` smallest values, ties by index, in ascending
/// index order.
pub fn smallest_indices(values: &[f64], n_keep: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order.truncate(n_keep);
    order.sort_unstable();
    order
}

/// Keeps the `n_keep` negatives whose embeddings are currently closest.
pub fn mine_hard_negatives(
    candidates: &[NegativePair],
    model: &EmbeddingModel,
    n_keep: usize,
) -> Result<Vec<NegativePair>> {
    if n_keep > candidates.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot keep {n_keep} of {} negative candidates",
            candidates.len()
        )));
    }
    let pairs: Vec<(PointRef, PointRef)> = candidates.iter().map(|c| (c.p, c.q)).collect();
    let d = pair_distances(model, &pairs)?;
    Ok(smallest_indices(&d, n_keep)
        .into_iter()
        .map(|i| candidates[i])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;

    fn table(rows: &[Vec<f64>]) -> EmbeddingModel {
        let d = rows[0].len();
        let mut m = EmbeddingModel::free_table(vec!["m".into()], vec![rows.len()], d, 0).unwrap();
        let flat: Vec<f64> = rows.concat();
        m.params_mut().copy_from_slice(&flat);
        m
    }

    fn pr(index: usize) -> PointRef {
        PointRef {
            model: 0,
            index,
            position: Point3::zeros(),
        }
    }

    #[test]
    fn pull_is_euclidean_norm() {
        let m = table(&[vec![0.0, 0.0], vec![3.0, 4.0]]);
        let batch = PairBatch {
            positives: vec![(pr(0), pr(1))],
            negatives: vec![],
        };
        assert_eq!(pull_loss(&batch, &m).unwrap().0, 5.0);
    }

    #[test]
    fn push_of_coincident_pair_is_margin() {
        let m = table(&[vec![1.0, 2.0], vec![1.0, 2.0]]);
        let batch = PairBatch {
            positives: vec![(pr(0), pr(1))],
            negatives: vec![NegativePair {
                p: pr(0),
                q: pr(1),
                margin: 0.5,
            }],
        };
        let (push, active, grad) = push_loss(&batch, &m).unwrap();
        assert_eq!((push, active), (0.5, 1));
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn lambda_zero_total_is_pull() {
        let m = table(&[vec![0.0, 0.1], vec![0.7, 0.2], vec![0.3, 0.3]]);
        let batch = PairBatch {
            positives: vec![(pr(0), pr(1))],
            negatives: vec![NegativePair {
                p: pr(0),
                q: pr(2),
                margin: 2.0,
            }],
        };
        let (r, g) = total_loss(&batch, &m, 0.0).unwrap();
        let (pull, gp) = pull_loss(&batch, &m).unwrap();
        assert_eq!(r.total, pull);
        assert_eq!(g, gp);
    }

    #[test]
    fn mining_selection() {
        let m = table(&[vec![0.0], vec![0.1], vec![0.9], vec![0.4]]);
        let candidates: Vec<NegativePair> = (1..4)
            .map(|i| NegativePair {
                p: pr(0),
                q: pr(i),
                margin: 1.0,
            })
            .collect();
        let kept = mine_hard_negatives(&candidates, &m, 2).unwrap();
        assert_eq!(kept, vec![candidates[0], candidates[2]]);
        assert_eq!(mine_hard_negatives(&candidates, &m, 3).unwrap(), candidates);
        assert!(mine_hard_negatives(&candidates, &m, 4).is_err());
    }

    #[test]
    fn ties_keep_lower_index() {
        assert_eq!(smallest_indices(&[0.5, 0.2, 0.2, 0.2], 2), vec![1, 2]);
    }

    #[test]
    fn tree_sum_is_order_fixed() {
        let v: Vec<f64> = (0..1000).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        assert_eq!(pairwise_sum(&v), pairwise_sum(&v.clone()));
        assert!((pairwise_sum(&v) - v.iter().sum::<f64>()).abs() < 1e-12);
    }
}
