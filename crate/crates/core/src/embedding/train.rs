use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamState, TrainConfig};
use super::batch::{epoch_batches, make_batch};
use super::loss::{mine_hard_negatives, pairwise_sum, total_loss};
use super::model::{EmbeddingModel, PointRef};
use crate::corrset::SetDistances;
use crate::error::{Error, Result};
use crate::metrics::mge;
use crate::prepare::Prepared;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub step: usize,
    pub pull: f64,
    pub push: f64,
    pub total: f64,
    pub active_negatives: usize,
    pub lr: f64,
}

pub const HISTORY_CSV_HEADER: &str = "epoch,step,pull,push,total,active_negatives,lr";

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut out = String::from(HISTORY_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.epoch, r.step, r.pull, r.push, r.total, r.active_negatives, r.lr
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationPoint {
    pub epoch: usize,
    pub mge: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The snapshot with the lowest validation error, or the final
    /// parameters when no validation ran.
    pub model: EmbeddingModel,
    pub history: Vec<HistoryRow>,
    pub validation: Vec<ValidationPoint>,
    pub best_epoch: Option<usize>,
}

/// Trains on the annotations of the `pool` models. Margins come from the
/// same models. Every epoch shuffles the pool into batches; each batch
/// keeps as many hard negatives as it has positive pairs. Validation needs
/// at least two `val` models and is skipped otherwise.
pub fn train(
    prepared: &Prepared,
    pool: &[usize],
    val: &[usize],
    mut model: EmbeddingModel,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if pool.len() < 2 {
        return Err(Error::InvalidArgument(
            "training needs at least two models".into(),
        ));
    }
    let dataset = &prepared.dataset;
    let margins = SetDistances::compute(dataset, &prepared.geodesics(), pool)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = AdamState::new(model.parameter_count());
    let mut history = Vec::new();
    let mut validation = Vec::new();
    let mut best: Option<(f64, usize, EmbeddingModel)> = None;

    for epoch in 0..config.epochs {
        let groups = epoch_batches(pool, config.batch_models, &mut rng);
        for (step, group) in groups.iter().enumerate() {
            let mut batch = make_batch(dataset, group, &margins, config.same_model_negatives, &mut rng)?;
            if batch.positives.is_empty() || batch.negatives.is_empty() {
                continue;
            }
            let keep = batch.positives.len().min(batch.negatives.len());
            batch.negatives = mine_hard_negatives(&batch.negatives, &model, keep)?;
            let (report, grad) = total_loss(&batch, &model, config.lambda)?;
            let lr = adam_step(&mut model, &grad, &mut state, config, epoch)?;
            history.push(HistoryRow {
                epoch,
                step,
                pull: report.pull,
                push: report.push,
                total: report.total,
                active_negatives: report.active_negatives,
                lr,
            });
        }
        let due = config.validate_every > 0
            && ((epoch + 1) % config.validate_every == 0 || epoch + 1 == config.epochs);
        if due && val.len() >= 2 {
            let err = mge(&model, prepared, val)?.mge;
            validation.push(ValidationPoint { epoch, mge: err });
            if best.as_ref().is_none_or(|b| err < b.0) {
                best = Some((err, epoch, model.clone()));
            }
        }
    }
    let (model, best_epoch) = match best {
        Some((_, epoch, snapshot)) => (snapshot, Some(epoch)),
        None => (model, None),
    };
    Ok(TrainOutcome {
        model,
        history,
        validation,
        best_epoch,
    })
}

/// Mean embedding distance over all pairs of distinct annotated points of
/// `models`, all sets pooled.
pub fn annotated_spread(model: &EmbeddingModel, prepared: &Prepared, models: &[usize]) -> Result<f64> {
    let mut points = Vec::new();
    for &m in models {
        for (_, h) in prepared.dataset.annotations_on(m) {
            for p in h.members() {
                points.push(PointRef {
                    model: m,
                    index: p
                        .cloud_index
                        .ok_or_else(|| Error::InvalidArgument("dataset is not attached to clouds".into()))?,
                    position: p.position,
                });
            }
        }
    }
    if points.len() < 2 {
        return Err(Error::InvalidArgument("fewer than two annotated points".into()));
    }
    let emb = model.embed_points(&points)?;
    let mut d = Vec::with_capacity(points.len() * (points.len() - 1) / 2);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d.push(
                emb.row(i)
                    .iter()
                    .zip(emb.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt(),
            );
        }
    }
    Ok(pairwise_sum(&d) / d.len() as f64)
}
