//! Point embedding models, the pull/push objective and training.

mod adam;
mod batch;
mod loss;
mod model;
mod train;

pub use adam::{adam_step, AdamState, TrainConfig};
pub use batch::{draw_batch, epoch_batches, make_batch};
pub use loss::{
    mine_hard_negatives, pair_distances, pairwise_sum, pull_loss, push_loss, smallest_indices, total_loss,
    LossReport, NegativePair, PairBatch,
};
pub use model::{EmbeddingModel, Embeddings, ModelKind, PointRef, DEFAULT_DIMENSION, HIDDEN};
pub use train::{
    annotated_spread, history_csv, train, HistoryRow, TrainOutcome, ValidationPoint, HISTORY_CSV_HEADER,
};
