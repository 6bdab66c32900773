//! Dense semantic point embeddings learned from sparse correspondence-set
//! annotations, with geodesic evaluation and embedding-driven registration.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corrset;
pub mod embedding;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod prepare;
pub mod registration;

pub use error::{Error, Result};
