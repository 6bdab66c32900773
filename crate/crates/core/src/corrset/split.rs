use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::types::Dataset;
use crate::error::{Error, Result};

/// Disjoint train/validation/test partition of a category's model ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitPart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitPart::Train),
            "val" => Ok(SplitPart::Val),
            "test" => Ok(SplitPart::Test),
            other => Err(Error::InvalidArgument(format!(
                "unknown split `{other}` (expected train, val or test)"
            ))),
        }
    }
}

impl Split {
    pub fn part(&self, part: SplitPart) -> &[String] {
        match part {
            SplitPart::Train => &self.train,
            SplitPart::Val => &self.val,
            SplitPart::Test => &self.test,
        }
    }

    /// Dataset model indices for one part.
    pub fn indices(&self, dataset: &Dataset, part: SplitPart) -> Result<Vec<usize>> {
        self.part(part)
            .iter()
            .map(|id| {
                dataset
                    .model_index(id)
                    .ok_or_else(|| Error::UnknownModel(id.clone()))
            })
            .collect()
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let split: Split =
            serde_json::from_slice(bytes).map_err(|e| Error::Schema(format!("split file: {e}")))?;
        let mut all: Vec<&String> = split.train.iter().chain(&split.val).chain(&split.test).collect();
        let n = all.len();
        all.sort();
        all.dedup();
        if all.len() != n {
            return Err(Error::Schema("split parts are not disjoint".into()));
        }
        Ok(split)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split serializes") + "\n"
    }
}

/// Seeded shuffle, then 15% validation and 15% test (floored, at least one
/// model each); the remainder trains. Each part lists models in dataset
/// order.
pub fn split_models(dataset: &Dataset, seed: u64) -> Result<Split> {
    let n = dataset.models().len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "splitting needs at least 3 models, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64 * 0.15).floor() as usize).max(1);
    let n_test = ((n as f64 * 0.15).floor() as usize).max(1);
    let ids = |slice: &[usize]| {
        let mut s = slice.to_vec();
        s.sort_unstable();
        s.into_iter()
            .map(|i| dataset.models()[i].id.clone())
            .collect::<Vec<_>>()
    };
    Ok(Split {
        val: ids(&order[..n_val]),
        test: ids(&order[n_val..n_val + n_test]),
        train: ids(&order[n_val + n_test..]),
    })
}
