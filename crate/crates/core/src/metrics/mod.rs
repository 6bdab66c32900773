//! Mean geodesic error of embedding retrieval and its baselines.

mod ply;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{pairwise_sum, EmbeddingModel, Embeddings};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::prepare::{derive_seed, Prepared};

pub use ply::{colored_ply, embedding_colors, embedding_ply};

/// Anything that maps every point of a model's cloud to a vector.
pub trait PointEmbedder: Sync {
    fn dimension(&self) -> usize;
    fn embed_cloud(&self, model: usize, cloud: &PointCloud) -> Result<Embeddings>;
}

impl PointEmbedder for EmbeddingModel {
    fn dimension(&self) -> usize {
        EmbeddingModel::dimension(self)
    }

    fn embed_cloud(&self, model: usize, cloud: &PointCloud) -> Result<Embeddings> {
        EmbeddingModel::embed_cloud(self, model, cloud)
    }
}

/// Precomputed embeddings, one block per model.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedEmbeddings {
    dimension: usize,
    per_model: Vec<Embeddings>,
}

impl FixedEmbeddings {
    pub fn new(per_model: Vec<Embeddings>) -> Result<Self> {
        let dimension = per_model.first().map_or(1, Embeddings::dimension);
        if let Some(bad) = per_model.iter().find(|e| e.dimension() != dimension) {
            return Err(Error::ShapeMismatch {
                expected: dimension,
                actual: bad.dimension(),
            });
        }
        Ok(FixedEmbeddings { dimension, per_model })
    }
}

impl PointEmbedder for FixedEmbeddings {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_cloud(&self, model: usize, cloud: &PointCloud) -> Result<Embeddings> {
        let e = self.per_model.get(model).ok_or(Error::IndexOutOfRange {
            index: model,
            len: self.per_model.len(),
        })?;
        if e.len() != cloud.len() {
            return Err(Error::ShapeMismatch {
                expected: cloud.len(),
                actual: e.len(),
            });
        }
        Ok(e.clone())
    }
}

/// One-hot embedding per set for annotated points; every other point gets
/// its own extra axis.
pub fn oracle_embeddings(prepared: &Prepared) -> FixedEmbeddings {
    let n_sets = prepared.dataset.sets().len();
    let dim = n_sets + 1;
    let per_model = prepared
        .models
        .iter()
        .enumerate()
        .map(|(m, pm)| {
            let mut data = vec![0.0; pm.cloud.len() * dim];
            for i in 0..pm.cloud.len() {
                data[i * dim + n_sets] = 1.0;
            }
            for (s, h) in prepared.dataset.annotations_on(m) {
                for p in h.members() {
                    let i = p.cloud_index.expect("prepared datasets are attached");
                    data[i * dim..(i + 1) * dim].fill(0.0);
                    data[i * dim + s] = 1.0;
                }
            }
            Embeddings::new(dim, data).expect("consistent shape")
        })
        .collect();
    FixedEmbeddings::new(per_model).expect("consistent dimension")
}

/// I.i.d. uniform(-1, 1) embeddings for every cloud point.
pub fn random_embeddings(prepared: &Prepared, dimension: usize, seed: u64) -> FixedEmbeddings {
    let per_model = prepared
        .models
        .iter()
        .enumerate()
        .map(|(m, pm)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, m as u64));
            let data = (0..pm.cloud.len() * dimension)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            Embeddings::new(dimension, data).expect("consistent shape")
        })
        .collect();
    FixedEmbeddings::new(per_model).expect("consistent dimension")
}

/// Index of the row nearest to `query`; ties go to the lowest index.
pub fn retrieve(query: &[f64], target: &Embeddings) -> usize {
    let mut best = (f64::INFINITY, 0);
    for j in 0..target.len() {
        let d: f64 = target
            .row(j)
            .iter()
            .zip(query)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if d < best.0 {
            best = (d, j);
        }
    }
    best.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetError {
    pub set_id: u32,
    pub mge: f64,
    pub mee: f64,
    pub pair_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub category: String,
    pub mge: f64,
    /// Error sum divided by sets x models^2 instead of the pair count.
    pub mge_literal_denominator: f64,
    pub mee: f64,
    pub pair_count: usize,
    pub models: usize,
    pub sets: usize,
    pub per_set: Vec<SetError>,
}

pub const REPORT_CSV_HEADER: &str = "category,mge,mge_literal_denominator,mee,pair_count";

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.category, self.mge, self.mge_literal_denominator, self.mee, self.pair_count
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{REPORT_CSV_HEADER}\n{}\n", self.csv_row())
    }
}

struct Query {
    set: usize,
    source: usize,
    target: usize,
}

/// Mean geodesic and Euclidean retrieval error over every ordered pair of
/// distinct models in `models` that share a set.
///
/// For a source point p the retrieved point x on the target model is the
/// embedding-nearest cloud point; its error is the geodesic distance to
/// the target's annotated point (the closest member for a hyperpoint).
/// Source hyperpoints average the errors of their members.
pub fn mge(embedder: &dyn PointEmbedder, prepared: &Prepared, models: &[usize]) -> Result<EvalReport> {
    if models.is_empty() {
        return Err(Error::InvalidArgument("no models to evaluate".into()));
    }
    let dataset = &prepared.dataset;
    let mut slot = vec![None; dataset.models().len()];
    for (k, &m) in models.iter().enumerate() {
        *slot.get_mut(m).ok_or(Error::IndexOutOfRange {
            index: m,
            len: dataset.models().len(),
        })? = Some(k);
    }
    let embeddings = models
        .par_iter()
        .map(|&m| embedder.embed_cloud(m, &prepared.models[m].cloud))
        .collect::<Result<Vec<_>>>()?;

    let mut queries = Vec::new();
    for (s, set) in dataset.sets().iter().enumerate() {
        let present: Vec<usize> = set
            .entries()
            .iter()
            .map(|e| e.model)
            .filter(|&m| slot[m].is_some())
            .collect();
        for &a in &present {
            for &b in &present {
                if a != b {
                    queries.push(Query {
                        set: s,
                        source: a,
                        target: b,
                    });
                }
            }
        }
    }
    if queries.is_empty() {
        return Err(Error::InvalidArgument(
            "no set is annotated on two of the evaluated models".into(),
        ));
    }

    let errors = queries
        .par_iter()
        .map(|q| {
            let set = &dataset.sets()[q.set];
            let sources = set.entry_for(q.source).expect("listed").cloud_indices()?;
            let targets = set.entry_for(q.target).expect("listed").cloud_indices()?;
            let src_emb = &embeddings[slot[q.source].expect("evaluated")];
            let tgt_emb = &embeddings[slot[q.target].expect("evaluated")];
            let tgt = &prepared.models[q.target];
            let mut geo = 0.0;
            let mut euc = 0.0;
            for &p in &sources {
                let x = retrieve(src_emb.row(p), tgt_emb);
                let xp = tgt.cloud.points()[x];
                let mut g = f64::INFINITY;
                let mut e = f64::INFINITY;
                for &t in &targets {
                    let d = tgt.geodesics.between(t, x).ok_or_else(|| {
                        Error::InvalidArgument(format!("no geodesics from cloud point {t}"))
                    })?;
                    g = g.min(d);
                    e = e.min((tgt.cloud.points()[t] - xp).norm());
                }
                geo += g;
                euc += e;
            }
            let n = sources.len() as f64;
            Ok((geo / n, euc / n))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;

    let mut per_set = Vec::new();
    let (mut geo_sum, mut euc_sum) = (0.0, 0.0);
    let mut start = 0;
    while start < queries.len() {
        let s = queries[start].set;
        let end = start + queries[start..].iter().take_while(|q| q.set == s).count();
        let geo: Vec<f64> = errors[start..end].iter().map(|e| e.0).collect();
        let euc: Vec<f64> = errors[start..end].iter().map(|e| e.1).collect();
        let (g, e) = (pairwise_sum(&geo), pairwise_sum(&euc));
        let n = end - start;
        per_set.push(SetError {
            set_id: dataset.sets()[s].set_id(),
            mge: g / n as f64,
            mee: e / n as f64,
            pair_count: n,
        });
        geo_sum += g;
        euc_sum += e;
        start = end;
    }
    let pair_count = queries.len();
    let literal = (dataset.sets().len() * models.len() * models.len()) as f64;
    Ok(EvalReport {
        category: dataset.category().to_string(),
        mge: geo_sum / pair_count as f64,
        mge_literal_denominator: geo_sum / literal,
        mee: euc_sum / pair_count as f64,
        pair_count,
        models: models.len(),
        sets: dataset.sets().len(),
        per_set,
    })
}

pub fn mee(embedder: &dyn PointEmbedder, prepared: &Prepared, models: &[usize]) -> Result<f64> {
    Ok(mge(embedder, prepared, models)?.mee)
}

/// Dimension of the random-embedding baseline.
pub const RANDOM_DIMENSION: usize = 128;

/// Report averaged over `trials` independent random embeddings.
pub fn random_baseline(
    prepared: &Prepared,
    models: &[usize],
    trials: usize,
    seed: u64,
) -> Result<EvalReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument(
            "random baseline needs at least one trial".into(),
        ));
    }
    let reports = (0..trials)
        .map(|t| {
            let emb = random_embeddings(prepared, RANDOM_DIMENSION, derive_seed(seed, t as u64));
            mge(&emb, prepared, models)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = |f: &dyn Fn(&EvalReport) -> f64| {
        pairwise_sum(&reports.iter().map(f).collect::<Vec<_>>()) / trials as f64
    };
    let mut out = reports[0].clone();
    out.mge = mean(&|r| r.mge);
    out.mee = mean(&|r| r.mee);
    out.mge_literal_denominator = mean(&|r| r.mge_literal_denominator);
    for (i, s) in out.per_set.iter_mut().enumerate() {
        s.mge = mean(&|r| r.per_set[i].mge);
        s.mee = mean(&|r| r.per_set[i].mee);
    }
    Ok(out)
}
