use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

pub const DEFAULT_DIMENSION: usize = 128;
pub const HIDDEN: usize = 64;
const FREE_TABLE_INIT: f64 = 0.01;
const MAGIC: &[u8; 8] = b"DCEMB001";
const MAX_DIMENSION: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    FreeTable,
    CoordMlp,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::FreeTable => "free_table",
            ModelKind::CoordMlp => "coord_mlp",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "free_table" => Ok(ModelKind::FreeTable),
            "coord_mlp" => Ok(ModelKind::CoordMlp),
            other => Err(Error::InvalidArgument(format!(
                "unknown model kind `{other}` (expected free_table or coord_mlp)"
            ))),
        }
    }
}

/// A point to embed: a cloud slot of a model plus its coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointRef {
    pub model: usize,
    pub index: usize,
    pub position: Point3,
}

/// Row-major block of embedding vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    dimension: usize,
    data: Vec<f64>,
}

impl Embeddings {
    pub fn new(dimension: usize, data: Vec<f64>) -> Result<Self> {
        if dimension == 0 || !data.len().is_multiple_of(dimension) {
            return Err(Error::ShapeMismatch {
                expected: dimension,
                actual: data.len(),
            });
        }
        Ok(Embeddings { dimension, data })
    }

    pub fn from_rows(dimension: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dimension);
        for r in rows {
            if r.len() != dimension {
                return Err(Error::ShapeMismatch {
                    expected: dimension,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Embeddings::new(dimension, data)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// The learned map from points to `dimension`-vectors.
///
/// `free_table` stores one row per cloud point per model; `coord_mlp` is a
/// 3-64-64-D tanh network of the point coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    kind: ModelKind,
    dimension: usize,
    models: Vec<String>,
    rows: Vec<usize>,
    offsets: Vec<usize>,
    params: Vec<f64>,
}

struct MlpLayout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    len: usize,
}

fn mlp_layout(d: usize) -> MlpLayout {
    let w1 = 0;
    let b1 = w1 + HIDDEN * 3;
    let w2 = b1 + HIDDEN;
    let b2 = w2 + HIDDEN * HIDDEN;
    let w3 = b2 + HIDDEN;
    let b3 = w3 + d * HIDDEN;
    MlpLayout {
        w1,
        b1,
        w2,
        b2,
        w3,
        b3,
        len: b3 + d,
    }
}

struct MlpTrace {
    h1: [f64; HIDDEN],
    h2: [f64; HIDDEN],
}

fn offsets_of(rows: &[usize]) -> Vec<usize> {
    let mut acc = 0;
    rows.iter()
        .map(|r| {
            let o = acc;
            acc += r;
            o
        })
        .collect()
}

impl EmbeddingModel {
    /// Table with `rows[i]` entries for model `models[i]`, initialized
    /// uniformly in (-0.01, 0.01).
    pub fn free_table(models: Vec<String>, rows: Vec<usize>, dimension: usize, seed: u64) -> Result<Self> {
        check_dimension(dimension)?;
        if models.len() != rows.len() {
            return Err(Error::ShapeMismatch {
                expected: models.len(),
                actual: rows.len(),
            });
        }
        let total: usize = rows.iter().sum();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..total * dimension)
            .map(|_| rng.gen_range(-FREE_TABLE_INIT..FREE_TABLE_INIT))
            .collect();
        Ok(EmbeddingModel {
            kind: ModelKind::FreeTable,
            dimension,
            offsets: offsets_of(&rows),
            models,
            rows,
            params,
        })
    }

    /// Network with weights and biases uniform in ±1/sqrt(fan_in).
    pub fn coord_mlp(models: Vec<String>, dimension: usize, seed: u64) -> Result<Self> {
        check_dimension(dimension)?;
        let l = mlp_layout(dimension);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; l.len];
        for (range, fan_in) in [(l.w1..l.w2, 3usize), (l.w2..l.w3, HIDDEN), (l.w3..l.len, HIDDEN)] {
            let a = 1.0 / (fan_in as f64).sqrt();
            for p in &mut params[range] {
                *p = rng.gen_range(-a..a);
            }
        }
        Ok(EmbeddingModel {
            kind: ModelKind::CoordMlp,
            dimension,
            models,
            rows: Vec::new(),
            offsets: Vec::new(),
            params,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Model ids: the table's row owners, or the training models of a network.
    pub fn models(&self) -> &[String] {
        &self.models
    }

    /// Rows per model of a free table; empty for a network.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    fn table_row(&self, p: &PointRef) -> Result<usize> {
        let rows = *self.rows.get(p.model).ok_or(Error::IndexOutOfRange {
            index: p.model,
            len: self.rows.len(),
        })?;
        if p.index >= rows {
            return Err(Error::IndexOutOfRange {
                index: p.index,
                len: rows,
            });
        }
        Ok(self.offsets[p.model] + p.index)
    }

    fn mlp_forward(&self, x: &Point3, out: &mut [f64]) -> MlpTrace {
        let l = mlp_layout(self.dimension);
        let w = &self.params;
        let mut h1 = [0.0; HIDDEN];
        for (i, h) in h1.iter_mut().enumerate() {
            let r = &w[l.w1 + 3 * i..l.w1 + 3 * i + 3];
            *h = (r[0] * x.x + r[1] * x.y + r[2] * x.z + w[l.b1 + i]).tanh();
        }
        let mut h2 = [0.0; HIDDEN];
        for (i, h) in h2.iter_mut().enumerate() {
            let r = &w[l.w2 + HIDDEN * i..l.w2 + HIDDEN * (i + 1)];
            *h = (dot(r, &h1) + w[l.b2 + i]).tanh();
        }
        for (i, o) in out.iter_mut().enumerate() {
            let r = &w[l.w3 + HIDDEN * i..l.w3 + HIDDEN * (i + 1)];
            *o = dot(r, &h2) + w[l.b3 + i];
        }
        MlpTrace { h1, h2 }
    }

    pub fn embed(&self, p: &PointRef) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dimension];
        match self.kind {
            ModelKind::FreeTable => {
                let r = self.table_row(p)?;
                out.copy_from_slice(&self.params[r * self.dimension..(r + 1) * self.dimension]);
            }
            ModelKind::CoordMlp => {
                if !(p.position.iter().all(|c| c.is_finite())) {
                    return Err(Error::Embedding("non-finite point coordinates".into()));
                }
                self.mlp_forward(&p.position, &mut out);
            }
        }
        Ok(out)
    }

    pub fn embed_points(&self, points: &[PointRef]) -> Result<Embeddings> {
        let rows = points
            .par_iter()
            .map(|p| self.embed(p))
            .collect::<Result<Vec<_>>>()?;
        Embeddings::from_rows(self.dimension, &rows)
    }

    /// Embeds every point of `cloud`, which is model `model`'s cloud for a
    /// free table and any cloud for a network.
    pub fn embed_cloud(&self, model: usize, cloud: &PointCloud) -> Result<Embeddings> {
        if self.kind == ModelKind::FreeTable {
            let rows = *self.rows.get(model).ok_or(Error::IndexOutOfRange {
                index: model,
                len: self.rows.len(),
            })?;
            if rows != cloud.len() {
                return Err(Error::ShapeMismatch {
                    expected: rows,
                    actual: cloud.len(),
                });
            }
        }
        let points: Vec<PointRef> = cloud
            .points()
            .iter()
            .enumerate()
            .map(|(index, &position)| PointRef {
                model,
                index,
                position,
            })
            .collect();
        self.embed_points(&points)
    }

    /// Adds d(grad_out . f(p)) / d(params) into `grad`.
    pub fn backward(&self, p: &PointRef, grad_out: &[f64], grad: &mut [f64]) -> Result<()> {
        if grad_out.len() != self.dimension {
            return Err(Error::ShapeMismatch {
                expected: self.dimension,
                actual: grad_out.len(),
            });
        }
        if grad.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                expected: self.params.len(),
                actual: grad.len(),
            });
        }
        match self.kind {
            ModelKind::FreeTable => {
                let r = self.table_row(p)?;
                for (g, o) in grad[r * self.dimension..(r + 1) * self.dimension]
                    .iter_mut()
                    .zip(grad_out)
                {
                    *g += o;
                }
            }
            ModelKind::CoordMlp => {
                let l = mlp_layout(self.dimension);
                let mut scratch = vec![0.0; self.dimension];
                let MlpTrace { h1, h2 } = self.mlp_forward(&p.position, &mut scratch);
                let w = &self.params;
                let mut gh2 = [0.0; HIDDEN];
                for (i, &go) in grad_out.iter().enumerate() {
                    let row = l.w3 + HIDDEN * i;
                    for j in 0..HIDDEN {
                        grad[row + j] += go * h2[j];
                        gh2[j] += w[row + j] * go;
                    }
                    grad[l.b3 + i] += go;
                }
                let mut gh1 = [0.0; HIDDEN];
                for i in 0..HIDDEN {
                    let gz = gh2[i] * (1.0 - h2[i] * h2[i]);
                    let row = l.w2 + HIDDEN * i;
                    for j in 0..HIDDEN {
                        grad[row + j] += gz * h1[j];
                        gh1[j] += w[row + j] * gz;
                    }
                    grad[l.b2 + i] += gz;
                }
                let x = [p.position.x, p.position.y, p.position.z];
                for i in 0..HIDDEN {
                    let gz = gh1[i] * (1.0 - h1[i] * h1[i]);
                    for (j, xj) in x.iter().enumerate() {
                        grad[l.w1 + 3 * i + j] += gz * xj;
                    }
                    grad[l.b1 + i] += gz;
                }
            }
        }
        Ok(())
    }

    /// Binary encoding: magic, header length (u32 LE), JSON header, then
    /// the parameters as little-endian f64.
    pub fn encode(&self) -> Vec<u8> {
        let header = ModelHeader {
            kind: self.kind,
            dimension: self.dimension,
            models: self.models.clone(),
            rows: self.rows.clone(),
            hidden: match self.kind {
                ModelKind::FreeTable => None,
                ModelKind::CoordMlp => Some(HIDDEN),
            },
            parameters: self.params.len(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(12 + json.len() + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::ModelFormat(m.to_string());
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic bytes"));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let rest = &bytes[12..];
        if header_len > rest.len() {
            return Err(bad("header length exceeds file size"));
        }
        let header: ModelHeader = serde_json::from_slice(&rest[..header_len])
            .map_err(|e| Error::ModelFormat(format!("header: {e}")))?;
        let blob = &rest[header_len..];
        check_dimension(header.dimension).map_err(|_| bad("dimension out of range"))?;
        let expected = match header.kind {
            ModelKind::FreeTable => {
                if header.rows.len() != header.models.len() {
                    return Err(bad("rows and models differ in length"));
                }
                if header.hidden.is_some() {
                    return Err(bad("free table has no hidden width"));
                }
                header
                    .rows
                    .iter()
                    .try_fold(0usize, |a, &r| a.checked_add(r))
                    .and_then(|t| t.checked_mul(header.dimension))
                    .ok_or_else(|| bad("parameter count overflows"))?
            }
            ModelKind::CoordMlp => {
                if header.hidden != Some(HIDDEN) || !header.rows.is_empty() {
                    return Err(bad("unsupported network layout"));
                }
                mlp_layout(header.dimension).len
            }
        };
        if header.parameters != expected {
            return Err(bad("parameter count does not match the layout"));
        }
        if expected.checked_mul(8) != Some(blob.len()) {
            return Err(bad("parameter blob has the wrong length"));
        }
        let params: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if params.iter().any(|p| !p.is_finite()) {
            return Err(bad("non-finite parameter"));
        }
        Ok(EmbeddingModel {
            kind: header.kind,
            dimension: header.dimension,
            offsets: offsets_of(&header.rows),
            models: header.models,
            rows: header.rows,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelHeader {
    kind: ModelKind,
    dimension: usize,
    models: Vec<String>,
    #[serde(default)]
    rows: Vec<usize>,
    #[serde(default)]
    hidden: Option<usize>,
    parameters: usize,
}

fn check_dimension(d: usize) -> Result<()> {
    if d == 0 || d > MAX_DIMENSION {
        return Err(Error::InvalidArgument(format!(
            "embedding dimension {d} is outside 1..={MAX_DIMENSION}"
        )));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pr(model: usize, index: usize, x: f64) -> PointRef {
        PointRef {
            model,
            index,
            position: Point3::new(x, -x, 0.5 * x),
        }
    }

    #[test]
    fn table_lookup() {
        let m = EmbeddingModel::free_table(vec!["a".into(), "b".into()], vec![2, 3], 4, 1).unwrap();
        let e = m.embed(&pr(1, 2, 0.0)).unwrap();
        let r = 2 + 2;
        assert_eq!(e, m.params()[r * 4..r * 4 + 4].to_vec());
        assert!(m.params().iter().all(|p| p.abs() < 0.01));
        assert!(m.embed(&pr(1, 3, 0.0)).is_err());
        assert!(m.embed(&pr(2, 0, 0.0)).is_err());
    }

    #[test]
    fn mlp_parameter_count() {
        let m = EmbeddingModel::coord_mlp(vec![], DEFAULT_DIMENSION, 0).unwrap();
        assert_eq!(m.parameter_count(), 12_736);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut m = EmbeddingModel::coord_mlp(vec![], 8, 0).unwrap();
        m.params_mut().fill(0.0);
        assert_eq!(m.embed(&pr(0, 0, 0.3)).unwrap(), vec![0.0; 8]);
    }

    #[test]
    fn network_depends_on_coordinates_only() {
        let m = EmbeddingModel::coord_mlp(vec![], 8, 3).unwrap();
        let a = m.embed(&pr(0, 0, 0.3)).unwrap();
        let b = m.embed(&pr(5, 99, 0.3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, m.embed(&pr(0, 0, 0.4)).unwrap());
    }

    #[test]
    fn network_backward_matches_finite_differences() {
        let m = EmbeddingModel::coord_mlp(vec![], 5, 11).unwrap();
        let p = pr(0, 0, 0.37);
        let w = [0.3, -1.2, 0.8, 0.1, -0.5];
        let mut grad = vec![0.0; m.parameter_count()];
        m.backward(&p, &w, &mut grad).unwrap();
        let f = |m: &EmbeddingModel| dot(&m.embed(&p).unwrap(), &w);
        let h = 1e-6;
        for i in (0..m.parameter_count()).step_by(37) {
            let mut plus = m.clone();
            plus.params_mut()[i] += h;
            let mut minus = m.clone();
            minus.params_mut()[i] -= h;
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() < 1e-7 * (1.0 + fd.abs()),
                "param {i}: {fd} vs {}",
                grad[i]
            );
        }
    }

    #[test]
    fn encode_round_trip() {
        for m in [
            EmbeddingModel::free_table(vec!["a".into()], vec![3], 4, 2).unwrap(),
            EmbeddingModel::coord_mlp(vec!["a".into(), "b".into()], 16, 2).unwrap(),
        ] {
            assert_eq!(EmbeddingModel::decode(&m.encode()).unwrap(), m);
        }
    }

    #[test]
    fn decode_rejects_damage() {
        let bytes = EmbeddingModel::coord_mlp(vec![], 4, 2).unwrap().encode();
        assert!(EmbeddingModel::decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(EmbeddingModel::decode(&bytes[1..]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(EmbeddingModel::decode(&extra).is_err());
        assert!(EmbeddingModel::decode(b"").is_err());
    }
}
