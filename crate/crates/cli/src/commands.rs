use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use densecorr::corrset::{
    crop_partial, parse_dataset, split_models, synthesize_with_symmetry, Dataset, Split, ANNOTATION_FILE,
};
use densecorr::embedding::{history_csv, train as train_model, EmbeddingModel, Embeddings, ModelKind};
use densecorr::geometry::{
    build_cloud_graph, build_mesh_graph, geodesics_from, load_mesh, normalize_unit_sphere, sample_cloud,
    PointCloud,
};
use densecorr::metrics::{
    colored_ply, embedding_colors, mge, oracle_embeddings, random_baseline, retrieve, EvalReport,
    REPORT_CSV_HEADER,
};
use densecorr::prepare::{derive_seed, prepare, Prepared};
use densecorr::registration::{align_with_model, perturb, RegistrationResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{EvalSplit, GraphKind, RunConfig, TrainPool};
use crate::error::{CliError, CliResult};
use crate::{stream, write_file};

pub const MODEL_FILE: &str = "model.dcemb";
pub const LOSS_FILE: &str = "loss.csv";
pub const VALIDATION_FILE: &str = "validation.csv";
pub const SPLIT_FILE: &str = "split.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const REGISTRATION_CSV: &str = "registration.csv";
pub const MATCHES_CSV: &str = "matches.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const DISTANCES_CSV: &str = "distances.csv";
pub const NODES_CSV: &str = "nodes.csv";
pub const REGISTRATION_CSV_HEADER: &str = "category,pair_id,level,rot_error_deg,trans_error,inliers,method";
pub const MATCHES_CSV_HEADER: &str =
    "category,source,target,set_id,source_index,retrieved_index,geodesic_error";

fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(densecorr::Error::from)?;
    v.push(b'\n');
    Ok(v)
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    path.as_deref()
        .ok_or_else(|| CliError::Usage(format!("{flag} is required")))
}

fn load_dataset(config: &RunConfig) -> CliResult<Dataset> {
    let dir = required(&config.paths.data, "--data")?;
    Ok(parse_dataset(dir.join(ANNOTATION_FILE), dir)?)
}

fn load_prepared(config: &RunConfig) -> CliResult<Prepared> {
    let dataset = load_dataset(config)?;
    Ok(prepare(&dataset, &config.data.prepare_config(config.seed))?)
}

fn load_model(config: &RunConfig) -> CliResult<EmbeddingModel> {
    Ok(EmbeddingModel::load(required(&config.paths.model, "--model")?)?)
}

/// The configured split file, else `split.json` beside the model.
fn split_path(config: &RunConfig) -> Option<PathBuf> {
    config.paths.split.clone().or_else(|| {
        config
            .paths
            .model
            .as_ref()
            .map(|m| m.parent().unwrap_or(Path::new(".")).join(SPLIT_FILE))
    })
}

fn load_split(config: &RunConfig) -> CliResult<Split> {
    let path = split_path(config)
        .ok_or_else(|| CliError::Usage("a split file is needed: pass --split-file or --model".into()))?;
    if !path.is_file() {
        return Err(CliError::MissingSplit(path));
    }
    Ok(Split::load(&path)?)
}

fn test_models(config: &RunConfig, dataset: &Dataset) -> CliResult<Vec<usize>> {
    let models = load_split(config)?.indices(dataset, densecorr::corrset::SplitPart::Test)?;
    if models.len() < 2 {
        return Err(CliError::Usage(format!(
            "the test split has {} model(s); at least two are needed",
            models.len()
        )));
    }
    Ok(models)
}

fn require_network(model: &EmbeddingModel, command: &str) -> CliResult<()> {
    if model.kind() != ModelKind::CoordMlp {
        return Err(densecorr::Error::Registration(format!(
            "{command} needs a coord_mlp model; a {} cannot embed new clouds",
            model.kind()
        ))
        .into());
    }
    Ok(())
}

/// A free table must have been trained on exactly these clouds.
fn check_compatible(model: &EmbeddingModel, prepared: &Prepared) -> CliResult<()> {
    if model.kind() != ModelKind::FreeTable {
        return Ok(());
    }
    let ids: Vec<&str> = prepared.dataset.models().iter().map(|m| m.id.as_str()).collect();
    let rows: Vec<usize> = prepared.models.iter().map(|m| m.cloud.len()).collect();
    if model.models().iter().map(String::as_str).ne(ids.iter().copied()) || model.rows() != rows {
        return Err(densecorr::Error::Embedding(
            "incompatible model: the free table was trained on different models or cloud sizes".into(),
        )
        .into());
    }
    Ok(())
}

fn concat(parts: &[&Embeddings]) -> CliResult<Embeddings> {
    let dim = parts.first().map_or(1, |e| e.dimension());
    let data: Vec<f64> = parts.iter().flat_map(|e| e.data().iter().copied()).collect();
    Ok(Embeddings::new(dim, data)?)
}

/// One PLY per cloud, colored by principal components shared across all
/// of them so corresponding points get similar colors.
fn write_joint_ply(dir: &Path, items: &[(String, &PointCloud, &Embeddings)]) -> CliResult<()> {
    let all = concat(&items.iter().map(|i| i.2).collect::<Vec<_>>())?;
    let colors = embedding_colors(&all);
    let mut start = 0;
    for (name, cloud, emb) in items {
        let end = start + emb.len();
        write_file(
            &dir.join(format!("{name}.ply")),
            colored_ply(cloud, &colors[start..end])?,
        )?;
        start = end;
    }
    Ok(())
}

pub fn synth(config: &RunConfig, out: &Path) -> CliResult<()> {
    let s = &config.synth;
    let category = synthesize_with_symmetry(s.family.parse()?, s.models, s.sets, config.seed, s.symmetry)?;
    category.write(out)?;
    Ok(())
}

pub fn train(config: &RunConfig, out: &Path) -> CliResult<()> {
    let prepared = load_prepared(config)?;
    let dataset = &prepared.dataset;
    let split = split_models(dataset, derive_seed(config.seed, stream::SPLIT))?;
    let part = |p| split.indices(dataset, p);
    let (train_ids, val_ids) = (
        part(densecorr::corrset::SplitPart::Train)?,
        part(densecorr::corrset::SplitPart::Val)?,
    );
    let pool = match config.model.pool {
        TrainPool::Train => train_ids,
        TrainPool::All => (0..dataset.models().len()).collect(),
    };
    let ids: Vec<String> = dataset.models().iter().map(|m| m.id.clone()).collect();
    let init = derive_seed(config.seed, stream::INIT);
    let model = match config.model.kind {
        ModelKind::FreeTable => {
            let rows = prepared.models.iter().map(|m| m.cloud.len()).collect();
            EmbeddingModel::free_table(ids, rows, config.model.dimension, init)?
        }
        ModelKind::CoordMlp => EmbeddingModel::coord_mlp(ids, config.model.dimension, init)?,
    };
    let outcome = train_model(&prepared, &pool, &val_ids, model, &config.train)?;
    write_file(&out.join(MODEL_FILE), outcome.model.encode())?;
    write_file(&out.join(LOSS_FILE), history_csv(&outcome.history))?;
    let mut val = String::from("epoch,mge\n");
    for v in &outcome.validation {
        let _ = writeln!(val, "{},{}", v.epoch, v.mge);
    }
    write_file(&out.join(VALIDATION_FILE), val)?;
    write_file(&out.join(SPLIT_FILE), split.to_json())?;
    Ok(())
}

#[derive(Serialize)]
struct MethodReport<'a> {
    method: &'a str,
    #[serde(flatten)]
    report: &'a EvalReport,
}

pub fn eval(config: &RunConfig, out: &Path) -> CliResult<()> {
    let e = &config.eval;
    let model = config
        .paths
        .model
        .as_ref()
        .map(|_| load_model(config))
        .transpose()?;
    if model.is_none() && !e.random && !e.oracle {
        return Err(CliError::Usage(
            "nothing to evaluate: pass --model, --oracle or --random".into(),
        ));
    }
    // resolve the split before the expensive preparation
    let split = match e.split {
        EvalSplit::All => None,
        _ => Some(load_split(config)?),
    };
    let prepared = load_prepared(config)?;
    let models = match (split, e.split.part()) {
        (Some(s), Some(part)) => s.indices(&prepared.dataset, part)?,
        _ => (0..prepared.dataset.models().len()).collect(),
    };
    let mut reports: Vec<(String, EvalReport)> = Vec::new();
    if let Some(m) = &model {
        check_compatible(m, &prepared)?;
        reports.push((m.kind().to_string(), mge(m, &prepared, &models)?));
    }
    if e.oracle {
        reports.push((
            "oracle".into(),
            mge(&oracle_embeddings(&prepared), &prepared, &models)?,
        ));
    }
    if e.random {
        let seed = derive_seed(config.seed, stream::RANDOM);
        reports.push((
            "random".into(),
            random_baseline(&prepared, &models, e.random_trials, seed)?,
        ));
    }
    let listed: Vec<MethodReport> = reports
        .iter()
        .map(|(method, report)| MethodReport { method, report })
        .collect();
    write_file(&out.join(REPORT_JSON), json_bytes(&listed)?)?;
    let mut csv = format!("method,{REPORT_CSV_HEADER}\n");
    for (method, r) in &reports {
        let _ = writeln!(csv, "{method},{}", r.csv_row());
    }
    write_file(&out.join(REPORT_CSV), csv)?;

    if e.ply {
        let Some(m) = &model else {
            return Err(CliError::Usage("--ply needs --model".into()));
        };
        let embs = models
            .iter()
            .map(|&i| m.embed_cloud(i, &prepared.models[i].cloud))
            .collect::<densecorr::Result<Vec<_>>>()?;
        let items: Vec<_> = models
            .iter()
            .zip(&embs)
            .map(|(&i, emb)| {
                (
                    prepared.dataset.models()[i].id.clone(),
                    &prepared.models[i].cloud,
                    emb,
                )
            })
            .collect();
        write_joint_ply(&out.join("ply"), &items)?;
    }
    Ok(())
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

fn mean(values: &[f64]) -> f64 {
    densecorr::embedding::pairwise_sum(values) / values.len() as f64
}

#[derive(Serialize)]
struct Aggregate {
    median: f64,
    mean: f64,
}

#[derive(Serialize)]
struct RegistrationSummary<'a> {
    category: &'a str,
    level: &'a str,
    pairs: usize,
    method: &'a str,
    hypotheses: densecorr::registration::HypothesisSearch,
    rot_error_deg: Aggregate,
    trans_error: Aggregate,
}

pub fn register(config: &RunConfig, out: &Path) -> CliResult<()> {
    let model = load_model(config)?;
    require_network(&model, "register")?;
    let r = &config.register;
    if r.pairs == 0 {
        return Err(CliError::Usage("--pairs must be positive".into()));
    }
    let prepared = load_prepared(config)?;
    let dataset = &prepared.dataset;
    let test = test_models(config, dataset)?;
    let registration = r.registration();
    let method = model.kind().as_str();
    let category = dataset.category();
    let level = r.level.as_str();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, stream::REGISTER));
    let mut csv = format!("{REGISTRATION_CSV_HEADER}\n");
    let (mut rot, mut trans, mut inl) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..r.pairs {
        let a = test[rng.gen_range(0..test.len())];
        let b = loop {
            let b = test[rng.gen_range(0..test.len())];
            if b != a {
                break b;
            }
        };
        let (target, truth) = perturb(&prepared.models[b].cloud, r.level, &mut rng);
        let alignment = align_with_model(
            &model,
            &prepared.models[a].cloud,
            &target,
            &registration,
            &mut rng,
        )?;
        let res = RegistrationResult::new(alignment.transform, truth, alignment.inliers);
        let pair_id = format!("{k}:{}:{}", dataset.models()[a].id, dataset.models()[b].id);
        let _ = writeln!(
            csv,
            "{category},{pair_id},{level},{},{},{},{method}",
            res.rot_error, res.trans_error, res.inlier_count
        );
        rot.push(res.rot_error);
        trans.push(res.trans_error);
        inl.push(res.inlier_count as f64);
    }
    for (name, agg) in [("median", median as fn(&[f64]) -> f64), ("mean", mean)] {
        let _ = writeln!(
            csv,
            "{category},{name},{level},{},{},{},{method}",
            agg(&rot),
            agg(&trans),
            agg(&inl)
        );
    }
    write_file(&out.join(REGISTRATION_CSV), csv)?;
    let summary = RegistrationSummary {
        category,
        level,
        pairs: r.pairs,
        method,
        hypotheses: r.hypotheses,
        rot_error_deg: Aggregate {
            median: median(&rot),
            mean: mean(&rot),
        },
        trans_error: Aggregate {
            median: median(&trans),
            mean: mean(&trans),
        },
    };
    write_file(&out.join(SUMMARY_JSON), json_bytes(&summary)?)
}

/// One surviving annotated point of a cropped cloud and what it retrieved
/// on a complete object.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialMatch {
    pub source: usize,
    pub target: usize,
    pub set_id: u32,
    /// Index in the uncropped source cloud.
    pub source_index: usize,
    pub retrieved_index: usize,
    pub geodesic_error: f64,
}

/// Model id, cropped cloud and its embeddings, for PLY export.
pub type PartialExport = (String, PointCloud, Embeddings);

/// Crops each model in `models` (keeping `keep_fraction`), pairs it with
/// the next model in the list and retrieves every surviving annotated
/// point. Errors on the target take the closest member of its hyperpoint.
pub fn partial_matches(
    model: &EmbeddingModel,
    prepared: &Prepared,
    models: &[usize],
    keep_fraction: f64,
    seed: u64,
) -> CliResult<(Vec<PartialMatch>, Vec<PartialExport>)> {
    let mut matches = Vec::new();
    let mut exports = Vec::new();
    for (k, &a) in models.iter().enumerate() {
        let b = models[(k + 1) % models.len()];
        let crop = crop_partial(
            &prepared.models[a].cloud,
            keep_fraction,
            derive_seed(seed, k as u64),
        )?;
        let src = model.embed_cloud(a, &crop.cloud)?;
        let tgt = model.embed_cloud(b, &prepared.models[b].cloud)?;
        let target = &prepared.models[b];
        for set in prepared.dataset.sets() {
            let (Some(p), Some(q)) = (set.entry_for(a), set.entry_for(b)) else {
                continue;
            };
            let targets = q.cloud_indices()?;
            for i in p.cloud_indices()? {
                let Some(local) = crop.new_index(i) else {
                    continue;
                };
                let x = retrieve(src.row(local), &tgt);
                let mut err = f64::INFINITY;
                for &t in &targets {
                    let d = target.geodesics.between(t, x).ok_or_else(|| {
                        densecorr::Error::InvalidArgument(format!("no geodesics from cloud point {t}"))
                    })?;
                    err = err.min(d);
                }
                matches.push(PartialMatch {
                    source: a,
                    target: b,
                    set_id: set.set_id(),
                    source_index: i,
                    retrieved_index: x,
                    geodesic_error: err,
                });
            }
        }
        let ids = prepared.dataset.models();
        exports.push((format!("{k:03}_{}_partial", ids[a].id), crop.cloud, src));
        exports.push((
            format!("{k:03}_{}_complete", ids[b].id),
            target.cloud.clone(),
            tgt,
        ));
    }
    Ok((matches, exports))
}

#[derive(Serialize)]
struct PartialSummary<'a> {
    category: &'a str,
    keep_fraction: f64,
    pairs: usize,
    surviving_points: usize,
    geodesic_error: Aggregate,
}

pub fn match_partial(config: &RunConfig, out: &Path) -> CliResult<()> {
    let keep = config.partial.keep_fraction;
    if !(keep > 0.0 && keep < 1.0) {
        return Err(densecorr::Error::InvalidArgument(format!(
            "keep fraction must lie strictly between 0 and 1, got {keep}"
        ))
        .into());
    }
    let model = load_model(config)?;
    require_network(&model, "match-partial")?;
    let prepared = load_prepared(config)?;
    let test = test_models(config, &prepared.dataset)?;
    let seed = derive_seed(config.seed, stream::PARTIAL);
    let (matches, exports) = partial_matches(&model, &prepared, &test, keep, seed)?;
    let category = prepared.dataset.category();
    let ids = prepared.dataset.models();
    let mut csv = format!("{MATCHES_CSV_HEADER}\n");
    for m in &matches {
        let _ = writeln!(
            csv,
            "{category},{},{},{},{},{},{}",
            ids[m.source].id, ids[m.target].id, m.set_id, m.source_index, m.retrieved_index, m.geodesic_error
        );
    }
    write_file(&out.join(MATCHES_CSV), csv)?;
    let errors: Vec<f64> = matches.iter().map(|m| m.geodesic_error).collect();
    let summary = PartialSummary {
        category,
        keep_fraction: keep,
        pairs: test.len(),
        surviving_points: matches.len(),
        geodesic_error: Aggregate {
            median: median(&errors),
            mean: mean(&errors),
        },
    };
    write_file(&out.join(SUMMARY_JSON), json_bytes(&summary)?)?;
    for pair in exports.chunks(2) {
        let items: Vec<_> = pair.iter().map(|(n, c, e)| (n.clone(), c, e)).collect();
        write_joint_ply(&out.join("ply"), &items)?;
    }
    Ok(())
}

pub fn geodesic(config: &RunConfig, out: &Path) -> CliResult<()> {
    let g = &config.geodesic;
    let mut mesh = load_mesh(required(&config.paths.mesh, "--mesh")?)?;
    if g.normalize {
        mesh = normalize_unit_sphere(&mesh)?;
    }
    let (graph, nodes) = match g.graph {
        GraphKind::Mesh => (build_mesh_graph(&mesh)?, mesh.vertices().to_vec()),
        GraphKind::Cloud => {
            let seed = derive_seed(config.data.seed.unwrap_or(config.seed), stream::GEODESIC);
            let cloud = sample_cloud(&mesh, config.data.points, &[], seed)?;
            (
                build_cloud_graph(&cloud, config.data.neighbors)?,
                cloud.points().to_vec(),
            )
        }
    };
    if g.sources.is_empty() {
        return Err(CliError::Usage("at least one --source is required".into()));
    }
    let field = geodesics_from(&graph, &g.sources)?;
    write_file(&out.join(DISTANCES_CSV), field.to_csv())?;
    let mut csv = String::from("node,x,y,z\n");
    for (i, p) in nodes.iter().enumerate() {
        let _ = writeln!(csv, "{i},{},{},{}", p.x, p.y, p.z);
    }
    write_file(&out.join(NODES_CSV), csv)
}
