//! Command-line pipelines: synthesize data, train, evaluate, register,
//! match partial clouds and export geodesic fields. Every run writes its
//! resolved configuration and the tool version next to its outputs.

pub mod commands;
pub mod config;
pub mod error;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use densecorr::corrset::SymmetryMode;
use densecorr::embedding::ModelKind;
use densecorr::prepare::derive_seed;
use densecorr::registration::{HypothesisSearch, PerturbationLevel};

pub use config::RunConfig;
pub use error::{CliError, CliResult};

use config::{EvalSplit, GraphKind, TrainPool, RESOLVED_CONFIG_FILE};

pub const VERSION_FILE: &str = "VERSION";

pub fn version_string() -> String {
    format!("densecorr {}", env!("CARGO_PKG_VERSION"))
}

/// Seed streams derived from the master seed.
pub(crate) mod stream {
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const RANDOM: u64 = 4;
    pub const REGISTER: u64 = 5;
    pub const PARTIAL: u64 = 6;
    pub const GEODESIC: u64 = 7;
}

#[derive(Debug, Parser)]
#[command(
    name = "densecorr",
    version,
    about = "Dense correspondence embeddings from sparse annotation sets"
)]
pub struct Cli {
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores). Does not change any output.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic annotated category.
    Synth(SynthArgs),
    /// Train an embedding model on a dataset.
    Train(TrainArgs),
    /// Mean geodesic error of a model on one split.
    Eval(EvalArgs),
    /// Rigid registration of perturbed test pairs.
    Register(RegisterArgs),
    /// Match cropped clouds against complete objects.
    MatchPartial(PartialArgs),
    /// Geodesic distance field of a mesh.
    Geodesic(GeodesicArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// tables, rockets or mugs.
    #[arg(long)]
    pub family: Option<String>,
    /// Number of models.
    #[arg(long)]
    pub models: Option<usize>,
    /// Number of landmark sets.
    #[arg(long)]
    pub sets: Option<usize>,
    /// none, central, rotational or both.
    #[arg(long, value_parser = parse_with::<SymmetryMode>)]
    pub symmetry: Option<SymmetryMode>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset directory (annotations.json plus meshes).
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Points sampled per model.
    #[arg(long)]
    pub points: Option<usize>,
    /// Neighbours per point in the surface graph.
    #[arg(long)]
    pub neighbors: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// coord_mlp or free_table.
    #[arg(long, value_parser = parse_with::<ModelKind>)]
    pub kind: Option<ModelKind>,
    /// Embedding dimension.
    #[arg(long)]
    pub dimension: Option<usize>,
    /// Models to train on: `train` or `all`.
    #[arg(long, value_parser = parse_pool)]
    pub pool: Option<TrainPool>,
    /// Weight of the push term.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Epochs between validation snapshots; 0 keeps the final parameters.
    #[arg(long)]
    pub validate_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model file written by `train`.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Split file (default: split.json next to the model).
    #[arg(long, value_name = "FILE")]
    pub split_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// train, val, test or all.
    #[arg(long)]
    pub split: Option<EvalSplit>,
    /// Add the random-embedding baseline.
    #[arg(long)]
    pub random: bool,
    /// Add the one-hot oracle embedding.
    #[arg(long)]
    pub oracle: bool,
    /// Export colorized PLY clouds.
    #[arg(long)]
    pub ply: bool,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// easy, medium or hard.
    #[arg(long, value_parser = parse_with::<PerturbationLevel>)]
    pub level: Option<PerturbationLevel>,
    /// Number of test pairs.
    #[arg(long)]
    pub pairs: Option<usize>,
    /// octahedral or identity.
    #[arg(long, value_parser = parse_with::<HypothesisSearch>)]
    pub hypotheses: Option<HypothesisSearch>,
}

#[derive(Debug, Args)]
pub struct PartialArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Fraction of each cloud kept after cropping.
    #[arg(long)]
    pub keep: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GeodesicArgs {
    /// OBJ mesh.
    #[arg(long, value_name = "FILE")]
    pub mesh: Option<PathBuf>,
    /// Source node; repeatable.
    #[arg(long = "source")]
    pub sources: Vec<usize>,
    /// mesh or cloud.
    #[arg(long, value_parser = parse_graph)]
    pub graph: Option<GraphKind>,
    /// Points sampled for the cloud graph.
    #[arg(long)]
    pub points: Option<usize>,
    /// Neighbours per point in the cloud graph.
    #[arg(long)]
    pub neighbors: Option<usize>,
}

fn parse_with<T: std::str::FromStr<Err = densecorr::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: densecorr::Error| e.to_string())
}

fn parse_pool(s: &str) -> Result<TrainPool, String> {
    match s {
        "train" => Ok(TrainPool::Train),
        "all" => Ok(TrainPool::All),
        other => Err(format!("unknown pool `{other}` (expected train or all)")),
    }
}

fn parse_graph(s: &str) -> Result<GraphKind, String> {
    match s {
        "mesh" => Ok(GraphKind::Mesh),
        "cloud" => Ok(GraphKind::Cloud),
        other => Err(format!("unknown graph `{other}` (expected mesh or cloud)")),
    }
}

impl Command {
    fn model_path(&self) -> Option<&Path> {
        match self {
            Command::Eval(a) => a.model.model.as_deref(),
            Command::Register(a) => a.model.model.as_deref(),
            Command::MatchPartial(a) => a.model.model.as_deref(),
            _ => None,
        }
    }
}

fn apply_data(config: &mut RunConfig, args: &DataArgs) {
    if let Some(d) = &args.data {
        config.paths.data = Some(d.clone());
    }
    if let Some(n) = args.points {
        config.data.points = n;
    }
    if let Some(k) = args.neighbors {
        config.data.neighbors = k;
    }
}

fn apply_model(config: &mut RunConfig, args: &ModelArgs) {
    if let Some(m) = &args.model {
        config.paths.model = Some(m.clone());
    }
    if let Some(s) = &args.split_file {
        config.paths.split = Some(s.clone());
    }
}

/// Base configuration: the `--config` file; otherwise the configuration
/// the model was trained with, when it sits next to the model; otherwise
/// defaults. Command flags are applied on top.
pub fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut config = match (&cli.config, cli.command.model_path()) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(model)) => {
            let sibling = model
                .parent()
                .unwrap_or(Path::new("."))
                .join(RESOLVED_CONFIG_FILE);
            if sibling.is_file() {
                RunConfig::load(&sibling)?
            } else {
                RunConfig::default()
            }
        }
        (None, None) => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    match &cli.command {
        Command::Synth(a) => {
            if let Some(f) = &a.family {
                config.synth.family = f.clone();
            }
            if let Some(n) = a.models {
                config.synth.models = n;
            }
            if let Some(n) = a.sets {
                config.synth.sets = n;
            }
            if let Some(s) = a.symmetry {
                config.synth.symmetry = s;
            }
        }
        Command::Train(a) => {
            apply_data(&mut config, &a.data);
            if let Some(k) = a.kind {
                config.model.kind = k;
            }
            if let Some(d) = a.dimension {
                config.model.dimension = d;
            }
            if let Some(p) = a.pool {
                config.model.pool = p;
            }
            if let Some(l) = a.lambda {
                config.train.lambda = l;
            }
            if let Some(e) = a.epochs {
                config.train.epochs = e;
            }
            if let Some(v) = a.validate_every {
                config.train.validate_every = v;
            }
            // training has its own stream so batches do not replay the split draw
            config.train.seed = derive_seed(config.seed, stream::TRAIN);
        }
        Command::Eval(a) => {
            apply_model(&mut config, &a.model);
            apply_data(&mut config, &a.data);
            if let Some(s) = a.split {
                config.eval.split = s;
            }
            config.eval.random |= a.random;
            config.eval.oracle |= a.oracle;
            config.eval.ply |= a.ply;
        }
        Command::Register(a) => {
            apply_model(&mut config, &a.model);
            apply_data(&mut config, &a.data);
            if let Some(l) = a.level {
                config.register.level = l;
            }
            if let Some(p) = a.pairs {
                config.register.pairs = p;
            }
            if let Some(h) = a.hypotheses {
                config.register.hypotheses = h;
            }
        }
        Command::MatchPartial(a) => {
            apply_model(&mut config, &a.model);
            apply_data(&mut config, &a.data);
            if let Some(k) = a.keep {
                config.partial.keep_fraction = k;
            }
        }
        Command::Geodesic(a) => {
            if let Some(m) = &a.mesh {
                config.paths.mesh = Some(m.clone());
            }
            if !a.sources.is_empty() {
                config.geodesic.sources = a.sources.clone();
            }
            if let Some(g) = a.graph {
                config.geodesic.graph = g;
            }
            if let Some(n) = a.points {
                config.data.points = n;
            }
            if let Some(k) = a.neighbors {
                config.data.neighbors = k;
            }
        }
    }
    Ok(config)
}

pub(crate) fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Runs one parsed command line to completion.
pub fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = cli
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("--out <DIR> is required".into()))?;
    let config = resolve_config(cli)?;
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    write_file(&out.join(RESOLVED_CONFIG_FILE), config.to_toml()?)?;
    write_file(&out.join(VERSION_FILE), version_string() + "\n")?;
    match &cli.command {
        Command::Synth(_) => commands::synth(&config, &out),
        Command::Train(_) => commands::train(&config, &out),
        Command::Eval(_) => commands::eval(&config, &out),
        Command::Register(_) => commands::register(&config, &out),
        Command::MatchPartial(_) => commands::match_partial(&config, &out),
        Command::Geodesic(_) => commands::geodesic(&config, &out),
    }
}

/// Parses `args` (program name first) and runs; returns the exit code.
/// Errors go to stderr as a single JSON line.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let err = CliError::Usage(e.to_string());
            eprintln!("{}", err.to_json_line());
            return 2;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("densecorr").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_defaults() {
        let cli = parse(&[
            "train", "--data", "d", "--lambda", "0", "--epochs", "3", "--seed", "9",
        ]);
        let c = resolve_config(&cli).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.train.lambda, 0.0);
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.seed, derive_seed(9, stream::TRAIN));
        assert_eq!(c.paths.data.as_deref(), Some(Path::new("d")));
    }

    #[test]
    fn global_flags_anywhere() {
        let cli = parse(&["--seed", "3", "synth", "--family", "mugs", "--out", "x"]);
        assert_eq!(cli.seed, Some(3));
        assert_eq!(cli.out.as_deref(), Some(Path::new("x")));
    }

    #[test]
    fn bad_values_are_usage_errors() {
        assert!(Cli::try_parse_from(["densecorr", "register", "--level", "extreme"]).is_err());
        assert!(Cli::try_parse_from(["densecorr", "eval", "--split", "dev"]).is_err());
        assert_eq!(main_with_args(["densecorr", "train", "--kind", "resnet"]), 2);
    }

    #[test]
    fn out_is_required() {
        let cli = parse(&["synth"]);
        assert!(matches!(run(&cli), Err(CliError::Usage(_))));
    }
}
