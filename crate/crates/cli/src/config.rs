use std::path::{Path, PathBuf};

use densecorr::corrset::{SplitPart, SymmetryMode};
use densecorr::embedding::{ModelKind, TrainConfig, DEFAULT_DIMENSION};
use densecorr::geometry::DEFAULT_NEIGHBORS;
use densecorr::prepare::{PrepareConfig, DEFAULT_POINTS};
use densecorr::registration::{
    HypothesisSearch, IcpConfig, PerturbationLevel, RansacConfig, RegistrationConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

/// Everything a run depends on besides its input files. Written next to
/// every run's outputs; feeding it back through `--config` reproduces the
/// run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every random stream of a run is derived from it.
    pub seed: u64,
    pub paths: PathsConfig,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub register: RegisterConfig,
    pub partial: PartialConfig,
    pub geodesic: GeodesicConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Dataset directory holding `annotations.json` and the meshes.
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub mesh: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub points: usize,
    pub neighbors: usize,
    /// Cloud sampling seed; the master seed when unset.
    pub seed: Option<u64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            points: DEFAULT_POINTS,
            neighbors: DEFAULT_NEIGHBORS,
            seed: None,
        }
    }
}

impl DataConfig {
    pub fn prepare_config(&self, master: u64) -> PrepareConfig {
        PrepareConfig {
            points: self.points,
            neighbors: self.neighbors,
            seed: self.seed.unwrap_or(master),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub family: String,
    pub models: usize,
    pub sets: usize,
    pub symmetry: SymmetryMode,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            family: "tables".into(),
            models: 20,
            sets: 6,
            symmetry: SymmetryMode::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainPool {
    /// Only the training split.
    Train,
    /// Every model, for transductive tables that must cover held-out models.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub dimension: usize,
    pub pool: TrainPool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::CoordMlp,
            dimension: DEFAULT_DIMENSION,
            pool: TrainPool::Train,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Train,
    Val,
    Test,
    All,
}

impl EvalSplit {
    pub fn part(self) -> Option<SplitPart> {
        match self {
            EvalSplit::Train => Some(SplitPart::Train),
            EvalSplit::Val => Some(SplitPart::Val),
            EvalSplit::Test => Some(SplitPart::Test),
            EvalSplit::All => None,
        }
    }
}

impl std::str::FromStr for EvalSplit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(EvalSplit::Train),
            "val" => Ok(EvalSplit::Val),
            "test" => Ok(EvalSplit::Test),
            "all" => Ok(EvalSplit::All),
            other => Err(format!(
                "unknown split `{other}` (expected train, val, test or all)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub split: EvalSplit,
    /// Also report the random-embedding baseline.
    pub random: bool,
    pub random_trials: usize,
    /// Also report the one-hot oracle embedding.
    pub oracle: bool,
    /// Export colorized clouds.
    pub ply: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            split: EvalSplit::Test,
            random: false,
            random_trials: 1,
            oracle: false,
            ply: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegisterConfig {
    pub level: PerturbationLevel,
    pub pairs: usize,
    pub hypotheses: HypothesisSearch,
    pub ransac: RansacConfig,
    pub icp: IcpConfig,
}

impl Default for RegisterConfig {
    fn default() -> Self {
        RegisterConfig {
            level: PerturbationLevel::Easy,
            pairs: 30,
            hypotheses: HypothesisSearch::Octahedral,
            ransac: RansacConfig::default(),
            icp: IcpConfig::default(),
        }
    }
}

impl RegisterConfig {
    pub fn registration(&self) -> RegistrationConfig {
        RegistrationConfig {
            ransac: self.ransac,
            icp: self.icp,
            hypotheses: self.hypotheses,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartialConfig {
    pub keep_fraction: f64,
}

impl Default for PartialConfig {
    fn default() -> Self {
        PartialConfig { keep_fraction: 0.7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    /// Mesh vertices joined along edges and across adjacent triangles.
    Mesh,
    /// k-NN graph over a sampled cloud.
    Cloud,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeodesicConfig {
    pub graph: GraphKind,
    pub sources: Vec<usize>,
    /// Scale the mesh into the unit sphere first, as datasets are.
    pub normalize: bool,
}

impl Default for GeodesicConfig {
    fn default() -> Self {
        GeodesicConfig {
            graph: GraphKind::Mesh,
            sources: vec![0],
            normalize: true,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(single_line(&e.to_string())))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }
}

pub(crate) fn single_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
