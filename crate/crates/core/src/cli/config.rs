//! Pipeline configuration file.
//!
//! One TOML file describes a whole experiment. Every table is optional;
//! missing keys take their defaults. Relative paths are resolved against
//! the directory holding the file.
//!
//! ```toml
//! arch = [8, 16, 4]
//! stages = ["train", "hat", "compile", "verify", "report"]
//! quantile = 0.999
//!
//! [paths]
//! dataset = "data.csv"
//! out_dir = "out"
//!
//! [train]
//! epochs = 60
//! learning_rate = 0.01
//!
//! [train.hat]
//! start = 40
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::cost::CostModel;
use crate::qmodel::Dataset;
use crate::timing::TimingModel;
use crate::train::{
    linearly_separable, planted_teacher, separable_blobs, PlantedTeacherSpec, TrainConfig,
};

/// Pipeline stages in their canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Train,
    Hat,
    Compile,
    Verify,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Train, Stage::Hat, Stage::Compile, Stage::Verify, Stage::Report];

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s.trim())
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Train => "train",
            Stage::Hat => "hat",
            Stage::Compile => "compile",
            Stage::Verify => "verify",
            Stage::Report => "report",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Dataset CSV. Without it the synthetic generator is used.
    pub dataset: Option<PathBuf>,
    /// Model to compile and verify instead of the one in `out_dir`.
    pub model: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    PlantedTeacher,
    Blobs,
    Separable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub kind: SyntheticKind,
    pub features: usize,
    pub classes: usize,
    pub samples: usize,
    pub seed: u64,
    /// Planted teacher: output gap; separable: distance to the hyperplane.
    pub margin: f64,
    /// Blobs: standard deviation around each center.
    pub spread: f64,
    pub max_shift: u32,
    pub zero_prob: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let p = PlantedTeacherSpec::default();
        SyntheticConfig {
            kind: SyntheticKind::PlantedTeacher,
            features: p.features,
            classes: p.classes,
            samples: p.samples,
            seed: p.seed,
            margin: p.margin as f64,
            spread: 10.0,
            max_shift: p.max_shift,
            zero_prob: p.zero_prob,
        }
    }
}

impl SyntheticConfig {
    pub fn generate(&self) -> Dataset {
        match self.kind {
            SyntheticKind::PlantedTeacher => {
                planted_teacher(&PlantedTeacherSpec {
                    features: self.features,
                    classes: self.classes,
                    samples: self.samples,
                    max_shift: self.max_shift,
                    zero_prob: self.zero_prob,
                    margin: self.margin.round() as i32,
                    seed: self.seed,
                })
                .0
            }
            SyntheticKind::Blobs => {
                separable_blobs(self.samples, self.features, self.classes, self.spread, self.seed)
            }
            SyntheticKind::Separable => {
                linearly_separable(self.samples, self.features, self.margin, self.seed)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneConfig {
    /// Fraction of weights to remove; 0 disables pruning.
    pub sparsity: f64,
    pub fine_tune_epochs: usize,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            sparsity: 0.0,
            fine_tune_epochs: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelSource {
    Qat,
    Hat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompileConfig {
    /// Which trained model to compile when `paths.model` is not set.
    pub source: ModelSource,
    /// Extra flop ranks inserted after each layer before retiming.
    pub pipeline_stages: usize,
    pub retime: bool,
}

impl Default for CompileConfig {
    fn default() -> Self {
        CompileConfig {
            source: ModelSource::Qat,
            pipeline_stages: 0,
            retime: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub trials: usize,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            trials: 10_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Largest number of extra ranks in the stage exploration.
    pub max_stages: usize,
    /// Simulated cycles per stimulus lane for power estimates.
    pub power_cycles: usize,
    pub power_seed: u64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            max_stages: 6,
            power_cycles: 256,
            power_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Layer sizes, input count first. Defaults to one hidden layer of 16.
    pub arch: Option<Vec<usize>>,
    pub stages: Vec<Stage>,
    /// Accumulator profiling quantile; absent keeps worst-case widths.
    pub quantile: Option<f64>,
    pub paths: Paths,
    pub synthetic: SyntheticConfig,
    pub train: TrainConfig,
    pub prune: PruneConfig,
    pub compile: CompileConfig,
    pub verify: VerifyConfig,
    pub report: ReportConfig,
    pub timing: TimingModel,
    pub cost: CostModel,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            arch: None,
            stages: Stage::ALL.to_vec(),
            quantile: None,
            paths: Paths::default(),
            synthetic: SyntheticConfig::default(),
            train: TrainConfig::default(),
            prune: PruneConfig::default(),
            compile: CompileConfig::default(),
            verify: VerifyConfig::default(),
            report: ReportConfig::default(),
            timing: TimingModel::default(),
            cost: CostModel::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    /// Read `path` and resolve its relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("--config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p.as_mut() {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        fix(&mut cfg.paths.dataset);
        fix(&mut cfg.paths.model);
        fix(&mut cfg.paths.out_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !self.stages.windows(2).all(|w| w[0] < w[1]) {
            return Err(CliError::Config(format!(
                "stages: {:?} is not in the order train, hat, compile, verify, report",
                self.stages.iter().map(|s| s.name()).collect::<Vec<_>>()
            )));
        }
        if let Some(a) = &self.arch {
            if a.len() < 2 || a.contains(&0) {
                return Err(CliError::Config(format!("arch: {a:?} needs two or more positive sizes")));
            }
        }
        if let Some(q) = self.quantile {
            if !(q > 0.5 && q <= 1.0) {
                return Err(CliError::Config(format!("quantile: {q} outside (0.5, 1]")));
            }
        }
        if !(0.0..1.0).contains(&self.prune.sparsity) {
            return Err(CliError::Config(format!(
                "prune.sparsity: {} outside [0, 1)",
                self.prune.sparsity
            )));
        }
        self.train
            .validate()
            .map_err(|e| CliError::Config(format!("train: {e}")))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// The dataset named in `paths.dataset`, or the synthetic one.
    pub fn dataset(&self) -> Result<Dataset, CliError> {
        match &self.paths.dataset {
            Some(p) => {
                if !p.exists() {
                    return Err(CliError::Config(format!(
                        "paths.dataset: {} does not exist",
                        p.display()
                    )));
                }
                Dataset::load_csv(p)
                    .map_err(|e| CliError::Config(format!("paths.dataset: {}: {e}", p.display())))
            }
            None => Ok(self.synthetic.generate()),
        }
    }

    /// `arch`, or inputs -> 16 -> outputs sized for the data.
    pub fn arch_for(&self, data: &Dataset) -> Vec<usize> {
        if let Some(a) = &self.arch {
            return a.clone();
        }
        let out = if self.train.metric == crate::train::Metric::Accuracy {
            data.num_classes().max(2)
        } else {
            1
        };
        vec![data.features(), 16, out]
    }
}
