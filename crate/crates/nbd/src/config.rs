//! Serializable experiment configuration: task, data spec, model spec, and
//! training spec. Stored configs rerun to identical results given the same
//! seed. TOML on disk; command-line flags override file values.

use serde::{Deserialize, Serialize};

use crate::datagen::{
    ColearnTarget, CorrelationLevel, GraphDataset, MixtureFamily, RegressionTarget,
};
use crate::divergence::DivergenceVariant;
use crate::error::{NbdError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Cluster,
    Rank,
    Regress,
    Colearn,
    ShortestPath,
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TaskKind::Cluster => "cluster",
            TaskKind::Rank => "rank",
            TaskKind::Regress => "regress",
            TaskKind::Colearn => "colearn",
            TaskKind::ShortestPath => "shortest-path",
        };
        f.write_str(s)
    }
}

/// Data-generation settings; unset sizes fall back to desk-scale or
/// full-scale defaults depending on the experiment flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataConfig {
    Mixture {
        family: MixtureFamily,
        #[serde(default)]
        n: Option<usize>,
        #[serde(default)]
        train_n: Option<usize>,
        #[serde(default)]
        dim: Option<usize>,
        #[serde(default)]
        k: Option<usize>,
    },
    Regression {
        target: RegressionTarget,
        #[serde(default = "default_correlation")]
        correlation: CorrelationLevel,
        #[serde(default)]
        train_pairs: Option<usize>,
        #[serde(default)]
        test_pairs: Option<usize>,
        #[serde(default)]
        dim: Option<usize>,
        #[serde(default)]
        informative: Option<usize>,
    },
    Graph {
        dataset: GraphDataset,
        #[serde(default)]
        grid: Option<usize>,
        #[serde(default)]
        landmarks: Option<usize>,
        #[serde(default)]
        distractors: Option<usize>,
        #[serde(default)]
        noise_sigma: Option<f64>,
        #[serde(default)]
        train_pairs: Option<usize>,
        #[serde(default)]
        test_pairs: Option<usize>,
    },
    Colearn {
        #[serde(default = "default_colearn_target")]
        target: ColearnTarget,
        #[serde(default)]
        classes: Option<usize>,
        #[serde(default)]
        samples_per_class: Option<usize>,
        #[serde(default)]
        input_dim: Option<usize>,
        #[serde(default)]
        train_pairs: Option<usize>,
        #[serde(default)]
        test_pairs: Option<usize>,
    },
}

fn default_correlation() -> CorrelationLevel {
    CorrelationLevel::None
}

fn default_colearn_target() -> ColearnTarget {
    ColearnTarget::ShiftedXLogX
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorChoice {
    Learned,
    SqEuclidean,
    XLogX,
    ShiftedXLogX,
    KlPositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderChoice {
    Identity,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct ModelConfig {
    pub generator: GeneratorChoice,
    pub variant: DivergenceVariant,
    pub icnn_widths: Vec<usize>,
    pub alpha: f64,
    pub encoder: EncoderChoice,
    pub encoder_widths: Vec<usize>,
    pub embed_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            generator: GeneratorChoice::Learned,
            variant: DivergenceVariant::Plain,
            icnn_widths: vec![128, 128],
            alpha: 1e-3,
            encoder: EncoderChoice::Identity,
            encoder_widths: vec![128],
            embed_dim: 32,
        }
    }
}

impl ModelConfig {
    /// Short tag for metric rows.
    pub fn model_name(&self) -> String {
        let base = match self.generator {
            GeneratorChoice::Learned => "nbd",
            GeneratorChoice::SqEuclidean => "euclidean",
            GeneratorChoice::XLogX => "xlogx",
            GeneratorChoice::ShiftedXLogX => "shifted-xlogx",
            GeneratorChoice::KlPositive => "kl",
        };
        match self.variant {
            DivergenceVariant::Plain => base.to_string(),
            DivergenceVariant::Sqrt => format!("{base}-sqrt"),
            DivergenceVariant::Gsb => format!("{base}-gs"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct TrainSpecConfig {
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub margin: f64,
    /// Optional second constant-rate phase.
    pub lr_drop_epoch: Option<usize>,
    pub lr_drop_rate: Option<f64>,
}

impl Default for TrainSpecConfig {
    fn default() -> Self {
        TrainSpecConfig {
            epochs: 100,
            batch: 128,
            learning_rate: 1e-3,
            margin: 0.2,
            lr_drop_epoch: None,
            lr_drop_rate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExperimentConfig {
    /// Row label used in metric CSVs; defaults to a derived name.
    #[serde(default)]
    pub name: Option<String>,
    pub task: TaskKind,
    #[serde(default)]
    pub seed: u64,
    /// Shrinks default sizes to desk scale; full-scale sizes remain
    /// expressible by setting fields explicitly.
    #[serde(default = "default_true")]
    pub desk_scale: bool,
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSpecConfig,
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn dataset_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.data {
            DataConfig::Mixture { family, .. } => {
                format!("{}-{}", self.task, toml_tag(family))
            }
            DataConfig::Regression { target, correlation, .. } => {
                format!("regress-{}-{}", toml_tag(target), toml_tag(correlation))
            }
            DataConfig::Graph { dataset, .. } => format!("shortest-path-{}", toml_tag(dataset)),
            DataConfig::Colearn { target, .. } => format!("colearn-{}", toml_tag(target)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let compatible = matches!(
            (&self.task, &self.data),
            (TaskKind::Cluster, DataConfig::Mixture { .. })
                | (TaskKind::Rank, DataConfig::Mixture { .. })
                | (TaskKind::Regress, DataConfig::Regression { .. })
                | (TaskKind::Colearn, DataConfig::Colearn { .. })
                | (TaskKind::ShortestPath, DataConfig::Graph { .. })
        );
        if !compatible {
            return Err(NbdError::Config(format!(
                "task `{}` does not match the configured data kind",
                self.task
            )));
        }
        if self.model.icnn_widths.is_empty() {
            return Err(NbdError::Config("icnn-widths must be non-empty".into()));
        }
        Ok(())
    }

    /// Derived seeds so data, model init, training, and clustering draw
    /// from distinct streams.
    pub fn data_seed(&self) -> u64 {
        self.seed
    }
    pub fn model_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }
    pub fn train_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }
    pub fn eval_seed(&self) -> u64 {
        self.seed.wrapping_add(3)
    }
}

fn toml_tag<T: Serialize>(v: &T) -> String {
    // Enum tags serialize as plain strings.
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_string))
        .unwrap_or_else(|| "unknown".to_string())
}
