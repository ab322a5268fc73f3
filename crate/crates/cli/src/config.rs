//! Experiment configuration: one JSON document, overridable from the command
//! line, embedded verbatim in every artifact.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use loadcast::evaluator::DEFAULT_TOLERANCES;
use loadcast::gridgen::DistributionNetwork;
use loadcast::models::{ModelConfig, ModelKind};
use loadcast::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub name: String,
    pub output_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub years: Vec<usize>,
    /// Seeds both the feeder layout and the load noise.
    pub seed: u64,
    /// Directory for dataset files; defaults to `<output_dir>/data`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kinds: Vec<ModelKind>,
    pub hidden_dim: usize,
    pub gcn_out_dim: usize,
    pub attention_dim: usize,
    pub lookback: usize,
    pub horizon: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub tolerances: Vec<f64>,
    pub trace_bus: usize,
    /// First test-set sample of the trace.
    pub trace_start: usize,
    pub trace_span: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let model = ModelConfig::new(ModelKind::Fnn);
        Self {
            run: RunSection {
                name: "default".into(),
                output_dir: PathBuf::from("runs/default"),
            },
            dataset: DatasetSection {
                years: vec![1, 5],
                seed: 0,
                path: None,
            },
            model: ModelSection {
                kinds: ModelKind::ALL.to_vec(),
                hidden_dim: model.hidden_dim,
                gcn_out_dim: model.gcn_out_dim,
                attention_dim: model.attention_dim,
                lookback: model.lookback,
                horizon: model.horizon,
            },
            train: TrainConfig::default(),
            eval: EvalSection {
                tolerances: DEFAULT_TOLERANCES.to_vec(),
                trace_bus: 14,
                trace_start: 0,
                trace_span: 168,
            },
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub years: Option<Vec<usize>>,
    pub models: Option<Vec<ModelKind>>,
    pub epochs: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Reads a config file, or the `experiment` member of any artifact JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(embedded) = value.get_mut("experiment") {
            value = embedded.take();
        }
        serde_json::from_value(value).with_context(|| format!("invalid experiment config in {}", path.display()))
    }

    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(seed) = overrides.seed {
            cfg.dataset.seed = seed;
            cfg.train.seed = seed;
        }
        if let Some(years) = &overrides.years {
            cfg.dataset.years = years.clone();
        }
        if let Some(models) = &overrides.models {
            cfg.model.kinds = models.clone();
        }
        if let Some(epochs) = overrides.epochs {
            cfg.train.epochs = epochs;
        }
        if let Some(out) = &overrides.out {
            cfg.run.output_dir = out.clone();
        }
        cfg.train.eval_tolerances = cfg.eval.tolerances.clone();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.years.is_empty() || self.dataset.years.iter().any(|y| *y != 1 && *y != 5) {
            bail!("dataset.years must list 1 and/or 5, got {:?}", self.dataset.years);
        }
        if self.model.kinds.is_empty() {
            bail!("model.kinds is empty");
        }
        if self.eval.trace_span == 0 {
            bail!("eval.trace_span must be at least 1");
        }
        self.train.validate()?;
        Ok(())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.dataset.path.clone().unwrap_or_else(|| self.run.output_dir.join("data"))
    }

    pub fn dataset_path(&self, years: usize) -> PathBuf {
        self.data_dir().join(format!("load_{years}y_seed{}.csv", self.dataset.seed))
    }

    pub fn cell_name(kind: ModelKind, years: usize) -> String {
        format!("{kind}_{years}y")
    }

    pub fn model_path(&self, kind: ModelKind, years: usize) -> PathBuf {
        self.run.output_dir.join("models").join(format!("{}.json", Self::cell_name(kind, years)))
    }

    pub fn eval_path(&self, kind: ModelKind, years: usize) -> PathBuf {
        self.run.output_dir.join("eval").join(format!("{}.json", Self::cell_name(kind, years)))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.run.output_dir.join("report")
    }

    /// Wall-clock logs. The only outputs that differ between reruns.
    pub fn timing_dir(&self) -> PathBuf {
        self.run.output_dir.join("timing")
    }

    pub fn model_config(&self, kind: ModelKind, network: &DistributionNetwork) -> ModelConfig {
        ModelConfig {
            kind,
            num_nodes: network.num_nodes(),
            node_feature_dim: 2,
            lookback: self.model.lookback,
            hidden_dim: self.model.hidden_dim,
            horizon: self.model.horizon,
            gcn_out_dim: self.model.gcn_out_dim,
            attention_dim: self.model.attention_dim,
            edges: if kind == ModelKind::A3tgcn {
                network.edges.clone()
            } else {
                Vec::new()
            },
        }
    }
}
