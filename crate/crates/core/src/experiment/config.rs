use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::WEIGHT_DECAYS;
use crate::dgnn::{ClassifierKind, Encoding};
use crate::graphs::SbmSpec;
use crate::photonics::DpuGeometry;
use crate::train::{Batch, LossKind, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    NodeTransductive,
    NodeInductive,
    GraphAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Sbm,
    Bundle,
    Skeleton,
    SyntheticSkeleton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmSection {
    pub n_nodes: usize,
    pub n_classes: usize,
    pub p: f64,
    pub q: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: Source,
    /// Graph bundle directory or skeleton dataset path.
    pub path: Option<PathBuf>,
    pub sbm: SbmSection,
    /// Reduce attributes with PCA to this many dimensions.
    pub pca_dim: Option<usize>,
    /// Draw this many training labels per class; other labeled nodes test.
    pub labels_per_class: Option<usize>,
    /// Draw this many random test nodes; other labeled nodes train.
    pub n_test: Option<usize>,
    /// Split seed; the experiment seed when absent.
    pub split_seed: Option<u64>,
    /// Frames per skeleton sub-sequence.
    pub window: usize,
    pub folds: usize,
    /// Run a single fold instead of all of them.
    pub fold: Option<usize>,
    /// Recordings (subject, repetition pairs) of the synthetic skeleton set.
    pub synthetic_recordings: usize,
    pub synthetic_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub heads: usize,
    /// PPR neighbors aggregated per node.
    pub k: usize,
    pub alpha: f64,
    pub encoding: Encoding,
    pub classifier: ClassifierKind,
    /// Head DPU; `n_in` is taken from the data.
    pub head_geometry: DpuGeometry,
    pub readout_geometry: Option<DpuGeometry>,
    /// Classifier DPU; ports follow the feature width and class count.
    pub classifier_geometry: DpuGeometry,
    /// Meta-atom table file; the built-in table when absent.
    pub lut: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Minibatch size; full batch when absent.
    pub batch_size: Option<usize>,
    pub loss: LossKind,
    pub binary_training: bool,
    pub l2_weight: f64,
}

impl TrainSection {
    fn from_config(c: &TrainConfig) -> Self {
        Self {
            learning_rate: c.learning_rate,
            epochs: c.epochs,
            batch_size: match c.batch {
                Batch::Full => None,
                Batch::Size(s) => Some(s),
            },
            loss: c.loss,
            binary_training: c.binary_training,
            l2_weight: c.l2_weight,
        }
    }

    pub fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch: self.batch_size.map_or(Batch::Full, Batch::Size),
            loss: self.loss,
            binary_training: self.binary_training,
            l2_weight: self.l2_weight,
            seed,
        }
    }
}

/// Post-training deployment: binarize and/or perturb the coefficients, then
/// retrain the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub binary: bool,
    pub sigma: f64,
    pub retrain_epochs: usize,
    pub retrain_learning_rate: f64,
}

impl NoiseConfig {
    pub fn active(&self) -> bool {
        self.binary || self.sigma != 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub enabled: bool,
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decays: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    /// Seeds data generation, splits, initialization, shuffling and noise.
    pub seed: u64,
    pub output: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub noise: NoiseConfig,
    pub baselines: BaselineSection,
}

pub const PRESETS: [&str; 3] = ["synthetic", "benchmark", "action"];

impl ExperimentConfig {
    /// Synthetic SBM node classification: 300 nodes, 3 classes, 5 labels
    /// per class, binary metalines, a 3-in/2-out head.
    pub fn synthetic() -> Self {
        let sbm = SbmSpec::default();
        Self {
            task: Task::NodeTransductive,
            seed: 0,
            output: PathBuf::from("runs/synthetic"),
            data: DataConfig {
                source: Source::Sbm,
                path: None,
                sbm: SbmSection {
                    n_nodes: sbm.n_nodes,
                    n_classes: sbm.n_classes,
                    p: sbm.p,
                    q: sbm.q,
                    sigma: sbm.attr_sigma,
                },
                pca_dim: None,
                labels_per_class: Some(5),
                n_test: None,
                split_seed: None,
                window: 6,
                folds: 5,
                fold: None,
                synthetic_recordings: 20,
                synthetic_frames: 12,
            },
            model: ModelConfig {
                heads: 1,
                k: 8,
                alpha: crate::graphs::DEFAULT_ALPHA,
                encoding: Encoding::Amplitude,
                classifier: ClassifierKind::Electronic,
                head_geometry: DpuGeometry::synthetic(),
                readout_geometry: None,
                classifier_geometry: DpuGeometry::synthetic(),
                lut: None,
            },
            train: TrainSection {
                binary_training: true,
                ..TrainSection::from_config(&TrainConfig::dgnn_e())
            },
            noise: NoiseConfig {
                binary: false,
                sigma: 0.0,
                retrain_epochs: TrainConfig::DEFAULT_EPOCHS,
                retrain_learning_rate: TrainConfig::retrain().learning_rate,
            },
            baselines: BaselineSection {
                enabled: true,
                hidden: 2,
                epochs: 10_000,
                learning_rate: 0.01,
                weight_decays: WEIGHT_DECAYS.to_vec(),
            },
        }
    }

    /// Benchmark node classification on a graph bundle: 20 PCA attributes,
    /// 1000 random test nodes, four 4-layer heads, k = 8.
    pub fn benchmark() -> Self {
        let s = Self::synthetic();
        Self {
            output: PathBuf::from("runs/benchmark"),
            data: DataConfig {
                source: Source::Bundle,
                pca_dim: Some(20),
                labels_per_class: None,
                n_test: Some(1000),
                ..s.data
            },
            model: ModelConfig {
                heads: 4,
                head_geometry: DpuGeometry::benchmark(),
                classifier_geometry: DpuGeometry::classifier(8, 2),
                ..s.model
            },
            train: TrainSection::from_config(&TrainConfig::dgnn_e()),
            baselines: BaselineSection { hidden: 8, ..s.baselines },
            ..s
        }
    }

    /// Skeleton action recognition: per-frame joint graphs, four heads with
    /// read-out DPUs, windows of 6 frames, subject-wise 5-fold CV.
    pub fn action() -> Self {
        let s = Self::synthetic();
        Self {
            task: Task::GraphAction,
            output: PathBuf::from("runs/action"),
            data: DataConfig {
                source: Source::SyntheticSkeleton,
                labels_per_class: None,
                ..s.data
            },
            model: ModelConfig {
                heads: 4,
                head_geometry: DpuGeometry::skeleton(),
                readout_geometry: Some(DpuGeometry::readout()),
                classifier_geometry: DpuGeometry::classifier(48, 6),
                ..s.model
            },
            train: TrainSection::from_config(&TrainConfig::action_recognition()),
            baselines: BaselineSection { enabled: false, ..s.baselines },
            ..s
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "synthetic" => Ok(Self::synthetic()),
            "benchmark" => Ok(Self::benchmark()),
            "action" => Ok(Self::action()),
            other => Err(Error::Config(format!("unknown preset {other:?}; expected one of {PRESETS:?}"))),
        }
    }

    /// Preset named by the document's `preset` key (default `synthetic`),
    /// overlaid first with `overrides` and then with the document.
    pub fn from_toml_layers(doc: &str, overrides: &toml::Table) -> Result<Self> {
        let mut doc: toml::Table = doc.parse().map_err(|e| Error::Config(format!("config TOML: {e}")))?;
        let preset = match doc.remove("preset").or_else(|| overrides.get("preset").cloned()) {
            None => "synthetic".to_string(),
            Some(toml::Value::String(s)) => s,
            Some(other) => return Err(Error::Config(format!("preset must be a string, got {other}"))),
        };
        let mut overrides = overrides.clone();
        overrides.remove("preset");
        let mut base = toml::Table::try_from(Self::preset(&preset)?)
            .map_err(|e| Error::Config(format!("serializing preset: {e}")))?;
        merge(&mut base, overrides);
        merge(&mut base, doc);
        let cfg: Self = toml::Value::Table(base)
            .try_into()
            .map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &toml::Table) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_layers(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    pub fn split_seed(&self) -> u64 {
        self.data.split_seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let m = &self.model;
        if m.heads == 0 || m.k == 0 {
            return bad("model.heads and model.k must be >= 1".into());
        }
        if !(m.alpha > 0.0 && m.alpha < 1.0) {
            return bad(format!("model.alpha must be in (0, 1), got {}", m.alpha));
        }
        if !(self.noise.sigma >= 0.0) {
            return bad(format!("noise.sigma must be >= 0, got {}", self.noise.sigma));
        }
        self.train.to_config(self.seed).validate()?;
        match (self.task, self.data.source) {
            (Task::GraphAction, Source::Skeleton | Source::SyntheticSkeleton) => {
                if m.readout_geometry.is_none() {
                    return bad("graph_action needs model.readout_geometry".into());
                }
                if self.data.window == 0 {
                    return bad("data.window must be >= 1".into());
                }
            }
            (Task::GraphAction, _) => return bad("graph_action needs a skeleton data source".into()),
            (_, Source::Sbm | Source::Bundle) => {}
            (_, _) => return bad("node tasks need an sbm or bundle data source".into()),
        }
        if matches!(self.data.source, Source::Bundle | Source::Skeleton) && self.data.path.is_none() {
            return bad("data.path is required for bundle and skeleton sources".into());
        }
        if matches!(self.data.source, Source::Sbm | Source::SyntheticSkeleton) && self.data.path.is_some() {
            return bad("data.path is set but data.source generates its data; set data.source to bundle or skeleton".into());
        }
        if self.data.labels_per_class.is_some() && self.data.n_test.is_some() {
            return bad("set at most one of data.labels_per_class and data.n_test".into());
        }
        Ok(())
    }
}

/// Recursive table merge; scalars and arrays in `over` replace `base`.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses `section.key=value` flags into a nested table. Values are read as
/// TOML literals, falling back to plain strings.
pub fn overrides_from_pairs<S: AsRef<str>>(pairs: &[S]) -> Result<toml::Table> {
    let mut out = toml::Table::new();
    for pair in pairs {
        let pair = pair.as_ref();
        let (key, raw) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {pair:?} is not key=value")))?;
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut path: Vec<&str> = key.trim().split('.').collect();
        let leaf = path.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Config(format!("empty key in {pair:?}")))?;
        let mut table = &mut out;
        for part in path {
            let entry = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            table = match entry {
                toml::Value::Table(t) => t,
                _ => return Err(Error::Config(format!("{key} conflicts with another override"))),
            };
        }
        table.insert(leaf.to_string(), value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_dpu_settings() {
        let s = ExperimentConfig::synthetic().model.head_geometry;
        assert_eq!((s.num_layers, s.atoms_per_line, s.layer_distance, s.n_in, s.n_out), (3, 90, 20e-6, 3, 2));
        let b = ExperimentConfig::benchmark().model;
        let h = &b.head_geometry;
        assert_eq!((h.num_layers, h.atoms_per_line, h.layer_distance, h.n_in, h.n_out), (4, 600, 100e-6, 20, 2));
        assert_eq!(b.classifier_geometry.num_layers, 6);
        assert_eq!(DpuGeometry::readout().num_layers, 5);
    }

    #[test]
    fn presets_survive_toml_round_trip() {
        for name in PRESETS {
            let mut cfg = ExperimentConfig::preset(name).unwrap();
            if cfg.data.source == Source::Bundle {
                cfg.data.path = Some(PathBuf::from("data/x"));
            }
            let doc = format!("preset = \"{name}\"\n{}", cfg.to_toml());
            let back = ExperimentConfig::from_toml_layers(&doc, &toml::Table::new()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn file_overrides_flags_which_override_preset() {
        let flags = overrides_from_pairs(&["model.k=2", "seed=5", "output=out/x"]).unwrap();
        let cfg = ExperimentConfig::from_toml_layers("[model]\nk = 4\n", &flags).unwrap();
        assert_eq!(cfg.model.k, 4);
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.output, PathBuf::from("out/x"));
        assert_eq!(cfg.model.heads, 1);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(ExperimentConfig::from_toml_layers("[model]\nkk = 4\n", &toml::Table::new()).is_err());
        assert!(ExperimentConfig::from_toml_layers("preset = \"nope\"\n", &toml::Table::new()).is_err());
        assert!(ExperimentConfig::from_toml_layers("[model]\nalpha = 1.5\n", &toml::Table::new()).is_err());
        assert!(ExperimentConfig::from_toml_layers("preset = \"benchmark\"\n", &toml::Table::new()).is_err());
        assert!(ExperimentConfig::from_toml_layers("[data]\npath = \"x\"\n", &toml::Table::new()).is_err());
    }
}
