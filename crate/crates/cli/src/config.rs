//! JSON experiment configs: one schema per subcommand, strict about unknown
//! keys, with a pre-pass that reports every missing required key at once.

use bnmemo::data::{flip_labels, inject_ood, load_cache, load_idx, synth_blobs, Dataset};
use bnmemo::mitigation::RegularizerVariant;
use bnmemo::nn::{ArchSpec, OptimizerKind, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// A configuration problem: bad JSON, unknown/missing keys, invalid values.
/// Maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Where a dataset comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Synthetic Gaussian blobs.
    Blobs {
        classes: usize,
        per_class: usize,
        dim: usize,
        separation: f64,
        seed: u64,
    },
    /// A dataset cache file produced by the `corrupt` subcommand (or the
    /// library).
    Cache { path: PathBuf },
    /// Raw IDX image/label files.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        /// Keep only the first `limit` examples when set.
        #[serde(default)]
        limit: Option<usize>,
    },
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset, bnmemo::Error> {
        match self {
            DataSource::Blobs {
                classes,
                per_class,
                dim,
                separation,
                seed,
            } => synth_blobs(*classes, *per_class, *dim, *separation, *seed),
            DataSource::Cache { path } => load_cache(path),
            DataSource::Idx { images, labels, limit } => {
                let mut ds = load_idx(images, labels)?;
                if let Some(n) = limit {
                    ds.examples.truncate(*n);
                }
                ds.validate()?;
                Ok(ds)
            }
        }
    }

    /// Files this source reads (for the manifest's input hashes).
    pub fn input_files(&self) -> Vec<PathBuf> {
        match self {
            DataSource::Blobs { .. } => vec![],
            DataSource::Cache { path } => vec![path.clone()],
            DataSource::Idx { images, labels, .. } => vec![images.clone(), labels.clone()],
        }
    }
}

/// A corruption to apply after loading.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorruptionSpec {
    /// Leave the dataset as loaded.
    None,
    /// Flip `floor(k * n)` labels uniformly to other classes.
    Flip { k: f64, seed: u64 },
    /// Inject `count` out-of-distribution examples drawn from `source`.
    Inject {
        count: usize,
        seed: u64,
        source: Box<DataSource>,
    },
}

impl CorruptionSpec {
    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset, bnmemo::Error> {
        match self {
            CorruptionSpec::None => Ok(dataset.clone()),
            CorruptionSpec::Flip { k, seed } => Ok(flip_labels(dataset, *k, *seed)?.0),
            CorruptionSpec::Inject { count, seed, source } => {
                let src = source.load()?;
                inject_ood(dataset, &src, *count, *seed)
            }
        }
    }

    pub fn input_files(&self) -> Vec<PathBuf> {
        match self {
            CorruptionSpec::Inject { source, .. } => source.input_files(),
            _ => vec![],
        }
    }
}

fn default_hidden() -> Vec<usize> {
    vec![256, 128]
}

/// Network shape. `compare_bn: true` runs the normalized and unnormalized
/// variants with shared seeds and emits a joined comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub batch_norm: bool,
    #[serde(default)]
    pub compare_bn: bool,
}

impl ArchConfig {
    pub fn spec(&self, input_dim: usize, num_classes: usize, batch_norm: bool) -> ArchSpec {
        ArchSpec {
            input_dim,
            hidden: self.hidden.clone(),
            num_classes,
            batch_norm,
        }
    }

    /// The architecture variants this config asks for.
    pub fn variants(&self) -> Vec<bool> {
        if self.compare_bn {
            vec![true, false]
        } else {
            vec![self.batch_norm]
        }
    }
}

fn default_batch_size() -> usize {
    256
}

fn default_epochs() -> usize {
    100
}

fn default_learning_rate() -> f64 {
    1e-4
}

fn default_optimizer() -> String {
    "adam".into()
}

/// Optimization hyperparameters shared by the training-class subcommands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParams {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// "adam" or "sgd".
    #[serde(default = "default_optimizer")]
    pub optimizer: String,
    #[serde(default)]
    pub mitigation_alpha: Option<f64>,
    #[serde(default)]
    pub mitigation_variant: RegularizerVariant,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            learning_rate: default_learning_rate(),
            batch_size: default_batch_size(),
            epochs: default_epochs(),
            optimizer: default_optimizer(),
            mitigation_alpha: None,
            mitigation_variant: RegularizerVariant::LayerMean,
        }
    }
}

impl TrainParams {
    /// Bind the parameters to a seed, producing the engine's config.
    pub fn to_train_config(&self, seed: u64) -> Result<TrainConfig, ConfigError> {
        let optimizer = match self.optimizer.as_str() {
            "adam" => OptimizerKind::adam(),
            "sgd" => OptimizerKind::Sgd,
            other => {
                return Err(ConfigError(format!(
                    "optimizer must be \"adam\" or \"sgd\", got \"{other}\""
                )))
            }
        };
        Ok(TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            optimizer,
            seed,
            mitigation_alpha: self.mitigation_alpha,
            mitigation_variant: self.mitigation_variant,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptCmdConfig {
    pub dataset: DataSource,
    pub corruption: CorruptionSpec,
    pub seed: u64,
    /// Base name of the emitted cache (defaults to the dataset's name).
    #[serde(default)]
    pub output_name: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCmdConfig {
    pub dataset: DataSource,
    #[serde(default = "CorruptionSpec::none")]
    pub corruption: CorruptionSpec,
    pub arch: ArchConfig,
    #[serde(default)]
    pub train: TrainParams,
    pub seed: u64,
}

impl CorruptionSpec {
    fn none() -> Self {
        CorruptionSpec::None
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfluenceCmdConfig {
    pub dataset: DataSource,
    #[serde(default = "CorruptionSpec::none")]
    pub corruption: CorruptionSpec,
    /// Path to a model blob saved by the `train` subcommand.
    pub model: PathBuf,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// "all_params" or "first_dense_weights".
    #[serde(default = "default_scope")]
    pub scope: String,
    pub seed: u64,
}

fn default_scope() -> String {
    "all_params".into()
}

fn default_draws() -> usize {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryCmdConfig {
    pub seed: u64,
    /// Draw count for the trajectory CSVs (the verification suite's own
    /// draw counts are fixed by its tolerances).
    #[serde(default = "default_draws")]
    pub trajectory_steps: usize,
}

fn default_num_shadows() -> usize {
    16
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackCmdConfig {
    pub dataset: DataSource,
    #[serde(default = "CorruptionSpec::none")]
    pub corruption: CorruptionSpec,
    pub arch: ArchConfig,
    #[serde(default)]
    pub train: TrainParams,
    #[serde(default = "default_num_shadows")]
    pub num_shadows: usize,
    pub seed: u64,
}

fn default_alphas() -> Vec<f64> {
    vec![1.0, 0.9, 0.7, 0.5]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitigateCmdConfig {
    pub dataset: DataSource,
    #[serde(default = "CorruptionSpec::none")]
    pub corruption: CorruptionSpec,
    pub arch: ArchConfig,
    #[serde(default)]
    pub train: TrainParams,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    pub seed: u64,
}

/// Top-level required keys per subcommand, used to report every missing key
/// in one message instead of failing on the first.
fn required_keys(command: &str) -> &'static [&'static str] {
    match command {
        "corrupt" => &["dataset", "corruption", "seed"],
        "train" => &["dataset", "arch", "seed"],
        "influence" => &["dataset", "model", "seed"],
        "theory" => &["seed"],
        "attack" => &["dataset", "arch", "seed"],
        "mitigate" => &["dataset", "arch", "seed"],
        _ => &[],
    }
}

/// Read and parse a config file for `command`, checking required keys first.
pub fn load_config<T: serde::de::DeserializeOwned>(
    path: &Path,
    command: &str,
) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, command)
}

/// Parse config text for `command` (split from file reading for tests).
pub fn parse_config<T: serde::de::DeserializeOwned>(
    text: &str,
    command: &str,
) -> Result<T, ConfigError> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| ConfigError(format!("invalid JSON: {e}")))?;
    let object = value
        .as_object()
        .ok_or_else(|| ConfigError("config must be a JSON object".into()))?;
    let missing: Vec<&str> = required_keys(command)
        .iter()
        .filter(|k| !object.contains_key(**k))
        .copied()
        .collect();
    if !missing.is_empty() {
        return Err(ConfigError(format!(
            "missing required key(s) for `{command}`: {}",
            missing.join(", ")
        )));
    }
    serde_json::from_value(value).map_err(|e| ConfigError(format!("{e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_lists_every_missing_key() {
        let err = parse_config::<AttackCmdConfig>("{}", "attack").unwrap_err();
        assert!(err.0.contains("dataset"), "{err}");
        assert!(err.0.contains("arch"), "{err}");
        assert!(err.0.contains("seed"), "{err}");
    }

    #[test]
    fn unknown_key_is_named() {
        let text = r#"{"seed": 1, "trajectory_steps": 5, "bogus_knob": 3}"#;
        let err = parse_config::<TheoryCmdConfig>(text, "theory").unwrap_err();
        assert!(err.0.contains("bogus_knob"), "{err}");
    }

    #[test]
    fn full_train_config_round_trips() {
        let text = r#"{
            "dataset": {"kind": "blobs", "classes": 3, "per_class": 10,
                        "dim": 6, "separation": 3.0, "seed": 5},
            "corruption": {"kind": "flip", "k": 0.1, "seed": 6},
            "arch": {"hidden": [8], "compare_bn": true},
            "train": {"epochs": 3},
            "seed": 9
        }"#;
        let cfg: TrainCmdConfig = parse_config(text, "train").unwrap();
        assert_eq!(cfg.arch.variants(), vec![true, false]);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, 256); // default
        let ds = cfg.dataset.load().unwrap();
        let corrupted = cfg.corruption.apply(&ds).unwrap();
        assert_eq!(corrupted.len(), 30);
        assert_eq!(corrupted.examples.iter().filter(|e| !e.provenance.is_clean()).count(), 3);
        let tc = cfg.train.to_train_config(cfg.seed).unwrap();
        assert_eq!(tc.seed, 9);
    }

    #[test]
    fn bad_optimizer_name_is_a_config_error() {
        let params = TrainParams {
            optimizer: "adagrad".into(),
            ..TrainParams::default()
        };
        assert!(params.to_train_config(1).is_err());
    }
}
