//! Experiment configuration: a JSON document with one section per concern.
//! Unknown keys are rejected everywhere, and errors carry the dotted path of
//! the offending field.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::acquisition::Objective;
use crate::models::{
    BootstrapForest, DirichletHistogramClassifier, DirichletHistogramConfig, DropoutMlp,
    FiniteHypothesisModel, ForestConfig, MlpConfig, ModelError, PredictiveModel, RbfLogisticConfig,
    RbfLogisticHypotheses,
};
use crate::store::{CostModel, Strategy};
use crate::streams::{ClassOrder, StreamKind};

/// A config problem located by its dotted field path.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub stream: StreamConfig,
    pub model: ModelConfig,
    pub objective: ObjectiveConfig,
    pub store: StoreConfig,
    #[serde(default)]
    pub targets: TargetConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    /// Empty means `STREAMSIFT_SEED`, or 0 if that is unset.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamConfig {
    pub kind: StreamKind,
    pub dataset: DatasetConfig,
    pub steps: usize,
    /// Seeds dataset generation; stream shuffles also mix in the run seed.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub class_order: ClassOrder,
    #[serde(default)]
    pub per_step: Option<usize>,
    #[serde(default)]
    pub label_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    SynthBlobs {
        num_classes: usize,
        dim: usize,
        per_class: usize,
        test_per_class: usize,
        pool_per_class: usize,
        #[serde(default = "one")]
        spread: f64,
        #[serde(default = "default_half_width")]
        mean_half_width: f64,
    },
    Csv {
        train: String,
        test: String,
        /// Labelled pool file; when absent the pool is carved from `train`.
        #[serde(default)]
        pool: Option<String>,
        label_column: usize,
        #[serde(default)]
        has_header: bool,
        #[serde(default = "default_pool_fraction")]
        pool_fraction: f64,
    },
    Idx {
        train_images: String,
        train_labels: String,
        test_images: String,
        test_labels: String,
        #[serde(default = "default_pool_fraction")]
        pool_fraction: f64,
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Forest,
    Mlp,
    DirichletHistogram,
    FiniteRbf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default = "empty_object")]
    pub hyperparameters: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestHyperparameters {
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    #[serde(default = "one_usize")]
    pub min_leaf: usize,
    #[serde(default = "one")]
    pub smoothing: f64,
    #[serde(default)]
    pub max_features: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpHyperparameters {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletHyperparameters {
    #[serde(default = "default_bins")]
    pub bins_per_dim: usize,
    #[serde(default = "one")]
    pub alpha0: f64,
    /// Bounding box; derived from the data when absent.
    #[serde(default)]
    pub lower: Option<Vec<f64>>,
    #[serde(default)]
    pub upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteRbfHyperparameters {
    #[serde(default = "default_centers")]
    pub num_centers: usize,
    #[serde(default = "default_length_scale")]
    pub length_scale: f64,
    #[serde(default = "default_weight_scale")]
    pub weight_scale: f64,
    #[serde(default = "default_label_noise")]
    pub label_noise: f64,
    #[serde(default)]
    pub lower: Option<Vec<f64>>,
    #[serde(default)]
    pub upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub name: Objective,
    #[serde(default = "one")]
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreConfig {
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    pub m: usize,
    /// Examples added per step; defaults to `m / steps`.
    #[serde(default)]
    pub quota: Option<usize>,
    #[serde(default = "one_usize")]
    pub tau: usize,
    /// Refit before every k-th pick within a step. Values above 1
    /// approximate the interleaved protocol.
    #[serde(default = "one_usize")]
    pub refit_every: usize,
    #[serde(default)]
    pub costs: CostModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSource {
    Global,
    SeenSoFar,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    #[serde(default = "default_target_source")]
    pub source: TargetSource,
    /// Feature CSV for the `fixed` source.
    #[serde(default)]
    pub path: Option<String>,
    #[serde(rename = "M", default = "default_targets")]
    pub m: usize,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            source: TargetSource::Global,
            path: None,
            m: default_targets(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    /// Posterior samples: trees, dropout masks, Dirichlet draws or
    /// hypotheses, depending on the model.
    #[serde(rename = "K", default)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub patience: Option<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lr: default_lr(),
            max_steps: default_max_steps(),
            weight_decay: default_weight_decay(),
            val_fraction: default_val_fraction(),
            patience: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_output_dir")]
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_output_dir(),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_half_width() -> f64 {
    crate::streams::DEFAULT_BLOB_HALF_WIDTH
}
fn default_pool_fraction() -> f64 {
    0.2
}
fn empty_object() -> Value {
    Value::Object(Default::default())
}
fn default_depth() -> usize {
    8
}
fn default_hidden() -> Vec<usize> {
    vec![128, 128, 128]
}
fn default_dropout() -> f64 {
    0.1
}
fn default_bins() -> usize {
    10
}
fn default_centers() -> usize {
    12
}
fn default_length_scale() -> f64 {
    1.5
}
fn default_weight_scale() -> f64 {
    2.0
}
fn default_label_noise() -> f64 {
    0.02
}
fn default_strategy() -> Strategy {
    Strategy::D
}
fn default_target_source() -> TargetSource {
    TargetSource::Global
}
fn default_targets() -> usize {
    100
}
fn default_lr() -> f64 {
    0.01
}
fn default_max_steps() -> usize {
    100_000
}
fn default_weight_decay() -> f64 {
    1e-4
}
fn default_val_fraction() -> f64 {
    0.1
}
fn default_output_dir() -> String {
    "results".into()
}

fn typed<T: DeserializeOwned>(value: &Value, prefix: &str) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." {
            prefix.to_string()
        } else {
            format!("{prefix}.{inner}")
        };
        ConfigError::new(path, e.inner().to_string())
    })
}

/// Parses `value` as JSON, or takes it as a bare string if that fails.
fn override_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Applies `a.b.c=value` to a JSON document. Missing intermediate objects
/// are created; schema checks happen when the document is parsed.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<(), ConfigError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::new(spec, "override must look like key.path=value"))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(ConfigError::new(path, "empty key in override path"));
    }
    let mut at = doc;
    for (i, key) in keys.iter().enumerate() {
        let obj = at
            .as_object_mut()
            .ok_or_else(|| ConfigError::new(keys[..i].join("."), "not an object"))?;
        if i + 1 == keys.len() {
            obj.insert((*key).to_string(), override_value(raw));
            return Ok(());
        }
        at = obj.entry(*key).or_insert_with(empty_object);
    }
    unreachable!("override path has at least one key")
}

impl RunConfig {
    pub fn from_value(value: Value) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_path_to_error::deserialize(value)
            .map_err(|e| ConfigError::new(e.path().to_string(), e.inner().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| ConfigError::new(".", e.to_string()))?;
        Self::from_value(value)
    }

    /// Reads a config file and applies `key.path=value` overrides in order.
    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(path.display().to_string(), e.to_string()))?;
        let mut value: Value =
            serde_json::from_str(&text).map_err(|e| ConfigError::new(".", e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let steps = self.stream.steps;
        if steps == 0 {
            return Err(ConfigError::new("stream.steps", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.stream.label_noise) {
            return Err(ConfigError::new("stream.label_noise", "must lie in [0, 1]"));
        }
        if self.store.m == 0 {
            return Err(ConfigError::new("store.m", "must be at least 1"));
        }
        if self.store.tau == 0 {
            return Err(ConfigError::new("store.tau", "must be at least 1"));
        }
        if self.store.refit_every == 0 {
            return Err(ConfigError::new("store.refit_every", "must be at least 1"));
        }
        if self.store.strategy == Strategy::D {
            let q = self.quota()?;
            if q == 0 || q * steps > self.store.m {
                return Err(ConfigError::new(
                    "store.quota",
                    format!(
                        "quota {q} over {steps} steps does not fit a store of {}",
                        self.store.m
                    ),
                ));
            }
        }
        if !self.objective.eta.is_finite() {
            return Err(ConfigError::new("objective.eta", "must be finite"));
        }
        if self.targets.m == 0 {
            return Err(ConfigError::new("targets.M", "must be at least 1"));
        }
        if self.targets.source == TargetSource::Fixed && self.targets.path.is_none() {
            return Err(ConfigError::new(
                "targets.path",
                "required for the fixed target source",
            ));
        }
        if self.sampling.k == Some(0) {
            return Err(ConfigError::new("sampling.K", "must be at least 1"));
        }
        match &self.stream.dataset {
            DatasetConfig::SynthBlobs {
                num_classes,
                dim,
                per_class,
                test_per_class,
                spread,
                ..
            } => {
                if *num_classes < 2
                    || *dim == 0
                    || *per_class == 0
                    || *test_per_class == 0
                    || !(*spread >= 0.0)
                {
                    return Err(ConfigError::new(
                        "stream.dataset",
                        "synthetic blobs need >= 2 classes, dim >= 1, non-empty splits and spread >= 0",
                    ));
                }
            }
            DatasetConfig::Csv { pool_fraction, .. } | DatasetConfig::Idx { pool_fraction, .. } => {
                if !(0.0..1.0).contains(pool_fraction) {
                    return Err(ConfigError::new(
                        "stream.dataset.pool_fraction",
                        "must lie in [0, 1)",
                    ));
                }
            }
        }
        self.check_hyperparameters()
    }

    fn check_hyperparameters(&self) -> Result<(), ConfigError> {
        let h = &self.model.hyperparameters;
        let p = "model.hyperparameters";
        match self.model.kind {
            ModelKind::Forest => typed::<ForestHyperparameters>(h, p).map(drop),
            ModelKind::Mlp => typed::<MlpHyperparameters>(h, p).map(drop),
            ModelKind::DirichletHistogram => typed::<DirichletHyperparameters>(h, p).map(drop),
            ModelKind::FiniteRbf => typed::<FiniteRbfHyperparameters>(h, p).map(drop),
        }
    }

    /// Per-step additions under strategy D.
    pub fn quota(&self) -> Result<usize, ConfigError> {
        match self.store.quota {
            Some(q) => Ok(q),
            None if self.store.m % self.stream.steps == 0 => Ok(self.store.m / self.stream.steps),
            None => Err(ConfigError::new(
                "store.quota",
                format!(
                    "m = {} is not divisible by {} steps; set a quota",
                    self.store.m, self.stream.steps
                ),
            )),
        }
    }

    pub fn resolved_seeds(&self) -> Vec<u64> {
        if !self.seeds.is_empty() {
            return self.seeds.clone();
        }
        let fallback = std::env::var("STREAMSIFT_SEED")
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .unwrap_or(0);
        vec![fallback]
    }

    /// Builds an unfitted model for data with `num_classes` labels inside
    /// the box `[lower, upper]`.
    pub fn build_model(
        &self,
        num_classes: usize,
        lower: &[f64],
        upper: &[f64],
        seed: u64,
    ) -> Result<Box<dyn PredictiveModel>, BuildError> {
        self.model.build(
            self.sampling.k,
            &self.training,
            num_classes,
            lower,
            upper,
            seed,
        )
    }
}

impl ModelConfig {
    /// Builds an unfitted model. `k` overrides the kind's default sample
    /// count; `training` only affects the MLP.
    pub fn build(
        &self,
        k: Option<usize>,
        training: &TrainingConfig,
        num_classes: usize,
        lower: &[f64],
        upper: &[f64],
        seed: u64,
    ) -> Result<Box<dyn PredictiveModel>, BuildError> {
        let h = &self.hyperparameters;
        let p = "model.hyperparameters";
        let bounds = |lo: &Option<Vec<f64>>, hi: &Option<Vec<f64>>| {
            (
                lo.clone().unwrap_or_else(|| lower.to_vec()),
                hi.clone().unwrap_or_else(|| upper.to_vec()),
            )
        };
        Ok(match self.kind {
            ModelKind::Forest => {
                let hp: ForestHyperparameters = typed(h, p)?;
                let mut cfg = ForestConfig::new(num_classes, k.unwrap_or(50));
                cfg.max_depth = hp.max_depth;
                cfg.min_leaf = hp.min_leaf;
                cfg.smoothing = hp.smoothing;
                cfg.max_features = hp.max_features;
                cfg.seed = seed;
                Box::new(BootstrapForest::new(cfg)?)
            }
            ModelKind::Mlp => {
                let hp: MlpHyperparameters = typed(h, p)?;
                let t = training;
                let mut cfg = MlpConfig::new(num_classes, hp.hidden);
                cfg.dropout = hp.dropout;
                cfg.learning_rate = t.lr;
                cfg.max_steps = t.max_steps;
                cfg.weight_decay = t.weight_decay;
                cfg.val_fraction = t.val_fraction;
                cfg.patience = t.patience;
                cfg.num_samples = k.unwrap_or(cfg.num_samples);
                cfg.seed = seed;
                Box::new(DropoutMlp::new(cfg)?)
            }
            ModelKind::DirichletHistogram => {
                let hp: DirichletHyperparameters = typed(h, p)?;
                let (lower, upper) = bounds(&hp.lower, &hp.upper);
                Box::new(DirichletHistogramClassifier::new(
                    DirichletHistogramConfig {
                        num_classes,
                        lower,
                        upper,
                        bins_per_dim: hp.bins_per_dim,
                        alpha0: hp.alpha0,
                        num_samples: k.unwrap_or(100),
                        seed,
                    },
                )?)
            }
            ModelKind::FiniteRbf => {
                let hp: FiniteRbfHyperparameters = typed(h, p)?;
                let (lower, upper) = bounds(&hp.lower, &hp.upper);
                let family = RbfLogisticHypotheses::sample(RbfLogisticConfig {
                    num_hypotheses: k.unwrap_or(512),
                    num_classes,
                    num_centers: hp.num_centers,
                    lower,
                    upper,
                    length_scale: hp.length_scale,
                    weight_scale: hp.weight_scale,
                    label_noise: hp.label_noise,
                    seed,
                })?;
                Box::new(FiniteHypothesisModel::new(family, None)?)
            }
        })
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    pub(crate) fn minimal() -> Value {
        json!({
            "stream": {
                "kind": "split",
                "steps": 2,
                "dataset": {"source": "synth_blobs", "num_classes": 4, "dim": 2,
                            "per_class": 10, "test_per_class": 5, "pool_per_class": 5}
            },
            "model": {"kind": "forest"},
            "objective": {"name": "epig"},
            "store": {"m": 4},
            "seeds": [1]
        })
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = RunConfig::from_value(minimal()).unwrap();
        assert_eq!(cfg.store.strategy, Strategy::D);
        assert_eq!(cfg.quota().unwrap(), 2);
        assert_eq!(cfg.objective.eta, 1.0);
        assert_eq!(cfg.targets.source, TargetSource::Global);
        assert_eq!(cfg.targets.m, 100);
    }

    #[test]
    fn unknown_objective_names_field() {
        let mut v = minimal();
        v["objective"]["name"] = json!("foo");
        let err = RunConfig::from_value(v).unwrap_err();
        assert_eq!(err.path, "objective.name");
        assert!(err.message.contains("foo"));
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v = minimal();
        v["store"]["capacity"] = json!(3);
        assert_eq!(RunConfig::from_value(v).unwrap_err().path, "store.capacity");
        let mut v = minimal();
        v["model"]["hyperparameters"] = json!({"depth": 3});
        let err = RunConfig::from_value(v).unwrap_err();
        assert!(err.path.starts_with("model.hyperparameters"), "{err}");
        let mut v = minimal();
        v["stream"]["dataset"]["dims"] = json!(3);
        assert!(RunConfig::from_value(v)
            .unwrap_err()
            .path
            .starts_with("stream.dataset"));
    }

    #[test]
    fn quota_must_divide() {
        let mut v = minimal();
        v["store"]["m"] = json!(5);
        assert_eq!(RunConfig::from_value(v).unwrap_err().path, "store.quota");
    }

    #[test]
    fn overrides() {
        let mut v = minimal();
        apply_override(&mut v, "store.m=8").unwrap();
        apply_override(&mut v, "seeds=[1,2]").unwrap();
        apply_override(&mut v, "objective.name=random").unwrap();
        apply_override(&mut v, "sampling.K=7").unwrap();
        let cfg = RunConfig::from_value(v).unwrap();
        assert_eq!(cfg.store.m, 8);
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.objective.name, Objective::Random);
        assert_eq!(cfg.sampling.k, Some(7));
        assert!(apply_override(&mut minimal(), "store.m").is_err());
        assert!(apply_override(&mut minimal(), "seeds.x=1").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig::from_value(minimal()).unwrap();
        let echoed = serde_json::to_value(&cfg).unwrap();
        assert_eq!(RunConfig::from_value(echoed).unwrap(), cfg);
    }

    #[test]
    fn builds_every_model_kind() {
        for kind in ["forest", "mlp", "dirichlet_histogram", "finite_rbf"] {
            let mut v = minimal();
            v["model"]["kind"] = json!(kind);
            v["sampling"] = json!({"K": 4});
            let cfg = RunConfig::from_value(v).unwrap();
            let m = cfg.build_model(3, &[0.0, 0.0], &[1.0, 1.0], 0).unwrap();
            assert_eq!(m.num_classes(), 3);
        }
    }
}
