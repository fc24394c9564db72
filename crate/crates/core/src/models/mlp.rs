//! Fully connected ReLU network with dropout on hidden layers.
//!
//! Training is full-batch gradient descent on mean NLL plus an L2 penalty on
//! the whole parameter vector, keeping the parameters with the lowest
//! validation NLL seen. Each posterior sample is one fixed dropout mask set,
//! shared across all inputs so predictions stay jointly consistent.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_examples, LabelledExample, ModelError, PredictiveEnsemble, PredictiveModel};
use crate::prob::{log_sum_exp, softmax};
use crate::seeding::{rng_from, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub num_classes: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    /// Stop after this many steps without a new best validation NLL.
    #[serde(default)]
    pub patience: Option<usize>,
    #[serde(default = "default_samples")]
    pub num_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_hidden() -> Vec<usize> {
    vec![128, 128, 128]
}
fn default_dropout() -> f64 {
    0.1
}
fn default_lr() -> f64 {
    0.01
}
fn default_weight_decay() -> f64 {
    1e-4
}
fn default_max_steps() -> usize {
    100_000
}
fn default_val_fraction() -> f64 {
    0.1
}
fn default_samples() -> usize {
    32
}

impl MlpConfig {
    pub fn new(num_classes: usize, hidden: Vec<usize>) -> Self {
        Self {
            num_classes,
            hidden,
            dropout: default_dropout(),
            learning_rate: default_lr(),
            weight_decay: default_weight_decay(),
            max_steps: default_max_steps(),
            val_fraction: default_val_fraction(),
            patience: None,
            num_samples: default_samples(),
            seed: 0,
        }
    }
}

/// One dropout mask per hidden layer, already scaled by `1 / (1 - rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMaskSet {
    pub masks: Vec<Vec<f64>>,
}

impl DropoutMaskSet {
    /// Inverted-dropout masks for hidden layers of the given widths.
    pub fn sample(widths: &[usize], rate: f64, rng: &mut Rng) -> Self {
        let keep = 1.0 - rate;
        Self {
            masks: widths
                .iter()
                .map(|&w| {
                    (0..w)
                        .map(|_| {
                            if rate == 0.0 || rng.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerShape {
    inputs: usize,
    outputs: usize,
    offset: usize,
}

#[derive(Debug, Clone)]
pub struct DropoutMlp {
    config: MlpConfig,
    layers: Vec<LayerShape>,
    params: Vec<f64>,
    sample_masks: Vec<DropoutMaskSet>,
    input_dim: Option<usize>,
}

impl DropoutMlp {
    pub fn new(config: MlpConfig) -> Result<Self, ModelError> {
        if config.num_classes < 2 {
            return Err(ModelError::InvalidConfig("need at least 2 classes".into()));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(ModelError::InvalidConfig(
                "dropout rate must be in [0, 1)".into(),
            ));
        }
        if config.hidden.iter().any(|&w| w == 0) || config.num_samples == 0 {
            return Err(ModelError::InvalidConfig(
                "layer widths and num_samples must be positive".into(),
            ));
        }
        if !(config.learning_rate > 0.0) || config.weight_decay < 0.0 {
            return Err(ModelError::InvalidConfig(
                "learning rate must be positive, weight decay non-negative".into(),
            ));
        }
        if !(0.0..1.0).contains(&config.val_fraction) {
            return Err(ModelError::InvalidConfig(
                "val_fraction must be in [0, 1)".into(),
            ));
        }
        Ok(Self {
            config,
            layers: Vec::new(),
            params: Vec::new(),
            sample_masks: Vec::new(),
            input_dim: None,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    /// Lays out and initializes parameters for `input_dim` features with He
    /// initialization drawn from the configured seed.
    pub fn initialize(&mut self, input_dim: usize) {
        let mut widths = vec![input_dim];
        widths.extend(&self.config.hidden);
        widths.push(self.config.num_classes);
        self.layers.clear();
        let mut offset = 0;
        for pair in widths.windows(2) {
            self.layers.push(LayerShape {
                inputs: pair[0],
                outputs: pair[1],
                offset,
            });
            offset += pair[0] * pair[1] + pair[1];
        }
        let mut rng = rng_from(self.config.seed, &[0x1417]);
        let mut params = vec![0.0; offset];
        for layer in &self.layers {
            let std = (2.0 / layer.inputs as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            for w in &mut params[layer.offset..layer.offset + layer.inputs * layer.outputs] {
                *w = normal.sample(&mut rng);
            }
        }
        self.params = params;
        self.input_dim = Some(input_dim);
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) {
        assert_eq!(params.len(), self.params.len(), "parameter count mismatch");
        self.params = params;
    }

    pub fn sample_mask_sets(&self) -> &[DropoutMaskSet] {
        &self.sample_masks
    }

    fn forward_with(
        &self,
        params: &[f64],
        x: &[f64],
        masks: Option<&DropoutMaskSet>,
        acts: &mut Vec<Vec<f64>>,
    ) -> Vec<f64> {
        acts.clear();
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let w = &params[layer.offset..layer.offset + layer.inputs * layer.outputs];
            let b = &params[layer.offset + layer.inputs * layer.outputs
                ..layer.offset + layer.inputs * layer.outputs + layer.outputs];
            let input = acts.last().expect("input pushed");
            let mut out: Vec<f64> = w
                .chunks_exact(layer.inputs)
                .zip(b)
                .map(|(row, bias)| bias + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>())
                .collect();
            if l < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
                if let Some(m) = masks {
                    out.iter_mut().zip(&m.masks[l]).for_each(|(v, s)| *v *= s);
                }
            }
            acts.push(out);
        }
        acts.last().expect("output layer").clone()
    }

    fn logits(&self, x: &[f64], masks: Option<&DropoutMaskSet>) -> Vec<f64> {
        let mut acts = Vec::new();
        self.forward_with(&self.params, x, masks, &mut acts)
    }

    /// Mean NLL without dropout, the early-stopping criterion.
    fn mean_nll(&self, params: &[f64], data: &[LabelledExample]) -> f64 {
        let mut acts = Vec::new();
        data.iter()
            .map(|ex| {
                let logits = self.forward_with(params, &ex.features, None, &mut acts);
                log_sum_exp(&logits) - logits[ex.label]
            })
            .sum::<f64>()
            / data.len() as f64
    }

    /// Training objective `mean NLL + λ‖θ‖²` and its gradient at the current
    /// parameters. `masks`, when given, holds one mask set per example.
    pub fn loss_and_gradient(
        &self,
        data: &[LabelledExample],
        masks: Option<&[DropoutMaskSet]>,
    ) -> (f64, Vec<f64>) {
        self.loss_and_gradient_at(&self.params, data, masks)
    }

    fn loss_and_gradient_at(
        &self,
        params: &[f64],
        data: &[LabelledExample],
        masks: Option<&[DropoutMaskSet]>,
    ) -> (f64, Vec<f64>) {
        let n = data.len() as f64;
        let lambda = self.config.weight_decay;
        let mut grad: Vec<f64> = params.iter().map(|p| 2.0 * lambda * p).collect();
        let mut loss = lambda * params.iter().map(|p| p * p).sum::<f64>();
        let mut acts = Vec::new();
        let last = self.layers.len() - 1;
        for (i, ex) in data.iter().enumerate() {
            let mask = masks.map(|m| &m[i]);
            let logits = self.forward_with(params, &ex.features, mask, &mut acts);
            let probs = softmax(&logits);
            loss += (log_sum_exp(&logits) - logits[ex.label]) / n;
            // dL/dz at the output
            let mut delta: Vec<f64> = probs
                .iter()
                .enumerate()
                .map(|(c, p)| (p - if c == ex.label { 1.0 } else { 0.0 }) / n)
                .collect();
            for l in (0..=last).rev() {
                let layer = self.layers[l];
                let input = &acts[l];
                let w_off = layer.offset;
                let b_off = layer.offset + layer.inputs * layer.outputs;
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &mut grad[w_off + o * layer.inputs..w_off + (o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(g, a)| *g += d * a);
                    grad[b_off + o] += d;
                }
                if l == 0 {
                    break;
                }
                // back through the weights, then the mask and ReLU of layer l-1
                let w = &params[w_off..w_off + layer.inputs * layer.outputs];
                let mut prev = vec![0.0; layer.inputs];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    prev.iter_mut()
                        .zip(&w[o * layer.inputs..(o + 1) * layer.inputs])
                        .for_each(|(p, wv)| *p += d * wv);
                }
                let post = &acts[l];
                for (j, p) in prev.iter_mut().enumerate() {
                    // post-activation is zero exactly when the unit is inactive or dropped
                    if post[j] == 0.0 {
                        *p = 0.0;
                    } else if let Some(m) = mask {
                        *p *= m.masks[l - 1][j];
                    }
                }
                delta = prev;
            }
        }
        (loss, grad)
    }

    fn split_validation<'a>(
        &self,
        data: &'a [LabelledExample],
        rng: &mut Rng,
    ) -> (Vec<&'a LabelledExample>, Vec<&'a LabelledExample>) {
        let n = data.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        if n < 2 || self.config.val_fraction == 0.0 {
            let all: Vec<_> = order.iter().map(|&i| &data[i]).collect();
            return (all.clone(), all);
        }
        let n_val = ((n as f64 * self.config.val_fraction).floor() as usize).clamp(1, n - 1);
        let val = order[..n_val].iter().map(|&i| &data[i]).collect();
        let train = order[n_val..].iter().map(|&i| &data[i]).collect();
        (train, val)
    }
}

impl PredictiveModel for DropoutMlp {
    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    /// Full refit from the seeded initialization.
    fn fit(&mut self, data: &[LabelledExample]) -> Result<(), ModelError> {
        let dim = check_examples(data, self.config.num_classes, None)?;
        self.initialize(dim);
        let mut rng = rng_from(self.config.seed, &[0x7A11]);
        let (train, val) = self.split_validation(data, &mut rng);
        let train: Vec<LabelledExample> = train.into_iter().cloned().collect();
        let val: Vec<LabelledExample> = val.into_iter().cloned().collect();
        let widths = self.config.hidden.clone();

        let mut params = self.params.clone();
        let mut best = params.clone();
        let mut best_val = self.mean_nll(&params, &val);
        let mut best_step = 0;
        for step in 0..self.config.max_steps {
            if self.config.patience.is_some_and(|p| step - best_step > p) {
                break;
            }
            let masks: Vec<DropoutMaskSet> = train
                .iter()
                .map(|_| DropoutMaskSet::sample(&widths, self.config.dropout, &mut rng))
                .collect();
            let (loss, grad) = self.loss_and_gradient_at(&params, &train, Some(&masks));
            if !loss.is_finite() {
                return Err(ModelError::TrainingDiverged { step, loss });
            }
            params
                .iter_mut()
                .zip(&grad)
                .for_each(|(p, g)| *p -= self.config.learning_rate * g);
            let v = self.mean_nll(&params, &val);
            if !v.is_finite() {
                return Err(ModelError::TrainingDiverged { step, loss: v });
            }
            if v < best_val {
                best_val = v;
                best_step = step + 1;
                best.copy_from_slice(&params);
            }
        }
        self.params = best;
        let mut mask_rng = rng_from(self.config.seed, &[0x5A3B]);
        self.sample_masks = (0..self.config.num_samples)
            .map(|_| DropoutMaskSet::sample(&widths, self.config.dropout, &mut mask_rng))
            .collect();
        Ok(())
    }

    fn ensemble_predict(&self, x: &[f64]) -> Result<PredictiveEnsemble, ModelError> {
        let dim = self.input_dim.ok_or(ModelError::NotFitted)?;
        if self.sample_masks.is_empty() {
            return Err(ModelError::NotFitted);
        }
        if x.len() != dim {
            return Err(ModelError::DimensionMismatch {
                expected: dim,
                found: x.len(),
            });
        }
        let k = self.sample_masks.len();
        let mut rows = Vec::with_capacity(k * self.config.num_classes);
        for masks in &self.sample_masks {
            rows.extend(softmax(&self.logits(x, Some(masks))));
        }
        Ok(PredictiveEnsemble::from_trusted(
            self.config.num_classes,
            rows,
            vec![1.0 / k as f64; k],
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relative_error(a: f64, b: f64) -> f64 {
        (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
    }

    fn finite_difference_check(
        model: &DropoutMlp,
        data: &[LabelledExample],
        masks: Option<&[DropoutMaskSet]>,
    ) -> f64 {
        let (_, grad) = model.loss_and_gradient(data, masks);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..model.params().len() {
            let mut plus = model.params().to_vec();
            plus[i] += h;
            let mut minus = model.params().to_vec();
            minus[i] -= h;
            let (lp, _) = model.loss_and_gradient_at(&plus, data, masks);
            let (lm, _) = model.loss_and_gradient_at(&minus, data, masks);
            let numeric = (lp - lm) / (2.0 * h);
            worst = worst.max(relative_error(grad[i], numeric));
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences_linear() {
        let mut cfg = MlpConfig::new(2, vec![]);
        cfg.weight_decay = 0.0;
        let mut m = DropoutMlp::new(cfg).unwrap();
        m.initialize(1);
        m.set_params(vec![0.7, -0.4, 0.1, 0.2]);
        let data = vec![
            LabelledExample::new(vec![0.5], 0),
            LabelledExample::new(vec![-1.5], 1),
        ];
        assert!(finite_difference_check(&m, &data, None) < 1e-4);
    }

    #[test]
    fn gradient_matches_finite_differences_hidden_with_masks() {
        let mut cfg = MlpConfig::new(3, vec![5, 4]);
        cfg.dropout = 0.3;
        cfg.weight_decay = 0.05;
        let mut m = DropoutMlp::new(cfg).unwrap();
        m.initialize(2);
        let data = vec![
            LabelledExample::new(vec![0.3, -0.8], 0),
            LabelledExample::new(vec![-1.2, 0.4], 2),
            LabelledExample::new(vec![0.9, 1.1], 1),
        ];
        let mut rng = rng_from(3, &[]);
        let masks: Vec<_> = data
            .iter()
            .map(|_| DropoutMaskSet::sample(&[5, 4], 0.3, &mut rng))
            .collect();
        assert!(finite_difference_check(&m, &data, Some(&masks)) < 1e-4);
        assert!(finite_difference_check(&m, &data, None) < 1e-4);
    }

    #[test]
    fn weight_decay_gradient() {
        let mut cfg = MlpConfig::new(2, vec![3]);
        cfg.weight_decay = 0.25;
        let mut m = DropoutMlp::new(cfg.clone()).unwrap();
        m.initialize(2);
        let data = vec![LabelledExample::new(vec![0.4, 0.1], 1)];
        let (loss, grad) = m.loss_and_gradient(&data, None);
        cfg.weight_decay = 0.0;
        let mut plain = DropoutMlp::new(cfg).unwrap();
        plain.initialize(2);
        let (loss0, grad0) = plain.loss_and_gradient(&data, None);
        let sq: f64 = m.params().iter().map(|p| p * p).sum();
        assert!((loss - loss0 - 0.25 * sq).abs() < 1e-12);
        for ((g, g0), p) in grad.iter().zip(&grad0).zip(m.params()) {
            assert!((g - g0 - 0.5 * p).abs() < 1e-12);
        }
    }

    #[test]
    fn no_dropout_means_identical_samples() {
        let mut cfg = MlpConfig::new(2, vec![4]);
        cfg.dropout = 0.0;
        cfg.max_steps = 5;
        cfg.num_samples = 6;
        let mut m = DropoutMlp::new(cfg).unwrap();
        let data = vec![
            LabelledExample::new(vec![0.0, 1.0], 0),
            LabelledExample::new(vec![1.0, 0.0], 1),
        ];
        m.fit(&data).unwrap();
        let e = m.ensemble_predict(&[0.5, 0.2]).unwrap();
        for j in 1..6 {
            assert_eq!(e.row(j), e.row(0));
        }
    }

    #[test]
    fn separable_blobs_reach_high_validation_accuracy() {
        let mut rng = rng_from(9, &[]);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut data = Vec::new();
        for i in 0..100 {
            let label = i % 2;
            let centre = if label == 0 { -2.0 } else { 2.0 };
            data.push(LabelledExample::new(
                vec![
                    centre + noise.sample(&mut rng),
                    centre + noise.sample(&mut rng),
                ],
                label,
            ));
        }
        let mut cfg = MlpConfig::new(2, vec![16]);
        cfg.max_steps = 200;
        cfg.learning_rate = 0.1;
        cfg.val_fraction = 0.2;
        let mut m = DropoutMlp::new(cfg).unwrap();
        m.fit(&data).unwrap();
        let (_, val) = m.split_validation(&data, &mut rng_from(0, &[0x7A11]));
        let correct = val
            .iter()
            .filter(|ex| m.marginal_predict(&ex.features).unwrap().argmax() == ex.label)
            .count();
        assert!(correct as f64 / val.len() as f64 > 0.95);
    }

    #[test]
    fn divergence_is_reported() {
        let mut cfg = MlpConfig::new(2, vec![4]);
        cfg.learning_rate = 1e200;
        cfg.max_steps = 50;
        let mut m = DropoutMlp::new(cfg).unwrap();
        let data = vec![
            LabelledExample::new(vec![1e3, -1e3], 0),
            LabelledExample::new(vec![-1e3, 1e3], 1),
        ];
        assert!(matches!(
            m.fit(&data),
            Err(ModelError::TrainingDiverged { .. })
        ));
    }
}
