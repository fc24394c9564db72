//! Bootstrap-aggregated classification trees. Each tree is one posterior
//! "sample"; its conditional predictive is the Laplace-smoothed class
//! frequency of the leaf an input lands in.

use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_examples, LabelledExample, ModelError, PredictiveEnsemble, PredictiveModel};
use crate::seeding::rng_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestConfig {
    pub num_classes: usize,
    #[serde(default = "default_trees")]
    pub num_trees: usize,
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    #[serde(default = "default_min_leaf")]
    pub min_leaf: usize,
    /// Laplace pseudo-count per class at every leaf.
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
    /// Features considered per split; `None` means `ceil(sqrt(D))`.
    #[serde(default)]
    pub max_features: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_trees() -> usize {
    50
}
fn default_depth() -> usize {
    8
}
fn default_min_leaf() -> usize {
    1
}
fn default_smoothing() -> f64 {
    1.0
}

impl ForestConfig {
    pub fn new(num_classes: usize, num_trees: usize) -> Self {
        Self {
            num_classes,
            num_trees,
            max_depth: default_depth(),
            min_leaf: default_min_leaf(),
            smoothing: default_smoothing(),
            max_features: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        probs: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf_probs(&self, x: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { probs } => return probs,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }
}

struct TreeBuilder<'a> {
    data: &'a [LabelledExample],
    config: &'a ForestConfig,
    max_features: usize,
    dim: usize,
    nodes: Vec<Node>,
}

fn gini_mass(counts: &[f64], n: f64) -> f64 {
    // n · gini = n - Σ c² / n
    if n == 0.0 {
        return 0.0;
    }
    n - counts.iter().map(|c| c * c).sum::<f64>() / n
}

impl TreeBuilder<'_> {
    fn leaf(&self, idx: &[usize]) -> Node {
        let c = self.config.num_classes;
        let beta = self.config.smoothing;
        let mut counts = vec![0.0; c];
        for &i in idx {
            counts[self.data[i].label] += 1.0;
        }
        let denom = idx.len() as f64 + beta * c as f64;
        Node::Leaf {
            probs: counts.iter().map(|n| (n + beta) / denom).collect(),
        }
    }

    fn build(&mut self, idx: &mut [usize], depth: usize, rng: &mut crate::seeding::Rng) -> usize {
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { probs: Vec::new() });
        let pure = idx
            .iter()
            .all(|&i| self.data[i].label == self.data[idx[0]].label);
        let split =
            if pure || depth >= self.config.max_depth || idx.len() < 2 * self.config.min_leaf {
                None
            } else {
                self.best_split(idx, rng)
            };
        match split {
            None => self.nodes[slot] = self.leaf(idx),
            Some((feature, threshold)) => {
                let mut cut = 0;
                for i in 0..idx.len() {
                    if self.data[idx[i]].features[feature] <= threshold {
                        idx.swap(i, cut);
                        cut += 1;
                    }
                }
                let (l, r) = idx.split_at_mut(cut);
                let left = self.build(l, depth + 1, rng);
                let right = self.build(r, depth + 1, rng);
                self.nodes[slot] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
            }
        }
        slot
    }

    /// Lowest weighted Gini impurity over a random feature subset; ties keep
    /// the earliest (feature, threshold) in ascending order.
    fn best_split(&self, idx: &[usize], rng: &mut crate::seeding::Rng) -> Option<(usize, f64)> {
        let c = self.config.num_classes;
        let mut features = sample_indices(rng, self.dim, self.max_features).into_vec();
        features.sort_unstable();
        let n = idx.len();
        let mut total = vec![0.0; c];
        for &i in idx {
            total[self.data[i].label] += 1.0;
        }
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<usize> = idx.to_vec();
        for &f in &features {
            order.sort_by(|&a, &b| self.data[a].features[f].total_cmp(&self.data[b].features[f]));
            let mut left = vec![0.0; c];
            for pos in 1..n {
                left[self.data[order[pos - 1]].label] += 1.0;
                let lo = self.data[order[pos - 1]].features[f];
                let hi = self.data[order[pos]].features[f];
                if lo == hi || pos < self.config.min_leaf || n - pos < self.config.min_leaf {
                    continue;
                }
                let right: Vec<f64> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
                let score = gini_mass(&left, pos as f64) + gini_mass(&right, (n - pos) as f64);
                if best.is_none_or(|(s, _, _)| score < s - 1e-12) {
                    best = Some((score, f, lo + 0.5 * (hi - lo)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Random forest whose trees act as equally weighted posterior samples.
#[derive(Debug, Clone)]
pub struct BootstrapForest {
    config: ForestConfig,
    dim: Option<usize>,
    trees: Vec<Tree>,
}

impl BootstrapForest {
    pub fn new(config: ForestConfig) -> Result<Self, ModelError> {
        if config.num_classes < 2 || config.num_trees == 0 || config.min_leaf == 0 {
            return Err(ModelError::InvalidConfig(
                "forest needs >= 2 classes, >= 1 tree and min_leaf >= 1".into(),
            ));
        }
        if !(config.smoothing > 0.0) {
            return Err(ModelError::InvalidConfig(
                "leaf smoothing must be positive".into(),
            ));
        }
        Ok(Self {
            config,
            dim: None,
            trees: Vec::new(),
        })
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }
}

impl PredictiveModel for BootstrapForest {
    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn fit(&mut self, data: &[LabelledExample]) -> Result<(), ModelError> {
        let dim = check_examples(data, self.config.num_classes, None)?;
        let max_features = self
            .config
            .max_features
            .unwrap_or_else(|| (dim as f64).sqrt().ceil() as usize)
            .clamp(1, dim.max(1));
        let config = &self.config;
        self.trees = (0..config.num_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng_from(config.seed, &[0xF0E5, t as u64]);
                let mut idx: Vec<usize> = (0..data.len())
                    .map(|_| rng.random_range(0..data.len()))
                    .collect();
                let mut builder = TreeBuilder {
                    data,
                    config,
                    max_features,
                    dim,
                    nodes: Vec::new(),
                };
                builder.build(&mut idx, 0, &mut rng);
                Tree {
                    nodes: builder.nodes,
                }
            })
            .collect();
        self.dim = Some(dim);
        Ok(())
    }

    fn ensemble_predict(&self, x: &[f64]) -> Result<PredictiveEnsemble, ModelError> {
        let dim = self.dim.ok_or(ModelError::NotFitted)?;
        if x.len() != dim {
            return Err(ModelError::DimensionMismatch {
                expected: dim,
                found: x.len(),
            });
        }
        let k = self.trees.len();
        let mut rows = Vec::with_capacity(k * self.config.num_classes);
        for tree in &self.trees {
            rows.extend_from_slice(tree.leaf_probs(x));
        }
        Ok(PredictiveEnsemble::from_trusted(
            self.config.num_classes,
            rows,
            vec![1.0 / k as f64; k],
        ))
    }
}
