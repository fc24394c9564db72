//! Per-bin Dirichlet-categorical classifier on a uniform grid.
//!
//! The input box is cut into `bins_per_dim^D` cells, each with an independent
//! symmetric Dirichlet prior over labels. Conjugacy gives the exact posterior
//! predictive and the exact parameter KL of a one-example update; the sampled
//! ensemble is what the generic estimators consume.

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{
    check_examples, check_label, LabelledExample, ModelError, Predictive, PredictiveEnsemble,
    PredictiveModel,
};
use crate::prob::{dirichlet_kl, Categorical};
use crate::seeding::rng_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletHistogramConfig {
    pub num_classes: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub bins_per_dim: usize,
    #[serde(default = "default_alpha0")]
    pub alpha0: f64,
    /// Posterior samples drawn per bin.
    #[serde(default = "default_samples")]
    pub num_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_alpha0() -> f64 {
    1.0
}
fn default_samples() -> usize {
    100
}

#[derive(Debug, Clone)]
pub struct DirichletHistogramClassifier {
    config: DirichletHistogramConfig,
    /// `num_bins × C` label counts.
    counts: Vec<f64>,
}

impl DirichletHistogramClassifier {
    pub fn new(config: DirichletHistogramConfig) -> Result<Self, ModelError> {
        if config.num_classes < 2 {
            return Err(ModelError::InvalidConfig("need at least 2 classes".into()));
        }
        if config.lower.is_empty()
            || config.lower.len() != config.upper.len()
            || config
                .lower
                .iter()
                .zip(&config.upper)
                .any(|(l, u)| !(l < u))
        {
            return Err(ModelError::InvalidConfig("invalid bounding box".into()));
        }
        if config.bins_per_dim == 0 || config.num_samples == 0 || !(config.alpha0 > 0.0) {
            return Err(ModelError::InvalidConfig(
                "bins_per_dim, num_samples and alpha0 must be positive".into(),
            ));
        }
        let num_bins = config
            .bins_per_dim
            .checked_pow(config.lower.len() as u32)
            .ok_or_else(|| ModelError::InvalidConfig("too many bins".into()))?;
        Ok(Self {
            counts: vec![0.0; num_bins * config.num_classes],
            config,
        })
    }

    pub fn config(&self) -> &DirichletHistogramConfig {
        &self.config
    }

    pub fn num_bins(&self) -> usize {
        self.counts.len() / self.config.num_classes
    }

    /// Row-major bin index of `x`. The upper edge belongs to the last bin.
    pub fn bin_of(&self, x: &[f64]) -> Result<usize, ModelError> {
        let dims = self.config.lower.len();
        if x.len() != dims {
            return Err(ModelError::DimensionMismatch {
                expected: dims,
                found: x.len(),
            });
        }
        let b = self.config.bins_per_dim;
        let mut index = 0;
        for (dim, ((&v, &lo), &hi)) in x
            .iter()
            .zip(&self.config.lower)
            .zip(&self.config.upper)
            .enumerate()
        {
            if !(lo..=hi).contains(&v) {
                return Err(ModelError::BinOutOfRange {
                    dim,
                    value: v,
                    lower: lo,
                    upper: hi,
                });
            }
            let cell = (((v - lo) / (hi - lo)) * b as f64).floor() as usize;
            index = index * b + cell.min(b - 1);
        }
        Ok(index)
    }

    /// Posterior concentrations `α₀ + n_c` of a bin.
    pub fn concentrations(&self, bin: usize) -> Result<Vec<f64>, ModelError> {
        if bin >= self.num_bins() {
            return Err(ModelError::InvalidConfig(format!(
                "bin {bin} out of range 0..{}",
                self.num_bins()
            )));
        }
        let c = self.config.num_classes;
        Ok(self.counts[bin * c..(bin + 1) * c]
            .iter()
            .map(|n| n + self.config.alpha0)
            .collect())
    }

    pub fn exact_posterior_predictive(&self, x: &[f64]) -> Result<Categorical, ModelError> {
        let alpha = self.concentrations(self.bin_of(x)?)?;
        Ok(Categorical::from_unnormalized(alpha)?)
    }

    /// Exact predictive at `x_star` after adding `(x, y)` to the counts.
    pub fn exact_predictive_after_update(
        &self,
        x: &[f64],
        y: usize,
        x_star: &[f64],
    ) -> Result<Categorical, ModelError> {
        check_label(y, self.config.num_classes)?;
        let bin = self.bin_of(x)?;
        let star_bin = self.bin_of(x_star)?;
        let mut alpha = self.concentrations(star_bin)?;
        if bin == star_bin {
            alpha[y] += 1.0;
        }
        Ok(Categorical::from_unnormalized(alpha)?)
    }

    /// `KL(p(θ | x, y) || p(θ))`. Only the bin containing `x` changes, so
    /// this is the Dirichlet KL of that bin alone.
    pub fn parameter_kl_of_update(&self, x: &[f64], y: usize) -> Result<f64, ModelError> {
        check_label(y, self.config.num_classes)?;
        let prior = self.concentrations(self.bin_of(x)?)?;
        let mut post = prior.clone();
        post[y] += 1.0;
        Ok(dirichlet_kl(&post, &prior)?)
    }

    /// View answering predictive queries in closed form.
    pub fn exact(&self) -> ExactConjugate<'_> {
        ExactConjugate(self)
    }

    fn sample_bin(&self, bin: usize) -> Result<Vec<f64>, ModelError> {
        let alpha = self.concentrations(bin)?;
        let c = alpha.len();
        let gammas: Vec<Gamma<f64>> = alpha
            .iter()
            .map(|&a| Gamma::new(a, 1.0).map_err(|e| ModelError::InvalidConfig(e.to_string())))
            .collect::<Result<_, _>>()?;
        let mut rng = rng_from(self.config.seed, &[0xD1C4, bin as u64]);
        let mut out = Vec::with_capacity(self.config.num_samples * c);
        let mut draw = vec![0.0; c];
        for _ in 0..self.config.num_samples {
            for (d, g) in draw.iter_mut().zip(&gammas) {
                *d = g.sample(&mut rng);
            }
            let total: f64 = draw.iter().sum();
            if total > 0.0 && total.is_finite() {
                out.extend(draw.iter().map(|d| d / total));
            } else {
                // every gamma underflowed; put the mass on the largest concentration
                let top = crate::prob::argmax_lowest(&alpha);
                out.extend((0..c).map(|i| if i == top { 1.0 } else { 0.0 }));
            }
        }
        Ok(out)
    }
}

impl PredictiveModel for DirichletHistogramClassifier {
    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn fit(&mut self, data: &[LabelledExample]) -> Result<(), ModelError> {
        self.counts.iter_mut().for_each(|n| *n = 0.0);
        if data.is_empty() {
            return Ok(());
        }
        check_examples(data, self.config.num_classes, Some(self.config.lower.len()))?;
        let c = self.config.num_classes;
        for ex in data {
            let bin = self.bin_of(&ex.features)?;
            self.counts[bin * c + ex.label] += 1.0;
        }
        Ok(())
    }

    /// `K` Dirichlet draws for the bin of `x`. Draws are seeded per bin, so a
    /// bin always yields the same samples until the next fit.
    fn ensemble_predict(&self, x: &[f64]) -> Result<PredictiveEnsemble, ModelError> {
        let rows = self.sample_bin(self.bin_of(x)?)?;
        let k = self.config.num_samples;
        Ok(PredictiveEnsemble::from_trusted(
            self.config.num_classes,
            rows,
            vec![1.0 / k as f64; k],
        ))
    }

    fn closed_form(&self) -> Option<Box<dyn Predictive + '_>> {
        Some(Box::new(self.exact()))
    }
}

/// Closed-form predictive view of a [`DirichletHistogramClassifier`].
#[derive(Debug, Clone, Copy)]
pub struct ExactConjugate<'a>(&'a DirichletHistogramClassifier);

impl Predictive for ExactConjugate<'_> {
    fn predictive(&self, x: &[f64]) -> Result<Categorical, ModelError> {
        self.0.exact_posterior_predictive(x)
    }

    fn predictive_after_update(
        &self,
        x: &[f64],
        y: usize,
        x_star: &[f64],
    ) -> Result<Categorical, ModelError> {
        self.0.exact_predictive_after_update(x, y, x_star)
    }
}
