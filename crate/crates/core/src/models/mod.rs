//! Stochastic predictive models.
//!
//! Every model exposes a weighted set of parameter samples, each inducing a
//! conditional predictive `p(y | x, θ_j)`. The marginal predictive is the
//! weighted average of those rows. Updating on a hypothetical `(x, y)` is done
//! by likelihood reweighting of the samples, which is exact Bayes when the
//! samples enumerate the whole hypothesis space.

mod dirichlet;
mod finite;
mod forest;
mod mlp;

pub use dirichlet::{DirichletHistogramClassifier, DirichletHistogramConfig, ExactConjugate};
pub use finite::{
    FiniteHypothesisModel, HypothesisFamily, RbfLogisticConfig, RbfLogisticHypotheses,
    TabularHypotheses,
};
pub use forest::{BootstrapForest, ForestConfig};
pub use mlp::{DropoutMaskSet, DropoutMlp, MlpConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prob::{Categorical, ProbError, SUM_TOLERANCE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("observation has zero probability under every posterior sample")]
    DegenerateEvidence,
    #[error("input {0:?} is not on the hypothesis grid")]
    OffGrid(Vec<f64>),
    #[error("input coordinate {value} in dimension {dim} falls outside [{lower}, {upper}]")]
    BinOutOfRange {
        dim: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("cannot fit on an empty training set")]
    EmptyTrainingSet,
    #[error("training diverged at step {step}: loss {loss}")]
    TrainingDiverged { step: usize, loss: f64 },
    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("label {label} outside class range 0..{num_classes}")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("model used before fit")]
    NotFitted,
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Prob(#[from] ProbError),
}

/// A feature vector with its integer class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledExample {
    pub features: Vec<f64>,
    pub label: usize,
}

impl LabelledExample {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Self { features, label }
    }
}

/// `K` conditional predictives for one input, with a weight per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveEnsemble {
    num_classes: usize,
    /// `K × C`, row-major.
    conditionals: Vec<f64>,
    weights: Vec<f64>,
}

impl PredictiveEnsemble {
    pub fn new(
        num_classes: usize,
        conditionals: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if num_classes < 2 {
            return Err(ProbError::TooFewClasses(num_classes).into());
        }
        if weights.is_empty() || conditionals.len() != weights.len() * num_classes {
            return Err(ModelError::DimensionMismatch {
                expected: weights.len() * num_classes,
                found: conditionals.len(),
            });
        }
        for row in conditionals.chunks_exact(num_classes) {
            Categorical::new(row.to_vec())?;
        }
        if let Some((index, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, &w)| !w.is_finite() || w < 0.0)
        {
            return Err(ProbError::InvalidEntry { index, value }.into());
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(ProbError::NotNormalized(total).into());
        }
        Ok(Self {
            num_classes,
            conditionals,
            weights,
        })
    }

    /// Equal-weight ensemble, the plain Monte Carlo case.
    pub fn uniform(num_classes: usize, conditionals: Vec<f64>) -> Result<Self, ModelError> {
        let k = conditionals.len() / num_classes.max(1);
        Self::new(num_classes, conditionals, vec![1.0 / k.max(1) as f64; k])
    }

    pub(crate) fn from_trusted(
        num_classes: usize,
        conditionals: Vec<f64>,
        weights: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(conditionals.len(), weights.len() * num_classes);
        Self {
            num_classes,
            conditionals,
            weights,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_samples(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn conditionals(&self) -> &[f64] {
        &self.conditionals
    }

    pub fn row(&self, sample: usize) -> &[f64] {
        &self.conditionals[sample * self.num_classes..(sample + 1) * self.num_classes]
    }

    /// `p(y = class | x, θ_j)` for every sample `j`.
    pub fn class_column(&self, class: usize) -> Vec<f64> {
        self.conditionals
            .chunks_exact(self.num_classes)
            .map(|row| row[class])
            .collect()
    }

    /// Weighted mixture of the conditionals.
    pub fn marginal(&self) -> Categorical {
        Categorical::from_trusted(mix(self.num_classes, &self.conditionals, &self.weights))
    }

    /// Same conditionals under a different weighting.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self, ModelError> {
        Self::new(self.num_classes, self.conditionals.clone(), weights)
    }
}

pub(crate) fn mix(num_classes: usize, conditionals: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; num_classes];
    for (row, &w) in conditionals.chunks_exact(num_classes).zip(weights) {
        if w == 0.0 {
            continue;
        }
        out.iter_mut().zip(row).for_each(|(o, p)| *o += w * p);
    }
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|o| *o /= total);
    }
    out
}

/// Posterior sample weights `w_j ∝ weight_j · likelihood_j`.
pub fn posterior_weights(weights: &[f64], likelihoods: &[f64]) -> Result<Vec<f64>, ModelError> {
    if weights.len() != likelihoods.len() {
        return Err(ModelError::DimensionMismatch {
            expected: weights.len(),
            found: likelihoods.len(),
        });
    }
    if let Some((index, &value)) = likelihoods
        .iter()
        .enumerate()
        .find(|(_, &l)| !l.is_finite() || l < 0.0)
    {
        return Err(ProbError::InvalidEntry { index, value }.into());
    }
    let mut out: Vec<f64> = weights
        .iter()
        .zip(likelihoods)
        .map(|(w, l)| w * l)
        .collect();
    let total: f64 = out.iter().sum();
    if !(total > 0.0) {
        return Err(ModelError::DegenerateEvidence);
    }
    out.iter_mut().for_each(|w| *w /= total);
    Ok(out)
}

/// Add-one-in importance reweighting of an ensemble by the likelihood each
/// sample assigned to one observed label.
pub fn reweight_ensemble(
    ensemble: &PredictiveEnsemble,
    observed_conditionals: &[f64],
) -> Result<PredictiveEnsemble, ModelError> {
    let weights = posterior_weights(&ensemble.weights, observed_conditionals)?;
    Ok(PredictiveEnsemble::from_trusted(
        ensemble.num_classes,
        ensemble.conditionals.clone(),
        weights,
    ))
}

/// A model with posterior-sample conditional predictives.
///
/// Sample `j` must denote the same parameter draw for every input, so that
/// predictions at different inputs stay jointly consistent.
pub trait PredictiveModel: Send + Sync {
    fn num_classes(&self) -> usize;

    fn fit(&mut self, data: &[LabelledExample]) -> Result<(), ModelError>;

    fn ensemble_predict(&self, x: &[f64]) -> Result<PredictiveEnsemble, ModelError>;

    fn marginal_predict(&self, x: &[f64]) -> Result<Categorical, ModelError> {
        Ok(self.ensemble_predict(x)?.marginal())
    }

    /// Closed-form predictive view, for models with a conjugate update.
    fn closed_form(&self) -> Option<Box<dyn Predictive + '_>> {
        None
    }
}

impl<M: PredictiveModel + ?Sized> PredictiveModel for Box<M> {
    fn closed_form(&self) -> Option<Box<dyn Predictive + '_>> {
        (**self).closed_form()
    }

    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }

    fn fit(&mut self, data: &[LabelledExample]) -> Result<(), ModelError> {
        (**self).fit(data)
    }

    fn ensemble_predict(&self, x: &[f64]) -> Result<PredictiveEnsemble, ModelError> {
        (**self).ensemble_predict(x)
    }

    fn marginal_predict(&self, x: &[f64]) -> Result<Categorical, ModelError> {
        (**self).marginal_predict(x)
    }
}

/// The predictive view the acquisition objectives need: the current
/// predictive at `x`, and the predictive at `x_star` after conditioning on a
/// single labelled pair.
pub trait Predictive {
    fn predictive(&self, x: &[f64]) -> Result<Categorical, ModelError>;

    fn predictive_after_update(
        &self,
        x: &[f64],
        y: usize,
        x_star: &[f64],
    ) -> Result<Categorical, ModelError>;
}

impl<M: PredictiveModel + ?Sized> Predictive for M {
    fn predictive(&self, x: &[f64]) -> Result<Categorical, ModelError> {
        self.marginal_predict(x)
    }

    fn predictive_after_update(
        &self,
        x: &[f64],
        y: usize,
        x_star: &[f64],
    ) -> Result<Categorical, ModelError> {
        posterior_predictive_after_update(self, x, y, x_star)
    }
}

/// `p(y_* | x_*, x, y)` by reweighting the samples at `x_star` with their
/// likelihood of `y` at `x`.
pub fn posterior_predictive_after_update<M: PredictiveModel + ?Sized>(
    model: &M,
    x: &[f64],
    y: usize,
    x_star: &[f64],
) -> Result<Categorical, ModelError> {
    check_label(y, model.num_classes())?;
    let at_x = model.ensemble_predict(x)?;
    let at_star = model.ensemble_predict(x_star)?;
    let updated = reweight_ensemble(&at_star, &at_x.class_column(y))?;
    Ok(updated.marginal())
}

/// A model viewed after an implicit update on one labelled pair. Useful as
/// the auxiliary model that turns reducible-holdout-loss into MIC.
pub struct Reweighted<'a, M: ?Sized> {
    model: &'a M,
    x: Vec<f64>,
    y: usize,
}

impl<'a, M: PredictiveModel + ?Sized> Reweighted<'a, M> {
    pub fn new(model: &'a M, x: &[f64], y: usize) -> Result<Self, ModelError> {
        check_label(y, model.num_classes())?;
        Ok(Self {
            model,
            x: x.to_vec(),
            y,
        })
    }

    fn likelihoods(&self) -> Result<Vec<f64>, ModelError> {
        Ok(self.model.ensemble_predict(&self.x)?.class_column(self.y))
    }
}

impl<M: PredictiveModel + ?Sized> Predictive for Reweighted<'_, M> {
    fn predictive(&self, x: &[f64]) -> Result<Categorical, ModelError> {
        let ens = self.model.ensemble_predict(x)?;
        Ok(reweight_ensemble(&ens, &self.likelihoods()?)?.marginal())
    }

    fn predictive_after_update(
        &self,
        x: &[f64],
        y: usize,
        x_star: &[f64],
    ) -> Result<Categorical, ModelError> {
        check_label(y, self.model.num_classes())?;
        let first = self.likelihoods()?;
        let second = self.model.ensemble_predict(x)?.class_column(y);
        let joint: Vec<f64> = first.iter().zip(&second).map(|(a, b)| a * b).collect();
        let ens = self.model.ensemble_predict(x_star)?;
        Ok(reweight_ensemble(&ens, &joint)?.marginal())
    }
}

pub(crate) fn check_label(label: usize, num_classes: usize) -> Result<(), ModelError> {
    if label >= num_classes {
        return Err(ModelError::LabelOutOfRange { label, num_classes });
    }
    Ok(())
}

pub(crate) fn check_examples(
    data: &[LabelledExample],
    num_classes: usize,
    dim: Option<usize>,
) -> Result<usize, ModelError> {
    let first = data.first().ok_or(ModelError::EmptyTrainingSet)?;
    let dim = dim.unwrap_or(first.features.len());
    for ex in data {
        if ex.features.len() != dim {
            return Err(ModelError::DimensionMismatch {
                expected: dim,
                found: ex.features.len(),
            });
        }
        check_label(ex.label, num_classes)?;
    }
    Ok(dim)
}
