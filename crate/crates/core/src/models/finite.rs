//! Exact Bayesian model averaging over a finite, explicitly enumerated
//! hypothesis set. The "posterior samples" are the hypotheses themselves with
//! their posterior weights, so likelihood reweighting is exact Bayes.

use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::{
    check_examples, check_label, LabelledExample, ModelError, PredictiveEnsemble, PredictiveModel,
};
use crate::prob::{log_sum_exp, softmax, Categorical};
use crate::seeding::rng_from;

/// A finite set of conditional models `p(y | x, θ_j)`.
pub trait HypothesisFamily: Send + Sync {
    fn num_hypotheses(&self) -> usize;
    fn num_classes(&self) -> usize;
    /// Writes the `K × C` conditional table at `x` into `out`, replacing its contents.
    fn conditionals(&self, x: &[f64], out: &mut Vec<f64>) -> Result<(), ModelError>;
}

impl<F: HypothesisFamily + ?Sized> HypothesisFamily for Box<F> {
    fn num_hypotheses(&self) -> usize {
        (**self).num_hypotheses()
    }
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn conditionals(&self, x: &[f64], out: &mut Vec<f64>) -> Result<(), ModelError> {
        (**self).conditionals(x, out)
    }
}

const GRID_MATCH_TOLERANCE: f64 = 1e-12;

/// Hypotheses given as explicit conditional tables over a finite input grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularHypotheses {
    grid: Vec<Vec<f64>>,
    /// `tables[j][g]` is `p(y | grid[g], θ_j)`.
    tables: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    ignored_trailing_dims: usize,
}

impl TabularHypotheses {
    pub fn new(grid: Vec<Vec<f64>>, tables: Vec<Vec<Vec<f64>>>) -> Result<Self, ModelError> {
        let family = Self {
            grid,
            tables,
            ignored_trailing_dims: 0,
        };
        family.validate()?;
        Ok(family)
    }

    /// Accept inputs carrying `extra` additional trailing features, which
    /// lookups ignore.
    pub fn ignoring_trailing_dims(mut self, extra: usize) -> Self {
        self.ignored_trailing_dims = extra;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let first = self
            .grid
            .first()
            .ok_or_else(|| ModelError::InvalidConfig("empty hypothesis grid".into()))?;
        for point in &self.grid {
            if point.len() != first.len() {
                return Err(ModelError::DimensionMismatch {
                    expected: first.len(),
                    found: point.len(),
                });
            }
        }
        let classes = self
            .tables
            .first()
            .and_then(|t| t.first())
            .map(Vec::len)
            .ok_or_else(|| ModelError::InvalidConfig("no hypotheses".into()))?;
        for table in &self.tables {
            if table.len() != self.grid.len() {
                return Err(ModelError::InvalidConfig(format!(
                    "hypothesis table has {} rows for {} grid points",
                    table.len(),
                    self.grid.len()
                )));
            }
            for row in table {
                if row.len() != classes {
                    return Err(ModelError::DimensionMismatch {
                        expected: classes,
                        found: row.len(),
                    });
                }
                Categorical::new(row.clone())?;
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &[Vec<f64>] {
        &self.grid
    }

    fn lookup(&self, x: &[f64]) -> Result<usize, ModelError> {
        let dim = self.grid[0].len();
        if x.len() != dim + self.ignored_trailing_dims {
            return Err(ModelError::DimensionMismatch {
                expected: dim + self.ignored_trailing_dims,
                found: x.len(),
            });
        }
        self.grid
            .iter()
            .position(|g| {
                g.iter()
                    .zip(x)
                    .all(|(a, b)| (a - b).abs() <= GRID_MATCH_TOLERANCE)
            })
            .ok_or_else(|| ModelError::OffGrid(x.to_vec()))
    }
}

impl HypothesisFamily for TabularHypotheses {
    fn num_hypotheses(&self) -> usize {
        self.tables.len()
    }

    fn num_classes(&self) -> usize {
        self.tables[0][0].len()
    }

    fn conditionals(&self, x: &[f64], out: &mut Vec<f64>) -> Result<(), ModelError> {
        let g = self.lookup(x)?;
        out.clear();
        for table in &self.tables {
            out.extend_from_slice(&table[g]);
        }
        Ok(())
    }
}

fn default_num_hypotheses() -> usize {
    512
}
fn default_num_centers() -> usize {
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

/// Seeded family of smooth softmax hypotheses over random radial-basis
/// features: `logit_c(x) = Σ_r a_{c r} exp(-|x - z_r|² / 2ℓ²) + b_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbfLogisticConfig {
    #[serde(default = "default_num_hypotheses")]
    pub num_hypotheses: usize,
    pub num_classes: usize,
    #[serde(default = "default_num_centers")]
    pub num_centers: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default = "default_length_scale")]
    pub length_scale: f64,
    #[serde(default = "default_weight_scale")]
    pub weight_scale: f64,
    /// Mixed into every conditional as `ε / C` so no label is ever impossible.
    #[serde(default = "default_label_noise")]
    pub label_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RbfLogisticHypotheses {
    config: RbfLogisticConfig,
    centers: Vec<Vec<f64>>,
    /// `[hypothesis][class][center]`, bias stored last.
    coefficients: Vec<f64>,
}

impl RbfLogisticHypotheses {
    pub fn sample(config: RbfLogisticConfig) -> Result<Self, ModelError> {
        if config.num_classes < 2 || config.num_hypotheses == 0 || config.num_centers == 0 {
            return Err(ModelError::InvalidConfig(
                "rbf family needs >= 2 classes, >= 1 hypothesis and >= 1 center".into(),
            ));
        }
        if config.lower.len() != config.upper.len()
            || config.lower.is_empty()
            || config
                .lower
                .iter()
                .zip(&config.upper)
                .any(|(l, u)| !(l < u))
        {
            return Err(ModelError::InvalidConfig("invalid bounding box".into()));
        }
        if !(config.length_scale > 0.0) || !(0.0..1.0).contains(&config.label_noise) {
            return Err(ModelError::InvalidConfig(
                "length_scale must be positive and label_noise in [0, 1)".into(),
            ));
        }
        let mut rng = rng_from(config.seed, &[0x4B42_4652]);
        let centers = (0..config.num_centers)
            .map(|_| {
                config
                    .lower
                    .iter()
                    .zip(&config.upper)
                    .map(|(&l, &u)| Uniform::new(l, u).expect("checked bounds").sample(&mut rng))
                    .collect()
            })
            .collect();
        let normal = Normal::new(0.0, config.weight_scale.max(0.0)).expect("finite scale");
        let per = config.num_classes * (config.num_centers + 1);
        let coefficients = (0..config.num_hypotheses * per)
            .map(|_| normal.sample(&mut rng))
            .collect();
        Ok(Self {
            config,
            centers,
            coefficients,
        })
    }

    pub fn config(&self) -> &RbfLogisticConfig {
        &self.config
    }

    fn features(&self, x: &[f64]) -> Vec<f64> {
        let inv = 1.0 / (2.0 * self.config.length_scale * self.config.length_scale);
        let mut phi: Vec<f64> = self
            .centers
            .iter()
            .map(|z| {
                let d2: f64 = z.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 * inv).exp()
            })
            .collect();
        phi.push(1.0);
        phi
    }
}

impl HypothesisFamily for RbfLogisticHypotheses {
    fn num_hypotheses(&self) -> usize {
        self.config.num_hypotheses
    }

    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn conditionals(&self, x: &[f64], out: &mut Vec<f64>) -> Result<(), ModelError> {
        if x.len() != self.config.lower.len() {
            return Err(ModelError::DimensionMismatch {
                expected: self.config.lower.len(),
                found: x.len(),
            });
        }
        let phi = self.features(x);
        let c = self.config.num_classes;
        let eps = self.config.label_noise;
        out.clear();
        let mut logits = vec![0.0; c];
        for hyp in self.coefficients.chunks_exact(c * phi.len()) {
            for (logit, coef) in logits.iter_mut().zip(hyp.chunks_exact(phi.len())) {
                *logit = coef.iter().zip(&phi).map(|(a, f)| a * f).sum();
            }
            out.extend(
                softmax(&logits)
                    .into_iter()
                    .map(|p| (1.0 - eps) * p + eps / c as f64),
            );
        }
        Ok(())
    }
}

/// Exact posterior over a [`HypothesisFamily`].
#[derive(Debug, Clone)]
pub struct FiniteHypothesisModel<F> {
    family: F,
    log_prior: Vec<f64>,
    log_weights: Vec<f64>,
    weights: Vec<f64>,
}

impl<F: HypothesisFamily> FiniteHypothesisModel<F> {
    pub fn new(family: F, prior: Option<Vec<f64>>) -> Result<Self, ModelError> {
        let k = family.num_hypotheses();
        let prior = prior.unwrap_or_else(|| vec![1.0 / k as f64; k]);
        if prior.len() != k {
            return Err(ModelError::DimensionMismatch {
                expected: k,
                found: prior.len(),
            });
        }
        if prior.iter().any(|p| !p.is_finite() || *p < 0.0) || !(prior.iter().sum::<f64>() > 0.0) {
            return Err(ModelError::InvalidConfig(
                "prior weights must be non-negative with positive total".into(),
            ));
        }
        let total: f64 = prior.iter().sum();
        let log_prior: Vec<f64> = prior.iter().map(|p| (p / total).ln()).collect();
        let mut model = Self {
            family,
            log_weights: log_prior.clone(),
            log_prior,
            weights: Vec::new(),
        };
        model.refresh_weights()?;
        Ok(model)
    }

    pub fn family(&self) -> &F {
        &self.family
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Sequential Bayes update on one more example.
    pub fn observe(&mut self, example: &LabelledExample) -> Result<(), ModelError> {
        check_label(example.label, self.family.num_classes())?;
        let c = self.family.num_classes();
        let mut table = Vec::new();
        self.family.conditionals(&example.features, &mut table)?;
        for (lw, row) in self.log_weights.iter_mut().zip(table.chunks_exact(c)) {
            *lw += row[example.label].ln();
        }
        self.refresh_weights()
    }

    fn refresh_weights(&mut self) -> Result<(), ModelError> {
        let lse = log_sum_exp(&self.log_weights);
        if !lse.is_finite() {
            return Err(ModelError::DegenerateEvidence);
        }
        self.weights = self.log_weights.iter().map(|lw| (lw - lse).exp()).collect();
        Ok(())
    }
}

impl<F: HypothesisFamily> PredictiveModel for FiniteHypothesisModel<F> {
    fn num_classes(&self) -> usize {
        self.family.num_classes()
    }

    /// Resets to the prior, then updates on every example in order. An empty
    /// training set leaves the prior in place.
    fn fit(&mut self, data: &[LabelledExample]) -> Result<(), ModelError> {
        if !data.is_empty() {
            check_examples(data, self.family.num_classes(), None)?;
        }
        self.log_weights = self.log_prior.clone();
        self.refresh_weights()?;
        for ex in data {
            self.observe(ex)?;
        }
        Ok(())
    }

    fn ensemble_predict(&self, x: &[f64]) -> Result<PredictiveEnsemble, ModelError> {
        let mut table = Vec::with_capacity(self.weights.len() * self.family.num_classes());
        self.family.conditionals(x, &mut table)?;
        Ok(PredictiveEnsemble::from_trusted(
            self.family.num_classes(),
            table,
            self.weights.clone(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{posterior_predictive_after_update, Predictive};

    /// Two hypotheses over a 2-point grid. At grid point 0 they give class 0
    /// probability 0.9 and 0.1; at point 1 they give 0.8 and 0.3.
    pub(crate) fn two_hypotheses() -> FiniteHypothesisModel<TabularHypotheses> {
        let family = TabularHypotheses::new(
            vec![vec![0.0], vec![1.0]],
            vec![
                vec![vec![0.9, 0.1], vec![0.8, 0.2]],
                vec![vec![0.1, 0.9], vec![0.3, 0.7]],
            ],
        )
        .unwrap();
        FiniteHypothesisModel::new(family, None).unwrap()
    }

    #[test]
    fn prior_weights_without_data() {
        let mut m = two_hypotheses();
        m.fit(&[]).unwrap();
        assert_eq!(m.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn one_observation() {
        let mut m = two_hypotheses();
        m.fit(&[LabelledExample::new(vec![0.0], 0)]).unwrap();
        assert!((m.weights()[0] - 0.9).abs() < 1e-12);
        assert!((m.weights()[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn two_observations() {
        let mut m = two_hypotheses();
        let ex = LabelledExample::new(vec![0.0], 0);
        m.fit(&[ex.clone(), ex]).unwrap();
        assert!((m.weights()[0] - 0.987805).abs() < 1e-6);
        assert!((m.weights()[1] - 0.012195).abs() < 1e-6);
    }

    #[test]
    fn off_grid_is_an_error() {
        let m = two_hypotheses();
        assert!(matches!(
            m.ensemble_predict(&[0.5]),
            Err(ModelError::OffGrid(_))
        ));
        assert!(matches!(
            m.ensemble_predict(&[0.0, 1.0]),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_hypothesis_update_changes_nothing() {
        let family = TabularHypotheses::new(
            vec![vec![0.0], vec![1.0]],
            vec![vec![vec![0.6, 0.4], vec![0.2, 0.8]]],
        )
        .unwrap();
        let m = FiniteHypothesisModel::new(family, None).unwrap();
        let before = m.marginal_predict(&[1.0]).unwrap();
        let after = posterior_predictive_after_update(&m, &[0.0], 1, &[1.0]).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn reweighting_matches_explicit_update() {
        let m = two_hypotheses();
        let implicit = m.predictive_after_update(&[0.0], 0, &[1.0]).unwrap();
        let mut explicit = m.clone();
        explicit
            .observe(&LabelledExample::new(vec![0.0], 0))
            .unwrap();
        let explicit = explicit.marginal_predict(&[1.0]).unwrap();
        assert!((implicit.prob(0) - 0.75).abs() < 1e-12);
        assert!((implicit.prob(0) - explicit.prob(0)).abs() < 1e-12);
    }

    #[test]
    fn rbf_family_is_seeded_and_valid() {
        let cfg = RbfLogisticConfig {
            num_hypotheses: 8,
            num_classes: 3,
            num_centers: 4,
            lower: vec![-1.0, -1.0],
            upper: vec![1.0, 1.0],
            length_scale: 0.5,
            weight_scale: 2.0,
            label_noise: 0.01,
            seed: 5,
        };
        let a = RbfLogisticHypotheses::sample(cfg.clone()).unwrap();
        let b = RbfLogisticHypotheses::sample(cfg).unwrap();
        let (mut ta, mut tb) = (Vec::new(), Vec::new());
        a.conditionals(&[0.3, -0.2], &mut ta).unwrap();
        b.conditionals(&[0.3, -0.2], &mut tb).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(ta.len(), 24);
        for row in ta.chunks_exact(3) {
            Categorical::new(row.to_vec()).unwrap();
            assert!(row.iter().all(|&p| p >= 0.01 / 3.0));
        }
    }
}
