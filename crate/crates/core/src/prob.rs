//! Exact probability primitives over finite label spaces.
//!
//! Everything is in nats. Probabilities below [`ZERO_PROB`] contribute nothing
//! to entropy terms, which keeps `0 ln 0 = 0` without tripping on underflow.

use statrs::function::gamma::{digamma, ln_gamma};
use thiserror::Error;

/// Absolute tolerance on the total mass of a distribution.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Probabilities at or below this are treated as exact zeros in `p ln p`.
pub const ZERO_PROB: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbError {
    #[error("distribution needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("probability at index {index} is invalid: {value}")]
    InvalidEntry { index: usize, value: f64 },
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("support violation at index {0}: q is zero where p is positive")]
    SupportViolation(usize),
    #[error("concentration at index {index} must be positive and finite, got {value}")]
    InvalidConcentration { index: usize, value: f64 },
    #[error("cannot normalize: total mass is {0}")]
    ZeroMass(f64),
}

/// A normalized probability vector over `C >= 2` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    pub fn new(probs: Vec<f64>) -> Result<Self, ProbError> {
        validate_simplex(&probs)?;
        Ok(Self { probs })
    }

    pub fn uniform(num_classes: usize) -> Result<Self, ProbError> {
        if num_classes < 2 {
            return Err(ProbError::TooFewClasses(num_classes));
        }
        Ok(Self {
            probs: vec![1.0 / num_classes as f64; num_classes],
        })
    }

    /// Normalizes non-negative masses into a distribution.
    pub fn from_unnormalized(mut masses: Vec<f64>) -> Result<Self, ProbError> {
        if masses.len() < 2 {
            return Err(ProbError::TooFewClasses(masses.len()));
        }
        for (index, &value) in masses.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(ProbError::InvalidEntry { index, value });
            }
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(ProbError::ZeroMass(total));
        }
        masses.iter_mut().for_each(|p| *p /= total);
        Ok(Self { probs: masses })
    }

    /// Skips validation. Callers guarantee the simplex invariants.
    pub(crate) fn from_trusted(probs: Vec<f64>) -> Self {
        debug_assert!(validate_simplex(&probs).is_ok(), "{probs:?}");
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, class: usize) -> f64 {
        self.probs[class]
    }

    /// Most probable class, ties going to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax_lowest(&self.probs)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

/// Joint distribution over `(y, y_*)`, stored row-major with rows indexing `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCategorical {
    num_classes: usize,
    probs: Vec<f64>,
}

impl JointCategorical {
    pub fn new(num_classes: usize, probs: Vec<f64>) -> Result<Self, ProbError> {
        if num_classes < 2 {
            return Err(ProbError::TooFewClasses(num_classes));
        }
        if probs.len() != num_classes * num_classes {
            return Err(ProbError::DimensionMismatch(
                probs.len(),
                num_classes * num_classes,
            ));
        }
        validate_mass(&probs)?;
        Ok(Self { num_classes, probs })
    }

    /// The product distribution `p ⊗ q`.
    pub fn product(p: &Categorical, q: &Categorical) -> Result<Self, ProbError> {
        if p.num_classes() != q.num_classes() {
            return Err(ProbError::DimensionMismatch(
                p.num_classes(),
                q.num_classes(),
            ));
        }
        let probs = p
            .probs()
            .iter()
            .flat_map(|&a| q.probs().iter().map(move |&b| a * b))
            .collect();
        Ok(Self {
            num_classes: p.num_classes(),
            probs,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, y: usize, y_star: usize) -> f64 {
        self.probs[y * self.num_classes + y_star]
    }

    /// Marginal over `y` (row sums).
    pub fn marginal_y(&self) -> Categorical {
        Categorical::from_trusted(
            self.probs
                .chunks_exact(self.num_classes)
                .map(|row| row.iter().sum())
                .collect(),
        )
    }

    /// Marginal over `y_*` (column sums).
    pub fn marginal_y_star(&self) -> Categorical {
        let mut col = vec![0.0; self.num_classes];
        for row in self.probs.chunks_exact(self.num_classes) {
            col.iter_mut().zip(row).for_each(|(c, p)| *c += p);
        }
        Categorical::from_trusted(col)
    }
}

fn validate_mass(probs: &[f64]) -> Result<(), ProbError> {
    for (index, &value) in probs.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(ProbError::InvalidEntry { index, value });
        }
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(ProbError::NotNormalized(total));
    }
    Ok(())
}

fn validate_simplex(probs: &[f64]) -> Result<(), ProbError> {
    if probs.len() < 2 {
        return Err(ProbError::TooFewClasses(probs.len()));
    }
    validate_mass(probs)
}

pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `-Σ p ln p` over a slice of masses. No validation.
#[inline]
pub(crate) fn entropy_of(probs: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in probs {
        if p > ZERO_PROB {
            h -= p * p.ln();
        }
    }
    h
}

/// Shannon entropy in nats, in `[0, ln C]`.
pub fn entropy(p: &Categorical) -> f64 {
    entropy_of(p.probs()).max(0.0)
}

/// `KL(p || q)` in nats.
pub fn kl_divergence(p: &Categorical, q: &Categorical) -> Result<f64, ProbError> {
    if p.num_classes() != q.num_classes() {
        return Err(ProbError::DimensionMismatch(
            p.num_classes(),
            q.num_classes(),
        ));
    }
    let mut kl = 0.0;
    for (c, (&pc, &qc)) in p.probs().iter().zip(q.probs()).enumerate() {
        if pc <= ZERO_PROB {
            continue;
        }
        if qc <= 0.0 {
            return Err(ProbError::SupportViolation(c));
        }
        kl += pc * (pc / qc).ln();
    }
    Ok(kl.max(0.0))
}

/// Closed-form `KL(Dir(alpha_post) || Dir(alpha_prior))`.
pub fn dirichlet_kl(alpha_post: &[f64], alpha_prior: &[f64]) -> Result<f64, ProbError> {
    if alpha_post.len() != alpha_prior.len() {
        return Err(ProbError::DimensionMismatch(
            alpha_post.len(),
            alpha_prior.len(),
        ));
    }
    for alphas in [alpha_post, alpha_prior] {
        if let Some((index, &value)) = alphas
            .iter()
            .enumerate()
            .find(|(_, &a)| !(a > 0.0) || !a.is_finite())
        {
            return Err(ProbError::InvalidConcentration { index, value });
        }
    }
    let sum_post: f64 = alpha_post.iter().sum();
    let sum_prior: f64 = alpha_prior.iter().sum();
    let psi_sum = digamma(sum_post);
    let mut kl = ln_gamma(sum_post) - ln_gamma(sum_prior);
    for (&a, &b) in alpha_post.iter().zip(alpha_prior) {
        kl += ln_gamma(b) - ln_gamma(a) + (a - b) * (digamma(a) - psi_sum);
    }
    Ok(kl.max(0.0))
}

/// `I(y; y_*) = H(y) + H(y_*) - H(y, y_*)`, clamped at zero.
pub fn mutual_information(joint: &JointCategorical) -> f64 {
    let h_y = entropy(&joint.marginal_y());
    let h_star = entropy(&joint.marginal_y_star());
    (h_y + h_star - entropy_of(joint.probs())).max(0.0)
}

/// Numerically stable `ln Σ exp(x)`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Softmax of logits into a distribution.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|l| (l - lse).exp()).collect()
}
