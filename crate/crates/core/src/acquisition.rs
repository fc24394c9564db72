//! Subsampling objectives.
//!
//! * predictive information gain of one labelled pair at one target input,
//! * its average over a target set with the label known (LA-EPIG) or
//!   marginalized under the model (EPIG),
//! * the memorable information criterion (surprise plus η-weighted
//!   learnability),
//! * reducible holdout loss against an auxiliary model,
//! * seeded uniform scores.
//!
//! Implicit updates go through likelihood reweighting of posterior samples,
//! so every model kind shares one estimator. EPIG is evaluated exactly under
//! the plug-in joint `Σ_j w_j p(y|x,θ_j) p(y_*|x_*,θ_j)` via its mutual
//! information, which makes `EPIG(x) = Σ_c p(c|x) LA-EPIG(x, c)` an identity.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{
    posterior_weights, LabelledExample, ModelError, Predictive, PredictiveEnsemble, PredictiveModel,
};
use crate::prob::{entropy, entropy_of};
use crate::seeding::rng_from;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcquisitionError {
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("objective `{0}` needs a target set")]
    MissingTargets(Objective),
    #[error("objective `rho_loss` needs an auxiliary model")]
    MissingAuxModel,
    #[error("target set is empty")]
    EmptyTargets,
    #[error("target inputs have inconsistent dimensions")]
    InconsistentTargets,
    #[error("unknown objective `{0}` (expected one of random, mic, epig, la_epig, rho_loss)")]
    UnknownObjective(String),
    #[error("candidate {index}: {source}")]
    Candidate { index: usize, source: ModelError },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Inputs drawn from the target input distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    inputs: Vec<Vec<f64>>,
}

impl TargetSet {
    pub fn new(inputs: Vec<Vec<f64>>) -> Result<Self, AcquisitionError> {
        let first = inputs.first().ok_or(AcquisitionError::EmptyTargets)?;
        if inputs.iter().any(|x| x.len() != first.len()) {
            return Err(AcquisitionError::InconsistentTargets);
        }
        Ok(Self { inputs })
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Random,
    Mic,
    Epig,
    LaEpig,
    RhoLoss,
}

impl Objective {
    pub const ALL: [Objective; 5] = [
        Objective::Random,
        Objective::Mic,
        Objective::Epig,
        Objective::LaEpig,
        Objective::RhoLoss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Random => "random",
            Objective::Mic => "mic",
            Objective::Epig => "epig",
            Objective::LaEpig => "la_epig",
            Objective::RhoLoss => "rho_loss",
        }
    }

    pub fn uses_targets(self) -> bool {
        matches!(self, Objective::Epig | Objective::LaEpig)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = AcquisitionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Objective::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| AcquisitionError::UnknownObjective(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionScore {
    pub candidate_index: usize,
    pub value: f64,
}

/// `H[p(y_*|x_*)] - H[p(y_*|x_*, x, y)]`. Can be negative.
pub fn predictive_ig<P: Predictive + ?Sized>(
    model: &P,
    x: &[f64],
    y: usize,
    x_star: &[f64],
) -> Result<f64, ModelError> {
    let before = model.predictive(x_star)?;
    let after = model.predictive_after_update(x, y, x_star)?;
    Ok(entropy(&before) - entropy(&after))
}

/// Target-side quantities reused across every candidate.
struct PreparedTargets {
    ensembles: Vec<PredictiveEnsemble>,
    entropies: Vec<f64>,
    /// Per target, `C × K` conditionals stored class-major.
    columns: Vec<Vec<f64>>,
}

impl PreparedTargets {
    fn new<M: PredictiveModel + ?Sized>(
        model: &M,
        targets: &TargetSet,
    ) -> Result<Self, ModelError> {
        let ensembles = targets
            .inputs()
            .iter()
            .map(|x| model.ensemble_predict(x))
            .collect::<Result<Vec<_>, _>>()?;
        let entropies = ensembles.iter().map(|e| entropy(&e.marginal())).collect();
        let columns = ensembles.iter().map(class_major).collect();
        Ok(Self {
            ensembles,
            entropies,
            columns,
        })
    }
}

fn check_shared_samples(a: &PredictiveEnsemble, b: &PredictiveEnsemble) -> Result<(), ModelError> {
    if a.num_samples() != b.num_samples() {
        return Err(ModelError::DimensionMismatch {
            expected: a.num_samples(),
            found: b.num_samples(),
        });
    }
    Ok(())
}

fn la_epig_prepared(
    at_x: &PredictiveEnsemble,
    y: usize,
    prepared: &PreparedTargets,
) -> Result<f64, ModelError> {
    crate::models::check_label(y, at_x.num_classes())?;
    let weights = posterior_weights(at_x.weights(), &at_x.class_column(y))?;
    let k = weights.len();
    let mut updated = vec![0.0; at_x.num_classes()];
    let mut total = 0.0;
    for ((ens, h_before), q) in prepared
        .ensembles
        .iter()
        .zip(&prepared.entropies)
        .zip(&prepared.columns)
    {
        check_shared_samples(at_x, ens)?;
        for (b, u) in updated.iter_mut().enumerate() {
            *u = dot(&weights, &q[b * k..(b + 1) * k]);
        }
        total += h_before - entropy_of(&updated);
    }
    Ok(total / prepared.ensembles.len() as f64)
}

fn class_major(e: &PredictiveEnsemble) -> Vec<f64> {
    (0..e.num_classes())
        .flat_map(|c| e.class_column(c))
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn epig_prepared(at_x: &PredictiveEnsemble, prepared: &PreparedTargets) -> Result<f64, ModelError> {
    let c = at_x.num_classes();
    let k = at_x.num_samples();
    let h_y = entropy(&at_x.marginal());
    // Column a holds w_j p_j(y = a | x); the joint is then a C × C table of
    // dot products against the target's class columns.
    let weights = at_x.weights();
    let scaled: Vec<f64> = (0..c)
        .flat_map(|a| {
            at_x.class_column(a)
                .into_iter()
                .zip(weights)
                .map(|(p, w)| w * p)
        })
        .collect();
    let mut joint = vec![0.0; c * c];
    let mut total = 0.0;
    for ((ens, h_star), q) in prepared
        .ensembles
        .iter()
        .zip(&prepared.entropies)
        .zip(&prepared.columns)
    {
        check_shared_samples(at_x, ens)?;
        for a in 0..c {
            let s = &scaled[a * k..(a + 1) * k];
            for b in 0..c {
                joint[a * c + b] = dot(s, &q[b * k..(b + 1) * k]);
            }
        }
        let mi = h_y + h_star - entropy_of(&joint);
        total += mi.max(0.0);
    }
    Ok(total / prepared.ensembles.len() as f64)
}

/// Label-aware expected predictive information gain: the mean predictive IG
/// over the target set for the observed label `y`.
pub fn la_epig<M: PredictiveModel + ?Sized>(
    model: &M,
    x: &[f64],
    y: usize,
    targets: &TargetSet,
) -> Result<f64, ModelError> {
    let prepared = PreparedTargets::new(model, targets)?;
    la_epig_prepared(&model.ensemble_predict(x)?, y, &prepared)
}

/// Expected predictive information gain, always `>= 0`.
pub fn epig<M: PredictiveModel + ?Sized>(
    model: &M,
    x: &[f64],
    targets: &TargetSet,
) -> Result<f64, ModelError> {
    let prepared = PreparedTargets::new(model, targets)?;
    epig_prepared(&model.ensemble_predict(x)?, &prepared)
}

/// `-ln p(y|x) + η ln p(y|x, (x, y))`.
pub fn mic<P: Predictive + ?Sized>(
    model: &P,
    x: &[f64],
    y: usize,
    eta: f64,
) -> Result<f64, ModelError> {
    let before = model.predictive(x)?;
    crate::models::check_label(y, before.num_classes())?;
    let p = before.prob(y);
    if !(p > 0.0) {
        return Err(ModelError::DegenerateEvidence);
    }
    let surprise = -p.ln();
    if eta == 0.0 {
        return Ok(surprise);
    }
    let after = model.predictive_after_update(x, y, x)?;
    Ok(surprise + eta * after.prob(y).ln())
}

/// `-ln p(y|x) + ln p_aux(y|x)`.
pub fn rho_loss<P: Predictive + ?Sized, A: Predictive + ?Sized>(
    model: &P,
    aux_model: &A,
    x: &[f64],
    y: usize,
) -> Result<f64, ModelError> {
    let p = model.predictive(x)?;
    let q = aux_model.predictive(x)?;
    crate::models::check_label(y, p.num_classes())?;
    let (p, q) = (p.prob(y), q.prob(y));
    if !(p > 0.0) || !(q > 0.0) {
        return Err(ModelError::DegenerateEvidence);
    }
    Ok(-p.ln() + q.ln())
}

/// MIC through the model's closed-form update when it has one, otherwise
/// through sample reweighting.
pub fn mic_for_model<M: PredictiveModel + ?Sized>(
    model: &M,
    x: &[f64],
    y: usize,
    eta: f64,
) -> Result<f64, ModelError> {
    match model.closed_form() {
        Some(exact) => mic(exact.as_ref(), x, y, eta),
        None => mic(model, x, y, eta),
    }
}

/// Everything `score_pool` may need besides the objective and the pool.
#[derive(Clone, Copy)]
pub struct ScoringContext<'a> {
    pub model: &'a dyn PredictiveModel,
    pub aux_model: Option<&'a dyn PredictiveModel>,
    pub targets: Option<&'a TargetSet>,
    pub eta: f64,
    pub seed: u64,
}

impl<'a> ScoringContext<'a> {
    pub fn new(model: &'a dyn PredictiveModel) -> Self {
        Self {
            model,
            aux_model: None,
            targets: None,
            eta: 1.0,
            seed: 0,
        }
    }

    pub fn with_targets(mut self, targets: &'a TargetSet) -> Self {
        self.targets = Some(targets);
        self
    }

    pub fn with_aux_model(mut self, aux: &'a dyn PredictiveModel) -> Self {
        self.aux_model = Some(aux);
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolScores {
    /// Indexed by candidate.
    pub scores: Vec<AcquisitionScore>,
    /// Best first; ties go to the lower candidate index.
    pub ranking: Vec<AcquisitionScore>,
    /// Candidates with zero support for their label, scored `-∞`.
    pub degenerate: Vec<usize>,
    /// Number of (candidate, target input) pairs evaluated.
    pub target_evaluations: usize,
}

impl PoolScores {
    pub fn best(&self) -> AcquisitionScore {
        self.ranking[0]
    }
}

/// Scores every candidate and ranks them. Deterministic for a given seed,
/// regardless of how many worker threads run the per-candidate work.
pub fn score_pool(
    objective: Objective,
    ctx: &ScoringContext<'_>,
    pool: &[LabelledExample],
) -> Result<PoolScores, AcquisitionError> {
    if pool.is_empty() {
        return Err(AcquisitionError::EmptyPool);
    }
    let mut target_evaluations = 0;
    let raw: Vec<Result<f64, ModelError>> = match objective {
        Objective::Random => {
            let mut rng = rng_from(ctx.seed, &[0x5C0E]);
            pool.iter().map(|_| Ok(rng.random::<f64>())).collect()
        }
        Objective::Mic => pool
            .par_iter()
            .map(|ex| mic_for_model(ctx.model, &ex.features, ex.label, ctx.eta))
            .collect(),
        Objective::RhoLoss => {
            let aux = ctx.aux_model.ok_or(AcquisitionError::MissingAuxModel)?;
            pool.par_iter()
                .map(|ex| rho_loss(ctx.model, aux, &ex.features, ex.label))
                .collect()
        }
        Objective::Epig | Objective::LaEpig => {
            let targets = ctx
                .targets
                .ok_or(AcquisitionError::MissingTargets(objective))?;
            let prepared = PreparedTargets::new(ctx.model, targets)?;
            target_evaluations = pool.len() * targets.len();
            pool.par_iter()
                .map(|ex| {
                    let at_x = ctx.model.ensemble_predict(&ex.features)?;
                    if objective == Objective::Epig {
                        epig_prepared(&at_x, &prepared)
                    } else {
                        la_epig_prepared(&at_x, ex.label, &prepared)
                    }
                })
                .collect()
        }
    };

    let mut degenerate = Vec::new();
    let mut scores = Vec::with_capacity(pool.len());
    for (index, r) in raw.into_iter().enumerate() {
        let value = match r {
            Ok(v) if v.is_nan() => f64::NEG_INFINITY,
            Ok(v) => v,
            Err(ModelError::DegenerateEvidence) => {
                degenerate.push(index);
                f64::NEG_INFINITY
            }
            Err(source) => return Err(AcquisitionError::Candidate { index, source }),
        };
        scores.push(AcquisitionScore {
            candidate_index: index,
            value,
        });
    }
    let ranking = rank(&scores);
    Ok(PoolScores {
        scores,
        ranking,
        degenerate,
        target_evaluations,
    })
}

/// Descending by value, ties by ascending candidate index.
pub fn rank(scores: &[AcquisitionScore]) -> Vec<AcquisitionScore> {
    let mut ranking = scores.to_vec();
    ranking.sort_by(|a, b| {
        b.value
            .total_cmp(&a.value)
            .then(a.candidate_index.cmp(&b.candidate_index))
    });
    ranking
}
