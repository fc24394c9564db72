//! End-to-end experiment driver: per-step greedy subsampling interleaved
//! with model refits, accuracy after every step, repeated over seeds.

mod config;
mod output;

pub use config::{
    apply_override, BuildError, ConfigError, DatasetConfig, DirichletHyperparameters,
    FiniteRbfHyperparameters, ForestHyperparameters, MlpHyperparameters, ModelConfig, ModelKind,
    ObjectiveConfig, OutputConfig, RunConfig, SamplingConfig, StoreConfig, StreamConfig,
    TargetConfig, TargetSource, TrainingConfig,
};
pub use output::{learning_curve_svg, results_csv, write_outputs, Curve};

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{score_pool, AcquisitionError, Objective, ScoringContext, TargetSet};
use crate::models::{LabelledExample, ModelError, PredictiveModel};
use crate::prob::argmax_lowest;
use crate::seeding::{derive_seed, rng_from};
use crate::store::{
    apply_strategy, CostLedger, Origin, Selector, StoreError, Strategy, StrategyParams,
};
use crate::streams::{
    apply_permutation, class_count, label_histogram, load_csv, load_features_csv, load_idx,
    permuted_stream, split_stream, stationary_stream, with_label_noise, BlobSpec, StreamError,
    StreamKind, StreamSchedule,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("could not start worker pool: {0}")]
    Workers(String),
    #[error("{path}: {message}")]
    Output { path: String, message: String },
}

impl HarnessError {
    /// Whether the error stems from the configuration or its inputs rather
    /// than from running a seed.
    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config(_) | HarnessError::Stream(_))
    }
}

impl From<BuildError> for HarnessError {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::Config(c) => HarnessError::Config(c),
            BuildError::Model(m) => HarnessError::Model(m),
        }
    }
}

/// Fraction of argmax-correct predictions; ties go to the lowest class.
/// `None` scores an unfitted model, which predicts uniformly.
pub fn evaluate_accuracy(
    model: Option<&dyn PredictiveModel>,
    eval_set: &[LabelledExample],
) -> Result<f64, ModelError> {
    if eval_set.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let correct = match model {
        None => eval_set.iter().filter(|e| e.label == 0).count(),
        Some(m) => eval_set
            .par_iter()
            .map(|e| {
                Ok(usize::from(
                    argmax_lowest(m.marginal_predict(&e.features)?.probs()) == e.label,
                ))
            })
            .collect::<Result<Vec<_>, ModelError>>()?
            .into_iter()
            .sum(),
    };
    Ok(correct as f64 / eval_set.len() as f64)
}

/// Training, evaluation and unlabelled-pool data for a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Datasets {
    pub train: Vec<LabelledExample>,
    pub test: Vec<LabelledExample>,
    /// Held-out labelled pool: the global target source and the holdout
    /// for the RHO-LOSS auxiliary model.
    pub pool: Vec<LabelledExample>,
    pub num_classes: usize,
}

fn carve_pool(
    mut train: Vec<LabelledExample>,
    fraction: f64,
    seed: u64,
) -> (Vec<LabelledExample>, Vec<LabelledExample>) {
    let k = (fraction * train.len() as f64).floor() as usize;
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng_from(seed, &[0x9001]));
    let mut in_pool = vec![false; train.len()];
    order[..k].iter().for_each(|&i| in_pool[i] = true);
    let mut pool = Vec::with_capacity(k);
    let mut rest = Vec::with_capacity(train.len() - k);
    for (ex, p) in train.drain(..).zip(in_pool) {
        if p {
            pool.push(ex)
        } else {
            rest.push(ex)
        }
    }
    (rest, pool)
}

pub fn load_datasets(stream: &StreamConfig) -> Result<Datasets, HarnessError> {
    let seed = stream.seed;
    let (train, test, pool) = match &stream.dataset {
        DatasetConfig::SynthBlobs {
            num_classes,
            dim,
            per_class,
            test_per_class,
            pool_per_class,
            spread,
            mean_half_width,
        } => {
            let spec = BlobSpec::new(*num_classes, *dim, *mean_half_width, seed)?;
            (
                spec.sample(*per_class, *spread, derive_seed(seed, &[1])),
                spec.sample(*test_per_class, *spread, derive_seed(seed, &[2])),
                spec.sample(*pool_per_class, *spread, derive_seed(seed, &[3])),
            )
        }
        DatasetConfig::Csv {
            train,
            test,
            pool,
            label_column,
            has_header,
            pool_fraction,
        } => {
            let full = load_csv(train, *label_column, *has_header)?;
            let test = load_csv(test, *label_column, *has_header)?;
            let (train, pool) = match pool {
                Some(p) => (full, load_csv(p, *label_column, *has_header)?),
                None => carve_pool(full, *pool_fraction, seed),
            };
            (train, test, pool)
        }
        DatasetConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            pool_fraction,
            train_limit,
            test_limit,
        } => {
            let mut full = load_idx(train_images, train_labels)?;
            let mut test = load_idx(test_images, test_labels)?;
            if let Some(n) = train_limit {
                full.truncate(*n);
            }
            if let Some(n) = test_limit {
                test.truncate(*n);
            }
            let (train, pool) = carve_pool(full, *pool_fraction, seed);
            (train, test, pool)
        }
    };
    if train.is_empty() || test.is_empty() {
        return Err(StreamError::EmptyDataset.into());
    }
    let dim = train[0].features.len();
    if let Some(bad) = test.iter().chain(&pool).find(|e| e.features.len() != dim) {
        return Err(ConfigError::new(
            "stream.dataset",
            format!(
                "feature dimension {} differs from training dimension {dim}",
                bad.features.len()
            ),
        )
        .into());
    }
    let num_classes = class_count(&train)
        .max(class_count(&test))
        .max(class_count(&pool));
    Ok(Datasets {
        train,
        test,
        pool,
        num_classes,
    })
}

pub fn build_schedule(
    stream: &StreamConfig,
    train: &[LabelledExample],
    num_classes: usize,
    seed: u64,
) -> Result<StreamSchedule, StreamError> {
    let schedule = match stream.kind {
        StreamKind::Split => split_stream(
            train,
            stream.steps,
            stream.class_order,
            stream.per_step,
            seed,
        )?,
        StreamKind::Permuted => permuted_stream(train, stream.steps, stream.per_step, seed)?,
        StreamKind::Stationary => stationary_stream(train, stream.steps, seed)?,
    };
    if stream.label_noise > 0.0 {
        with_label_noise(
            &schedule,
            stream.label_noise,
            num_classes,
            derive_seed(seed, &[0x401E]),
        )
    } else {
        Ok(schedule)
    }
}

/// Applies every step's permutation to `data` and concatenates the results,
/// so permuted-stream evaluation covers all tasks. Identity otherwise.
fn across_permutations(
    schedule: &StreamSchedule,
    data: &[LabelledExample],
) -> Vec<LabelledExample> {
    match &schedule.permutations {
        None => data.to_vec(),
        Some(perms) => perms
            .iter()
            .flat_map(|p| {
                data.iter()
                    .map(|e| LabelledExample::new(apply_permutation(&e.features, p), e.label))
            })
            .collect(),
    }
}

/// Inputs available to a target-set draw at one step.
pub struct TargetContext<'a> {
    pub global_pool: &'a [Vec<f64>],
    pub seen_so_far: &'a [Vec<f64>],
    pub fixed: Option<&'a [Vec<f64>]>,
}

/// `M` seeded draws without replacement from the configured source, or the
/// fixed inputs in file order.
pub fn build_target_set(
    spec: &TargetConfig,
    ctx: &TargetContext<'_>,
    seed: u64,
) -> Result<TargetSet, HarnessError> {
    let source = match spec.source {
        TargetSource::Fixed => {
            let fixed = ctx
                .fixed
                .ok_or_else(|| ConfigError::new("targets.path", "fixed targets not loaded"))?;
            return Ok(TargetSet::new(fixed.to_vec())?);
        }
        TargetSource::Global => ctx.global_pool,
        TargetSource::SeenSoFar => ctx.seen_so_far,
    };
    if spec.m > source.len() {
        return Err(ConfigError::new(
            "targets.M",
            format!(
                "cannot draw {} targets without replacement from {} inputs",
                spec.m,
                source.len()
            ),
        )
        .into());
    }
    let mut rng = rng_from(seed, &[0x7A26]);
    let picks = rand::seq::index::sample(&mut rng, source.len(), spec.m);
    Ok(TargetSet::new(
        picks.iter().map(|i| source[i].clone()).collect(),
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDiagnostic {
    pub step: usize,
    pub slot: usize,
    /// Index of the chosen example within the candidate batch.
    pub chosen_index: usize,
    /// `None` when every candidate was degenerate.
    pub score: Option<f64>,
    pub min_score: Option<f64>,
    pub max_score: Option<f64>,
    pub mean_score: Option<f64>,
    pub num_candidates: usize,
    pub degenerate: usize,
    /// Picked uniformly because nothing was stored yet to fit on.
    pub cold_start: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub selection_fits: usize,
    pub evaluation_fits: usize,
    pub scoring_calls: usize,
    pub target_evaluations: usize,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Builds each selection one example at a time, refitting the model on the
/// store plus everything picked so far before each pick.
struct GreedySelector<'a> {
    cfg: &'a RunConfig,
    model: Box<dyn PredictiveModel>,
    aux: Option<Box<dyn PredictiveModel>>,
    schedule: &'a StreamSchedule,
    global_pool: &'a [Vec<f64>],
    fixed: Option<&'a [Vec<f64>]>,
    seed: u64,
    calls: u64,
    counters: Counters,
    diagnostics: Vec<SelectionDiagnostic>,
}

impl GreedySelector<'_> {
    fn targets(&self, step: usize) -> Result<Option<TargetSet>, HarnessError> {
        if !self.cfg.objective.name.uses_targets() {
            return Ok(None);
        }
        let seen: Vec<Vec<f64>> = match self.cfg.targets.source {
            TargetSource::SeenSoFar => self.schedule.steps[..=step]
                .iter()
                .flatten()
                .map(|e| e.features.clone())
                .collect(),
            _ => Vec::new(),
        };
        let ctx = TargetContext {
            global_pool: self.global_pool,
            seen_so_far: &seen,
            fixed: self.fixed,
        };
        build_target_set(
            &self.cfg.targets,
            &ctx,
            derive_seed(self.seed, &[step as u64, self.calls]),
        )
        .map(Some)
    }

    fn run(
        &mut self,
        store: &[LabelledExample],
        candidates: &[LabelledExample],
        m: usize,
        step: usize,
    ) -> Result<Vec<usize>, HarnessError> {
        let objective = self.cfg.objective.name;
        let targets = self.targets(step)?;
        let mut training = store.to_vec();
        let mut remaining: Vec<usize> = (0..candidates.len()).collect();
        let mut chosen = Vec::with_capacity(m);
        for slot in 0..m.min(candidates.len()) {
            let cold_start = objective != Objective::Random && training.is_empty();
            let effective = if cold_start {
                Objective::Random
            } else {
                objective
            };
            if effective != Objective::Random && slot % self.cfg.store.refit_every == 0 {
                self.model.fit(&training)?;
                self.counters.selection_fits += 1;
            }
            let pool: Vec<LabelledExample> =
                remaining.iter().map(|&i| candidates[i].clone()).collect();
            let mut ctx = ScoringContext::new(self.model.as_ref())
                .with_eta(self.cfg.objective.eta)
                .with_seed(derive_seed(
                    self.seed,
                    &[0x5107, step as u64, self.calls, slot as u64],
                ));
            if let Some(t) = &targets {
                ctx = ctx.with_targets(t);
            }
            if let Some(a) = &self.aux {
                ctx = ctx.with_aux_model(a.as_ref());
            }
            let scores = score_pool(effective, &ctx, &pool)?;
            self.counters.scoring_calls += 1;
            self.counters.target_evaluations += scores.target_evaluations;

            let best = scores.best();
            let values: Vec<f64> = scores
                .scores
                .iter()
                .map(|s| s.value)
                .filter(|v| v.is_finite())
                .collect();
            let picked = remaining.remove(best.candidate_index);
            self.diagnostics.push(SelectionDiagnostic {
                step,
                slot,
                chosen_index: picked,
                score: finite(best.value),
                min_score: values.iter().copied().reduce(f64::min),
                max_score: values.iter().copied().reduce(f64::max),
                mean_score: (!values.is_empty())
                    .then(|| values.iter().sum::<f64>() / values.len() as f64),
                num_candidates: pool.len(),
                degenerate: scores.degenerate.len(),
                cold_start,
            });
            training.push(candidates[picked].clone());
            chosen.push(picked);
        }
        self.calls += 1;
        Ok(chosen)
    }
}

impl Selector for GreedySelector<'_> {
    fn select(
        &mut self,
        store: &[LabelledExample],
        candidates: &[LabelledExample],
        m: usize,
        step: usize,
    ) -> Result<Vec<usize>, Box<dyn std::error::Error + Send + Sync>> {
        self.run(store, candidates, m, step).map_err(Into::into)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreSnapshot {
    pub step: usize,
    pub size: usize,
    pub label_counts: Vec<usize>,
    pub origins: Vec<Origin>,
    pub training_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub status: SeedStatus,
    #[serde(default)]
    pub error: Option<String>,
    /// Test accuracy after each step.
    pub accuracy: Vec<f64>,
    pub stores: Vec<StoreSnapshot>,
    pub ledger: Option<CostLedger>,
    pub diagnostics: Vec<SelectionDiagnostic>,
    pub counters: Counters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub objective: Objective,
    pub completed_seeds: Vec<u64>,
    pub failed_seeds: Vec<u64>,
    pub mean_accuracy: Vec<f64>,
    pub stderr_accuracy: Vec<f64>,
    pub final_mean: Option<f64>,
    pub final_stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedTiming {
    pub seed: u64,
    pub selection_secs: f64,
    pub evaluation_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub data_secs: f64,
    pub total_secs: f64,
    pub seeds: Vec<SeedTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: RunConfig,
    pub summary: Summary,
    pub seeds: Vec<SeedResult>,
    /// Wall-clock only; everything else is deterministic.
    pub timing: Timing,
}

/// Mean and standard error (sample standard deviation over `√n`).
pub fn mean_and_stderr(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((mean, (var / n as f64).sqrt()))
}

fn summarize(objective: Objective, seeds: &[SeedResult]) -> Summary {
    let done: Vec<&SeedResult> = seeds
        .iter()
        .filter(|s| s.status == SeedStatus::Completed)
        .collect();
    let steps = done.first().map_or(0, |s| s.accuracy.len());
    let (mut mean_accuracy, mut stderr_accuracy) = (Vec::new(), Vec::new());
    for t in 0..steps {
        let column: Vec<f64> = done.iter().map(|s| s.accuracy[t]).collect();
        let (m, se) = mean_and_stderr(&column).expect("non-empty");
        mean_accuracy.push(m);
        stderr_accuracy.push(se);
    }
    Summary {
        objective,
        completed_seeds: done.iter().map(|s| s.seed).collect(),
        failed_seeds: seeds
            .iter()
            .filter(|s| s.status == SeedStatus::Failed)
            .map(|s| s.seed)
            .collect(),
        final_mean: mean_accuracy.last().copied(),
        final_stderr: stderr_accuracy.last().copied(),
        mean_accuracy,
        stderr_accuracy,
    }
}

fn bounding_box<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lower = vec![f64::INFINITY; dim];
    let mut upper = vec![f64::NEG_INFINITY; dim];
    for row in rows {
        for (d, &v) in row.iter().enumerate().take(dim) {
            lower[d] = lower[d].min(v);
            upper[d] = upper[d].max(v);
        }
    }
    for (lo, hi) in lower.iter_mut().zip(upper.iter_mut()) {
        if !lo.is_finite() || !hi.is_finite() {
            (*lo, *hi) = (0.0, 1.0);
        } else if *lo >= *hi {
            (*lo, *hi) = (*lo - 0.5, *hi + 0.5);
        }
    }
    (lower, upper)
}

struct SeedRun {
    result: SeedResult,
    timing: SeedTiming,
}

fn failed(seed: u64, error: String) -> SeedRun {
    SeedRun {
        result: SeedResult {
            seed,
            status: SeedStatus::Failed,
            error: Some(error),
            accuracy: Vec::new(),
            stores: Vec::new(),
            ledger: None,
            diagnostics: Vec::new(),
            counters: Counters::default(),
        },
        timing: SeedTiming {
            seed,
            selection_secs: 0.0,
            evaluation_secs: 0.0,
        },
    }
}

fn run_seed(
    cfg: &RunConfig,
    data: &Datasets,
    fixed: Option<&[Vec<f64>]>,
    seed: u64,
) -> Result<SeedRun, HarnessError> {
    let schedule = build_schedule(
        &cfg.stream,
        &data.train,
        data.num_classes,
        derive_seed(cfg.stream.seed, &[seed]),
    )?;
    let test = across_permutations(&schedule, &data.test);
    let pool = across_permutations(&schedule, &data.pool);
    let global_pool: Vec<Vec<f64>> = pool.iter().map(|e| e.features.clone()).collect();
    let dim = data.train[0].features.len();
    let rows = schedule
        .steps
        .iter()
        .flatten()
        .chain(&test)
        .chain(&pool)
        .map(|e| e.features.as_slice())
        .chain(fixed.into_iter().flatten().map(Vec::as_slice));
    let (lower, upper) = bounding_box(rows, dim);
    let model_seed = derive_seed(seed, &[0x30DE]);
    let build = || cfg.build_model(data.num_classes, &lower, &upper, model_seed);

    let objective = cfg.objective.name;
    if objective == Objective::RhoLoss && pool.is_empty() {
        return Err(
            ConfigError::new("stream.dataset", "rho_loss needs a non-empty labelled pool").into(),
        );
    }
    if objective.uses_targets()
        && cfg.targets.source == TargetSource::Global
        && global_pool.is_empty()
    {
        return Err(ConfigError::new(
            "targets.source",
            "the global target source needs a non-empty pool",
        )
        .into());
    }
    let model = build()?;
    let aux = if objective == Objective::RhoLoss {
        let mut aux = cfg.build_model(
            data.num_classes,
            &lower,
            &upper,
            derive_seed(seed, &[0xA0C5]),
        )?;
        if let Err(e) = aux.fit(&pool) {
            return Ok(failed(seed, format!("auxiliary model: {e}")));
        }
        Some(aux)
    } else {
        None
    };
    let mut selector = GreedySelector {
        cfg,
        model,
        aux,
        schedule: &schedule,
        global_pool: &global_pool,
        fixed,
        seed,
        calls: 0,
        counters: Counters::default(),
        diagnostics: Vec::new(),
    };
    let per_selection = match cfg.store.strategy {
        Strategy::D => cfg.quota()?,
        _ => cfg.store.m,
    };
    let params = StrategyParams {
        m: per_selection,
        tau: cfg.store.tau,
        eviction_seed: derive_seed(seed, &[0xE71C]),
        costs: cfg.store.costs,
    };

    let started = Instant::now();
    let outcome = match apply_strategy(cfg.store.strategy, &schedule, &mut selector, &params) {
        Ok(o) => o,
        Err(StoreError::Selection { source, step }) => {
            if let Some(h) = source.downcast_ref::<HarnessError>() {
                if h.is_config() {
                    return Err(ConfigError::new("targets", h.to_string()).into());
                }
            }
            return Ok(failed(seed, format!("selection at step {step}: {source}")));
        }
        Err(e @ StoreError::Config(_)) => {
            return Err(ConfigError::new("store", e.to_string()).into())
        }
        Err(e) => return Ok(failed(seed, e.to_string())),
    };
    let selection_secs = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let mut eval_model = build()?;
    let mut counters = selector.counters;
    let mut accuracy = Vec::with_capacity(outcome.steps.len());
    let mut stores = Vec::with_capacity(outcome.steps.len());
    for state in &outcome.steps {
        let training: Vec<LabelledExample> = state
            .training_set
            .iter()
            .map(|s| s.example.clone())
            .collect();
        let acc = if training.is_empty() {
            evaluate_accuracy(None, &test)?
        } else {
            if let Err(e) = eval_model.fit(&training) {
                return Ok(failed(
                    seed,
                    format!("evaluation fit at step {}: {e}", state.step),
                ));
            }
            counters.evaluation_fits += 1;
            evaluate_accuracy(Some(eval_model.as_ref()), &test)?
        };
        accuracy.push(acc);
        let labelled = state.store.labelled();
        stores.push(StoreSnapshot {
            step: state.step,
            size: state.store.len(),
            label_counts: label_histogram(&labelled, data.num_classes),
            origins: state.store.examples().iter().map(|s| s.origin).collect(),
            training_size: state.training_set.len(),
        });
    }
    Ok(SeedRun {
        result: SeedResult {
            seed,
            status: SeedStatus::Completed,
            error: None,
            accuracy,
            stores,
            ledger: Some(outcome.ledger),
            diagnostics: selector.diagnostics,
            counters,
        },
        timing: SeedTiming {
            seed,
            selection_secs,
            evaluation_secs: started.elapsed().as_secs_f64(),
        },
    })
}

/// Runs every seed, in parallel on `workers` threads when given. Seeds that
/// fail at runtime are reported and left out of the summary; configuration
/// problems abort the whole run.
pub fn run_experiment(
    cfg: &RunConfig,
    workers: Option<usize>,
) -> Result<ExperimentResult, HarnessError> {
    let started = Instant::now();
    cfg.validate()?;
    let data = load_datasets(&cfg.stream)?;
    let fixed = match (&cfg.targets.source, &cfg.targets.path) {
        (TargetSource::Fixed, Some(p)) => Some(load_features_csv(p, false)?),
        _ => None,
    };
    let dim = data.train[0].features.len();
    if let Some(bad) = fixed.iter().flatten().find(|x| x.len() != dim) {
        return Err(ConfigError::new(
            "targets.path",
            format!(
                "target dimension {} differs from data dimension {dim}",
                bad.len()
            ),
        )
        .into());
    }
    let data_secs = started.elapsed().as_secs_f64();

    let seeds = cfg.resolved_seeds();
    let run_all = || -> Vec<Result<SeedRun, HarnessError>> {
        seeds
            .par_iter()
            .map(|&s| run_seed(cfg, &data, fixed.as_deref(), s))
            .collect()
    };
    let runs = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| HarnessError::Workers(e.to_string()))?
            .install(run_all),
        None => run_all(),
    };
    let mut results = Vec::with_capacity(runs.len());
    let mut timings = Vec::with_capacity(runs.len());
    for run in runs {
        let run = run?;
        results.push(run.result);
        timings.push(run.timing);
    }
    Ok(ExperimentResult {
        summary: summarize(cfg.objective.name, &results),
        config: cfg.clone(),
        seeds: results,
        timing: Timing {
            data_secs,
            total_secs: started.elapsed().as_secs_f64(),
            seeds: timings,
        },
    })
}
