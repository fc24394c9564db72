//! Labelled data streams, fully materialized as per-step batches.
//!
//! * split streams: disjoint class pairs arrive one pair per step (marginal
//!   label shift),
//! * permuted streams: every step sees the data under a fixed feature
//!   permutation (conditional input shift),
//! * stationary streams: a seeded uniform partition.

mod io;

pub use io::{load_csv, load_features_csv, load_idx, write_csv, write_features_csv};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::LabelledExample;
use crate::seeding::rng_from;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("invalid stream configuration: {0}")]
    Config(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}, column {column}: cannot parse `{value}` as a number")]
    Parse {
        row: u64,
        column: usize,
        value: String,
    },
    #[error("row {row}: label `{value}` is not a non-negative integer")]
    NonIntegerLabel { row: u64, value: String },
    #[error("row {row}: expected {expected} columns, found {found}")]
    InconsistentColumns {
        row: u64,
        expected: usize,
        found: usize,
    },
    #[error("label column {column} out of range for {columns} columns")]
    LabelColumnOutOfRange { column: usize, columns: usize },
    #[error("{path}: malformed csv: {message}")]
    Csv { path: String, message: String },
    #[error("{path}: bad IDX magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: String,
        expected: u32,
        found: u32,
    },
    #[error("{path}: truncated IDX file, expected {expected} bytes, found {found}")]
    Truncated {
        path: String,
        expected: usize,
        found: usize,
    },
    #[error("image file holds {images} items but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },
}

/// Number of classes implied by the largest label.
pub fn class_count(data: &[LabelledExample]) -> usize {
    data.iter().map(|e| e.label + 1).max().unwrap_or(0)
}

/// Per-class example counts, indexed by label.
pub fn label_histogram(data: &[LabelledExample], num_classes: usize) -> Vec<usize> {
    let mut hist = vec![0; num_classes];
    for ex in data {
        if ex.label < num_classes {
            hist[ex.label] += 1;
        }
    }
    hist
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Split,
    Permuted,
    Stationary,
}

/// Order in which class pairs are assigned to steps of a split stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassOrder {
    Identity,
    #[default]
    Shuffled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSchedule {
    pub steps: Vec<Vec<LabelledExample>>,
    pub kind: StreamKind,
    /// Sorted distinct labels present in each batch.
    pub classes_per_step: Vec<Vec<usize>>,
    /// Feature permutation applied at each step (permuted streams only).
    pub permutations: Option<Vec<Vec<usize>>>,
    pub seed: u64,
}

impl StreamSchedule {
    fn new(
        steps: Vec<Vec<LabelledExample>>,
        kind: StreamKind,
        seed: u64,
    ) -> Result<Self, StreamError> {
        if let Some(t) = steps.iter().position(Vec::is_empty) {
            return Err(StreamError::Config(format!("step {t} has no examples")));
        }
        let classes_per_step = steps
            .iter()
            .map(|batch| {
                let mut labels: Vec<usize> = batch.iter().map(|e| e.label).collect();
                labels.sort_unstable();
                labels.dedup();
                labels
            })
            .collect();
        Ok(Self {
            steps,
            kind,
            classes_per_step,
            permutations: None,
            seed,
        })
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn batch(&self, t: usize) -> &[LabelledExample] {
        &self.steps[t]
    }
}

/// Keeps a seeded subset of `n` examples, preserving their original order.
fn subsample(
    batch: Vec<LabelledExample>,
    n: Option<usize>,
    seed: u64,
    step: usize,
) -> Vec<LabelledExample> {
    match n {
        Some(n) if n < batch.len() => {
            let mut rng = rng_from(seed, &[0x5B5A, step as u64]);
            let mut keep = rand::seq::index::sample(&mut rng, batch.len(), n).into_vec();
            keep.sort_unstable();
            keep.into_iter().map(|i| batch[i].clone()).collect()
        }
        _ => batch,
    }
}

/// Step `t` holds the examples of the `t`-th class pair. Needs exactly `2T`
/// classes. `per_step` caps each batch with a seeded subsample.
pub fn split_stream(
    dataset: &[LabelledExample],
    num_steps: usize,
    order: ClassOrder,
    per_step: Option<usize>,
    seed: u64,
) -> Result<StreamSchedule, StreamError> {
    if dataset.is_empty() {
        return Err(StreamError::EmptyDataset);
    }
    let classes = class_count(dataset);
    if num_steps == 0 || classes != 2 * num_steps {
        return Err(StreamError::Config(format!(
            "split stream over {num_steps} steps needs {} classes, dataset has {classes}",
            2 * num_steps
        )));
    }
    let mut class_order: Vec<usize> = (0..classes).collect();
    if order == ClassOrder::Shuffled {
        class_order.shuffle(&mut rng_from(seed, &[0xC1A5]));
    }
    let mut step_of_class = vec![0; classes];
    for (pos, &c) in class_order.iter().enumerate() {
        step_of_class[c] = pos / 2;
    }
    let mut steps = vec![Vec::new(); num_steps];
    for ex in dataset {
        steps[step_of_class[ex.label]].push(ex.clone());
    }
    let steps = steps
        .into_iter()
        .enumerate()
        .map(|(t, batch)| subsample(batch, per_step, seed, t))
        .collect();
    StreamSchedule::new(steps, StreamKind::Split, seed)
}

/// `out[i] = features[perm[i]]`.
pub fn apply_permutation(features: &[f64], perm: &[usize]) -> Vec<f64> {
    perm.iter().map(|&i| features[i]).collect()
}

/// Every step sees the whole dataset (or a seeded `per_step` subset) under
/// its own feature permutation; step 0 uses the identity.
pub fn permuted_stream(
    dataset: &[LabelledExample],
    num_steps: usize,
    per_step: Option<usize>,
    seed: u64,
) -> Result<StreamSchedule, StreamError> {
    let dim = dataset
        .first()
        .ok_or(StreamError::EmptyDataset)?
        .features
        .len();
    if num_steps == 0 {
        return Err(StreamError::Config("need at least one step".into()));
    }
    let perms: Vec<Vec<usize>> = (0..num_steps)
        .map(|t| {
            let mut p: Vec<usize> = (0..dim).collect();
            if t > 0 {
                p.shuffle(&mut rng_from(seed, &[0x9E4D, t as u64]));
            }
            p
        })
        .collect();
    let steps = perms
        .iter()
        .enumerate()
        .map(|(t, perm)| {
            let batch = dataset
                .iter()
                .map(|ex| LabelledExample::new(apply_permutation(&ex.features, perm), ex.label))
                .collect();
            subsample(batch, per_step, seed, t)
        })
        .collect();
    let mut schedule = StreamSchedule::new(steps, StreamKind::Permuted, seed)?;
    schedule.permutations = Some(perms);
    Ok(schedule)
}

/// Seeded uniform partition into `T` batches whose sizes differ by at most one.
pub fn stationary_stream(
    dataset: &[LabelledExample],
    num_steps: usize,
    seed: u64,
) -> Result<StreamSchedule, StreamError> {
    if dataset.is_empty() {
        return Err(StreamError::EmptyDataset);
    }
    if num_steps == 0 || num_steps > dataset.len() {
        return Err(StreamError::Config(format!(
            "cannot split {} examples into {num_steps} non-empty steps",
            dataset.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng_from(seed, &[0x57A7]));
    let base = dataset.len() / num_steps;
    let extra = dataset.len() % num_steps;
    let mut steps = Vec::with_capacity(num_steps);
    let mut at = 0;
    for t in 0..num_steps {
        let size = base + usize::from(t < extra);
        steps.push(
            order[at..at + size]
                .iter()
                .map(|&i| dataset[i].clone())
                .collect(),
        );
        at += size;
    }
    StreamSchedule::new(steps, StreamKind::Stationary, seed)
}

/// Replaces each label, with probability `rate`, by a uniformly drawn
/// different class. Composing this with the generators above gives
/// conditional label shift.
pub fn with_label_noise(
    schedule: &StreamSchedule,
    rate: f64,
    num_classes: usize,
    seed: u64,
) -> Result<StreamSchedule, StreamError> {
    if !(0.0..=1.0).contains(&rate) || num_classes < 2 {
        return Err(StreamError::Config(
            "label noise needs rate in [0, 1] and >= 2 classes".into(),
        ));
    }
    let steps = schedule
        .steps
        .iter()
        .enumerate()
        .map(|(t, batch)| {
            let mut rng = rng_from(seed, &[0x401E, t as u64]);
            batch
                .iter()
                .map(|ex| {
                    let mut ex = ex.clone();
                    if rng.random::<f64>() < rate {
                        let shift = rng.random_range(1..num_classes);
                        ex.label = (ex.label + shift) % num_classes;
                    }
                    ex
                })
                .collect()
        })
        .collect();
    let mut noisy = StreamSchedule::new(steps, schedule.kind, schedule.seed)?;
    noisy.permutations = schedule.permutations.clone();
    Ok(noisy)
}

/// Class means of an isotropic Gaussian blob dataset. Sharing one spec
/// between train, test and pool draws keeps them on the same distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub means: Vec<Vec<f64>>,
}

impl BlobSpec {
    /// Means drawn uniformly from `[-half_width, half_width]^dim`.
    pub fn new(
        num_classes: usize,
        dim: usize,
        half_width: f64,
        seed: u64,
    ) -> Result<Self, StreamError> {
        if num_classes < 2 || dim == 0 || !(half_width > 0.0) {
            return Err(StreamError::Config(
                "blobs need >= 2 classes, dim >= 1 and a positive mean range".into(),
            ));
        }
        let mut rng = rng_from(seed, &[0xB10B]);
        let u = Uniform::new(-half_width, half_width).expect("positive width");
        Ok(Self {
            means: (0..num_classes)
                .map(|_| (0..dim).map(|_| u.sample(&mut rng)).collect())
                .collect(),
        })
    }

    /// `per_class` points per class in seeded random order.
    pub fn sample(&self, per_class: usize, spread: f64, seed: u64) -> Vec<LabelledExample> {
        let mut rng = rng_from(seed, &[0xB10C]);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut out = Vec::with_capacity(per_class * self.means.len());
        for (label, mean) in self.means.iter().enumerate() {
            for _ in 0..per_class {
                let features = mean
                    .iter()
                    .map(|m| m + spread * normal.sample(&mut rng))
                    .collect();
                out.push(LabelledExample::new(features, label));
            }
        }
        out.shuffle(&mut rng);
        out
    }
}

pub const DEFAULT_BLOB_HALF_WIDTH: f64 = 5.0;

/// Gaussian blobs at seeded class means.
pub fn synth_blobs(
    num_classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<Vec<LabelledExample>, StreamError> {
    Ok(
        BlobSpec::new(num_classes, dim, DEFAULT_BLOB_HALF_WIDTH, seed)?
            .sample(per_class, spread, seed),
    )
}
