//! Store policies for learning from a stream, with an abstract cost ledger.
//!
//! | strategy | store                      | select         | train        |
//! |----------|----------------------------|----------------|--------------|
//! | A        | none                       | none           | batch online |
//! | B        | append all                 | none           | all, every τ |
//! | C        | append all                 | m of all, τ    | m, every τ   |
//! | D        | append m picked per step   | m of batch     | all, every τ |
//! | E        | replace, capacity m        | m of batch     | m, every τ   |
//!
//! Ledger readings are per-step costs with offline work amortized over τ.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::LabelledExample;
use crate::seeding::{derive_seed, rng_from};
use crate::streams::StreamSchedule;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid strategy configuration: {0}")]
    Config(String),
    #[error("store capacity {capacity} exceeded: {attempted} examples")]
    CapacityExceeded { capacity: usize, attempted: usize },
    #[error("selector returned an invalid selection: {0}")]
    InvalidSelection(String),
    #[error("selection failed at step {step}")]
    Selection {
        step: usize,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    A,
    B,
    C,
    D,
    E,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::A,
        Strategy::B,
        Strategy::C,
        Strategy::D,
        Strategy::E,
    ];
}

/// Where a stored example first appeared in the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Origin {
    pub step: usize,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredExample {
    pub origin: Origin,
    pub example: LabelledExample,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DataStore {
    examples: Vec<StoredExample>,
    capacity: Option<usize>,
}

impl DataStore {
    pub fn unbounded() -> Self {
        Self::default()
    }

    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            examples: Vec::new(),
            capacity: Some(capacity),
        }
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[StoredExample] {
        &self.examples
    }

    pub fn labelled(&self) -> Vec<LabelledExample> {
        self.examples.iter().map(|s| s.example.clone()).collect()
    }

    pub fn extend(
        &mut self,
        incoming: impl IntoIterator<Item = StoredExample>,
    ) -> Result<(), StoreError> {
        let before = self.examples.len();
        self.examples.extend(incoming);
        if let Some(cap) = self.capacity {
            if self.examples.len() > cap {
                let attempted = self.examples.len();
                self.examples.truncate(before);
                return Err(StoreError::CapacityExceeded {
                    capacity: cap,
                    attempted,
                });
            }
        }
        Ok(())
    }
}

/// Inserts `incoming`; if that overflows the capacity, evicts seeded-uniform
/// residents (never incoming examples) until the store is at capacity.
pub fn replace_policy(
    store: &DataStore,
    incoming: Vec<StoredExample>,
    seed: u64,
) -> Result<DataStore, StoreError> {
    let Some(cap) = store.capacity else {
        let mut out = store.clone();
        out.extend(incoming)?;
        return Ok(out);
    };
    if incoming.len() > cap {
        return Err(StoreError::Config(format!(
            "incoming batch of {} exceeds store capacity {cap}",
            incoming.len()
        )));
    }
    if store.len() > cap {
        return Err(StoreError::CapacityExceeded {
            capacity: cap,
            attempted: store.len(),
        });
    }
    let overflow = (store.len() + incoming.len()).saturating_sub(cap);
    let mut evict = vec![false; store.len()];
    if overflow > 0 {
        let mut rng = rng_from(seed, &[0xE71C]);
        for i in rand::seq::index::sample(&mut rng, store.len(), overflow) {
            evict[i] = true;
        }
    }
    let mut examples: Vec<StoredExample> = store
        .examples
        .iter()
        .zip(&evict)
        .filter(|(_, &gone)| !gone)
        .map(|(e, _)| e.clone())
        .collect();
    examples.extend(incoming);
    Ok(DataStore {
        examples,
        capacity: Some(cap),
    })
}

/// Cost of handling `n` examples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CostFn {
    #[default]
    Identity,
    /// `coefficient · n^exponent`
    Power { coefficient: f64, exponent: f64 },
}

impl CostFn {
    pub fn eval(&self, n: usize) -> f64 {
        match *self {
            CostFn::Identity => n as f64,
            CostFn::Power {
                coefficient,
                exponent,
            } => coefficient * (n as f64).powf(exponent),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    #[serde(default)]
    pub store: CostFn,
    #[serde(default)]
    pub select: CostFn,
    #[serde(default)]
    pub train: CostFn,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostReading {
    pub storage: f64,
    pub selection: f64,
    pub training: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    /// Amortized cost reading at each step.
    pub per_step: Vec<CostReading>,
    /// Running sums of `per_step`.
    pub cumulative: Vec<CostReading>,
    /// Steps at which offline selection or training actually ran.
    pub offline_events: Vec<usize>,
}

impl CostLedger {
    fn record(&mut self, reading: CostReading) {
        let prev = self.cumulative.last().copied().unwrap_or_default();
        self.cumulative.push(CostReading {
            storage: prev.storage + reading.storage,
            selection: prev.selection + reading.selection,
            training: prev.training + reading.training,
        });
        self.per_step.push(reading);
    }

    pub fn totals(&self) -> CostReading {
        self.cumulative.last().copied().unwrap_or_default()
    }
}

/// Picks up to `m` candidate indices. `store` holds what is already kept.
pub trait Selector {
    fn select(
        &mut self,
        store: &[LabelledExample],
        candidates: &[LabelledExample],
        m: usize,
        step: usize,
    ) -> Result<Vec<usize>, Box<dyn std::error::Error + Send + Sync>>;
}

/// Seeded uniform selection without replacement.
#[derive(Debug, Clone)]
pub struct RandomSelector {
    pub seed: u64,
}

impl Selector for RandomSelector {
    fn select(
        &mut self,
        _store: &[LabelledExample],
        candidates: &[LabelledExample],
        m: usize,
        step: usize,
    ) -> Result<Vec<usize>, Box<dyn std::error::Error + Send + Sync>> {
        let mut rng = rng_from(self.seed, &[0x5E1E, step as u64]);
        Ok(
            rand::seq::index::sample(&mut rng, candidates.len(), m.min(candidates.len()))
                .into_vec(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyParams {
    /// Examples selected per selection event; also the capacity for E.
    pub m: usize,
    /// Steps between offline actions.
    pub tau: usize,
    pub eviction_seed: u64,
    pub costs: CostModel,
}

impl StrategyParams {
    pub fn new(m: usize, tau: usize) -> Self {
        Self {
            m,
            tau,
            eviction_seed: 0,
            costs: CostModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepState {
    pub step: usize,
    pub store: DataStore,
    /// Data the current model was last trained on.
    pub training_set: Vec<StoredExample>,
    /// Whether training ran at this step.
    pub trained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub steps: Vec<StepState>,
    pub ledger: CostLedger,
}

fn checked_selection(
    selector: &mut dyn Selector,
    store: &[LabelledExample],
    candidates: &[LabelledExample],
    m: usize,
    step: usize,
) -> Result<Vec<usize>, StoreError> {
    let picked = selector
        .select(store, candidates, m, step)
        .map_err(|source| StoreError::Selection { step, source })?;
    let want = m.min(candidates.len());
    if picked.len() != want {
        return Err(StoreError::InvalidSelection(format!(
            "expected {want} indices at step {step}, got {}",
            picked.len()
        )));
    }
    let mut seen = vec![false; candidates.len()];
    for &i in &picked {
        if i >= candidates.len() || std::mem::replace(&mut seen[i], true) {
            return Err(StoreError::InvalidSelection(format!(
                "index {i} out of range or repeated"
            )));
        }
    }
    Ok(picked)
}

/// Runs one strategy over a schedule. Steps are 0-based; the offline action
/// fires at steps `0, τ, 2τ, …`.
pub fn apply_strategy(
    strategy: Strategy,
    schedule: &StreamSchedule,
    selector: &mut dyn Selector,
    params: &StrategyParams,
) -> Result<StrategyOutcome, StoreError> {
    let StrategyParams {
        m,
        tau,
        eviction_seed,
        costs,
    } = *params;
    if tau == 0 {
        return Err(StoreError::Config("tau must be at least 1".into()));
    }
    if matches!(strategy, Strategy::C | Strategy::D | Strategy::E) && m == 0 {
        return Err(StoreError::Config(format!(
            "strategy {strategy:?} needs m >= 1"
        )));
    }
    if matches!(strategy, Strategy::D | Strategy::E) {
        if let Some((t, b)) = schedule.steps.iter().enumerate().find(|(_, b)| b.len() < m) {
            return Err(StoreError::Config(format!(
                "strategy {strategy:?} needs m <= n, but step {t} has {} examples for m = {m}",
                b.len()
            )));
        }
    }

    let mut store = match strategy {
        Strategy::E => DataStore::with_capacity(m),
        _ => DataStore::unbounded(),
    };
    let mut training_set: Vec<StoredExample> = Vec::new();
    let mut ledger = CostLedger::default();
    let mut steps = Vec::with_capacity(schedule.num_steps());
    let amortize = |cost: f64| cost / tau as f64;

    for (t, batch) in schedule.steps.iter().enumerate() {
        let n = batch.len();
        let offline = t % tau == 0;
        let tagged = |i: usize| StoredExample {
            origin: Origin { step: t, index: i },
            example: batch[i].clone(),
        };
        let reading = match strategy {
            Strategy::A => {
                training_set = (0..n).map(tagged).collect();
                CostReading {
                    storage: 0.0,
                    selection: 0.0,
                    training: costs.train.eval(n),
                }
            }
            Strategy::B => {
                store.extend((0..n).map(tagged))?;
                if offline {
                    training_set = store.examples().to_vec();
                }
                CostReading {
                    storage: costs.store.eval(store.len()),
                    selection: 0.0,
                    training: amortize(costs.train.eval(store.len())),
                }
            }
            Strategy::C => {
                store.extend((0..n).map(tagged))?;
                if offline {
                    let pool = store.labelled();
                    let picked = checked_selection(selector, &[], &pool, m, t)?;
                    training_set = picked
                        .iter()
                        .map(|&i| store.examples()[i].clone())
                        .collect();
                }
                CostReading {
                    storage: costs.store.eval(store.len()),
                    selection: amortize(costs.select.eval(store.len())),
                    training: amortize(costs.train.eval(m.min(store.len()))),
                }
            }
            Strategy::D | Strategy::E => {
                let picked = checked_selection(selector, &store.labelled(), batch, m, t)?;
                let incoming: Vec<StoredExample> = picked.into_iter().map(tagged).collect();
                if strategy == Strategy::D {
                    store.extend(incoming)?;
                } else {
                    store =
                        replace_policy(&store, incoming, derive_seed(eviction_seed, &[t as u64]))?;
                }
                if offline {
                    training_set = store.examples().to_vec();
                }
                CostReading {
                    storage: costs.store.eval(store.len()),
                    selection: costs.select.eval(n),
                    training: amortize(costs.train.eval(store.len())),
                }
            }
        };
        let trained = strategy == Strategy::A || offline;
        if offline && strategy != Strategy::A {
            ledger.offline_events.push(t);
        }
        ledger.record(reading);
        steps.push(StepState {
            step: t,
            store: store.clone(),
            training_set: training_set.clone(),
            trained,
        });
    }
    Ok(StrategyOutcome { steps, ledger })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::stationary_stream;
    use proptest::prelude::{prop_assert, proptest};
    use rand::Rng as _;

    fn schedule(steps: usize, n: usize) -> StreamSchedule {
        let data: Vec<_> = (0..steps * n)
            .map(|i| LabelledExample::new(vec![i as f64], i % 3))
            .collect();
        stationary_stream(&data, steps, 1).unwrap()
    }

    fn stored(i: usize) -> StoredExample {
        StoredExample {
            origin: Origin { step: 0, index: i },
            example: LabelledExample::new(vec![i as f64], 0),
        }
    }

    fn run(strategy: Strategy, s: &StreamSchedule, m: usize, tau: usize) -> StrategyOutcome {
        apply_strategy(
            strategy,
            s,
            &mut RandomSelector { seed: 3 },
            &StrategyParams::new(m, tau),
        )
        .unwrap()
    }

    #[test]
    fn e_storage_is_m() {
        let out = run(Strategy::E, &schedule(10, 150), 100, 1);
        assert!(out.ledger.per_step.iter().all(|r| r.storage == 100.0));
    }

    #[test]
    fn b_storage_after_four_steps() {
        let out = run(Strategy::B, &schedule(4, 50), 1, 1);
        assert_eq!(out.ledger.per_step[3].storage, 200.0);
    }

    #[test]
    fn a_has_no_storage_or_selection() {
        let out = run(Strategy::A, &schedule(5, 10), 1, 2);
        assert!(out
            .ledger
            .per_step
            .iter()
            .all(|r| r.storage == 0.0 && r.selection == 0.0));
        assert!(out
            .steps
            .iter()
            .all(|s| s.store.is_empty() && s.training_set.len() == 10));
    }

    #[test]
    fn readings_match_table_formulas() {
        let (n, m, tau) = (12usize, 5usize, 3usize);
        let s = schedule(100, n);
        let tf = tau as f64;
        for strategy in Strategy::ALL {
            let out = run(strategy, &s, m, tau);
            for (i, r) in out.ledger.per_step.iter().enumerate() {
                let t = (i + 1) as f64;
                let (n, m) = (n as f64, m as f64);
                let expected = match strategy {
                    Strategy::A => [0.0, 0.0, n],
                    Strategy::B => [n * t, 0.0, n * t / tf],
                    Strategy::C => [n * t, n * t / tf, m / tf],
                    Strategy::D => [m * t, n, m * t / tf],
                    Strategy::E => [m, n, m / tf],
                };
                let got = [r.storage, r.selection, r.training];
                for (g, e) in got.iter().zip(expected) {
                    assert!(
                        (g - e).abs() < 1e-9,
                        "{strategy:?} t={t}: {got:?} vs {expected:?}"
                    );
                }
            }
            for w in out.ledger.cumulative.windows(2) {
                assert!(w[1].storage >= w[0].storage);
                assert!(w[1].selection >= w[0].selection);
                assert!(w[1].training >= w[0].training);
            }
        }
    }

    #[test]
    fn offline_events_follow_tau() {
        let out = run(Strategy::B, &schedule(7, 4), 1, 3);
        assert_eq!(out.ledger.offline_events, vec![0, 3, 6]);
        assert_eq!(out.steps[2].training_set.len(), 4);
        assert_eq!(out.steps[3].training_set.len(), 16);
    }

    #[test]
    fn stores_hold_only_stream_examples() {
        let s = schedule(6, 9);
        for strategy in Strategy::ALL {
            let out = run(strategy, &s, 4, 2);
            for state in &out.steps {
                for e in state.store.examples().iter().chain(&state.training_set) {
                    assert!(e.origin.step <= state.step);
                    assert_eq!(s.steps[e.origin.step][e.origin.index], e.example);
                }
            }
        }
    }

    #[test]
    fn deterministic_given_seeds() {
        let s = schedule(6, 9);
        for strategy in Strategy::ALL {
            assert_eq!(run(strategy, &s, 4, 2), run(strategy, &s, 4, 2));
        }
    }

    #[test]
    fn d_and_e_need_m_at_most_n() {
        let s = schedule(3, 4);
        for strategy in [Strategy::D, Strategy::E] {
            let err = apply_strategy(
                strategy,
                &s,
                &mut RandomSelector { seed: 0 },
                &StrategyParams::new(5, 1),
            );
            assert!(matches!(err, Err(StoreError::Config(_))));
        }
        assert!(apply_strategy(
            Strategy::B,
            &s,
            &mut RandomSelector { seed: 0 },
            &StrategyParams::new(1, 0)
        )
        .is_err());
    }

    struct Liar;
    impl Selector for Liar {
        fn select(
            &mut self,
            _: &[LabelledExample],
            _: &[LabelledExample],
            _: usize,
            _: usize,
        ) -> Result<Vec<usize>, Box<dyn std::error::Error + Send + Sync>> {
            Ok(vec![0, 0])
        }
    }

    #[test]
    fn invalid_selections_rejected() {
        let err = apply_strategy(
            Strategy::D,
            &schedule(2, 5),
            &mut Liar,
            &StrategyParams::new(2, 1),
        );
        assert!(matches!(err, Err(StoreError::InvalidSelection(_))));
    }

    #[test]
    fn replace_below_capacity_appends() {
        let store =
            replace_policy(&DataStore::with_capacity(3), vec![stored(0), stored(1)], 0).unwrap();
        let out = replace_policy(&store, vec![stored(2)], 0).unwrap();
        assert_eq!(out.examples(), &[stored(0), stored(1), stored(2)]);
    }

    #[test]
    fn replace_evicts_one_resident_by_seed() {
        let store =
            replace_policy(&DataStore::with_capacity(2), vec![stored(0), stored(1)], 0).unwrap();
        let a = replace_policy(&store, vec![stored(2)], 7).unwrap();
        assert_eq!(a, replace_policy(&store, vec![stored(2)], 7).unwrap());
        assert_eq!(a.len(), 2);
        assert_eq!(a.examples()[1], stored(2));
        assert!(a.examples()[0] == stored(0) || a.examples()[0] == stored(1));
        let evicted: std::collections::HashSet<_> = (0..64)
            .map(|seed| {
                replace_policy(&store, vec![stored(2)], seed)
                    .unwrap()
                    .examples()[0]
                    .origin
                    .index
            })
            .collect();
        assert_eq!(evicted.len(), 2);
    }

    #[test]
    fn replace_rejects_oversized_batch() {
        let err = replace_policy(&DataStore::with_capacity(1), vec![stored(0), stored(1)], 0);
        assert!(matches!(err, Err(StoreError::Config(_))));
    }

    #[test]
    fn replace_fuzz_never_exceeds_capacity() {
        let mut rng = rng_from(42, &[]);
        let cap = 10;
        let mut store = DataStore::with_capacity(cap);
        let mut next = 0;
        for op in 0..1000u64 {
            let k = rng.random_range(0..=cap);
            let incoming: Vec<_> = (0..k).map(|i| stored(next + i)).collect();
            next += k;
            store = replace_policy(&store, incoming, op).unwrap();
            assert!(store.len() <= cap);
        }
    }

    proptest! {
        #[test]
        fn power_cost_matches_identity_at_unit(n in 0usize..10_000) {
            let p = CostFn::Power { coefficient: 1.0, exponent: 1.0 };
            prop_assert!((p.eval(n) - CostFn::Identity.eval(n)).abs() < 1e-9);
        }
    }
}
