//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Tolerances and runtime budgets are
//! pinned below.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde_json::{json, Value};
use streamsift::acquisition::{epig, la_epig, mic_for_model, TargetSet};
use streamsift::demo::{
    fitted_demo_model, render_heatmaps, two_bells_problem, LabelMode, TwoBells, FAR_RADIUS,
    NEAR_RADIUS, PANELS,
};
use streamsift::harness::{run_experiment, ModelConfig, ModelKind, RunConfig, TrainingConfig};
use streamsift::models::{
    DirichletHistogramClassifier, DirichletHistogramConfig, DropoutMaskSet, DropoutMlp,
    FiniteHypothesisModel, LabelledExample, MlpConfig, PredictiveModel, RbfLogisticConfig,
    RbfLogisticHypotheses, TabularHypotheses,
};
use streamsift::prob::entropy;
use streamsift::seeding::{rng_from, Rng};
use streamsift::store::{apply_strategy, RandomSelector, Strategy, StrategyParams};
use streamsift::streams::{
    load_csv, load_features_csv, load_idx, stationary_stream, synth_blobs, write_csv,
    write_features_csv, StreamError,
};

const ORACLE_TOL: f64 = 1e-10;
const IDENTITY_TOL: f64 = 1e-9;
const MIC_KL_SLACK: f64 = 1e-9;
const EPIG_FLOOR: f64 = 0.0;
const COST_TOL: f64 = 1e-9;
const GRAD_REL_TOL: f64 = 1e-4;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_simplex(rng: &mut Rng, c: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Random tabular hypothesis model on a 1-D grid, with a random prior and
/// a few random observations already absorbed.
fn random_tabular(rng: &mut Rng) -> (FiniteHypothesisModel<TabularHypotheses>, Vec<Vec<f64>>) {
    let k = rng.random_range(2..=5);
    let c = rng.random_range(2..=4);
    let g = rng.random_range(2..=6);
    let grid: Vec<Vec<f64>> = (0..g).map(|i| vec![i as f64]).collect();
    let tables = (0..k)
        .map(|_| (0..g).map(|_| random_simplex(rng, c)).collect())
        .collect();
    let family = TabularHypotheses::new(grid.clone(), tables).unwrap();
    let mut model = FiniteHypothesisModel::new(family, Some(random_simplex(rng, k))).unwrap();
    for _ in 0..rng.random_range(0..4) {
        let x = grid[rng.random_range(0..g)].clone();
        model
            .observe(&LabelledExample::new(x, rng.random_range(0..c)))
            .unwrap();
    }
    (model, grid)
}

fn criterion_1() -> Outcome {
    let mut rng = rng_from(1, &[]);
    let cases = 200;
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let (model, grid) = random_tabular(&mut rng);
        let c = model.num_classes();
        let mut targets = grid.clone();
        targets.shuffle(&mut rng);
        targets.truncate(rng.random_range(1..=grid.len()));
        let target_set = TargetSet::new(targets.clone()).unwrap();
        let x = grid[rng.random_range(0..grid.len())].clone();
        let y = rng.random_range(0..c);
        let fast = la_epig(&model, &x, y, &target_set).map_err(|e| e.to_string())?;

        let mut updated = model.clone();
        updated
            .observe(&LabelledExample::new(x.clone(), y))
            .unwrap();
        let brute = targets
            .iter()
            .map(|t| {
                entropy(&model.marginal_predict(t).unwrap())
                    - entropy(&updated.marginal_predict(t).unwrap())
            })
            .sum::<f64>()
            / targets.len() as f64;
        worst = worst.max((fast - brute).abs());
    }
    ensure(worst <= ORACLE_TOL, || {
        format!("max |reweighted - brute force| = {worst:e}")
    })?;
    Ok(format!("{cases} cases, max abs error {worst:.2e}"))
}

fn fitted(
    kind: ModelKind,
    hyper: Value,
    k: usize,
    data: &[LabelledExample],
    seed: u64,
) -> Box<dyn PredictiveModel> {
    let cfg = ModelConfig {
        kind,
        hyperparameters: hyper,
    };
    let training = TrainingConfig {
        max_steps: 300,
        ..TrainingConfig::default()
    };
    let mut m = cfg
        .build(Some(k), &training, 3, &[-8.0, -8.0], &[8.0, 8.0], seed)
        .unwrap();
    m.fit(data).unwrap();
    m
}

fn criterion_2() -> Outcome {
    let data = synth_blobs(3, 15, 2, 1.5, 2).unwrap();
    let models = [
        (
            "forest",
            fitted(ModelKind::Forest, json!({"max_depth": 4}), 20, &data, 1),
        ),
        (
            "mlp",
            fitted(
                ModelKind::Mlp,
                json!({"hidden": [16], "dropout": 0.2}),
                16,
                &data,
                2,
            ),
        ),
        (
            "dirichlet_histogram",
            fitted(
                ModelKind::DirichletHistogram,
                json!({"bins_per_dim": 4}),
                30,
                &data,
                3,
            ),
        ),
        (
            "finite_rbf",
            fitted(ModelKind::FiniteRbf, json!({}), 64, &data, 4),
        ),
    ];
    let mut rng = rng_from(2, &[]);
    let point = |rng: &mut Rng| vec![rng.random_range(-7.5..7.5), rng.random_range(-7.5..7.5)];
    let targets = TargetSet::new((0..8).map(|_| point(&mut rng)).collect()).unwrap();
    let inputs = 100;
    let mut worst: f64 = 0.0;
    for (name, model) in &models {
        for _ in 0..inputs {
            let x = point(&mut rng);
            let marginal = model.marginal_predict(&x).unwrap();
            let mixed: f64 = (0..3)
                .map(|c| marginal.prob(c) * la_epig(model.as_ref(), &x, c, &targets).unwrap())
                .sum();
            let e = epig(model.as_ref(), &x, &targets).unwrap();
            let err = (e - mixed).abs();
            ensure(err <= IDENTITY_TOL, || {
                format!("{name}: |epig - mix| = {err:e}")
            })?;
            worst = worst.max(err);
        }
    }
    Ok(format!(
        "4 model kinds x {inputs} inputs, max abs error {worst:.2e}"
    ))
}

fn criterion_3() -> Outcome {
    let mut rng = rng_from(3, &[]);
    let cases = 1000;
    let mut min_gap = f64::INFINITY;
    let mut done = 0;
    while done < cases {
        let c = rng.random_range(2..=4);
        let dim = rng.random_range(1..=2);
        let mut model = DirichletHistogramClassifier::new(DirichletHistogramConfig {
            num_classes: c,
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
            bins_per_dim: rng.random_range(1..=4),
            alpha0: rng.random_range(0.1..3.0),
            num_samples: 8,
            seed: done as u64,
        })
        .unwrap();
        let n = rng.random_range(0..20);
        let data: Vec<LabelledExample> = (0..n)
            .map(|_| {
                let x = (0..dim).map(|_| rng.random_range(0.0..1.0)).collect();
                LabelledExample::new(x, rng.random_range(0..c))
            })
            .collect();
        model.fit(&data).unwrap();
        for _ in 0..10 {
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..1.0)).collect();
            let y = rng.random_range(0..c);
            let m = mic_for_model(&model, &x, y, 1.0).unwrap();
            let kl = model.parameter_kl_of_update(&x, y).unwrap();
            ensure(m >= kl - MIC_KL_SLACK, || format!("mic {m} < kl {kl}"))?;
            min_gap = min_gap.min(m - kl);
            done += 1;
        }
    }
    Ok(format!("{done} cases, min mic - kl = {min_gap:.3e}"))
}

fn criterion_4() -> Outcome {
    let mut rng = rng_from(4, &[]);
    let mut evals = 0;
    let mut lowest = f64::INFINITY;
    while evals < 6000 {
        let (model, grid) = random_tabular(&mut rng);
        let targets = TargetSet::new(grid.clone()).unwrap();
        for x in &grid {
            let e = epig(&model, x, &targets).unwrap();
            ensure(e >= EPIG_FLOOR, || format!("tabular epig {e} at {x:?}"))?;
            lowest = lowest.min(e);
            evals += 1;
        }
    }
    let family = RbfLogisticHypotheses::sample(RbfLogisticConfig {
        num_hypotheses: 64,
        num_classes: 3,
        num_centers: 6,
        lower: vec![-3.0, -3.0],
        upper: vec![3.0, 3.0],
        length_scale: 1.0,
        weight_scale: 3.0,
        label_noise: 0.0,
        seed: 4,
    })
    .unwrap();
    let mut model = FiniteHypothesisModel::new(family, None).unwrap();
    model.fit(&synth_blobs(3, 3, 2, 1.0, 4).unwrap()).unwrap();
    let targets = TargetSet::new(
        (0..16)
            .map(|_| vec![rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)])
            .collect(),
    )
    .unwrap();
    for _ in 0..4000 {
        let x = vec![rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
        let e = epig(&model, &x, &targets).unwrap();
        ensure(e >= EPIG_FLOOR, || format!("rbf epig {e} at {x:?}"))?;
        lowest = lowest.min(e);
        evals += 1;
    }
    Ok(format!("{evals} evaluations, min {lowest:.3e}"))
}

fn criterion_5() -> Outcome {
    let (n, m, tau, steps) = (12usize, 5usize, 3usize, 100usize);
    let data: Vec<LabelledExample> = (0..steps * n)
        .map(|i| LabelledExample::new(vec![i as f64], i % 3))
        .collect();
    let schedule = stationary_stream(&data, steps, 1).unwrap();
    let (nf, mf, tf) = (n as f64, m as f64, tau as f64);
    for strategy in Strategy::ALL {
        let out = apply_strategy(
            strategy,
            &schedule,
            &mut RandomSelector { seed: 5 },
            &StrategyParams::new(m, tau),
        )
        .map_err(|e| e.to_string())?;
        ensure(out.ledger.per_step.len() == steps, || {
            format!("{strategy:?}: wrong step count")
        })?;
        for (i, r) in out.ledger.per_step.iter().enumerate() {
            let t = (i + 1) as f64;
            let expected = match strategy {
                Strategy::A => [0.0, 0.0, nf],
                Strategy::B => [nf * t, 0.0, nf * t / tf],
                Strategy::C => [nf * t, nf * t / tf, mf / tf],
                Strategy::D => [mf * t, nf, mf * t / tf],
                Strategy::E => [mf, nf, mf / tf],
            };
            let got = [r.storage, r.selection, r.training];
            for (g, e) in got.iter().zip(expected) {
                ensure((g - e).abs() <= COST_TOL, || {
                    format!("{strategy:?} t={t}: {got:?} vs {expected:?}")
                })?;
            }
        }
        let first = &out.ledger.per_step[0];
        let last = &out.ledger.per_step[steps - 1];
        match strategy {
            Strategy::A | Strategy::E => ensure(
                first.storage == last.storage && first.training == last.training,
                || format!("{strategy:?} readings not constant"),
            )?,
            _ => ensure(last.storage == first.storage * steps as f64, || {
                format!("{strategy:?} storage not linear")
            })?,
        }
    }
    Ok(format!(
        "5 strategies x t = 1..{steps}, n={n}, m={m}, tau={tau}"
    ))
}

fn criterion_6() -> Outcome {
    let mut cfg = MlpConfig::new(3, vec![6, 5]);
    cfg.dropout = 0.25;
    cfg.weight_decay = 0.01;
    let mut model = DropoutMlp::new(cfg).unwrap();
    model.initialize(3);
    let data = vec![
        LabelledExample::new(vec![0.3, -0.8, 1.2], 0),
        LabelledExample::new(vec![-1.2, 0.4, 0.1], 2),
        LabelledExample::new(vec![0.9, 1.1, -0.5], 1),
        LabelledExample::new(vec![-0.2, -0.3, 0.7], 1),
    ];
    let mut rng = rng_from(6, &[]);
    // Non-zero biases keep every pre-activation off the ReLU kink, even when
    // a whole layer is dropped.
    let params = model
        .params()
        .iter()
        .map(|_| rng.random_range(-0.8..0.8))
        .collect();
    model.set_params(params);
    let masks: Vec<DropoutMaskSet> = data
        .iter()
        .map(|_| DropoutMaskSet::sample(&[6, 5], 0.25, &mut rng))
        .collect();
    let mut worst: f64 = 0.0;
    for masks in [None, Some(masks.as_slice())] {
        let (_, grad) = model.loss_and_gradient(&data, masks);
        let base = model.params().to_vec();
        let h = 1e-6;
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] = base[i] + h;
            model.set_params(p.clone());
            let lp = model.loss_and_gradient(&data, masks).0;
            p[i] = base[i] - h;
            model.set_params(p);
            let lm = model.loss_and_gradient(&data, masks).0;
            model.set_params(base.clone());
            let numeric = (lp - lm) / (2.0 * h);
            let rel = (grad[i] - numeric).abs() / (grad[i].abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    ensure(worst < GRAD_REL_TOL, || {
        format!("max relative error {worst:e}")
    })?;
    Ok(format!(
        "{} parameters, with and without masks, max relative error {worst:.2e}",
        model.params().len()
    ))
}

/// Desk-scale forest comparison; dataset and sampling settings are pinned.
fn directional_config(objective: &str) -> RunConfig {
    RunConfig::from_value(json!({
        "stream": {
            "kind": "split", "steps": 5, "seed": 7,
            "dataset": {"source": "synth_blobs", "num_classes": 10, "dim": 20, "spread": 3.0,
                        "per_class": 100, "test_per_class": 100, "pool_per_class": 30}
        },
        "model": {"kind": "forest", "hyperparameters": {"smoothing": 0.1}},
        "objective": {"name": objective},
        "store": {"strategy": "D", "m": 100},
        "targets": {"source": "global", "M": 100},
        "sampling": {"K": 100},
        "seeds": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]
    }))
    .unwrap()
}

fn criterion_7() -> Outcome {
    let finals = |objective: &str| -> Result<Vec<f64>, String> {
        let r = run_experiment(&directional_config(objective), None).map_err(|e| e.to_string())?;
        ensure(r.summary.failed_seeds.is_empty(), || {
            format!("{objective}: failed seeds")
        })?;
        Ok(r.seeds
            .iter()
            .map(|s| *s.accuracy.last().unwrap())
            .collect())
    };
    let random = finals("random")?;
    let epig = finals("epig")?;
    ensure(random.len() >= 10, || "fewer than 10 seeds".into())?;
    let n = random.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let diffs: Vec<f64> = epig.iter().zip(&random).map(|(e, r)| e - r).collect();
    let d = mean(&diffs);
    let sd = (diffs.iter().map(|x| (x - d).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let se = sd / n.sqrt();
    let wins = diffs.iter().filter(|x| **x > 0.0).count();
    let detail = format!(
        "epig {:.4} vs random {:.4}, effect {d:+.4} (paired SE {se:.4}, d/sd {:.2}), {wins}/{} seeds improved",
        mean(&epig),
        mean(&random),
        d / sd,
        diffs.len()
    );
    ensure(d > 0.0, || detail.clone())?;
    Ok(detail)
}

fn criterion_8() -> Outcome {
    let problem = two_bells_problem(0);
    let model = fitted_demo_model(&problem).map_err(|e| e.to_string())?;
    let targets = TargetSet::new(problem.sample_targets(256, 0)).unwrap();
    let mut panels = PANELS.to_vec();
    panels.push((PANELS[0].0, LabelMode::Flipped));
    let res = 64;
    let g = render_heatmaps(&model, &targets, &panels, res, &TwoBells::y_true)
        .map_err(|e| e.to_string())?;
    let (epig_true, la_true, la_flip, mic_true, epig_flip) = (&g[0], &g[1], &g[2], &g[3], &g[5]);

    ensure(epig_true.values == epig_flip.values, || {
        "EPIG grid depends on labels".into()
    })?;
    let min_epig = epig_true
        .values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    ensure(min_epig >= EPIG_FLOOR, || {
        format!("EPIG grid minimum {min_epig}")
    })?;
    ensure(la_true.mean() > la_flip.mean(), || {
        format!(
            "LA-EPIG true {} <= flipped {}",
            la_true.mean(),
            la_flip.mean()
        )
    })?;
    let (mut far, mut near) = (Vec::new(), Vec::new());
    for r in 0..res {
        for c in 0..res {
            let d = problem.distance_to_training(&mic_true.cell_center(r, c));
            if d > FAR_RADIUS {
                far.push(mic_true.get(r, c));
            } else if d < NEAR_RADIUS {
                near.push(mic_true.get(r, c));
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mf, mn) = (mean(&far), mean(&near));
    ensure(!far.is_empty() && !near.is_empty() && mf > mn, || {
        format!("MIC far {mf} <= near {mn}")
    })?;
    Ok(format!(
        "{res}x{res}: EPIG label-free, min {min_epig:.2e}; LA-EPIG true {:.4} > flipped {:.4}; MIC far {mf:.4} > near {mn:.4}",
        la_true.mean(),
        la_flip.mean()
    ))
}

fn run_bin(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_streamsift"))
        .args(args)
        .env_remove("STREAMSIFT_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })?;
    Ok(out.stdout)
}

fn without_timing(path: &Path) -> Result<Value, String> {
    let mut v: Value =
        serde_json::from_str(&std::fs::read_to_string(path).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    v.as_object_mut()
        .ok_or("results.json is not an object")?
        .remove("timing");
    Ok(v)
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let mut compared = 0;

    let cfg = json!({
        "stream": {"kind": "split", "steps": 2,
                   "dataset": {"source": "synth_blobs", "num_classes": 4, "dim": 3,
                               "per_class": 12, "test_per_class": 6, "pool_per_class": 6}},
        "model": {"kind": "forest", "hyperparameters": {"max_depth": 4}},
        "objective": {"name": "epig"},
        "store": {"m": 6},
        "targets": {"M": 10},
        "sampling": {"K": 6},
        "seeds": [0, 1, 2],
        "output": {"dir": s(&root.join("out"))}
    });
    let config = root.join("config.json");
    std::fs::write(&config, cfg.to_string()).map_err(|e| e.to_string())?;
    for (run, workers) in [("a", "1"), ("b", "2")] {
        std::fs::create_dir_all(root.join(run)).map_err(|e| e.to_string())?;
        run_bin(&["run", &s(&config), "--workers", workers])?;
        std::fs::rename(root.join("out"), root.join(run).join("run")).map_err(|e| e.to_string())?;
        run_bin(&[
            "demo",
            "--resolution",
            "8",
            "--seed",
            "3",
            "--output",
            &s(&root.join(run).join("demo")),
        ])?;
    }
    let (a, b) = (root.join("a"), root.join("b"));
    ensure(
        without_timing(&a.join("run/results.json"))?
            == without_timing(&b.join("run/results.json"))?,
        || "results.json differs".into(),
    )?;
    compared += 1;
    let mut files = vec![
        "run/results.csv".to_string(),
        "run/learning_curve.svg".to_string(),
    ];
    for stem in [
        "epig_none",
        "la_epig_true",
        "la_epig_flipped",
        "mic_true",
        "mic_flipped",
    ] {
        files.push(format!("demo/{stem}.csv"));
        files.push(format!("demo/{stem}.svg"));
    }
    for f in &files {
        let (x, y) = (std::fs::read(a.join(f)), std::fs::read(b.join(f)));
        ensure(matches!((&x, &y), (Ok(x), Ok(y)) if x == y), || {
            format!("{f} differs")
        })?;
        compared += 1;
    }

    let store = root.join("store.csv");
    let cands = root.join("cands.csv");
    let targets = root.join("targets.csv");
    write_csv(&store, &synth_blobs(3, 4, 2, 1.0, 1).unwrap()).map_err(|e| e.to_string())?;
    write_csv(&cands, &synth_blobs(3, 3, 2, 1.5, 2).unwrap()).map_err(|e| e.to_string())?;
    write_features_csv(&targets, &[vec![0.0, 0.0], vec![1.0, -1.0]]).map_err(|e| e.to_string())?;
    for objective in ["epig", "random"] {
        let args = [
            "score",
            "--model",
            "forest",
            "--store",
            &s(&store),
            "--candidates",
            &s(&cands),
            "--targets",
            &s(&targets),
            "--objective",
            objective,
            "--seed",
            "5",
            "--samples",
            "8",
        ];
        ensure(run_bin(&args)? == run_bin(&args)?, || {
            format!("score {objective} differs")
        })?;
        compared += 1;
    }
    Ok(format!(
        "{compared} outputs byte-identical across reruns (run, demo, score)"
    ))
}

fn idx_images(magic: u32, n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let mut v: Vec<u8> = [magic, n, rows, cols]
        .iter()
        .flat_map(|w| w.to_be_bytes())
        .collect();
    v.extend_from_slice(pixels);
    v
}

fn idx_labels(magic: u32, labels: &[u8]) -> Vec<u8> {
    let mut v = magic.to_be_bytes().to_vec();
    v.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    v.extend_from_slice(labels);
    v
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let write = |name: &str, bytes: &[u8]| {
        let p = dir.path().join(name);
        std::fs::write(&p, bytes).unwrap();
        p
    };

    let data = synth_blobs(3, 4, 3, 1.0, 10).unwrap();
    let csv = dir.path().join("round.csv");
    write_csv(&csv, &data).map_err(|e| e.to_string())?;
    ensure(
        load_csv(&csv, 3, false).map_err(|e| e.to_string())? == data,
        || "CSV round trip".into(),
    )?;
    let rows = vec![vec![0.5, -1.25], vec![3.0, 1e-3]];
    let fcsv = dir.path().join("features.csv");
    write_features_csv(&fcsv, &rows).map_err(|e| e.to_string())?;
    ensure(
        load_features_csv(&fcsv, false).map_err(|e| e.to_string())? == rows,
        || "features round trip".into(),
    )?;

    let imgs = write("img", &idx_images(0x803, 1, 2, 2, &[0, 255, 128, 64]));
    let labs = write("lab", &idx_labels(0x801, &[7]));
    let d = load_idx(&imgs, &labs).map_err(|e| e.to_string())?;
    let expected = [0.0, 1.0, 0.501961, 0.250980];
    ensure(
        d.len() == 1
            && d[0].label == 7
            && d[0]
                .features
                .iter()
                .zip(expected)
                .all(|(a, b)| (a - b).abs() < 1e-6),
        || format!("IDX fixture decoded as {d:?}"),
    )?;

    let good_imgs = write("gi", &idx_images(0x803, 2, 2, 2, &[0; 8]));
    let good_labs = write("gl", &idx_labels(0x801, &[1, 2]));
    let bad_magic = write("bm", &idx_images(0x802, 2, 2, 2, &[0; 8]));
    let truncated = write("tr", &idx_images(0x803, 2, 2, 2, &[0; 5]));
    let short_labs = write("sl", &idx_labels(0x801, &[1]));
    let bad_label_magic = write("blm", &idx_labels(0x803, &[1, 2]));
    let cases: Vec<(
        &str,
        Result<Vec<LabelledExample>, StreamError>,
        fn(&StreamError) -> bool,
    )> = vec![
        ("bad image magic", load_idx(&bad_magic, &good_labs), |e| {
            matches!(e, StreamError::BadMagic { .. })
        }),
        (
            "bad label magic",
            load_idx(&good_imgs, &bad_label_magic),
            |e| matches!(e, StreamError::BadMagic { .. }),
        ),
        ("truncated images", load_idx(&truncated, &good_labs), |e| {
            matches!(e, StreamError::Truncated { .. })
        }),
        ("count mismatch", load_idx(&good_imgs, &short_labs), |e| {
            matches!(e, StreamError::CountMismatch { .. })
        }),
        ("bad label column", load_csv(&csv, 9, false), |e| {
            matches!(e, StreamError::LabelColumnOutOfRange { .. })
        }),
        ("non-integer label", load_csv(&csv, 0, false), |e| {
            matches!(e, StreamError::NonIntegerLabel { .. })
        }),
        (
            "ragged rows",
            load_csv(write("rag.csv", b"1,2,0\n3,1\n"), 2, false),
            |e| matches!(e, StreamError::InconsistentColumns { .. }),
        ),
        (
            "bad number",
            load_csv(write("nan.csv", b"1,x,0\n"), 2, false),
            |e| matches!(e, StreamError::Parse { .. }),
        ),
    ];
    let total = cases.len();
    for (name, result, check) in cases {
        match result {
            Err(e) if check(&e) => {}
            other => return Err(format!("{name}: unexpected {other:?}")),
        }
    }
    Ok(format!(
        "CSV and IDX round trips, {total}-case error matrix"
    ))
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let secs = |s| Some(Duration::from_secs(s));
    let criteria = [
        Criterion {
            id: 1,
            name: "LA-EPIG reweighting equals exact Bayes update",
            budget: secs(1),
            run: criterion_1,
        },
        Criterion {
            id: 2,
            name: "EPIG equals predictive-weighted LA-EPIG",
            budget: secs(10),
            run: criterion_2,
        },
        Criterion {
            id: 3,
            name: "MIC bounds the parameter KL",
            budget: secs(5),
            run: criterion_3,
        },
        Criterion {
            id: 4,
            name: "EPIG is non-negative",
            budget: None,
            run: criterion_4,
        },
        Criterion {
            id: 5,
            name: "store strategy cost trajectories",
            budget: secs(1),
            run: criterion_5,
        },
        Criterion {
            id: 6,
            name: "MLP gradient check",
            budget: None,
            run: criterion_6,
        },
        Criterion {
            id: 7,
            name: "EPIG beats random on a split stream",
            budget: secs(600),
            run: criterion_7,
        },
        Criterion {
            id: 8,
            name: "heatmap directional checks",
            budget: secs(60),
            run: criterion_8,
        },
        Criterion {
            id: 9,
            name: "rerun determinism",
            budget: None,
            run: criterion_9,
        },
        Criterion {
            id: 10,
            name: "IDX and CSV ingestion",
            budget: None,
            run: criterion_10,
        },
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == &c.id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!(
                "took {:.2}s, budget {:.0}s",
                elapsed.as_secs_f64(),
                b.as_secs_f64()
            )),
            (o, _) => o,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "{tag} [{:>2}] {}: {detail} ({:.2}s)",
            c.id,
            c.name,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
