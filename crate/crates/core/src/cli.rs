//! Command-line front end: experiment runs, the heatmap demo, one-off
//! scoring of candidate files and synthetic stream generation.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use crate::acquisition::{score_pool, Objective, ScoringContext, TargetSet};
use crate::demo::{run_demo, write_grids, DemoConfig};
use crate::harness::{
    run_experiment, write_outputs, BuildError, HarnessError, ModelConfig, ModelKind, RunConfig,
    TrainingConfig,
};
use crate::models::LabelledExample;
use crate::seeding::derive_seed;
use crate::streams::{class_count, load_csv, load_features_csv, synth_blobs, write_csv};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "streamsift",
    version,
    about = "Subsampling simulator for labelled data streams"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment described by a JSON config.
    Run(RunArgs),
    /// Render the two-bell score heatmaps.
    Demo(DemoArgs),
    /// Fit a model on a store file and rank candidates.
    Score(ScoreArgs),
    /// Write a synthetic Gaussian-blob dataset as CSV.
    Blobs(BlobArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub config: PathBuf,
    /// Dotted-path override such as `store.m=250`; repeatable.
    #[arg(long = "override", value_name = "PATH=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads for seeds and scoring.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    #[arg(long, default_value = "demo")]
    pub output: PathBuf,
    /// Defaults to STREAMSIFT_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Target inputs drawn from the bell mixture.
    #[arg(long, default_value_t = 256)]
    pub targets: usize,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// forest, mlp, dirichlet_histogram or finite_rbf.
    #[arg(long)]
    pub model: String,
    /// Model hyperparameters as a JSON object.
    #[arg(long, default_value = "{}")]
    pub hyperparameters: String,
    /// Labelled CSV the model is fitted on.
    #[arg(long)]
    pub store: PathBuf,
    /// Labelled CSV of candidates to score.
    #[arg(long)]
    pub candidates: PathBuf,
    /// Unlabelled CSV of target inputs; needed by epig and la_epig.
    #[arg(long)]
    pub targets: Option<PathBuf>,
    /// Labelled CSV for the RHO-LOSS auxiliary model.
    #[arg(long)]
    pub aux: Option<PathBuf>,
    #[arg(long)]
    pub objective: String,
    /// Defaults to STREAMSIFT_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    /// Label column; defaults to the last one.
    #[arg(long)]
    pub label_column: Option<usize>,
    #[arg(long)]
    pub has_header: bool,
    /// Posterior samples K.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Defaults to one more than the largest label seen.
    #[arg(long)]
    pub num_classes: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BlobArgs {
    #[arg(long)]
    pub classes: usize,
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub per_class: usize,
    #[arg(long, default_value_t = 1.0)]
    pub spread: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: PathBuf,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl ToString) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.to_string(),
        }
    }

    fn runtime(message: impl ToString) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.to_string(),
        }
    }

    fn io(message: impl ToString) -> Self {
        Self {
            code: EXIT_IO,
            message: message.to_string(),
        }
    }
}

fn env_seed() -> u64 {
    std::env::var("STREAMSIFT_SEED")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(0)
}

/// Parses `args` (including the program name) and runs the command,
/// writing normal output to `out`. Returns the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(command: Command, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    match command {
        Command::Run(a) => cmd_run(&a, out),
        Command::Demo(a) => cmd_demo(&a, out),
        Command::Score(a) => cmd_score(&a, out),
        Command::Blobs(a) => cmd_blobs(&a, out),
    }
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let cfg = RunConfig::load(&args.config, &args.overrides).map_err(CliError::config)?;
    let result = run_experiment(&cfg, args.workers).map_err(|e| match e {
        e if e.is_config() => CliError::config(e),
        HarnessError::Output { .. } => CliError::io(e),
        e => CliError::runtime(e),
    })?;
    for s in result.seeds.iter().filter(|s| s.error.is_some()) {
        eprintln!(
            "seed {} failed: {}",
            s.seed,
            s.error.as_deref().unwrap_or_default()
        );
    }
    let dir = Path::new(&cfg.output.dir);
    let paths = write_outputs(&result, dir).map_err(CliError::io)?;
    let summary = &result.summary;
    if summary.completed_seeds.is_empty() {
        return Err(CliError::runtime(format!(
            "all {} seeds failed",
            summary.failed_seeds.len()
        )));
    }
    let _ = writeln!(
        out,
        "{}: {} seeds completed, {} failed, final accuracy {:.4} ± {:.4}",
        cfg.objective.name.name(),
        summary.completed_seeds.len(),
        summary.failed_seeds.len(),
        summary.final_mean.unwrap_or(f64::NAN),
        summary.final_stderr.unwrap_or(f64::NAN)
    );
    for p in paths {
        let _ = writeln!(out, "wrote {}", p.display());
    }
    Ok(())
}

pub fn cmd_demo(args: &DemoArgs, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    if args.resolution == 0 {
        return Err(CliError::config("--resolution must be at least 1"));
    }
    if args.targets == 0 {
        return Err(CliError::config("--targets must be at least 1"));
    }
    let cfg = DemoConfig {
        resolution: args.resolution,
        targets: args.targets,
        seed: args.seed.unwrap_or_else(env_seed),
    };
    let (_, grids) = run_demo(&cfg).map_err(CliError::runtime)?;
    for p in write_grids(&grids, &args.output).map_err(CliError::io)? {
        let _ = writeln!(out, "wrote {}", p.display());
    }
    Ok(())
}

fn load_labelled(
    path: &Path,
    label_column: Option<usize>,
    has_header: bool,
) -> Result<Vec<LabelledExample>, CliError> {
    let column = match label_column {
        Some(c) => c,
        None => {
            let rows = load_features_csv(path, has_header).map_err(CliError::config)?;
            rows[0].len().saturating_sub(1)
        }
    };
    load_csv(path, column, has_header).map_err(CliError::config)
}

fn bounding_box<'a>(points: impl Iterator<Item = &'a [f64]>, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lower = vec![f64::INFINITY; dim];
    let mut upper = vec![f64::NEG_INFINITY; dim];
    for p in points {
        for (j, v) in p.iter().enumerate() {
            lower[j] = lower[j].min(*v);
            upper[j] = upper[j].max(*v);
        }
    }
    for j in 0..dim {
        if upper[j] <= lower[j] {
            upper[j] = lower[j] + 1.0;
        }
    }
    (lower, upper)
}

pub fn cmd_score(args: &ScoreArgs, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let objective: Objective = args.objective.parse().map_err(CliError::config)?;
    let kind: ModelKind = serde_json::from_value(Value::String(args.model.clone()))
        .map_err(|_| CliError::config(format!("--model: unknown model kind {:?}", args.model)))?;
    let hyperparameters: Value = serde_json::from_str(&args.hyperparameters)
        .map_err(|e| CliError::config(format!("--hyperparameters: {e}")))?;
    if !(args.eta.is_finite() && args.eta > 0.0) {
        return Err(CliError::config("--eta must be positive"));
    }
    let store = load_labelled(&args.store, args.label_column, args.has_header)?;
    let candidates = load_labelled(&args.candidates, args.label_column, args.has_header)?;
    let targets = match &args.targets {
        Some(p) => Some(load_features_csv(p, args.has_header).map_err(CliError::config)?),
        None if objective.uses_targets() => {
            return Err(CliError::config(format!(
                "--targets is required for {}",
                objective.name()
            )))
        }
        None => None,
    };
    let aux = match &args.aux {
        Some(p) => Some(load_labelled(p, args.label_column, args.has_header)?),
        None if objective == Objective::RhoLoss => {
            return Err(CliError::config("--aux is required for rho_loss"))
        }
        None => None,
    };

    let dim = store[0].features.len();
    let features = store
        .iter()
        .chain(&candidates)
        .chain(aux.iter().flatten())
        .map(|e| e.features.as_slice())
        .chain(targets.iter().flatten().map(Vec::as_slice));
    if let Some(bad) = features.clone().find(|f| f.len() != dim) {
        return Err(CliError::config(format!(
            "inputs have {} features but the store has {dim}",
            bad.len()
        )));
    }
    let (lower, upper) = bounding_box(features, dim);
    let seen = class_count(&store)
        .max(class_count(&candidates))
        .max(aux.as_deref().map_or(0, class_count))
        .max(2);
    let num_classes = args.num_classes.unwrap_or(seen);
    if num_classes < seen {
        return Err(CliError::config(format!(
            "--num-classes {num_classes} is below the largest label seen"
        )));
    }

    let seed = args.seed.unwrap_or_else(env_seed);
    let model_cfg = ModelConfig {
        kind,
        hyperparameters,
    };
    let training = TrainingConfig::default();
    let build = |tag: u64| {
        model_cfg
            .build(
                args.samples,
                &training,
                num_classes,
                &lower,
                &upper,
                derive_seed(seed, &[tag]),
            )
            .map_err(|e| match e {
                BuildError::Config(c) => CliError::config(c),
                e => CliError::runtime(e),
            })
    };

    let work = || -> Result<String, CliError> {
        let mut model = build(0x30DE)?;
        model.fit(&store).map_err(CliError::runtime)?;
        let aux_model = match &aux {
            Some(data) => {
                let mut m = build(0xA0C5)?;
                m.fit(data).map_err(CliError::runtime)?;
                Some(m)
            }
            None => None,
        };
        let target_set = match targets {
            Some(t) => Some(TargetSet::new(t).map_err(CliError::config)?),
            None => None,
        };
        let mut ctx = ScoringContext::new(model.as_ref())
            .with_eta(args.eta)
            .with_seed(seed);
        if let Some(t) = &target_set {
            ctx = ctx.with_targets(t);
        }
        if let Some(a) = &aux_model {
            ctx = ctx.with_aux_model(a.as_ref());
        }
        let scores = score_pool(objective, &ctx, &candidates).map_err(CliError::runtime)?;
        let mut text = String::from("index,score,rank\n");
        for (r, s) in scores.ranking.iter().enumerate() {
            text.push_str(&format!("{},{},{}\n", s.candidate_index, s.value, r + 1));
        }
        Ok(text)
    };
    let text = match args.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(CliError::runtime)?
            .install(work)?,
        None => work()?,
    };
    out.write_all(text.as_bytes()).map_err(CliError::io)
}

pub fn cmd_blobs(args: &BlobArgs, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    if args.classes == 0 || args.dim == 0 || args.per_class == 0 {
        return Err(CliError::config(
            "--classes, --dim and --per-class must be positive",
        ));
    }
    if !(args.spread.is_finite() && args.spread > 0.0) {
        return Err(CliError::config("--spread must be positive"));
    }
    let data = synth_blobs(
        args.classes,
        args.per_class,
        args.dim,
        args.spread,
        args.seed.unwrap_or_else(env_seed),
    )
    .map_err(CliError::config)?;
    write_csv(&args.output, &data).map_err(CliError::io)?;
    let _ = writeln!(
        out,
        "wrote {} rows to {}",
        data.len(),
        args.output.display()
    );
    Ok(())
}
