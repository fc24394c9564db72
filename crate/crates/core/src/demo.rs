//! Score heatmaps on a two-bell binary problem: EPIG, LA-EPIG and MIC with
//! true and flipped labels, written as CSV grids and grayscale SVGs.
//!
//! The model is an exact-Bayes posterior over a seeded family of smooth
//! logistic hypotheses, standing in for a Gaussian-process classifier.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{score_pool, AcquisitionError, Objective, ScoringContext, TargetSet};
use crate::models::{
    FiniteHypothesisModel, LabelledExample, ModelError, PredictiveModel, RbfLogisticConfig,
    RbfLogisticHypotheses,
};
use crate::seeding::rng_from;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error("resolution must be at least 1")]
    Resolution,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub const BELL_CENTERS: [[f64; 2]; 2] = [[-2.0, 0.0], [2.0, 0.0]];
pub const BELL_SIGMA: f64 = 1.0;
pub const BOUNDS: [f64; 4] = [-5.0, 5.0, -5.0, 5.0];

/// Two isotropic Gaussian bells, one per class, with equal weight. The
/// training set covers only the lower half-plane.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoBells {
    pub training: Vec<LabelledExample>,
    pub seed: u64,
}

/// Cells farther than this from every training input count as far.
pub const FAR_RADIUS: f64 = 2.0;
/// Cells closer than this to some training input count as near.
pub const NEAR_RADIUS: f64 = 1.0;

/// Training points per class.
const TRAINING_PER_CLASS: usize = 5;

pub fn two_bells_problem(seed: u64) -> TwoBells {
    let mut rng = rng_from(seed, &[0xBE11]);
    let noise = Normal::new(0.0, BELL_SIGMA).expect("positive sigma");
    let mut training = Vec::with_capacity(2 * TRAINING_PER_CLASS);
    for (label, center) in BELL_CENTERS.iter().enumerate() {
        let mut kept = 0;
        while kept < TRAINING_PER_CLASS {
            let p = [
                center[0] + noise.sample(&mut rng),
                center[1] + noise.sample(&mut rng),
            ];
            if p[1] <= 0.0 {
                training.push(LabelledExample::new(p.to_vec(), label));
                kept += 1;
            }
        }
    }
    TwoBells { training, seed }
}

impl TwoBells {
    /// `m` draws from the bell mixture.
    pub fn sample_targets(&self, m: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from(seed, &[0x7A26, 0xBE11]);
        let noise = Normal::new(0.0, BELL_SIGMA).expect("positive sigma");
        (0..m)
            .map(|_| {
                let c = BELL_CENTERS[usize::from(rng.random::<bool>())];
                vec![c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)]
            })
            .collect()
    }

    /// Class with the higher posterior under the generative mixture; ties
    /// go to class 0.
    pub fn y_true(x: &[f64]) -> usize {
        let sq = |c: &[f64; 2]| (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
        usize::from(sq(&BELL_CENTERS[1]) < sq(&BELL_CENTERS[0]))
    }

    pub fn y_flip(x: &[f64]) -> usize {
        1 - Self::y_true(x)
    }

    /// Distance from `x` to the nearest training input.
    pub fn distance_to_training(&self, x: &[f64]) -> f64 {
        self.training
            .iter()
            .map(|e| ((e.features[0] - x[0]).powi(2) + (e.features[1] - x[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Hypothesis family behind the demo model.
pub fn demo_family_config(seed: u64) -> RbfLogisticConfig {
    RbfLogisticConfig {
        num_hypotheses: 512,
        num_classes: 2,
        num_centers: 12,
        lower: vec![BOUNDS[0], BOUNDS[2]],
        upper: vec![BOUNDS[1], BOUNDS[3]],
        length_scale: 2.0,
        weight_scale: 1.5,
        label_noise: 0.02,
        seed,
    }
}

/// Demo model fitted on the problem's training set.
pub fn fitted_demo_model(
    problem: &TwoBells,
) -> Result<FiniteHypothesisModel<RbfLogisticHypotheses>, DemoError> {
    let family = RbfLogisticHypotheses::sample(demo_family_config(problem.seed))?;
    let mut model = FiniteHypothesisModel::new(family, None)?;
    model.fit(&problem.training)?;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    True,
    Flipped,
    None,
}

impl LabelMode {
    pub fn name(self) -> &'static str {
        match self {
            LabelMode::True => "true",
            LabelMode::Flipped => "flipped",
            LabelMode::None => "none",
        }
    }
}

/// Scores on a square grid of cell centers. Row 0 is the top (largest y);
/// masked cells hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrid {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub resolution: usize,
    pub values: Vec<f64>,
    pub objective: Objective,
    pub label_mode: LabelMode,
}

impl ScoreGrid {
    pub fn cell_center(&self, row: usize, col: usize) -> [f64; 2] {
        cell_center(self.x_range, self.y_range, self.resolution, row, col)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.resolution + col]
    }

    pub fn file_stem(&self) -> String {
        format!("{}_{}", self.objective.name(), self.label_mode.name())
    }

    fn finite_range(&self) -> Option<(f64, f64)> {
        let finite = self.values.iter().copied().filter(|v| v.is_finite());
        let lo = finite.clone().reduce(f64::min)?;
        let hi = finite.reduce(f64::max)?;
        Some((lo, hi))
    }

    /// First cell in row-major order holding the largest unmasked value.
    pub fn argmax_cell(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.values.iter().enumerate() {
            if v.is_finite() && best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| (i / self.resolution, i % self.resolution))
    }

    pub fn mean(&self) -> f64 {
        let finite: Vec<f64> = self
            .values
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .collect();
        finite.iter().sum::<f64>() / finite.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# xmin={} xmax={} ymin={} ymax={} resolution={} objective={} label_mode={}\n",
            self.x_range.0,
            self.x_range.1,
            self.y_range.0,
            self.y_range.1,
            self.resolution,
            self.objective.name(),
            self.label_mode.name()
        );
        for row in self.values.chunks(self.resolution) {
            let line: Vec<String> = row
                .iter()
                .map(|v| {
                    if v.is_finite() {
                        v.to_string()
                    } else {
                        "NaN".into()
                    }
                })
                .collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Gray level in `[0, 100]` percent for a value; darker is higher.
    pub fn gray_percent(&self, v: f64) -> Option<f64> {
        let (lo, hi) = self.finite_range()?;
        if !v.is_finite() {
            return None;
        }
        let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        Some(100.0 * (1.0 - t))
    }

    pub fn to_svg(&self) -> String {
        let cell = (512.0 / self.resolution as f64).max(1.0);
        let side = cell * self.resolution as f64;
        let (left, top) = (10.0, 30.0);
        let bar_x = left + side + 20.0;
        let (w, h) = (bar_x + 90.0, top + side + 20.0);
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(
            svg,
            r##"<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)"><rect width="6" height="6" fill="#ffffff"/><line x1="0" y1="0" x2="0" y2="6" stroke="#cc0000" stroke-width="2"/></pattern><linearGradient id="bar" x1="0" y1="0" x2="0" y2="1"><stop offset="0" stop-color="#000000"/><stop offset="1" stop-color="#ffffff"/></linearGradient></defs>"##
        );
        let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{left}" y="18">{} ({} labels)</text>"#,
            self.objective.name(),
            self.label_mode.name()
        );
        for row in 0..self.resolution {
            for col in 0..self.resolution {
                let fill = match self.gray_percent(self.get(row, col)) {
                    Some(g) => format!("rgb({g:.6}%,{g:.6}%,{g:.6}%)"),
                    None => "url(#hatch)".into(),
                };
                let _ = writeln!(
                    svg,
                    r#"<rect class="cell" data-row="{row}" data-col="{col}" x="{:.3}" y="{:.3}" width="{cell:.3}" height="{cell:.3}" fill="{fill}"/>"#,
                    left + col as f64 * cell,
                    top + row as f64 * cell
                );
            }
        }
        let (lo, hi) = self.finite_range().unwrap_or((f64::NAN, f64::NAN));
        let _ = writeln!(
            svg,
            r##"<rect x="{bar_x}" y="{top}" width="16" height="{side}" fill="url(#bar)" stroke="#444444"/>"##
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">max {hi:.4}</text>"#,
            bar_x + 22.0,
            top + 10.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">min {lo:.4}</text>"#,
            bar_x + 22.0,
            top + side
        );
        svg.push_str("</svg>\n");
        svg
    }
}

fn cell_center(
    x: (f64, f64),
    y: (f64, f64),
    resolution: usize,
    row: usize,
    col: usize,
) -> [f64; 2] {
    let step_x = (x.1 - x.0) / resolution as f64;
    let step_y = (y.1 - y.0) / resolution as f64;
    [
        x.0 + (col as f64 + 0.5) * step_x,
        y.1 - (row as f64 + 0.5) * step_y,
    ]
}

/// The five panels in output order.
pub const PANELS: [(Objective, LabelMode); 5] = [
    (Objective::Epig, LabelMode::None),
    (Objective::LaEpig, LabelMode::True),
    (Objective::LaEpig, LabelMode::Flipped),
    (Objective::Mic, LabelMode::True),
    (Objective::Mic, LabelMode::Flipped),
];

/// Scores every grid cell for each requested panel. EPIG ignores labels;
/// MIC uses `η = 1`. Degenerate cells are masked.
pub fn render_heatmaps(
    model: &dyn PredictiveModel,
    targets: &TargetSet,
    panels: &[(Objective, LabelMode)],
    resolution: usize,
    label_fn: &dyn Fn(&[f64]) -> usize,
) -> Result<Vec<ScoreGrid>, DemoError> {
    if resolution == 0 {
        return Err(DemoError::Resolution);
    }
    let x_range = (BOUNDS[0], BOUNDS[1]);
    let y_range = (BOUNDS[2], BOUNDS[3]);
    let centers: Vec<[f64; 2]> = (0..resolution * resolution)
        .map(|i| cell_center(x_range, y_range, resolution, i / resolution, i % resolution))
        .collect();
    panels
        .iter()
        .map(|&(objective, label_mode)| {
            let pool: Vec<LabelledExample> = centers
                .iter()
                .map(|c| {
                    let y = match label_mode {
                        LabelMode::True | LabelMode::None => label_fn(c),
                        LabelMode::Flipped => 1 - label_fn(c),
                    };
                    LabelledExample::new(c.to_vec(), y)
                })
                .collect();
            let ctx = ScoringContext::new(model)
                .with_targets(targets)
                .with_eta(1.0);
            let scores = score_pool(objective, &ctx, &pool)?;
            let values = scores
                .scores
                .iter()
                .map(|s| {
                    if s.value.is_finite() {
                        s.value
                    } else {
                        f64::NAN
                    }
                })
                .collect();
            Ok(ScoreGrid {
                x_range,
                y_range,
                resolution,
                values,
                objective,
                label_mode,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub resolution: usize,
    pub targets: usize,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            resolution: 64,
            targets: 256,
            seed: 0,
        }
    }
}

/// Builds the problem and model, renders all panels and returns them.
pub fn run_demo(cfg: &DemoConfig) -> Result<(TwoBells, Vec<ScoreGrid>), DemoError> {
    let problem = two_bells_problem(cfg.seed);
    let model = fitted_demo_model(&problem)?;
    let targets = TargetSet::new(problem.sample_targets(cfg.targets.max(1), cfg.seed))?;
    let grids = render_heatmaps(&model, &targets, &PANELS, cfg.resolution, &TwoBells::y_true)?;
    Ok((problem, grids))
}

/// Writes `<objective>_<label_mode>.csv` and `.svg` for every grid.
pub fn write_grids(grids: &[ScoreGrid], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, DemoError> {
    let dir = dir.as_ref();
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| DemoError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    for g in grids {
        for (ext, body) in [("csv", g.to_csv()), ("svg", g.to_svg())] {
            let p = dir.join(format!("{}.{ext}", g.file_stem()));
            std::fs::write(&p, body).map_err(io(&p))?;
            written.push(p);
        }
    }
    Ok(written)
}
