//! Result files: `results.json`, `results.csv` and `learning_curve.svg`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{ExperimentResult, HarnessError, SeedStatus};

/// One line of a learning-curve plot: mean accuracy per step with a
/// ± standard-error band.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// `seed,step,objective,accuracy` for every completed seed.
pub fn results_csv(result: &ExperimentResult) -> String {
    let objective = result.config.objective.name;
    let mut out = String::from("seed,step,objective,accuracy\n");
    for s in result
        .seeds
        .iter()
        .filter(|s| s.status == SeedStatus::Completed)
    {
        for (t, acc) in s.accuracy.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", s.seed, t, objective, acc);
        }
    }
    out
}

const PALETTE: [&str; 6] = [
    "#1f4e79", "#b5462d", "#3a7d44", "#7a4e9c", "#a07a1a", "#333333",
];

/// Accuracy against step, y fixed to `[0, 1]`.
pub fn learning_curve_svg(curves: &[Curve]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 150.0, 20.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let steps = curves.iter().map(|c| c.mean.len()).max().unwrap_or(0);
    let x = |t: usize| {
        if steps <= 1 {
            left + pw / 2.0
        } else {
            left + pw * t as f64 / (steps - 1) as f64
        }
    };
    let y = |a: f64| top + ph * (1.0 - a.clamp(0.0, 1.0));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for i in 0..=4 {
        let a = i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r##"<line x1="{left}" y1="{yy:.2}" x2="{x2}" y2="{yy:.2}" stroke="#dddddd"/><text x="{tx}" y="{ty:.2}" text-anchor="end">{a:.2}</text>"##,
            yy = y(a),
            x2 = left + pw,
            tx = left - 6.0,
            ty = y(a) + 4.0
        );
    }
    for t in 0..steps {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            x(t),
            top + ph + 18.0,
            t + 1
        );
    }
    let _ = writeln!(
        svg,
        r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444444"/>"##
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{}" text-anchor="middle">step</text>"#,
        left + pw / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">test accuracy</text>"#,
        top + ph / 2.0
    );

    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let upper: Vec<String> = c
            .mean
            .iter()
            .zip(&c.stderr)
            .enumerate()
            .map(|(t, (m, s))| format!("{:.2},{:.2}", x(t), y(m + s)))
            .collect();
        let lower: Vec<String> = c
            .mean
            .iter()
            .zip(&c.stderr)
            .enumerate()
            .rev()
            .map(|(t, (m, s))| format!("{:.2},{:.2}", x(t), y(m - s)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = c
            .mean
            .iter()
            .enumerate()
            .map(|(t, m)| format!("{:.2},{:.2}", x(t), y(*m)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        for (t, m) in c.mean.iter().enumerate() {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                x(t),
                y(*m)
            );
        }
        let ly = top + 10.0 + 20.0 * i as f64;
        let lx = left + pw + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&c.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|e| HarnessError::Output {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Writes the three result files into `dir`, creating it if needed.
pub fn write_outputs(
    result: &ExperimentResult,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>, HarnessError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Output {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let json = serde_json::to_string_pretty(result).map_err(|e| HarnessError::Output {
        path: "results.json".into(),
        message: e.to_string(),
    })?;
    let curve = Curve {
        label: result.config.objective.name.to_string(),
        mean: result.summary.mean_accuracy.clone(),
        stderr: result.summary.stderr_accuracy.clone(),
    };
    let files = [
        ("results.json", json + "\n"),
        ("results.csv", results_csv(result)),
        ("learning_curve.svg", learning_curve_svg(&[curve])),
    ];
    let mut paths = Vec::new();
    for (name, contents) in files {
        let p = dir.join(name);
        write_file(&p, &contents)?;
        paths.push(p);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_has_one_polyline_per_curve() {
        let c = Curve {
            label: "a<b".into(),
            mean: vec![0.5, 0.7, 0.9],
            stderr: vec![0.1, 0.05, 0.0],
        };
        let svg = learning_curve_svg(&[c.clone(), c]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a&lt;b"));
        assert!(svg.ends_with("</svg>\n"));
    }
}
