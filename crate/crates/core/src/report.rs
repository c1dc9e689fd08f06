//! Report files: `summary.json`, long-format `trials.csv`, and optional SVG
//! line charts. All outputs are written atomically (temp file, then rename).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{ExperimentConfig, MetricsSummary, Method, RunOutput};

/// Write `content` to `path` via a sibling temp file and an atomic rename.
pub fn write_atomic(path: &Path, content: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(content)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    config: &'a ExperimentConfig,
    theta_star: f64,
    curve_a: f64,
    curve_b: f64,
    summaries: &'a [MetricsSummary],
}

/// Owned mirror of the `summary.json` layout, for re-rendering reports.
#[derive(Deserialize)]
pub struct SummaryDocument {
    pub config: ExperimentConfig,
    pub theta_star: f64,
    pub curve_a: f64,
    pub curve_b: f64,
    pub summaries: Vec<MetricsSummary>,
}

impl SummaryDocument {
    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn float_cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

/// Emit `summary.json` and `trials.csv` (plus `ess.svg` / `coverage.svg`
/// when `svg` is set) into `out_dir`. Returns the paths written.
pub fn emit_report(
    out_dir: &Path,
    config: &ExperimentConfig,
    output: &RunOutput,
    svg: bool,
) -> Result<Vec<PathBuf>> {
    if output.summaries.is_empty() {
        return Err(Error::ConfigError("nothing to report: no (method, budget) cells".into()));
    }
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let summary = SummaryFile {
        config,
        theta_star: output.theta_star,
        curve_a: output.curve_a,
        curve_b: output.curve_b,
        summaries: &output.summaries,
    };
    let summary_path = out_dir.join("summary.json");
    write_atomic(&summary_path, serde_json::to_string_pretty(&summary)?.as_bytes())?;
    written.push(summary_path);

    let mut csv = String::from("method,budget,trial,estimate,ci_lo,ci_hi,n_labeled,rho,c\n");
    for r in &output.records {
        let labeled = if r.error.is_none() { r.n_labeled.to_string() } else { String::new() };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.method.label(),
            r.budget,
            r.trial,
            float_cell(r.estimate),
            float_cell(r.ci_lo),
            float_cell(r.ci_hi),
            labeled,
            float_cell(r.rho),
            r.c.map(float_cell).unwrap_or_default(),
        ));
    }
    let trials_path = out_dir.join("trials.csv");
    write_atomic(&trials_path, csv.as_bytes())?;
    written.push(trials_path);

    if svg {
        written.extend(emit_charts(out_dir, config, &output.summaries)?);
    }

    Ok(written)
}

/// Render `ess.svg` and `coverage.svg` from cell summaries.
pub fn emit_charts(
    out_dir: &Path,
    config: &ExperimentConfig,
    summaries: &[MetricsSummary],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let methods: Vec<Method> = config.methods.clone();
    let series_for = |metric: &dyn Fn(&MetricsSummary) -> (f64, f64)| -> Vec<Series> {
        methods
            .iter()
            .map(|&m| {
                let points: Vec<(f64, f64, f64)> = config
                    .budgets
                    .iter()
                    .filter_map(|&b| {
                        summaries.iter().find(|s| s.method == m && s.budget == b).map(|s| {
                            let (y, sd) = metric(s);
                            (b as f64, y, sd)
                        })
                    })
                    .collect();
                Series { name: m.label().to_string(), points }
            })
            .collect()
    };

    let ess_series = series_for(&|s: &MetricsSummary| (s.n_eff_mean, s.n_eff_std));
    let cov_series = series_for(&|s: &MetricsSummary| {
        let t = (s.n_trials - s.n_failed).max(1) as f64;
        (s.coverage, (s.coverage * (1.0 - s.coverage) / t).max(0.0).sqrt())
    });

    let ess_path = out_dir.join("ess.svg");
    write_atomic(
        &ess_path,
        line_chart("effective sample size", "budget", "n_eff", &ess_series).as_bytes(),
    )?;
    let cov_path = out_dir.join("coverage.svg");
    write_atomic(
        &cov_path,
        line_chart("coverage", "budget", "coverage", &cov_series).as_bytes(),
    )?;
    Ok(vec![ess_path, cov_path])
}

/// One chart series: `(x, y, sigma)` triples; sigma draws the band.
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Minimal SVG line chart: one polyline per series plus a translucent
/// one-sigma band.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (width, height) = (800.0, 500.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 40.0, 50.0);

    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y, sd) in &s.points {
            if x.is_finite() && y.is_finite() {
                xs.push(x);
                ys.push(y - sd);
                ys.push(y + sd);
            }
        }
    }
    let (mut x_min, mut x_max) = bounds(&xs);
    let (mut y_min, mut y_max) = bounds(&ys);
    if x_min == x_max {
        x_min -= 0.5;
        x_max += 0.5;
    }
    if y_min == y_max {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let sx = move |x: f64| ml + (x - x_min) / (x_max - x_min) * (width - ml - mr);
    let sy = move |y: f64| height - mb - (y - y_min) / (y_max - y_min) * (height - mt - mb);

    let mut out = String::new();
    out.push_str(&format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" \
         width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    out.push_str(&format!(
        "  <text x=\"{}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        width / 2.0,
        escape(title)
    ));
    // Axes.
    out.push_str(&format!(
        "  <line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333\"/>\n",
        height - mb,
        width - mr,
        height - mb
    ));
    out.push_str(&format!(
        "  <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"#333\"/>\n",
        height - mb
    ));
    for k in 0..=4 {
        let fx = x_min + (x_max - x_min) * k as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * k as f64 / 4.0;
        out.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            sx(fx),
            height - mb + 18.0,
            tick(fx)
        ));
        out.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            ml - 6.0,
            sy(fy) + 4.0,
            tick(fy)
        ));
    }
    out.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        (ml + width - mr) / 2.0,
        height - 12.0,
        escape(x_label)
    ));
    out.push_str(&format!(
        "  <text x=\"16\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {})\">{}</text>\n",
        (mt + height - mb) / 2.0,
        (mt + height - mb) / 2.0,
        escape(y_label)
    ));

    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let finite: Vec<(f64, f64, f64)> = s
            .points
            .iter()
            .copied()
            .filter(|&(x, y, _)| x.is_finite() && y.is_finite())
            .collect();
        if finite.is_empty() {
            continue;
        }
        if finite.iter().any(|&(_, _, sd)| sd > 0.0) {
            let mut band = String::new();
            for &(x, y, sd) in &finite {
                band.push_str(&format!("{:.1},{:.1} ", sx(x), sy(y + sd)));
            }
            for &(x, y, sd) in finite.iter().rev() {
                band.push_str(&format!("{:.1},{:.1} ", sx(x), sy(y - sd)));
            }
            out.push_str(&format!(
                "  <polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n",
                band.trim_end()
            ));
        }
        let pts: Vec<String> =
            finite.iter().map(|&(x, y, _)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        out.push_str(&format!(
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            pts.join(" ")
        ));
        for &(x, y, _) in &finite {
            out.push_str(&format!(
                "  <circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\"/>\n",
                sx(x),
                sy(y)
            ));
        }
        out.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            width - mr - 150.0,
            mt + 16.0 * si as f64 + 4.0,
            escape(&s.name)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn bounds(xs: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in xs {
        if x.is_finite() {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    if lo > hi {
        (0.0, 1.0)
    } else {
        (lo, hi)
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
