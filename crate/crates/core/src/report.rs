//! Metrics artifacts: `metrics.json`, `pr_curve.csv` and SVG figures.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{AblationPoint, Confusion, PrCurve, ResolutionPoint};
use crate::gbdt::GridPoint;

/// Everything `evaluate` measures, serialized as `metrics.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub seed: u64,
    pub n_participants: usize,
    pub n_pairs: usize,
    pub duration_s: usize,
    pub n_rows: usize,
    pub n_validation_rows: usize,
    pub prevalence: f64,
    pub positive_weight: f64,
    pub ap_gbdt: f64,
    pub ap_np: f64,
    pub ap_npc: f64,
    pub threshold_gbdt: f64,
    pub threshold_np: f64,
    /// "tuning" normally; "validation_fallback" when the tuning pairs held
    /// no positive labels.
    pub threshold_source: String,
    pub confusion_gbdt: Confusion,
    pub confusion_np: Confusion,
    pub resolution_sweep_gbdt: Vec<ResolutionPoint>,
    pub resolution_sweep_np: Vec<ResolutionPoint>,
    pub best_gamma_gbdt: f64,
    pub best_node_accuracy_gbdt: f64,
    pub best_group_accuracy_gbdt: f64,
    pub best_gamma_np: f64,
    pub best_node_accuracy_np: f64,
    pub best_group_accuracy_np: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ablation: Option<Vec<AblationPoint>>,
}

impl Metrics {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path.as_ref())?);
        w.write_all(serde_json::to_string_pretty(self)?.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Metrics> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::InputMissing(path.display().to_string()));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Grid-search outcome file (`tuned.json`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TunedFile {
    pub best: crate::gbdt::GbdtConfig,
    pub best_ap: f64,
    pub evaluated: Vec<GridPoint>,
}

impl TunedFile {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path.as_ref())?);
        w.write_all(serde_json::to_string_pretty(self)?.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TunedFile> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::InputMissing(path.display().to_string()));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// `pr_curve.csv`: one row per curve point per model.
pub fn write_pr_curves(path: impl AsRef<Path>, curves: &[(&str, &PrCurve<f64>)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    writeln!(w, "model,threshold,recall,precision")?;
    for (name, curve) in curves {
        for (t, (r, p)) in curve.thresholds.iter().zip(curve.points.iter()) {
            writeln!(w, "{name},{t},{r},{p}")?;
        }
    }
    Ok(())
}

pub fn read_pr_curves(path: impl AsRef<Path>) -> Result<Vec<(String, Vec<(f64, f64)>)>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::InputMissing(path.display().to_string()));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut out: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let model = record[0].to_string();
        let recall: f64 = record[2].parse().unwrap_or(f64::NAN);
        let precision: f64 = record[3].parse().unwrap_or(f64::NAN);
        match out.last_mut() {
            Some((name, points)) if *name == model => points.push((recall, precision)),
            _ => out.push((model, vec![(recall, precision)])),
        }
    }
    Ok(out)
}

const CHART_W: f64 = 640.0;
const CHART_H: f64 = 440.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 52.0;

pub struct Series<'a> {
    pub name: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

fn axis_ticks(lo: f64, hi: f64) -> Vec<f64> {
    (0..=5)
        .map(|i| lo + (hi - lo) * i as f64 / 5.0)
        .collect()
}

/// Minimal line chart; axes are linear with five ticks.
pub fn line_chart(
    path: impl AsRef<Path>,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series<'_>],
    x_range: (f64, f64),
    y_range: (f64, f64),
) -> Result<()> {
    let (x0, x1) = x_range;
    let (y0, y1) = y_range;
    let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0).max(1e-12) * (CHART_W - MARGIN_L - MARGIN_R);
    let sy = |y: f64| {
        CHART_H - MARGIN_B - (y - y0) / (y1 - y0).max(1e-12) * (CHART_H - MARGIN_T - MARGIN_B)
    };
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{CHART_W}\" height=\"{CHART_H}\" viewBox=\"0 0 {CHART_W} {CHART_H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{title}</text>\n",
        CHART_W / 2.0
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_L,
        CHART_H - MARGIN_B,
        CHART_W - MARGIN_R,
        CHART_H - MARGIN_B
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_L,
        MARGIN_T,
        MARGIN_L,
        CHART_H - MARGIN_B
    ));
    for t in axis_ticks(x0, x1) {
        let x = sx(t);
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>\n",
            CHART_H - MARGIN_B,
            CHART_H - MARGIN_B + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{t:.2}</text>\n",
            CHART_H - MARGIN_B + 18.0
        ));
    }
    for t in axis_ticks(y0, y1) {
        let y = sy(t);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"black\"/>\n",
            MARGIN_L - 5.0,
            MARGIN_L
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{t:.2}</text>\n",
            MARGIN_L - 8.0,
            y + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{x_label}</text>\n",
        (MARGIN_L + CHART_W - MARGIN_R) / 2.0,
        CHART_H - 14.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{y_label}</text>\n",
        (MARGIN_T + CHART_H - MARGIN_B) / 2.0,
        (MARGIN_T + CHART_H - MARGIN_B) / 2.0
    ));
    for (i, s) in series.iter().enumerate() {
        if s.points.is_empty() {
            continue;
        }
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\" points=\"{}\"/>\n",
            s.color,
            pts.join(" ")
        ));
        let ly = MARGIN_T + 14.0 * i as f64 + 4.0;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            CHART_W - MARGIN_R - 150.0,
            CHART_W - MARGIN_R - 130.0,
            s.color
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            CHART_W - MARGIN_R - 124.0,
            ly + 4.0,
            s.name
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path.as_ref(), svg)?;
    Ok(())
}

/// Minimal bar chart for the ablation figure.
pub fn bar_chart(
    path: impl AsRef<Path>,
    title: &str,
    y_label: &str,
    bars: &[(String, f64)],
) -> Result<()> {
    let y1 = bars.iter().map(|b| b.1).fold(0.0f64, f64::max).max(1e-9) * 1.15;
    let sy = |y: f64| CHART_H - MARGIN_B - y / y1 * (CHART_H - MARGIN_T - MARGIN_B);
    let plot_w = CHART_W - MARGIN_L - MARGIN_R;
    let slot = plot_w / bars.len().max(1) as f64;
    let bar_w = slot * 0.6;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{CHART_W}\" height=\"{CHART_H}\" viewBox=\"0 0 {CHART_W} {CHART_H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{title}</text>\n",
        CHART_W / 2.0
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_L,
        CHART_H - MARGIN_B,
        CHART_W - MARGIN_R,
        CHART_H - MARGIN_B
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_L,
        MARGIN_T,
        MARGIN_L,
        CHART_H - MARGIN_B
    ));
    for t in axis_ticks(0.0, y1) {
        let y = sy(t);
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{t:.2}</text>\n",
            MARGIN_L - 8.0,
            y + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{y_label}</text>\n",
        (MARGIN_T + CHART_H - MARGIN_B) / 2.0,
        (MARGIN_T + CHART_H - MARGIN_B) / 2.0
    ));
    for (i, (label, value)) in bars.iter().enumerate() {
        let x = MARGIN_L + slot * i as f64 + (slot - bar_w) / 2.0;
        let y = sy(*value);
        svg.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{bar_w:.2}\" height=\"{:.2}\" fill=\"#4878a8\"/>\n",
            CHART_H - MARGIN_B - y
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{:.3}</text>\n",
            x + bar_w / 2.0,
            y - 6.0,
            value
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{label}</text>\n",
            x + bar_w / 2.0,
            CHART_H - MARGIN_B + 18.0
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path.as_ref(), svg)?;
    Ok(())
}

/// Render the standard figures next to `metrics.json`.
pub fn render_figures(
    metrics: &Metrics,
    pr_curves: &[(String, Vec<(f64, f64)>)],
    plots_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = plots_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let colors = ["#c23b22", "#4878a8", "#5a9e5a", "#8a6bb8"];
    let series: Vec<Series> = pr_curves
        .iter()
        .enumerate()
        .map(|(i, (name, pts))| Series {
            name,
            color: colors[i % colors.len()],
            points: pts.clone(),
        })
        .collect();
    let pr_path = dir.join("pr_curve.svg");
    line_chart(
        &pr_path,
        "Link-level precision-recall",
        "recall",
        "precision",
        &series,
        (0.0, 1.0),
        (0.0, 1.0),
    )?;
    written.push(pr_path);

    let sweep_series = |points: &[ResolutionPoint], node: bool| -> Vec<(f64, f64)> {
        points
            .iter()
            .map(|p| {
                (
                    p.gamma,
                    if node { p.node_accuracy } else { p.group_accuracy },
                )
            })
            .collect()
    };
    let sweep_path = dir.join("resolution_sweep.svg");
    let gamma_lo = metrics
        .resolution_sweep_gbdt
        .first()
        .map(|p| p.gamma)
        .unwrap_or(0.1);
    let gamma_hi = metrics
        .resolution_sweep_gbdt
        .last()
        .map(|p| p.gamma)
        .unwrap_or(1.0);
    line_chart(
        &sweep_path,
        "Group detection vs resolution",
        "resolution",
        "accuracy",
        &[
            Series {
                name: "node (model)",
                color: colors[0],
                points: sweep_series(&metrics.resolution_sweep_gbdt, true),
            },
            Series {
                name: "group (model)",
                color: colors[1],
                points: sweep_series(&metrics.resolution_sweep_gbdt, false),
            },
            Series {
                name: "node (NP)",
                color: colors[2],
                points: sweep_series(&metrics.resolution_sweep_np, true),
            },
            Series {
                name: "group (NP)",
                color: colors[3],
                points: sweep_series(&metrics.resolution_sweep_np, false),
            },
        ],
        (gamma_lo, gamma_hi),
        (0.0, 1.0),
    )?;
    written.push(sweep_path);

    if let Some(ablation) = &metrics.ablation {
        let bars: Vec<(String, f64)> = ablation
            .iter()
            .map(|p| {
                let label = if p.dropped == "none" {
                    "all features".to_string()
                } else {
                    format!("drop {}", p.dropped)
                };
                (label, p.ap)
            })
            .collect();
        let ab_path = dir.join("sensor_importance.svg");
        bar_chart(&ab_path, "Leave-one-family-out", "average precision", &bars)?;
        written.push(ab_path);
    }
    Ok(written)
}
