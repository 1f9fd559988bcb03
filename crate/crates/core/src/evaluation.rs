//! Accuracy metrics on the original output scale, timing, and report files.
//!
//! Report CSV columns: `model,output,metric,value`, one row per model,
//! output and metric (`pearson_r`, `mape`). The SVG is a parallel-coordinate
//! plot, 800 × 420 px, one vertical axis per output and one polyline per model.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, N_INPUTS, N_OUTPUTS, OUTPUT_NAMES};

#[derive(Debug, Error, PartialEq)]
pub enum EvaluationError {
    #[error("series lengths differ or are too short ({observed} observed, {predicted} predicted)")]
    LengthMismatch { observed: usize, predicted: usize },
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("observed value at index {0} is zero")]
    ZeroObserved(usize),
    #[error("no rows left after excluding zero observations")]
    Empty,
}

/// Sample product-moment correlation.
pub fn pearson_r(observed: &[f64], predicted: &[f64]) -> Result<f64, EvaluationError> {
    if observed.len() != predicted.len() || observed.len() < 2 {
        return Err(EvaluationError::LengthMismatch {
            observed: observed.len(),
            predicted: predicted.len(),
        });
    }
    let n = observed.len() as f64;
    let mo = observed.iter().sum::<f64>() / n;
    let mp = predicted.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (o, p) in observed.iter().zip(predicted) {
        let (a, b) = (o - mo, p - mp);
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if sxx == 0.0 {
        return Err(EvaluationError::ZeroVariance("observed"));
    }
    if syy == 0.0 {
        return Err(EvaluationError::ZeroVariance("predicted"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Mean absolute percentage error, in percent.
pub fn mape(observed: &[f64], predicted: &[f64]) -> Result<f64, EvaluationError> {
    if observed.len() != predicted.len() || observed.is_empty() {
        return Err(EvaluationError::LengthMismatch {
            observed: observed.len(),
            predicted: predicted.len(),
        });
    }
    let mut sum = 0.0;
    for (i, (o, p)) in observed.iter().zip(predicted).enumerate() {
        if *o == 0.0 {
            return Err(EvaluationError::ZeroObserved(i));
        }
        sum += 100.0 * ((o - p) / o).abs();
    }
    Ok(sum / observed.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputMetrics {
    pub output: String,
    pub pearson_r: f64,
    pub mape: f64,
    /// Rows left out of the MAPE because the observation was zero.
    pub excluded_zero: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub outputs: Vec<OutputMetrics>,
    pub train_seconds: f64,
    pub inference_seconds: f64,
    pub points: usize,
}

impl MetricReport {
    pub fn mape_of(&self, output: &str) -> Option<f64> {
        self.outputs.iter().find(|o| o.output == output).map(|o| o.mape)
    }

    pub fn mapes(&self) -> Vec<f64> {
        self.outputs.iter().map(|o| o.mape).collect()
    }
}

/// Per-output metrics of predictions against a data set, both on the
/// original scale. Zero observations are excluded from the MAPE and counted.
pub fn score(
    model: &str,
    observed: &[[f64; N_OUTPUTS]],
    predicted: &[[f64; N_OUTPUTS]],
) -> Result<MetricReport, EvaluationError> {
    let mut outputs = Vec::with_capacity(N_OUTPUTS);
    for (j, name) in OUTPUT_NAMES.iter().enumerate() {
        let o: Vec<f64> = observed.iter().map(|r| r[j]).collect();
        let p: Vec<f64> = predicted.iter().map(|r| r[j]).collect();
        let r = pearson_r(&o, &p)?;
        let (on, pn): (Vec<f64>, Vec<f64>) = o.iter().zip(&p).filter(|(a, _)| **a != 0.0).map(|(a, b)| (*a, *b)).unzip();
        if on.is_empty() {
            return Err(EvaluationError::Empty);
        }
        outputs.push(OutputMetrics {
            output: name.to_string(),
            pearson_r: r,
            mape: mape(&on, &pn)?,
            excluded_zero: o.len() - on.len(),
        });
    }
    Ok(MetricReport {
        model: model.to_string(),
        outputs,
        train_seconds: 0.0,
        inference_seconds: 0.0,
        points: observed.len(),
    })
}

/// Time `predict` on the inputs of `data` with a monotonic clock and score it.
pub fn evaluate<F, E>(model: &str, data: &Dataset, train_seconds: f64, predict: F) -> Result<MetricReport, E>
where
    F: FnOnce(&[[f64; N_INPUTS]]) -> Result<Vec<[f64; N_OUTPUTS]>, E>,
    E: From<EvaluationError>,
{
    let start = Instant::now();
    let predicted = predict(&data.inputs)?;
    let inference_seconds = start.elapsed().as_secs_f64();
    let mut report = score(model, &data.outputs, &predicted)?;
    report.train_seconds = train_seconds;
    report.inference_seconds = inference_seconds;
    Ok(report)
}

pub const SVG_WIDTH: f64 = 800.0;
pub const SVG_HEIGHT: f64 = 420.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Long-format rows `(model, output, metric, value)`.
pub fn report_rows(reports: &[MetricReport]) -> Vec<(String, String, String, f64)> {
    let mut rows = Vec::new();
    for r in reports {
        for o in &r.outputs {
            rows.push((r.model.clone(), o.output.clone(), "pearson_r".to_string(), o.pearson_r));
            rows.push((r.model.clone(), o.output.clone(), "mape".to_string(), o.mape));
        }
    }
    rows
}

pub fn write_report_csv<W: std::io::Write>(reports: &[MetricReport], writer: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| std::io::Error::other(e.to_string());
    w.write_record(["model", "output", "metric", "value"]).map_err(io)?;
    for (m, o, k, v) in report_rows(reports) {
        w.write_record([m, o, k, v.to_string()]).map_err(io)?;
    }
    w.flush()
}

/// Parallel-coordinate plot of MAPE, log-scaled on a shared axis range.
pub fn render_svg(reports: &[MetricReport]) -> String {
    let (left, right, top, bottom) = (70.0, 30.0, 40.0, 60.0);
    let plot_w = SVG_WIDTH - left - right;
    let plot_h = SVG_HEIGHT - top - bottom;
    let values: Vec<f64> = reports.iter().flat_map(|r| r.mapes()).filter(|v| *v > 0.0 && v.is_finite()).collect();
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min).max(1e-6);
    let hi = values.iter().cloned().fold(0.0, f64::max).max(lo * 10.0);
    let (llo, lhi) = (lo.log10().floor(), hi.log10().ceil());
    let y_of = |v: f64| {
        let l = v.max(lo).log10();
        top + plot_h * (1.0 - (l - llo) / (lhi - llo).max(1e-12))
    };
    let x_of = |j: usize| left + plot_w * j as f64 / (N_OUTPUTS - 1) as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{left}" y="22" font-family="sans-serif" font-size="14">MAPE (%) per output</text>"#);
    for (j, name) in OUTPUT_NAMES.iter().enumerate() {
        let x = x_of(j);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.1}" y1="{top}" x2="{x:.1}" y2="{:.1}" stroke="#444" stroke-width="1"/>"##,
            top + plot_h
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{name}</text>"#,
            top + plot_h + 20.0
        );
    }
    let mut e = llo;
    while e <= lhi {
        let y = y_of(10f64.powf(e));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{y:.1}" font-family="sans-serif" font-size="10" text-anchor="end">1e{e}</text>"#,
            left - 8.0
        );
        e += 1.0;
    }
    for (k, r) in reports.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = r.mapes().iter().enumerate().map(|(j, &v)| format!("{:.1},{:.1}", x_of(j), y_of(v))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"><title>{}</title></polyline>"#,
            pts.join(" "),
            r.model
        );
        let ly = top + plot_h + 40.0;
        let lx = left + 110.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{lx:.1}" y="{ly:.1}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            r.model
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Write `<stem>.csv` and `<stem>.svg`; returns both paths.
pub fn emit_report(reports: &[MetricReport], stem: impl AsRef<Path>) -> std::io::Result<(PathBuf, PathBuf)> {
    let stem = stem.as_ref();
    let csv_path = stem.with_extension("csv");
    let svg_path = stem.with_extension("svg");
    write_report_csv(reports, std::io::BufWriter::new(std::fs::File::create(&csv_path)?))?;
    std::fs::write(&svg_path, render_svg(reports))?;
    Ok((csv_path, svg_path))
}
