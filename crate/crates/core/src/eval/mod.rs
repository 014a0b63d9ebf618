//! Binarization metrics, classical baselines and report formatting.

mod metrics;
mod morph;
mod threshold;

use std::fmt::Write as _;
use std::str::FromStr;

pub use metrics::{
    drd, drd_weights, f_measure, nubn, pseudo_f_measure, psnr, psnr_continuous, ConfusionCounts, PseudoWeights, DRD_BLOCK,
};
pub use morph::{dilate3, skeleton};
pub use threshold::{
    bradley, bradley_window, histogram, niblack, otsu, otsu_score, otsu_threshold, quantize, sauvola, window_stats,
    Baseline, IntegralImage, BRADLEY_T, DEFAULT_WINDOW, NIBLACK_K, SAUVOLA_K, SAUVOLA_R,
};

use crate::data::{DocumentPair, TileLayout};
use crate::error::{Error, Result};
use crate::model::{binarize, forward, BinarizationOutput, ModelParams};
use crate::tensor::Tensor;

/// Scores for one binarized page. PSNR is `+∞` for a perfect page.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub psnr: f64,
    pub fm: f64,
    pub fps: f64,
    pub drd: f64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "psnr,fm,fps,drd";

    pub fn csv_row(&self) -> String {
        [self.psnr, self.fm, self.fps, self.drd].map(fmt_value).join(",")
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.4}")
    }
}

pub fn evaluate_pair(pred: &Tensor, gt: &Tensor) -> Result<MetricsReport> {
    let weights = PseudoWeights::from_gt(gt);
    Ok(MetricsReport {
        psnr: psnr(pred, gt)?,
        fm: f_measure(pred, gt)?,
        fps: pseudo_f_measure(pred, gt, &weights)?,
        drd: drd(pred, gt)?,
    })
}

/// Unweighted per-page mean. An infinite page PSNR makes the mean infinite.
pub fn mean_report(reports: &[MetricsReport]) -> Result<MetricsReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::EmptyDataset("no pages to average".into()))?;
    let mut acc = *first;
    for (i, r) in reports.iter().enumerate().skip(1) {
        let k = (i + 1) as f64;
        let step = |m: &mut f64, x: f64| {
            if m.is_infinite() || x.is_infinite() {
                *m += x;
            } else {
                *m += (x - *m) / k;
            }
        };
        step(&mut acc.psnr, r.psnr);
        step(&mut acc.fm, r.fm);
        step(&mut acc.fps, r.fps);
        step(&mut acc.drd, r.drd);
    }
    Ok(acc)
}

/// Runs the model over a `C×H×W` page of any size: the page is split into
/// white-padded model-sized tiles, each tile is binarized and the
/// continuous outputs are stitched and cropped before thresholding.
pub fn binarize_page(params: &ModelParams, image: &Tensor) -> Result<BinarizationOutput> {
    let d = image.dims();
    if d.len() != 3 || d[0] != params.config.channels() {
        return Err(Error::Config(format!(
            "expected a {}×H×W page, got {d:?}",
            params.config.channels()
        )));
    }
    let layout = TileLayout::new(d[1], d[2], params.config.image_size);
    let outputs = layout
        .split(image, 1.0)?
        .iter()
        .map(|tile| forward(tile, params).map(|o| o.continuous))
        .collect::<Result<Vec<_>>>()?;
    let continuous = layout.merge(&outputs)?;
    let binary = binarize(&continuous);
    Ok(BinarizationOutput { continuous, binary })
}

/// Mean scores of the model over a set of pages.
pub fn evaluate_model(params: &ModelParams, pages: &[DocumentPair]) -> Result<MetricsReport> {
    let reports = pages
        .iter()
        .map(|p| evaluate_pair(&binarize_page(params, &p.degraded)?.binary, &p.gt))
        .collect::<Result<Vec<_>>>()?;
    mean_report(&reports)
}

/// Mean scores of a classical baseline over a set of pages.
pub fn evaluate_baseline(baseline: Baseline, pages: &[DocumentPair]) -> Result<MetricsReport> {
    let reports = pages
        .iter()
        .map(|p| evaluate_pair(&baseline.apply(&p.degraded)?, &p.gt))
        .collect::<Result<Vec<_>>>()?;
    mean_report(&reports)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Config(format!("unknown format `{other}` (expected csv or markdown)"))),
        }
    }
}

/// One line of a comparison table.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub model: String,
    pub metrics: MetricsReport,
}

impl ReportRow {
    pub fn new(method: impl Into<String>, model: impl Into<String>, metrics: MetricsReport) -> Self {
        ReportRow {
            method: method.into(),
            model: model.into(),
            metrics,
        }
    }
}

pub const TABLE_COLUMNS: [&str; 6] = ["Method", "Model", "PSNR", "FM", "Fps", "DRD"];

pub fn format_table(rows: &[ReportRow], format: ReportFormat) -> String {
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            let m = &r.metrics;
            [
                r.method.clone(),
                r.model.clone(),
                fmt_value(m.psnr),
                fmt_value(m.fm),
                fmt_value(m.fps),
                fmt_value(m.drd),
            ]
        })
        .collect();
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str(&TABLE_COLUMNS.join(","));
            out.push('\n');
            for row in &cells {
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
        ReportFormat::Markdown => {
            let widths: Vec<usize> = (0..6)
                .map(|c| cells.iter().map(|r| r[c].len()).chain([TABLE_COLUMNS[c].len(), 3]).max().unwrap_or(3))
                .collect();
            let line = |out: &mut String, row: &[&str]| {
                out.push('|');
                for (c, cell) in row.iter().enumerate() {
                    let _ = write!(out, " {cell:<width$} |", width = widths[c]);
                }
                out.push('\n');
            };
            line(&mut out, &TABLE_COLUMNS);
            let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            line(&mut out, &rule.iter().map(String::as_str).collect::<Vec<_>>());
            for row in &cells {
                line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
            }
        }
    }
    out
}
