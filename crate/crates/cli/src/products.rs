//! Tables written next to every recovered posterior.

use std::path::Path;

use serde::Serialize;
use spinbath_core::engine::{error_trace, ErrorMetric};
use spinbath_core::metrics::{self, RecoveryReport, ReferenceSpin, ReportOptions};
use spinbath_core::{BathPosterior, LatticeCatalog, PosteriorEnsemble};

use crate::error::{CliResult, WithPath};

pub struct Products<'a> {
    pub posterior: &'a PosteriorEnsemble,
    /// Catalog defining symmetry classes, unperturbed.
    pub catalog: &'a LatticeCatalog,
    pub truth: Option<&'a [u32]>,
    /// Needed for error traces.
    pub target: Option<&'a BathPosterior>,
    pub reference: Option<&'a [ReferenceSpin]>,
    /// Draws for the chance baseline, i.e. the dimension cap.
    pub baseline_draws: usize,
    /// `gamma_n * B_z`, kHz, for effective frequencies.
    pub gamma_b_khz: f64,
}

#[derive(Serialize)]
struct DetectionRow {
    site_id: u32,
    symmetry_class: usize,
    copy: usize,
    magnitude_khz: f64,
    rate: f64,
    baseline: Option<f64>,
    above_baseline: Option<bool>,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).at(path)?;
    for row in rows {
        w.serialize(row).at(path)?;
    }
    w.flush().at(path)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| crate::CliError::io(path, e))?;
    std::fs::write(path, text + "\n").at(path)
}

/// Writes the report and its figure tables into `dir`.
pub fn write_products(dir: &Path, p: &Products, options: &ReportOptions) -> CliResult<RecoveryReport> {
    let report = RecoveryReport::build(p.posterior, p.catalog, p.truth, options)?;
    std::fs::write(dir.join("report.json"), report.to_json()? + "\n").at(dir)?;

    write_csv(
        &dir.join("k_histogram.csv"),
        report.k_histogram.iter().map(|(&k, &count)| KRow { k, count }),
    )?;
    let h = &report.lambda_histogram;
    write_csv(
        &dir.join("lambda_histogram.csv"),
        h.counts.iter().enumerate().map(|(i, &count)| BinRow {
            lo: h.edges[i],
            hi: h.edges[i + 1],
            count,
        }),
    )?;
    write_csv(&dir.join("hyperfine.csv"), &report.hyperfine)?;

    if p.truth.is_some() {
        let n = p.catalog.len();
        let rows = report.detection.iter().map(|d| {
            let baseline = (d.copy <= 2)
                .then(|| metrics::baseline_probability(n, p.baseline_draws.min(n), p.catalog.class_size(d.symmetry_class), d.copy).ok())
                .flatten();
            DetectionRow {
                site_id: d.site_id,
                symmetry_class: d.symmetry_class,
                copy: d.copy,
                magnitude_khz: d.magnitude_khz,
                rate: d.rate,
                baseline,
                above_baseline: baseline.map(|b| d.rate > b),
            }
        });
        write_csv(&dir.join("detection.csv"), rows)?;
        write_csv(&dir.join("detection_by_bin.csv"), &report.detection_by_bin)?;
        write_csv(&dir.join("false_positive.csv"), &report.false_positive)?;
    }

    if let Some(target) = p.target {
        let traces = error_trace(p.posterior, target, ErrorMetric::Absolute);
        let rows = traces
            .iter()
            .flat_map(|(&ensemble, t)| t.iter().map(move |&(step, error)| TraceRow { ensemble, step, error }));
        write_csv(&dir.join("error_trace.csv"), rows)?;
    }

    if let Some(reference) = p.reference {
        let rows = metrics::compare_with_reference(p.posterior, p.catalog, reference, p.gamma_b_khz)?;
        let path = dir.join("comparison.csv");
        let file = std::fs::File::create(&path).at(&path)?;
        metrics::write_comparison(file, &rows).at(&path)?;
    }
    Ok(report)
}

#[derive(Serialize)]
struct KRow {
    k: usize,
    count: usize,
}

#[derive(Serialize)]
struct BinRow {
    lo: f64,
    hi: f64,
    count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub ensemble: u32,
    pub step: u64,
    pub error: f64,
}
