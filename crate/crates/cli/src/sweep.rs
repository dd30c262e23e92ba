//! One-parameter sweeps over batches of synthetic scenarios.

use std::path::Path;
use std::sync::Arc;

use clap::ValueEnum;
use log::info;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use spinbath_core::datagen::{synthesize, SyntheticScenario};
use spinbath_core::engine::{self, error_trace, ErrorMetric};
use spinbath_core::metrics::{self, BinRate, SpinDetection};
use spinbath_core::rng::{child_seed, stream};
use spinbath_core::{LatticeCatalog, LikelihoodMode};

use crate::commands::{build_target, recovery_catalog, DATA_LANE};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::products::{write_csv, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Axis {
    NTau,
    NoiseSd,
    Delta,
    Sigma2,
    Zeta,
    RSpin,
}

/// File names of one sweep's tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableNames {
    pub detection: String,
    pub discrepancy: String,
    pub false_positive: String,
    pub error_trace: String,
    pub detected_spins: String,
}

impl Axis {
    pub fn key(self) -> &'static str {
        match self {
            Axis::NTau => "n_tau",
            Axis::NoiseSd => "noise_sd",
            Axis::Delta => "delta",
            Axis::Sigma2 => "sigma2",
            Axis::Zeta => "zeta",
            Axis::RSpin => "r_spin",
        }
    }

    /// Tables are keyed by the figure they feed.
    pub fn tables(self) -> TableNames {
        let panels = |fig: &str, d: &str, e: &str, f: &str| TableNames {
            detection: format!("{fig}{d}.csv"),
            discrepancy: format!("{fig}{e}.csv"),
            false_positive: format!("{fig}{f}.csv"),
            error_trace: format!("{fig}_error_trace.csv"),
            detected_spins: format!("{fig}_detected_spins.csv"),
        };
        let traces = |fig: &str| TableNames {
            detection: format!("{fig}_detection.csv"),
            discrepancy: format!("{fig}_discrepancy.csv"),
            false_positive: format!("{fig}_false_positive.csv"),
            error_trace: format!("{fig}.csv"),
            detected_spins: format!("{fig}_detected_spins.csv"),
        };
        match self {
            Axis::NTau => panels("fig2", "d", "e", "f"),
            Axis::NoiseSd => panels("fig3", "d", "e", "f"),
            Axis::Delta => panels("fig8", "a", "b", "c"),
            Axis::Sigma2 => traces("fig5"),
            Axis::RSpin => traces("fig6"),
            Axis::Zeta => TableNames {
                detected_spins: "table_zeta.csv".into(),
                error_trace: "table_zeta_error_trace.csv".into(),
                ..traces("table_zeta")
            },
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &RunConfig, value: f64) -> CliResult<RunConfig> {
        let mut cfg = base.clone();
        match self {
            Axis::NTau => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(CliError::validation(format!("n_tau must be a positive integer, got {value}")));
                }
                cfg.scenario.n_tau = value as usize;
            }
            Axis::NoiseSd => cfg.scenario.noise_sd = value,
            Axis::Delta => cfg.scenario.delta_khz = value,
            Axis::Sigma2 => cfg.likelihood.sigma2 = value,
            Axis::Zeta => {
                cfg.likelihood.zeta = value;
                cfg.likelihood.mode = LikelihoodMode::WassersteinMixed;
            }
            Axis::RSpin => cfg.proposal.r_spin = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Metrics of one recovered scenario.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub index: usize,
    pub k_true: usize,
    pub k_mode: usize,
    pub detection: Vec<SpinDetection>,
    pub false_positive: Vec<BinRate>,
    pub trace: Vec<TraceRow>,
}

/// Draws scenario `index` of the batch, recovers it and scores it against
/// the unperturbed catalog.
pub fn run_scenario(config: &RunConfig, catalog: &Arc<LatticeCatalog>, index: usize, keep_trace: bool) -> CliResult<ScenarioOutcome> {
    let seed = child_seed(config.seed, index as u64);
    let mut rng = stream(seed, 0, DATA_LANE);
    let mut settings = config.scenario.clone();
    settings.k_true = rng.random_range(config.sweep.k_min..=config.sweep.k_max.min(catalog.len()));
    let scenario = SyntheticScenario::draw(&settings, config.mode, catalog, &mut rng)?;
    let data = synthesize(&scenario, catalog, seed, &mut rng)?;
    let target = build_target(config, recovery_catalog(config, catalog, seed)?, data.signal)?;
    let run = engine::run(&target, &config.proposal, &config.schedule, child_seed(seed, 1))?;
    let truth = scenario.truth.as_slice();
    let trace = if keep_trace {
        error_trace(&run.posterior, &target, ErrorMetric::Absolute)
            .into_iter()
            .flat_map(|(ensemble, t)| t.into_iter().map(move |(step, error)| TraceRow { ensemble, step, error }))
            .collect()
    } else {
        Vec::new()
    };
    Ok(ScenarioOutcome {
        index,
        k_true: truth.len(),
        k_mode: metrics::k_mode(&run.posterior)?,
        detection: metrics::detection_rate(&run.posterior, catalog, truth)?,
        false_positive: metrics::false_positive_rate(&run.posterior, catalog, truth, &config.report.bins)?,
        trace,
    })
}

#[derive(Debug, Serialize, PartialEq)]
pub struct BinRow {
    pub value: f64,
    pub bin: String,
    pub lo_khz: f64,
    pub hi_khz: f64,
    pub n_spins: usize,
    pub rate: f64,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct DiscrepancyRow {
    pub value: f64,
    pub n_scenarios: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct DetectedRow {
    pub value: f64,
    pub scenario: usize,
    pub k_true: usize,
    pub k_mode: usize,
}

#[derive(Serialize)]
struct TraceOut {
    value: f64,
    scenario: usize,
    ensemble: u32,
    step: u64,
    error: f64,
}

/// Aggregated tables of a sweep.
#[derive(Debug, Default)]
pub struct SweepTables {
    pub detection: Vec<BinRow>,
    pub discrepancy: Vec<DiscrepancyRow>,
    pub false_positive: Vec<BinRow>,
    pub detected_spins: Vec<DetectedRow>,
}

fn pooled_rows(value: f64, bins: &metrics::MagnitudeBins, rates: impl IntoIterator<Item = BinRate>) -> Vec<BinRow> {
    let mut acc: std::collections::BTreeMap<usize, (usize, f64)> = Default::default();
    for r in rates {
        let e = acc.entry(r.bin).or_default();
        e.0 += r.n;
        e.1 += r.rate * r.n as f64;
    }
    acc.into_iter()
        .map(|(bin, (n, sum))| {
            let (lo_khz, hi_khz) = bins.bounds(bin);
            BinRow {
                value,
                bin: bins.label(bin),
                lo_khz,
                hi_khz,
                n_spins: n,
                rate: sum / n as f64,
            }
        })
        .collect()
}

/// Folds the outcomes of one sweep value into table rows.
pub fn aggregate(value: f64, outcomes: &[ScenarioOutcome], bins: &metrics::MagnitudeBins, tables: &mut SweepTables) {
    let detections: Vec<SpinDetection> = outcomes.iter().flat_map(|o| o.detection.iter().cloned()).collect();
    tables
        .detection
        .extend(pooled_rows(value, bins, metrics::binned_detection(&detections, bins)));
    tables
        .false_positive
        .extend(pooled_rows(value, bins, outcomes.iter().flat_map(|o| o.false_positive.iter().cloned())));
    let d: Vec<f64> = outcomes.iter().map(|o| o.k_mode.abs_diff(o.k_true) as f64).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = if d.len() > 1 {
        d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    tables.discrepancy.push(DiscrepancyRow {
        value,
        n_scenarios: d.len(),
        mean,
        sd: var.sqrt(),
    });
    tables.detected_spins.extend(outcomes.iter().map(|o| DetectedRow {
        value,
        scenario: o.index,
        k_true: o.k_true,
        k_mode: o.k_mode,
    }));
}

pub fn sweep(config: &RunConfig, axis: Axis, values: &[f64]) -> CliResult<SweepTables> {
    if values.is_empty() {
        return Err(CliError::validation("a sweep needs at least one value"));
    }
    config.validate()?;
    let configs: Vec<RunConfig> = values.iter().map(|&v| axis.apply(config, v)).collect::<CliResult<_>>()?;
    let out = config.out_dir();
    config.write_to(&out)?;
    let names = axis.tables();
    let mut tables = SweepTables::default();
    let mut traces: Vec<TraceOut> = Vec::new();
    for (&value, cfg) in values.iter().zip(&configs) {
        let catalog = cfg.load_catalog()?;
        cfg.validate_for(&catalog)?;
        info!("{} = {value}: {} scenarios", axis.key(), cfg.sweep.n_scenarios);
        let outcomes: Vec<ScenarioOutcome> = (0..cfg.sweep.n_scenarios)
            .into_par_iter()
            .map(|i| run_scenario(cfg, &catalog, i, i == 0))
            .collect::<CliResult<_>>()?;
        aggregate(value, &outcomes, &cfg.report.bins, &mut tables);
        traces.extend(outcomes[0].trace.iter().map(|t| TraceOut {
            value,
            scenario: 0,
            ensemble: t.ensemble,
            step: t.step,
            error: t.error,
        }));
    }
    let write = |name: &str| out.join(name);
    write_csv(&write(&names.detection), &tables.detection)?;
    write_csv(&write(&names.discrepancy), &tables.discrepancy)?;
    write_csv(&write(&names.false_positive), &tables.false_positive)?;
    write_csv(&write(&names.detected_spins), &tables.detected_spins)?;
    write_csv(&write(&names.error_trace), traces)?;
    write_values(&out, axis, values)?;
    Ok(tables)
}

fn write_values(out: &Path, axis: Axis, values: &[f64]) -> CliResult<()> {
    #[derive(Serialize)]
    struct Row {
        axis: Axis,
        value: f64,
    }
    write_csv(&out.join("sweep_values.csv"), values.iter().map(|&value| Row { axis, value }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_keys() {
        assert_eq!(Axis::NTau.tables().detection, "fig2d.csv");
        assert_eq!(Axis::NoiseSd.tables().false_positive, "fig3f.csv");
        assert_eq!(Axis::Delta.tables().discrepancy, "fig8b.csv");
        assert_eq!(Axis::Sigma2.tables().error_trace, "fig5.csv");
        assert_eq!(Axis::RSpin.tables().error_trace, "fig6.csv");
        assert_eq!(Axis::Zeta.tables().detected_spins, "table_zeta.csv");
    }

    #[test]
    fn apply_sets_one_field() {
        let base = RunConfig::default();
        assert_eq!(Axis::NTau.apply(&base, 50.0).unwrap().scenario.n_tau, 50);
        assert!(Axis::NTau.apply(&base, 2.5).is_err());
        assert!(Axis::Sigma2.apply(&base, 0.0).is_err());
        let z = Axis::Zeta.apply(&base, 0.5).unwrap();
        assert_eq!((z.likelihood.zeta, z.likelihood.mode), (0.5, LikelihoodMode::WassersteinMixed));
        assert_eq!(Axis::RSpin.apply(&base, 3.0).unwrap().proposal.r_spin, 3.0);
    }

    #[test]
    fn pooling_weights_by_spin_count() {
        let bins = metrics::MagnitudeBins::default();
        let rate = |bin, n, rate| BinRate {
            bin,
            lo_khz: 0.0,
            hi_khz: 0.0,
            n,
            hits: 0,
            rate,
        };
        let rows = pooled_rows(1.0, &bins, [rate(4, 1, 1.0), rate(4, 3, 0.0), rate(0, 2, 0.5)]);
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].bin.as_str(), rows[0].rate, rows[0].n_spins), ("0-25", 0.5, 2));
        assert_eq!((rows[1].bin.as_str(), rows[1].rate, rows[1].n_spins), (">150", 0.25, 4));
    }
}
