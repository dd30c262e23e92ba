use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use serde::Serialize;
use spinbath_core::catalog::write_records;
use spinbath_core::datagen::{perturb_catalog, synthesize, Manifest, SyntheticScenario};
use spinbath_core::engine::{self, JsonlDirSink, Sample};
use spinbath_core::metrics::{self, ReferenceSpin};
use spinbath_core::rng::{child_seed, stream};
use spinbath_core::{BathPosterior, ExperimentSpec, LatticeCatalog, ObservedSignal, PosteriorEnsemble};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, WithPath};
use crate::products::{write_csv, write_json, write_products, Products};

/// Random lanes below the engine's, one per purpose.
pub const DATA_LANE: u64 = 0;
pub const PERTURB_LANE: u64 = 2;

pub const SIGNAL_FILE: &str = "signal.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const POSTERIOR_DIR: &str = "posterior";

pub fn generate(config: &RunConfig) -> CliResult<()> {
    config.validate()?;
    let catalog = config.load_catalog()?;
    let out = config.out_dir();
    config.write_to(&out)?;
    let mut rng = stream(config.seed, 0, DATA_LANE);
    let scenario = SyntheticScenario::draw(&config.scenario, config.mode, &catalog, &mut rng)?;
    let data = synthesize(&scenario, &catalog, config.seed, &mut rng)?;
    let path = out.join(SIGNAL_FILE);
    let file = std::fs::File::create(&path).at(&path)?;
    data.signal.write_csv(file).at(&path)?;
    let path = out.join(MANIFEST_FILE);
    data.manifest.save(&path).at(&path)?;
    info!(
        "wrote {} points for a {}-spin bath (lambda {:.3}) to {}",
        data.signal.len(),
        scenario.truth.len(),
        scenario.lambda_true,
        out.display()
    );
    Ok(())
}

pub fn read_signal(path: &Path) -> CliResult<ObservedSignal> {
    let file = std::fs::File::open(path).at(path)?;
    ObservedSignal::read_csv(file).at(path)
}

pub fn read_reference(path: &Path) -> CliResult<Vec<ReferenceSpin>> {
    let file = std::fs::File::open(path).at(path)?;
    metrics::read_reference(file).at(path)
}

fn load_manifest(path: Option<&Path>, config: &RunConfig) -> CliResult<Option<Manifest>> {
    let Some(path) = path else { return Ok(None) };
    let m = Manifest::load(path).at(path)?;
    if m.n_pulses != config.scenario.n_pulses || m.b_field != config.scenario.b_field || m.mode != config.mode {
        warn!("{} was generated with different pulse, field or signal-mode settings than this run", path.display());
    }
    Ok(Some(m))
}

/// The catalog the sampler walks on: the configured one, perturbed when
/// `scenario.delta_khz` is positive.
pub fn recovery_catalog(config: &RunConfig, catalog: &Arc<LatticeCatalog>, seed: u64) -> CliResult<Arc<LatticeCatalog>> {
    if config.scenario.delta_khz > 0.0 {
        let mut rng = stream(seed, 0, PERTURB_LANE);
        Ok(Arc::new(perturb_catalog(catalog, config.scenario.delta_khz, &mut rng)?))
    } else {
        Ok(catalog.clone())
    }
}

pub fn build_target(config: &RunConfig, catalog: Arc<LatticeCatalog>, signal: ObservedSignal) -> CliResult<BathPosterior> {
    let spec = ExperimentSpec::new(config.scenario.n_pulses, config.scenario.b_field, signal.tau.clone())?;
    Ok(BathPosterior::new(catalog, spec, config.mode, signal, config.likelihood)?)
}

pub fn gamma_b(config: &RunConfig) -> f64 {
    spinbath_core::forward::GAMMA_13C_KHZ_PER_G * config.scenario.b_field
}

pub struct RecoverArgs<'a> {
    pub signal: &'a Path,
    pub manifest: Option<&'a Path>,
    pub reference: Option<&'a Path>,
}

pub fn recover(config: &RunConfig, args: &RecoverArgs) -> CliResult<()> {
    config.validate()?;
    let catalog = config.load_catalog()?;
    config.validate_for(&catalog)?;
    let signal = read_signal(args.signal)?;
    let manifest = load_manifest(args.manifest, config)?;
    let reference = args.reference.map(read_reference).transpose()?;
    let target = build_target(config, recovery_catalog(config, &catalog, config.seed)?, signal)?;

    let out = config.out_dir();
    config.write_to(&out)?;
    let posterior_dir = out.join(POSTERIOR_DIR);
    let sink = JsonlDirSink::new(&posterior_dir).at(&posterior_dir)?;
    info!(
        "sampling {} ensembles x {} steps over {} sites",
        config.schedule.n_ensembles,
        config.schedule.recorded_per_ensemble(),
        catalog.len()
    );
    let run = engine::run_with_sink(&target, &config.proposal, &config.schedule, child_seed(config.seed, 1), &sink)?;
    write_json(&out.join("kernel_stats.json"), &run.stats)?;
    let truth = manifest.as_ref().map(|m| m.truth_site_ids.clone());
    let report = write_products(
        &out,
        &Products {
            posterior: &run.posterior,
            catalog: &catalog,
            truth: truth.as_deref(),
            target: Some(&target),
            reference: reference.as_deref(),
            baseline_draws: config.proposal.k_max,
            gamma_b_khz: gamma_b(config),
        },
        &config.report,
    )?;
    info!("posterior k mode {}, {} samples after burn-in", report.k_mode, report.n_samples);
    Ok(())
}

/// Reads every `ensemble_<id>.jsonl` in a directory, or a single file.
pub fn load_posterior(path: &Path, burn_in: usize) -> CliResult<PosteriorEnsemble> {
    if path.is_file() {
        return PosteriorEnsemble::load(path, burn_in).at(path);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .at(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("ensemble_") && n.ends_with(".jsonl"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::validation(format!("{} holds no ensemble_<id>.jsonl files", path.display())));
    }
    let mut samples: Vec<Sample> = Vec::new();
    for f in &files {
        let file = std::fs::File::open(f).at(f)?;
        samples.extend(PosteriorEnsemble::read_jsonl(file, 0).at(f)?.raw().iter().cloned());
    }
    Ok(PosteriorEnsemble::new(samples, burn_in)?)
}

pub struct ReportArgs<'a> {
    pub posterior: &'a Path,
    pub signal: Option<&'a Path>,
    pub manifest: Option<&'a Path>,
    pub reference: Option<&'a Path>,
}

pub fn report(config: &RunConfig, args: &ReportArgs) -> CliResult<()> {
    config.validate()?;
    let catalog = config.load_catalog()?;
    let posterior = load_posterior(args.posterior, config.schedule.burn_in)?;
    if posterior.is_empty() {
        return Err(CliError::validation(format!(
            "burn_in = {} leaves no samples in {}",
            config.schedule.burn_in,
            args.posterior.display()
        )));
    }
    if let Some(bad) = posterior.raw().iter().flat_map(|s| &s.site_ids).find(|&&s| s as usize >= catalog.len()) {
        return Err(CliError::validation(format!(
            "posterior refers to site {bad} but the catalog has {} sites",
            catalog.len()
        )));
    }
    let manifest = load_manifest(args.manifest, config)?;
    let reference = args.reference.map(read_reference).transpose()?;
    let target = match args.signal {
        Some(p) => Some(build_target(config, recovery_catalog(config, &catalog, config.seed)?, read_signal(p)?)?),
        None => None,
    };
    let out = config.out_dir();
    config.write_to(&out)?;
    let truth = manifest.as_ref().map(|m| m.truth_site_ids.clone());
    write_products(
        &out,
        &Products {
            posterior: &posterior,
            catalog: &catalog,
            truth: truth.as_deref(),
            target: target.as_ref(),
            reference: reference.as_deref(),
            baseline_draws: config.proposal.k_max,
            gamma_b_khz: gamma_b(config),
        },
        &config.report,
    )?;
    Ok(())
}

#[derive(Debug, Serialize, PartialEq)]
pub struct BaselineRow {
    pub class_size: usize,
    pub at_least_once: f64,
    pub at_least_twice: f64,
}

pub fn baseline_table(n_sites: usize, draws: usize, class_sizes: &[usize]) -> CliResult<Vec<BaselineRow>> {
    if draws > n_sites {
        return Err(CliError::validation(format!("draws = {draws} exceeds n_sites = {n_sites}")));
    }
    class_sizes
        .iter()
        .map(|&m| {
            Ok(BaselineRow {
                class_size: m,
                at_least_once: metrics::baseline_probability(n_sites, draws, m, 1)?,
                at_least_twice: metrics::baseline_probability(n_sites, draws, m, 2)?,
            })
        })
        .collect()
}

pub fn baseline<W: std::io::Write>(n_sites: usize, draws: usize, class_sizes: &[usize], out: W) -> CliResult<()> {
    let rows = baseline_table(n_sites, draws, class_sizes)?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io("<stdout>", e))?;
    }
    w.flush().map_err(|e| CliError::io("<stdout>", e))
}

pub fn catalog(config: &RunConfig) -> CliResult<()> {
    config.validate()?;
    let catalog = config.load_catalog()?;
    let out = config.out_dir();
    config.write_to(&out)?;
    let path = out.join("catalog.csv");
    let file = std::fs::File::create(&path).at(&path)?;
    write_records(file, &catalog.records()).at(&path)?;
    let sizes: Vec<ClassRow> = catalog
        .symmetry_class_sizes()
        .into_iter()
        .map(|(class, size)| {
            let site = catalog.sites().iter().find(|s| s.symmetry_class == class).expect("class has a site");
            ClassRow {
                symmetry_class: class,
                size,
                a_par_khz: site.a_par,
                a_perp_khz: site.a_perp,
                magnitude_khz: site.magnitude(),
            }
        })
        .collect();
    write_csv(&out.join("classes.csv"), sizes)?;
    info!("{} sites in {} symmetry classes", catalog.len(), catalog.n_classes());
    Ok(())
}

#[derive(Serialize)]
struct ClassRow {
    symmetry_class: usize,
    size: usize,
    a_par_khz: f64,
    a_perp_khz: f64,
    magnitude_khz: f64,
}
