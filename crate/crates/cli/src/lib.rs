//! Command-line front end: synthetic data, recovery, sweeps and reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod products;
pub mod sweep;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use sweep::Axis;

#[derive(Debug, Parser)]
#[command(name = "spinbath", version, about = "Bayesian recovery of nuclear spin baths from CPMG coherence data")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// `key=value` override of a configuration entry, e.g. `scenario.n_tau=100`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Hyperfine catalog CSV.
    #[arg(long, global = true)]
    pub catalog: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic bath and write its noisy signal and manifest.
    Generate,
    /// Sample the bath posterior of an observed signal.
    Recover {
        #[arg(long)]
        signal: PathBuf,
        /// Manifest of a synthetic signal; enables detection metrics.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Reference spin table to compare against.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Vary one setting over a batch of synthetic scenarios.
    Sweep {
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        values: Vec<f64>,
    },
    /// Recompute metrics from stored posterior samples.
    Report {
        /// An `ensemble_<id>.jsonl` file or a directory of them.
        #[arg(long)]
        posterior: PathBuf,
        #[arg(long)]
        signal: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Samples to discard per ensemble; defaults to `schedule.burn_in`.
        #[arg(long)]
        burn_in: Option<usize>,
    },
    /// Chance probability of drawing a symmetry class by uniform sampling.
    Baseline {
        #[arg(long, default_value_t = 3518)]
        n_sites: usize,
        #[arg(long, default_value_t = 50)]
        draws: usize,
        #[arg(long, value_delimiter = ',', default_value = "3,6,9,12")]
        class_sizes: Vec<usize>,
    },
    /// Write the resolved lattice catalog and its symmetry classes.
    Catalog,
    /// Print the resolved configuration.
    Config,
}

impl Cli {
    /// Configuration file, then `--set` overrides, then the dedicated flags.
    pub fn resolve_config(&self) -> CliResult<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref(), &self.set)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        if let Some(w) = self.workers {
            cfg.workers = Some(w);
        }
        if let Some(c) = &self.catalog {
            cfg.catalog.path = Some(c.clone());
        }
        if let Command::Report { burn_in: Some(b), .. } = self.command {
            cfg.schedule.burn_in = b;
        }
        Ok(cfg)
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let cfg = cli.resolve_config()?;
    cfg.validate()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;
    pool.install(|| dispatch(&cli.command, &cfg))
}

fn dispatch(command: &Command, cfg: &RunConfig) -> CliResult<()> {
    match command {
        Command::Generate => commands::generate(cfg),
        Command::Recover { signal, manifest, reference } => commands::recover(
            cfg,
            &commands::RecoverArgs {
                signal,
                manifest: manifest.as_deref(),
                reference: reference.as_deref(),
            },
        ),
        Command::Sweep { axis, values } => sweep::sweep(cfg, *axis, values).map(|_| ()),
        Command::Report {
            posterior,
            signal,
            manifest,
            reference,
            ..
        } => commands::report(
            cfg,
            &commands::ReportArgs {
                posterior,
                signal: signal.as_deref(),
                manifest: manifest.as_deref(),
                reference: reference.as_deref(),
            },
        ),
        Command::Baseline { n_sites, draws, class_sizes } => commands::baseline(*n_sites, *draws, class_sizes, std::io::stdout().lock()),
        Command::Catalog => commands::catalog(cfg),
        Command::Config => {
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
    }
}
