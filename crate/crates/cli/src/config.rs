//! The declarative run configuration and its `key=value` overrides.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use spinbath_core::catalog::{load_catalog, DEFAULT_CUTOFF_KHZ};
use spinbath_core::datagen::diamond::{self, DiamondConfig};
use spinbath_core::datagen::ScenarioSettings;
use spinbath_core::metrics::ReportOptions;
use spinbath_core::{LatticeCatalog, LikelihoodConfig, ProposalConfig, ScheduleConfig, SignalMode};
use toml::{Table, Value};

use crate::error::{CliError, CliResult, WithPath};

/// Environment variable naming the default catalog file.
pub const CATALOG_ENV: &str = "SPINBATH_CATALOG";

/// Name of the resolved configuration written into every output directory.
pub const RESOLVED_CONFIG: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogConfig {
    /// Catalog CSV. Falls back to `$SPINBATH_CATALOG`, then to the generated
    /// diamond lattice.
    pub path: Option<PathBuf>,
    pub cutoff_khz: f64,
    /// Used only when no catalog file is given.
    pub diamond: DiamondConfig,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        Self {
            path: None,
            cutoff_khz: DEFAULT_CUTOFF_KHZ,
            diamond: DiamondConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Synthetic scenarios per sweep value.
    pub n_scenarios: usize,
    /// Each scenario's bath size is drawn uniformly from `k_min..=k_max`.
    pub k_min: usize,
    pub k_max: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_scenarios: 16,
            k_min: 5,
            k_max: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    pub workers: Option<usize>,
    pub mode: SignalMode,
    pub catalog: CatalogConfig,
    pub scenario: ScenarioSettings,
    pub likelihood: LikelihoodConfig,
    pub proposal: ProposalConfig,
    pub schedule: ScheduleConfig,
    pub report: ReportOptions,
    pub sweep: SweepConfig,
}

impl RunConfig {
    /// Parses `text` as TOML, applies the overrides in order and
    /// deserializes the result.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> CliResult<Self> {
        let mut table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::validation(format!("config: {e}")))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::validation(format!("config: {}", e.message())))
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).at(p)?,
            None => String::new(),
        };
        Self::from_toml_with(&text, overrides)
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::Runtime(format!("cannot serialize config: {e}")))
    }

    /// Checks everything that does not depend on the catalog.
    pub fn validate(&self) -> CliResult<()> {
        self.mode.validate()?;
        self.scenario.validate()?;
        self.likelihood.validate()?;
        self.proposal.validate()?;
        if self.workers == Some(0) {
            return Err(CliError::validation("workers must be >= 1"));
        }
        if !(self.catalog.cutoff_khz >= 0.0) {
            return Err(CliError::validation("catalog.cutoff_khz must be >= 0"));
        }
        if self.report.lambda_bins == 0 {
            return Err(CliError::validation("report.lambda_bins must be >= 1"));
        }
        if self.sweep.n_scenarios == 0 || self.sweep.k_min == 0 || self.sweep.k_min > self.sweep.k_max {
            return Err(CliError::validation("sweep needs n_scenarios >= 1 and 1 <= k_min <= k_max"));
        }
        Ok(())
    }

    /// Checks the sampler settings against a concrete lattice.
    pub fn validate_for(&self, catalog: &LatticeCatalog) -> CliResult<()> {
        self.validate()?;
        self.schedule.validate(&self.proposal, catalog.len())?;
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn catalog_path(&self) -> Option<PathBuf> {
        self.catalog
            .path
            .clone()
            .or_else(|| std::env::var_os(CATALOG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
    }

    /// Loads or generates the lattice with the neighbour radius set to the
    /// site walk radius.
    pub fn load_catalog(&self) -> CliResult<Arc<LatticeCatalog>> {
        let radius = self.proposal.r_spin;
        let catalog = match self.catalog_path() {
            Some(path) => load_catalog(&path, self.catalog.cutoff_khz, radius).at(&path)?,
            None => {
                let records = diamond::generate(&self.catalog.diamond)?;
                LatticeCatalog::from_records(&records, self.catalog.cutoff_khz, radius)?
            }
        };
        Ok(Arc::new(catalog))
    }

    /// Writes the resolved configuration into `dir`.
    pub fn write_to(&self, dir: &Path) -> CliResult<()> {
        std::fs::create_dir_all(dir).at(dir)?;
        let path = dir.join(RESOLVED_CONFIG);
        std::fs::write(&path, self.to_toml()?).at(&path)
    }
}

/// Applies one `a.b.c=value` override. The value is read as a TOML value
/// when it parses as one and as a bare string otherwise.
pub fn apply_override(table: &mut Table, item: &str) -> CliResult<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::validation(format!("override `{item}` is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').map(str::trim).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::validation(format!("override `{item}` has an empty key segment")));
    }
    let value = parse_value(raw.trim());
    let (last, parents) = path.split_last().expect("split yields one segment");
    let mut node = table;
    for p in parents {
        let entry = node.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::validation(format!("override `{item}`: `{p}` is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use spinbath_core::LikelihoodMode;

    #[test]
    fn empty_config_is_the_default() {
        assert_eq!(RunConfig::from_toml_with("", &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = RunConfig::from_toml_with(
            "seed = 3\n[scenario]\nn_tau = 40\n",
            &[
                "scenario.n_tau=80".into(),
                "likelihood.mode=wasserstein_mixed".into(),
                "mode.kind=envelope".into(),
                "mode.lambda_scale_ms=0.05".into(),
                "schedule.order=[\"pt\", \"rwmh\"]".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.scenario.n_tau, 80);
        assert_eq!(cfg.likelihood.mode, LikelihoodMode::WassersteinMixed);
        assert_eq!(cfg.mode, SignalMode::Envelope { lambda_scale_ms: 0.05 });
        assert_eq!(cfg.schedule.order.len(), 2);
    }

    #[test]
    fn unknown_and_malformed_keys_are_rejected() {
        for bad in ["scenario.n_taus=3", "proposal.rspin=2", "seed", "scenario..n_tau=1", "seed=\"x\""] {
            let err = RunConfig::from_toml_with("", &[bad.into()]).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{bad}");
        }
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.seed = 99;
        cfg.out = Some("runs/a".into());
        cfg.mode = SignalMode::Envelope { lambda_scale_ms: 0.01 };
        cfg.schedule.initial_lambda = Some(0.7);
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml_with(&text, &[]).unwrap(), cfg);
    }

    #[test]
    fn validation_catches_inconsistent_sweeps() {
        let mut cfg = RunConfig::default();
        cfg.sweep.k_min = 9;
        cfg.sweep.k_max = 3;
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::from_toml_with("", &["scenario.n_tau=0".into()]).unwrap();
        assert!(cfg.validate().is_err());
    }
}
