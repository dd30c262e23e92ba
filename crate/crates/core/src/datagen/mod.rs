//! Synthetic experiments: ground-truth baths, noisy coherence data and
//! perturbed catalogs.

pub mod diamond;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::catalog::LatticeCatalog;
use crate::error::{Error, Result};
use crate::forward::{coherence_signal, DecoherenceParam, ExperimentSpec, SignalMode, SpinBath, GAMMA_13C_KHZ_PER_G};
use crate::likelihood::ObservedSignal;
use crate::samplers::SpinConfiguration;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauSampling {
    /// `tau_j = j * tau_max / n_tau`, j = 1..=n_tau.
    #[default]
    Even,
    /// Sorted i.i.d. uniform draws on (0, tau_max].
    Uniform,
}

/// Everything needed to draw a synthetic experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSettings {
    pub k_true: usize,
    /// Fixed truth lambda; drawn uniformly on [0.5, 1] when absent.
    pub lambda_true: Option<f64>,
    pub n_pulses: u32,
    /// Gauss.
    pub b_field: f64,
    pub noise_sd: f64,
    pub n_tau: usize,
    pub tau_max_ms: f64,
    pub tau_sampling: TauSampling,
    /// Hyperfine perturbation applied to the recovery catalog, kHz.
    pub delta_khz: f64,
}

impl Default for ScenarioSettings {
    fn default() -> Self {
        Self {
            k_true: 10,
            lambda_true: None,
            n_pulses: 16,
            b_field: 311.0,
            noise_sd: 0.001,
            n_tau: 250,
            tau_max_ms: 0.008,
            tau_sampling: TauSampling::Even,
            delta_khz: 0.0,
        }
    }
}

impl ScenarioSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_tau == 0 {
            return Err(Error::invalid("n_tau must be >= 1"));
        }
        if !(self.tau_max_ms > 0.0 && self.tau_max_ms.is_finite()) {
            return Err(Error::invalid("tau_max_ms must be > 0"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::invalid("noise_sd must be >= 0"));
        }
        if !(self.delta_khz >= 0.0 && self.delta_khz.is_finite()) {
            return Err(Error::invalid("delta_khz must be >= 0"));
        }
        if let Some(l) = self.lambda_true {
            DecoherenceParam::new(l)?;
        }
        Ok(())
    }
}

/// A drawn experiment: the truth plus the measurement settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScenario {
    pub truth: SpinConfiguration,
    pub lambda_true: f64,
    pub spec: ExperimentSpec,
    pub mode: SignalMode,
    pub noise_sd: f64,
    pub n_tau: usize,
    pub tau_max_ms: f64,
    pub tau_sampling: TauSampling,
    pub delta_khz: f64,
}

/// `k_true` distinct sites, uniformly without replacement.
pub fn sample_bath<R: Rng + ?Sized>(catalog: &LatticeCatalog, k_true: usize, rng: &mut R) -> Result<SpinConfiguration> {
    if k_true > catalog.len() {
        return Err(Error::invalid(format!(
            "cannot place {k_true} spins on {} sites",
            catalog.len()
        )));
    }
    SpinConfiguration::new(index::sample(rng, catalog.len(), k_true).into_iter().map(|i| i as u32).collect())
}

pub fn tau_grid<R: Rng + ?Sized>(n_tau: usize, tau_max_ms: f64, sampling: TauSampling, rng: &mut R) -> Vec<f64> {
    match sampling {
        TauSampling::Even => (1..=n_tau).map(|j| tau_max_ms * j as f64 / n_tau as f64).collect(),
        TauSampling::Uniform => {
            // 1 - U lies in (0, 1]
            let mut t: Vec<f64> = (0..n_tau).map(|_| tau_max_ms * (1.0 - rng.random::<f64>())).collect();
            t.sort_by(f64::total_cmp);
            t
        }
    }
}

impl SyntheticScenario {
    /// Draws truth, lambda and the tau grid, in that order.
    pub fn draw<R: Rng + ?Sized>(
        settings: &ScenarioSettings,
        mode: SignalMode,
        catalog: &LatticeCatalog,
        rng: &mut R,
    ) -> Result<Self> {
        let truth = sample_bath(catalog, settings.k_true, rng)?;
        Self::with_truth(settings, mode, truth, rng)
    }

    /// Like [`draw`](Self::draw) with a given truth configuration.
    pub fn with_truth<R: Rng + ?Sized>(
        settings: &ScenarioSettings,
        mode: SignalMode,
        truth: SpinConfiguration,
        rng: &mut R,
    ) -> Result<Self> {
        settings.validate()?;
        mode.validate()?;
        let lambda_true = match settings.lambda_true {
            Some(l) => l,
            None => rng.random_range(0.5..=1.0),
        };
        let tau = tau_grid(settings.n_tau, settings.tau_max_ms, settings.tau_sampling, rng);
        Ok(Self {
            truth,
            lambda_true,
            spec: ExperimentSpec::new(settings.n_pulses, settings.b_field, tau)?,
            mode,
            noise_sd: settings.noise_sd,
            n_tau: settings.n_tau,
            tau_max_ms: settings.tau_max_ms,
            tau_sampling: settings.tau_sampling,
            delta_khz: settings.delta_khz,
        })
    }

    pub fn truth_couplings(&self, catalog: &LatticeCatalog) -> Vec<(f64, f64)> {
        self.truth
            .as_slice()
            .iter()
            .map(|&s| {
                let site = catalog.site(s as usize);
                (site.a_par, site.a_perp)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub signal: ObservedSignal,
    pub clean: Vec<f64>,
    pub manifest: Manifest,
}

/// Clean forward-model signal plus i.i.d. Gaussian noise.
pub fn synthesize<R: Rng + ?Sized>(
    scenario: &SyntheticScenario,
    catalog: &LatticeCatalog,
    seed: u64,
    rng: &mut R,
) -> Result<SyntheticData> {
    let manifest = Manifest {
        seed,
        truth_site_ids: scenario.truth.as_slice().to_vec(),
        truth_couplings_khz: scenario.truth_couplings(catalog),
        lambda_true: scenario.lambda_true,
        n_pulses: scenario.spec.n_pulses,
        b_field: scenario.spec.b_field,
        gamma_n: scenario.spec.gamma_n,
        mode: scenario.mode,
        noise_sd: scenario.noise_sd,
        n_tau: scenario.n_tau,
        tau_max_ms: scenario.tau_max_ms,
        tau_sampling: scenario.tau_sampling,
        delta_khz: scenario.delta_khz,
        tau_ms: scenario.spec.tau_grid.clone(),
    };
    let clean = manifest.clean_signal()?;
    let values = if scenario.noise_sd > 0.0 {
        let normal = Normal::new(0.0, scenario.noise_sd).map_err(|e| Error::invalid(e.to_string()))?;
        clean.iter().map(|c| c + normal.sample(rng)).collect()
    } else {
        clean.clone()
    };
    Ok(SyntheticData {
        signal: ObservedSignal::new(scenario.spec.tau_grid.clone(), values)?,
        clean,
        manifest,
    })
}

/// Ground truth and generation settings of a synthetic data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub truth_site_ids: Vec<u32>,
    pub truth_couplings_khz: Vec<(f64, f64)>,
    pub lambda_true: f64,
    pub n_pulses: u32,
    pub b_field: f64,
    pub gamma_n: f64,
    pub mode: SignalMode,
    pub noise_sd: f64,
    pub n_tau: usize,
    pub tau_max_ms: f64,
    pub tau_sampling: TauSampling,
    pub delta_khz: f64,
    pub tau_ms: Vec<f64>,
}

impl Manifest {
    pub fn spec(&self) -> Result<ExperimentSpec> {
        let mut spec = ExperimentSpec::new(self.n_pulses, self.b_field, self.tau_ms.clone())?;
        spec.gamma_n = self.gamma_n;
        Ok(spec)
    }

    /// Recomputes the noiseless signal from the recorded truth.
    pub fn clean_signal(&self) -> Result<Vec<f64>> {
        coherence_signal(
            &SpinBath::new(self.truth_couplings_khz.clone())?,
            DecoherenceParam::new(self.lambda_true)?,
            &self.spec()?,
            self.mode,
        )
    }

    pub fn truth(&self) -> Result<SpinConfiguration> {
        SpinConfiguration::new(self.truth_site_ids.clone())
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            seed: 0,
            truth_site_ids: Vec::new(),
            truth_couplings_khz: Vec::new(),
            lambda_true: 1.0,
            n_pulses: 16,
            b_field: 311.0,
            gamma_n: GAMMA_13C_KHZ_PER_G,
            mode: SignalMode::Verbatim,
            noise_sd: 0.0,
            n_tau: 0,
            tau_max_ms: 0.008,
            tau_sampling: TauSampling::Even,
            delta_khz: 0.0,
            tau_ms: Vec::new(),
        }
    }
}

/// Shifts every coupling component by an independent `+-delta`. Site ids
/// and positions are kept so that ids stay comparable with `catalog`.
/// A perpendicular component smaller than `delta` is always shifted up so
/// that it stays non-negative.
pub fn perturb_catalog<R: Rng + ?Sized>(catalog: &LatticeCatalog, delta_khz: f64, rng: &mut R) -> Result<LatticeCatalog> {
    if !(delta_khz >= 0.0 && delta_khz.is_finite()) {
        return Err(Error::invalid("delta_khz must be >= 0"));
    }
    if delta_khz == 0.0 {
        return Ok(catalog.clone());
    }
    let mut sign = || if rng.random::<bool>() { 1.0 } else { -1.0 };
    let couplings: Vec<(f64, f64)> = catalog
        .sites()
        .iter()
        .map(|s| {
            let a_par = s.a_par + sign() * delta_khz;
            let up = sign();
            let a_perp = if s.a_perp < delta_khz { s.a_perp + delta_khz } else { s.a_perp + up * delta_khz };
            (a_par, a_perp)
        })
        .collect();
    catalog.with_couplings(&couplings)
}
