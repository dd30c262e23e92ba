//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use spinbath_core::catalog::SiteRecord;
use spinbath_core::datagen::{diamond, sample_bath, synthesize, ScenarioSettings, SyntheticData, SyntheticScenario};
use spinbath_core::engine::{self, RunOutput};
use spinbath_core::rng::{child_seed, stream};
use spinbath_core::{
    BathPosterior, DimensionPrior, ExperimentSpec, LatticeCatalog, LikelihoodConfig, ObservedSignal, Posterior, ProposalConfig,
    ScheduleConfig, SignalMode, SpinConfiguration,
};

/// Slow envelope: spin modulation survives across the whole tau window.
pub const ENVELOPE_SPINS: SignalMode = SignalMode::Envelope { lambda_scale_ms: 0.05 };
/// Fast envelope: the decay itself is resolved, so lambda is identifiable.
pub const ENVELOPE_LAMBDA: SignalMode = SignalMode::Envelope { lambda_scale_ms: 0.01 };
pub const STRONG_KHZ: f64 = 150.0;

/// The synthetic diamond catalog with the default cutoff and radius.
pub fn diamond_catalog() -> Arc<LatticeCatalog> {
    static CATALOG: OnceLock<Arc<LatticeCatalog>> = OnceLock::new();
    CATALOG
        .get_or_init(|| {
            let records = diamond::generate(&diamond::DiamondConfig::default()).unwrap();
            Arc::new(LatticeCatalog::from_records(&records, 5.0, 5.0).unwrap())
        })
        .clone()
}

pub fn strong_count(catalog: &LatticeCatalog, truth: &SpinConfiguration) -> usize {
    truth
        .as_slice()
        .iter()
        .filter(|&&s| catalog.site(s as usize).magnitude() > STRONG_KHZ)
        .count()
}

/// Uniform bath redrawn until it holds at least `min_strong` spins above
/// 150 kHz.
pub fn bath_with_strong<R: Rng>(catalog: &LatticeCatalog, k: usize, min_strong: usize, rng: &mut R) -> SpinConfiguration {
    loop {
        let truth = sample_bath(catalog, k, rng).unwrap();
        if strong_count(catalog, &truth) >= min_strong {
            return truth;
        }
    }
}

pub struct Experiment {
    pub catalog: Arc<LatticeCatalog>,
    pub truth: SpinConfiguration,
    pub data: SyntheticData,
    pub target: BathPosterior,
}

pub fn experiment(
    catalog: Arc<LatticeCatalog>,
    truth: SpinConfiguration,
    settings: &ScenarioSettings,
    mode: SignalMode,
    likelihood: LikelihoodConfig,
    seed: u64,
) -> Experiment {
    let mut rng = stream(seed, 0, 0);
    let scenario = SyntheticScenario::with_truth(settings, mode, truth.clone(), &mut rng).unwrap();
    let data = synthesize(&scenario, &catalog, seed, &mut rng).unwrap();
    let target = BathPosterior::new(catalog.clone(), scenario.spec.clone(), mode, data.signal.clone(), likelihood).unwrap();
    Experiment {
        catalog,
        truth,
        data,
        target,
    }
}

/// Two ensembles of about 10^4 recorded steps, 40 % burn-in.
pub fn desk_schedule() -> ScheduleConfig {
    ScheduleConfig {
        n_total: 57,
        n_ensembles: 2,
        burn_in: 4_000,
        ..Default::default()
    }
}

pub fn recover(exp: &Experiment, schedule: &ScheduleConfig, seed: u64) -> RunOutput {
    engine::run(&exp.target, &ProposalConfig::default(), schedule, child_seed(seed, 1)).unwrap()
}

/// Six sites on a line 1 Å apart with distinct couplings.
pub fn six_site_catalog() -> Arc<LatticeCatalog> {
    let couplings = [(-120.0, 60.0), (45.0, 30.0), (210.0, 90.0), (-60.0, 25.0), (15.0, 75.0), (90.0, 140.0)];
    let records: Vec<SiteRecord> = couplings
        .iter()
        .enumerate()
        .map(|(i, &(a_par, a_perp))| SiteRecord {
            position: [i as f64, 0.0, 0.0],
            a_par,
            a_perp,
        })
        .collect();
    Arc::new(LatticeCatalog::from_records(&records, 5.0, 2.5).unwrap())
}

/// Every configuration of at most `k_max` sites out of `n`.
pub fn all_configurations(n: u32, k_max: usize) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..k_max {
        let mut next = Vec::new();
        for c in &frontier {
            let start = c.last().map_or(0, |&l: &u32| l + 1);
            for s in start..n {
                let mut d: Vec<u32> = c.clone();
                d.push(s);
                next.push(d);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// `ln C(n, k)`.
pub fn ln_choose(n: usize, k: usize) -> f64 {
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// Log prior mass of one configuration of size `k`, up to a constant.
pub fn log_prior(prior: DimensionPrior, n: usize, k: usize) -> f64 {
    match prior {
        DimensionPrior::UniformDimension => -ln_choose(n, k),
        DimensionPrior::UniformSets => 0.0,
    }
}

/// Exact posterior over `configs` at fixed lambda.
pub fn enumerate_posterior<P: Posterior>(
    target: &P,
    prior: DimensionPrior,
    configs: &[Vec<u32>],
    lambda: f64,
) -> HashMap<Vec<u32>, f64> {
    let n = target.n_sites();
    let logs: Vec<f64> = configs
        .iter()
        .map(|c| target.log_likelihood(c, lambda) + log_prior(prior, n, c.len()))
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    configs
        .iter()
        .zip(&logs)
        .map(|(c, l)| (c.clone(), (l - max).exp() / z))
        .collect()
}

pub fn total_variation(p: &HashMap<Vec<u32>, f64>, q: &HashMap<Vec<u32>, f64>) -> f64 {
    let mut keys: Vec<&Vec<u32>> = p.keys().chain(q.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// The six-site problem: verbatim signal of a one-spin truth at lambda 0.5.
pub fn six_site_target(sigma2: f64) -> BathPosterior {
    let catalog = six_site_catalog();
    let tau: Vec<f64> = (1..=100).map(|j| 0.008 * j as f64 / 100.0).collect();
    let spec = ExperimentSpec::new(16, 311.0, tau.clone()).unwrap();
    let clean = BathPosterior::new(
        catalog.clone(),
        spec.clone(),
        SignalMode::Verbatim,
        ObservedSignal::new(tau.clone(), vec![1.0; tau.len()]).unwrap(),
        LikelihoodConfig::default(),
    )
    .unwrap()
    .model_signal(&[2], 0.5);
    let mut rng = stream(42, 0, 0);
    let noisy: Vec<f64> = clean.iter().map(|v| v + 2e-4 * (rng.random::<f64>() - 0.5)).collect();
    BathPosterior::new(
        catalog,
        spec,
        SignalMode::Verbatim,
        ObservedSignal::new(tau, noisy).unwrap(),
        LikelihoodConfig { sigma2, ..Default::default() },
    )
    .unwrap()
}

/// A posterior whose likelihood ignores the data.
pub struct Flat<'a, P: Posterior>(pub &'a P);

impl<P: Posterior> Posterior for Flat<'_, P> {
    fn n_sites(&self) -> usize {
        self.0.n_sites()
    }
    fn neighbors(&self, site: usize) -> &[u32] {
        self.0.neighbors(site)
    }
    fn log_likelihood(&self, _: &[u32], _: f64) -> f64 {
        0.0
    }
}

pub fn settings(n_tau: usize, noise_sd: f64) -> ScenarioSettings {
    ScenarioSettings {
        n_tau,
        noise_sd,
        ..Default::default()
    }
}

pub fn empirical(samples: impl Iterator<Item = Vec<u32>>) -> HashMap<Vec<u32>, f64> {
    let mut counts: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut n = 0usize;
    for s in samples {
        *counts.entry(s).or_default() += 1;
        n += 1;
    }
    counts.into_iter().map(|(k, c)| (k, c as f64 / n as f64)).collect()
}
