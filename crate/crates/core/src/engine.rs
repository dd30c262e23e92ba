//! The hybrid scheduler.
//!
//! Each ensemble starts from an over-dispersed random state and then
//! repeats a cycle of lambda random-walk steps, birth-death steps and
//! tempering sweeps. Every kernel application of the untempered chain is
//! recorded as one sample; burn-in is only dropped when the posterior is
//! read back.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng, ENGINE_LANE, INIT_LANE, STRAND_LANE_BASE};
use crate::samplers::{
    pt_sweep, rjmcmc_step, rwmh_lambda_step, ChainState, ProposalConfig, SpinConfiguration, Step, TemperatureLadder,
};
use crate::target::{BathPosterior, Posterior};

/// Largest initial dimension drawn when no explicit start is given.
pub const INIT_K_LIMIT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Rwmh,
    Rjmcmc,
    Pt,
}

impl Kernel {
    pub fn name(self) -> &'static str {
        match self {
            Kernel::Rwmh => "rwmh",
            Kernel::Rjmcmc => "rjmcmc",
            Kernel::Pt => "pt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Outer cycles per ensemble.
    pub n_total: usize,
    pub n_rwmh: usize,
    pub n_rjmcmc: usize,
    pub n_pt: usize,
    pub n_ensembles: usize,
    /// Recorded samples dropped from the front of every ensemble.
    pub burn_in: usize,
    /// Number of tempering strands, including the untempered one.
    pub n_temperatures: usize,
    pub order: Vec<Kernel>,
    /// Fixed starting lambda instead of a uniform draw on [0.5, 1].
    pub initial_lambda: Option<f64>,
    /// Fixed starting dimension instead of a uniform draw.
    pub initial_k: Option<usize>,
    /// Log a progress line every this many cycles; 0 disables it.
    pub heartbeat: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            n_total: 143,
            n_rwmh: 25,
            n_rjmcmc: 50,
            n_pt: 100,
            n_ensembles: 5,
            burn_in: 10_000,
            n_temperatures: 10,
            order: vec![Kernel::Rwmh, Kernel::Rjmcmc, Kernel::Pt],
            initial_lambda: None,
            initial_k: None,
            heartbeat: 0,
        }
    }
}

impl ScheduleConfig {
    fn count(&self, kernel: Kernel) -> usize {
        match kernel {
            Kernel::Rwmh => self.n_rwmh,
            Kernel::Rjmcmc => self.n_rjmcmc,
            Kernel::Pt => self.n_pt,
        }
    }

    /// Kernel applications per cycle.
    pub fn steps_per_cycle(&self) -> usize {
        self.order.iter().map(|&k| self.count(k)).sum()
    }

    /// Samples recorded per ensemble, counting the initial state.
    pub fn recorded_per_ensemble(&self) -> usize {
        1 + self.n_total * self.steps_per_cycle()
    }

    pub fn ladder(&self) -> Result<TemperatureLadder> {
        TemperatureLadder::geometric(self.n_temperatures)
    }

    pub fn validate(&self, proposal: &ProposalConfig, n_sites: usize) -> Result<()> {
        proposal.validate()?;
        if n_sites == 0 {
            return Err(Error::invalid("the lattice has no sites"));
        }
        if proposal.k_max > n_sites {
            return Err(Error::invalid(format!(
                "k_max = {} exceeds the number of lattice sites ({n_sites})",
                proposal.k_max
            )));
        }
        if self.n_ensembles == 0 {
            return Err(Error::invalid("n_ensembles must be >= 1"));
        }
        if self.n_pt > 0 && self.n_temperatures < 2 {
            return Err(Error::invalid("tempering needs at least two temperatures"));
        }
        let mut seen = self.order.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.order.len() {
            return Err(Error::invalid("a kernel appears twice in the cycle order"));
        }
        for kernel in [Kernel::Rwmh, Kernel::Rjmcmc, Kernel::Pt] {
            if self.count(kernel) > 0 && !self.order.contains(&kernel) {
                return Err(Error::invalid(format!("{} steps requested but missing from the order", kernel.name())));
            }
        }
        if self.burn_in >= self.recorded_per_ensemble() {
            return Err(Error::invalid(format!(
                "burn_in = {} leaves nothing of the {} recorded samples",
                self.burn_in,
                self.recorded_per_ensemble()
            )));
        }
        if let Some(l) = self.initial_lambda {
            if !(l >= proposal.lambda_min && l <= 1.0) {
                return Err(Error::invalid(format!("initial_lambda must lie in [{}, 1]", proposal.lambda_min)));
            }
        }
        if let Some(k) = self.initial_k {
            if k > proposal.k_max {
                return Err(Error::invalid("initial_k exceeds k_max"));
            }
        }
        Ok(())
    }
}

fn ser_loglik<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_some(v)
    } else {
        s.serialize_none()
    }
}

fn de_loglik<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
}

/// One recorded state. A log-likelihood of `-inf` is written as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub ensemble: u32,
    pub step: u64,
    pub k: usize,
    pub lambda: f64,
    pub site_ids: Vec<u32>,
    #[serde(serialize_with = "ser_loglik", deserialize_with = "de_loglik")]
    pub loglik: f64,
}

impl Sample {
    fn of(ensemble: u32, step: u64, state: &ChainState) -> Self {
        Self {
            ensemble,
            step,
            k: state.k(),
            lambda: state.lambda,
            site_ids: state.config.as_slice().to_vec(),
            loglik: state.loglik,
        }
    }
}

/// Recorded samples of all ensembles, ordered by (ensemble, step).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PosteriorEnsemble {
    samples: Vec<Sample>,
    burn_in: usize,
}

impl PosteriorEnsemble {
    pub fn new(mut samples: Vec<Sample>, burn_in: usize) -> Result<Self> {
        samples.sort_by_key(|s| (s.ensemble, s.step));
        for w in samples.windows(2) {
            if w[0].ensemble == w[1].ensemble && w[1].step != w[0].step + 1 {
                return Err(Error::invalid(format!(
                    "ensemble {}: step {} follows step {}",
                    w[1].ensemble, w[1].step, w[0].step
                )));
            }
        }
        for s in &samples {
            if s.k != s.site_ids.len() || s.site_ids.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!("ensemble {} step {}: malformed site list", s.ensemble, s.step)));
            }
        }
        Ok(Self { samples, burn_in })
    }

    /// Every recorded sample, burn-in included.
    pub fn raw(&self) -> &[Sample] {
        &self.samples
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    /// Samples past burn-in. Steps are counted from the first recorded
    /// sample of each ensemble.
    pub fn posterior(&self) -> impl Iterator<Item = &Sample> + '_ {
        let first: BTreeMap<u32, u64> = self.first_steps();
        let burn = self.burn_in as u64;
        self.samples.iter().filter(move |s| s.step >= first[&s.ensemble] + burn)
    }

    fn first_steps(&self) -> BTreeMap<u32, u64> {
        let mut first = BTreeMap::new();
        for s in &self.samples {
            first.entry(s.ensemble).or_insert(s.step);
        }
        first
    }

    pub fn ensembles(&self) -> Vec<u32> {
        self.first_steps().into_keys().collect()
    }

    /// All recorded samples of one ensemble.
    pub fn ensemble(&self, id: u32) -> &[Sample] {
        let lo = self.samples.partition_point(|s| s.ensemble < id);
        let hi = self.samples.partition_point(|s| s.ensemble <= id);
        &self.samples[lo..hi]
    }

    pub fn len(&self) -> usize {
        self.posterior().count()
    }

    pub fn is_empty(&self) -> bool {
        self.posterior().next().is_none()
    }

    /// Post-burn-in count per dimension.
    pub fn k_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for s in self.posterior() {
            *h.entry(s.k).or_insert(0) += 1;
        }
        h
    }

    pub fn write_jsonl<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        for s in &self.samples {
            serde_json::to_writer(&mut out, s)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: std::io::Read>(input: R, burn_in: usize) -> Result<Self> {
        let mut samples = Vec::new();
        for line in BufReader::new(input).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            samples.push(serde_json::from_str(&line)?);
        }
        Self::new(samples, burn_in)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_jsonl(File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>, burn_in: usize) -> Result<Self> {
        Self::read_jsonl(File::open(path)?, burn_in)
    }
}

/// Receives each ensemble's samples as they are produced.
pub trait SampleSink: Sync {
    fn append(&self, ensemble: u32, samples: &[Sample]) -> Result<()>;
}

/// Discards everything.
pub struct NullSink;

impl SampleSink for NullSink {
    fn append(&self, _: u32, _: &[Sample]) -> Result<()> {
        Ok(())
    }
}

/// Appends samples to `ensemble_<id>.jsonl` in a directory, one writer per
/// ensemble, flushed after every cycle.
pub struct JsonlDirSink {
    dir: PathBuf,
    writers: Mutex<BTreeMap<u32, std::sync::Arc<Mutex<BufWriter<File>>>>>,
}

impl JsonlDirSink {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            writers: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn path_for(&self, ensemble: u32) -> PathBuf {
        self.dir.join(format!("ensemble_{ensemble}.jsonl"))
    }

    fn writer(&self, ensemble: u32) -> Result<std::sync::Arc<Mutex<BufWriter<File>>>> {
        let mut map = self.writers.lock().expect("sink registry poisoned");
        if let Some(w) = map.get(&ensemble) {
            return Ok(w.clone());
        }
        let w = std::sync::Arc::new(Mutex::new(BufWriter::new(File::create(self.path_for(ensemble))?)));
        map.insert(ensemble, w.clone());
        Ok(w)
    }
}

impl SampleSink for JsonlDirSink {
    fn append(&self, ensemble: u32, samples: &[Sample]) -> Result<()> {
        let w = self.writer(ensemble)?;
        let mut w = w.lock().expect("sink writer poisoned");
        for s in samples {
            serde_json::to_writer(&mut *w, s)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KernelCounts {
    pub proposed: u64,
    pub accepted: u64,
    /// Applications without an admissible proposal.
    pub stuck: u64,
}

impl KernelCounts {
    fn record(&mut self, step: Step) {
        match step {
            Step::Accepted => {
                self.proposed += 1;
                self.accepted += 1;
            }
            Step::Rejected => self.proposed += 1,
            Step::NoMove => self.stuck += 1,
        }
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KernelStats {
    pub ensemble: u32,
    pub rwmh: KernelCounts,
    pub rjmcmc: KernelCounts,
    /// Site steps of the untempered strand during tempering sweeps.
    pub pt_site: KernelCounts,
    pub swaps: KernelCounts,
    pub best_loglik: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub posterior: PosteriorEnsemble,
    pub stats: Vec<KernelStats>,
}

/// Runs every ensemble and keeps all samples in memory.
pub fn run<P: Posterior + ?Sized>(
    target: &P,
    proposal: &ProposalConfig,
    schedule: &ScheduleConfig,
    seed: u64,
) -> Result<RunOutput> {
    run_with_sink(target, proposal, schedule, seed, &NullSink)
}

/// Like [`run`], additionally streaming each cycle's samples to `sink`.
pub fn run_with_sink<P: Posterior + ?Sized, S: SampleSink>(
    target: &P,
    proposal: &ProposalConfig,
    schedule: &ScheduleConfig,
    seed: u64,
    sink: &S,
) -> Result<RunOutput> {
    schedule.validate(proposal, target.n_sites())?;
    let results: Vec<Result<(Vec<Sample>, KernelStats)>> = (0..schedule.n_ensembles as u32)
        .into_par_iter()
        .map(|e| run_ensemble(target, proposal, schedule, seed, e, sink))
        .collect();
    let mut samples = Vec::with_capacity(schedule.n_ensembles * schedule.recorded_per_ensemble());
    let mut stats = Vec::with_capacity(schedule.n_ensembles);
    for r in results {
        let (s, st) = r?;
        samples.extend(s);
        stats.push(st);
    }
    Ok(RunOutput {
        posterior: PosteriorEnsemble::new(samples, schedule.burn_in)?,
        stats,
    })
}

/// Draws the starting state of one ensemble.
pub fn initial_state<P: Posterior + ?Sized, R: Rng + ?Sized>(
    target: &P,
    proposal: &ProposalConfig,
    schedule: &ScheduleConfig,
    rng: &mut R,
) -> ChainState {
    let n = target.n_sites();
    let k = match schedule.initial_k {
        Some(k) => k,
        None => rng.random_range(0..=INIT_K_LIMIT.min(proposal.k_max).min(n)),
    };
    let sites: Vec<u32> = index::sample(rng, n, k).into_iter().map(|i| i as u32).collect();
    let lambda = match schedule.initial_lambda {
        Some(l) => l,
        None => rng.random_range(0.5..=1.0),
    };
    let config = SpinConfiguration::new(sites).expect("distinct by construction");
    ChainState::new(config, lambda, target)
}

/// Runs a single ensemble. Its random streams depend only on `(seed,
/// ensemble)`, so ensembles are independent of each other and of thread
/// scheduling.
pub fn run_ensemble<P: Posterior + ?Sized, S: SampleSink + ?Sized>(
    target: &P,
    proposal: &ProposalConfig,
    schedule: &ScheduleConfig,
    seed: u64,
    ensemble: u32,
    sink: &S,
) -> Result<(Vec<Sample>, KernelStats)> {
    let e = ensemble as u64;
    let mut init_rng = stream(seed, e, INIT_LANE);
    let mut rng = stream(seed, e, ENGINE_LANE);
    let ladder = schedule.ladder()?;
    let mut strand_rngs: Vec<StreamRng> = (0..ladder.len())
        .map(|j| stream(seed, e, STRAND_LANE_BASE + j as u64))
        .collect();

    let mut state = initial_state(target, proposal, schedule, &mut init_rng);
    let mut samples = Vec::with_capacity(schedule.recorded_per_ensemble());
    let mut step = 0u64;
    samples.push(Sample::of(ensemble, step, &state));
    let mut stats = KernelStats {
        ensemble,
        best_loglik: state.loglik,
        ..Default::default()
    };
    let mut best = (state.config.clone(), state.lambda);
    // Tempered strands persist per dimension so a dimension revisited later
    // resumes where its hot chains left off.
    let mut hot: BTreeMap<usize, Vec<ChainState>> = BTreeMap::new();
    sink.append(ensemble, &samples)?;
    let mut flushed = samples.len();

    let record = |state: &ChainState, samples: &mut Vec<Sample>, step: &mut u64| {
        *step += 1;
        samples.push(Sample::of(ensemble, *step, state));
    };

    for cycle in 0..schedule.n_total {
        for &kernel in &schedule.order {
            match kernel {
                Kernel::Rwmh => {
                    for _ in 0..schedule.n_rwmh {
                        let s = rwmh_lambda_step(&mut state, target, proposal, &mut rng);
                        stats.rwmh.record(s);
                        record(&state, &mut samples, &mut step);
                    }
                }
                Kernel::Rjmcmc => {
                    for _ in 0..schedule.n_rjmcmc {
                        let s = rjmcmc_step(&mut state, target, proposal, &mut rng);
                        stats.rjmcmc.record(s);
                        record(&state, &mut samples, &mut step);
                    }
                }
                Kernel::Pt => {
                    if schedule.n_pt == 0 {
                        continue;
                    }
                    let mut strands = Vec::with_capacity(ladder.len());
                    strands.push(state.clone());
                    match hot.remove(&state.k()) {
                        Some(prev) => strands.extend(prev.into_iter().map(|mut h| {
                            if h.lambda != state.lambda {
                                h.lambda = state.lambda;
                                h.loglik = h.recompute(target);
                            }
                            h
                        })),
                        None => strands.extend(std::iter::repeat_n(state.clone(), ladder.len() - 1)),
                    }
                    for _ in 0..schedule.n_pt {
                        let out = pt_sweep(&mut strands, &ladder, target, &mut strand_rngs, &mut rng)?;
                        stats.pt_site.record(out.steps[0]);
                        stats.swaps.record(if out.swapped { Step::Accepted } else { Step::Rejected });
                        record(&strands[0], &mut samples, &mut step);
                    }
                    let mut it = strands.into_iter();
                    state = it.next().expect("cold strand");
                    hot.insert(state.k(), it.collect());
                }
            }
        }
        for s in &samples[flushed..] {
            if s.loglik > stats.best_loglik {
                stats.best_loglik = s.loglik;
                best = (SpinConfiguration::new(s.site_ids.clone())?, s.lambda);
            }
        }
        sink.append(ensemble, &samples[flushed..])?;
        flushed = samples.len();
        if schedule.heartbeat > 0 && (cycle + 1) % schedule.heartbeat == 0 {
            let err = target
                .residual_error(best.0.as_slice(), best.1)
                .map_or_else(|| "n/a".to_string(), |v| format!("{v:.3e}"));
            log::info!(
                "ensemble {ensemble} cycle {} step {step}: best error {err}, k = {}, accept rwmh {:.3} rjmcmc {:.3} pt {:.3} swap {:.3}",
                cycle + 1,
                state.k(),
                stats.rwmh.rate(),
                stats.rjmcmc.rate(),
                stats.pt_site.rate(),
                stats.swaps.rate(),
            );
        }
    }
    Ok((samples, stats))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMetric {
    #[default]
    Absolute,
    Squared,
}

/// Per-sample mean residual between model and data, per ensemble, over all
/// recorded samples (burn-in included).
pub fn error_trace(
    posterior: &PosteriorEnsemble,
    target: &BathPosterior,
    metric: ErrorMetric,
) -> BTreeMap<u32, Vec<(u64, f64)>> {
    let data = &target.data().values;
    let n = data.len() as f64;
    let per_sample = |s: &Sample| {
        let model = target.model_signal(&s.site_ids, s.lambda);
        let total: f64 = model
            .iter()
            .zip(data)
            .map(|(f, d)| match metric {
                ErrorMetric::Absolute => (f - d).abs(),
                ErrorMetric::Squared => (f - d) * (f - d),
            })
            .sum();
        (s.step, total / n)
    };
    posterior
        .ensembles()
        .into_par_iter()
        .map(|e| (e, posterior.ensemble(e).iter().map(per_sample).collect()))
        .collect()
}
