//! Single-step MCMC kernels acting on a [`ChainState`].
//!
//! - [`rwmh_lambda_step`]: random walk on the decoherence parameter with
//!   reflecting walls.
//! - [`rwmh_site_step`]: moves one occupied site to a free neighbour.
//! - [`rjmcmc_step`]: birth or death of one spin.
//! - [`pt_sweep`]: one site step per tempered strand followed by one swap
//!   attempt between a random pair of strands.

mod jump;
mod lambda;
mod site;
mod tempering;

pub use jump::rjmcmc_step;
pub use lambda::{reflect, rwmh_lambda_step};
pub use site::rwmh_site_step;
pub use tempering::{pt_sweep, swap_log_acceptance, SweepOutcome};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::LAMBDA_MIN;
use crate::target::Posterior;

/// Occupied site ids, sorted and pairwise distinct.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpinConfiguration(Vec<u32>);

impl SpinConfiguration {
    pub fn new(mut sites: Vec<u32>) -> Result<Self> {
        sites.sort_unstable();
        if sites.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("a lattice site can hold at most one spin"));
        }
        Ok(Self(sites))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn contains(&self, site: u32) -> bool {
        self.0.binary_search(&site).is_ok()
    }

    pub(crate) fn insert(&mut self, site: u32) {
        if let Err(at) = self.0.binary_search(&site) {
            self.0.insert(at, site);
        }
    }

    pub(crate) fn remove_at(&mut self, index: usize) -> u32 {
        self.0.remove(index)
    }

    /// Number of entries of `candidates` (sorted) not occupied here.
    pub(crate) fn count_free(&self, candidates: &[u32]) -> usize {
        candidates.len() - self.0.iter().filter(|s| candidates.binary_search(s).is_ok()).count()
    }
}

impl From<SpinConfiguration> for Vec<u32> {
    fn from(c: SpinConfiguration) -> Self {
        c.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub config: SpinConfiguration,
    pub lambda: f64,
    /// Log-likelihood of (config, lambda) at inverse temperature one.
    pub loglik: f64,
}

impl ChainState {
    pub fn new<P: Posterior + ?Sized>(config: SpinConfiguration, lambda: f64, target: &P) -> Self {
        let loglik = target.log_likelihood(config.as_slice(), lambda);
        Self { config, lambda, loglik }
    }

    pub fn k(&self) -> usize {
        self.config.len()
    }

    /// Re-evaluates the likelihood from scratch.
    pub fn recompute<P: Posterior + ?Sized>(&self, target: &P) -> f64 {
        target.log_likelihood(self.config.as_slice(), self.lambda)
    }
}

/// Prior over spin configurations. Both choices are uniform among the
/// configurations of a given size.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionPrior {
    /// Every dimension `0..=k_max` carries equal mass, `p(c) ~ 1 / C(n, k)`.
    /// The birth-death ratio then reduces to likelihood ratio times the
    /// dimension-kernel ratio.
    #[default]
    UniformDimension,
    /// Every configuration carries equal mass, so the dimension marginal
    /// is `~ C(n, k)` before the data are seen.
    UniformSets,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposalConfig {
    /// Discrete walk radius, Å.
    pub r_spin: f64,
    /// Continuous walk radius on lambda.
    pub r_lambda: f64,
    pub k_max: usize,
    /// Probability of proposing a birth away from the boundaries.
    pub birth_prob: f64,
    /// Lower reflecting wall for lambda.
    pub lambda_min: f64,
    pub dimension_prior: DimensionPrior,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            r_spin: 5.0,
            r_lambda: 0.05,
            k_max: 50,
            birth_prob: 0.5,
            lambda_min: LAMBDA_MIN,
            dimension_prior: DimensionPrior::default(),
        }
    }
}

impl ProposalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_spin > 0.0) {
            return Err(Error::invalid("r_spin must be > 0"));
        }
        if !(self.r_lambda > 0.0 && self.r_lambda < 1.0) {
            return Err(Error::invalid("r_lambda must lie in (0, 1)"));
        }
        if self.k_max < 1 {
            return Err(Error::invalid("k_max must be >= 1"));
        }
        if !(self.birth_prob > 0.0 && self.birth_prob < 1.0) {
            return Err(Error::invalid("birth_prob must lie in (0, 1)"));
        }
        if !(self.lambda_min >= LAMBDA_MIN && self.lambda_min < 1.0) {
            return Err(Error::invalid(format!("lambda_min must lie in [{LAMBDA_MIN}, 1)")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TemperatureLadder {
    betas: Vec<f64>,
}

impl TemperatureLadder {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.first() != Some(&1.0) {
            return Err(Error::invalid("the first inverse temperature must be exactly 1"));
        }
        if betas.iter().any(|&b| !(b > 0.0)) {
            return Err(Error::invalid("inverse temperatures must be positive"));
        }
        if betas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("inverse temperatures must be strictly decreasing"));
        }
        Ok(Self { betas })
    }

    /// `beta_j = 2^-(j-1)`, j = 1..=n.
    pub fn geometric(n: usize) -> Result<Self> {
        Self::new((0..n).map(|j| 0.5f64.powi(j as i32)).collect())
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }
}

impl Default for TemperatureLadder {
    fn default() -> Self {
        Self::geometric(10).expect("static ladder")
    }
}

/// Metropolis decision for a log acceptance ratio. Always consumes exactly
/// one uniform draw.
#[inline]
pub(crate) fn metropolis<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    !log_ratio.is_nan() && u < log_ratio.exp()
}

/// `min(1, exp(log_ratio))`.
pub fn acceptance_probability(log_ratio: f64) -> f64 {
    if log_ratio.is_nan() {
        0.0
    } else {
        log_ratio.exp().min(1.0)
    }
}

/// Result of a single kernel application.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Accepted,
    Rejected,
    /// No admissible proposal existed; the state is unchanged.
    NoMove,
}

impl Step {
    pub fn accepted(self) -> bool {
        self == Step::Accepted
    }
}
