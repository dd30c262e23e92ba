//! The posterior the samplers explore.
//!
//! Kernels only see the [`Posterior`] trait: a discrete domain with a
//! neighbour structure plus a log-likelihood over (occupied sites, lambda).
//! [`BathPosterior`] is the spin-bath instance, backed by a table of
//! per-site modulation values over the tau grid so that evaluating a
//! configuration costs `k * n_tau` multiplications.

use std::sync::Arc;

use crate::catalog::LatticeCatalog;
use crate::error::{Error, Result};
use crate::forward::{angular, modulation, ExperimentSpec, SignalMode};
use crate::likelihood::{self, LikelihoodConfig, ObservedSignal};

pub trait Posterior: Sync {
    fn n_sites(&self) -> usize;

    /// Sorted ids of the sites a walker at `site` may step to.
    fn neighbors(&self, site: usize) -> &[u32];

    fn log_likelihood(&self, sites: &[u32], lambda: f64) -> f64;

    /// Mean absolute residual of the model against the data, when the
    /// posterior has a notion of data.
    fn residual_error(&self, _sites: &[u32], _lambda: f64) -> Option<f64> {
        None
    }
}

/// Above this many entries the modulation table is not materialised.
const TABLE_LIMIT: usize = 1 << 25;

#[derive(Debug, Clone)]
enum Modulations {
    Table(Vec<f64>),
    OnTheFly { couplings: Vec<(f64, f64)> },
}

#[derive(Debug, Clone)]
pub struct BathPosterior {
    catalog: Arc<LatticeCatalog>,
    spec: ExperimentSpec,
    mode: SignalMode,
    data: ObservedSignal,
    likelihood: LikelihoodConfig,
    modulations: Modulations,
}

impl BathPosterior {
    pub fn new(
        catalog: Arc<LatticeCatalog>,
        spec: ExperimentSpec,
        mode: SignalMode,
        data: ObservedSignal,
        likelihood: LikelihoodConfig,
    ) -> Result<Self> {
        spec.validate()?;
        mode.validate()?;
        likelihood.validate()?;
        if spec.tau_grid != data.tau {
            return Err(Error::invalid("observed tau grid differs from the experiment tau grid"));
        }
        let couplings: Vec<(f64, f64)> = catalog
            .sites()
            .iter()
            .map(|s| (angular(s.a_par), angular(s.a_perp)))
            .collect();
        let n_tau = spec.tau_grid.len();
        let modulations = if couplings.len().saturating_mul(n_tau) <= TABLE_LIMIT {
            let omega_l = spec.larmor();
            let mut table = Vec::with_capacity(couplings.len() * n_tau);
            for &(a_par, a_perp) in &couplings {
                table.extend(
                    spec.tau_grid
                        .iter()
                        .map(|&tau| modulation(a_par, a_perp, omega_l, spec.n_pulses, tau)),
                );
            }
            Modulations::Table(table)
        } else {
            Modulations::OnTheFly { couplings }
        };
        Ok(Self {
            catalog,
            spec,
            mode,
            data,
            likelihood,
            modulations,
        })
    }

    pub fn catalog(&self) -> &Arc<LatticeCatalog> {
        &self.catalog
    }

    pub fn spec(&self) -> &ExperimentSpec {
        &self.spec
    }

    pub fn mode(&self) -> SignalMode {
        self.mode
    }

    pub fn data(&self) -> &ObservedSignal {
        &self.data
    }

    pub fn likelihood(&self) -> &LikelihoodConfig {
        &self.likelihood
    }

    /// `prod_i M_i(tau_j)` over the occupied sites.
    fn product(&self, sites: &[u32], out: &mut [f64]) {
        out.fill(1.0);
        match &self.modulations {
            Modulations::Table(table) => {
                let n = out.len();
                for &s in sites {
                    let row = &table[s as usize * n..(s as usize + 1) * n];
                    for (o, m) in out.iter_mut().zip(row) {
                        *o *= m;
                    }
                }
            }
            Modulations::OnTheFly { couplings } => {
                let omega_l = self.spec.larmor();
                for &s in sites {
                    let (a_par, a_perp) = couplings[s as usize];
                    for (o, &tau) in out.iter_mut().zip(&self.spec.tau_grid) {
                        *o *= modulation(a_par, a_perp, omega_l, self.spec.n_pulses, tau);
                    }
                }
            }
        }
    }

    /// Model coherence for a configuration. A verbatim pole shows up as
    /// `+inf` at the offending point.
    pub fn model_signal(&self, sites: &[u32], lambda: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.spec.tau_grid.len()];
        self.product(sites, &mut out);
        for (o, &tau) in out.iter_mut().zip(&self.spec.tau_grid) {
            *o = self.mode.apply(0.5 * (1.0 + *o), tau, lambda);
        }
        out
    }
}

impl Posterior for BathPosterior {
    fn n_sites(&self) -> usize {
        self.catalog.len()
    }

    fn neighbors(&self, site: usize) -> &[u32] {
        self.catalog.neighbors(site)
    }

    fn log_likelihood(&self, sites: &[u32], lambda: f64) -> f64 {
        let model = self.model_signal(sites, lambda);
        if model.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        likelihood::score(&self.data, &model, &self.likelihood)
    }

    fn residual_error(&self, sites: &[u32], lambda: f64) -> Option<f64> {
        let model = self.model_signal(sites, lambda);
        let n = model.len() as f64;
        Some(model.iter().zip(&self.data.values).map(|(f, d)| (f - d).abs()).sum::<f64>() / n)
    }
}
