//! Analytic coherence of a central spin coupled to independent nuclear spins
//! under an N-pulse CP/CPMG dynamical-decoupling sequence.
//!
//! Frequencies enter in kHz (cyclic) and are converted to angular
//! frequencies in rad/ms, so that `frequency * tau` with `tau` in ms is a
//! phase in radians.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gyromagnetic ratio of 13C, kHz/G (cyclic).
pub const GAMMA_13C_KHZ_PER_G: f64 = 1.0705;

/// Smallest admissible decoherence parameter.
pub const LAMBDA_MIN: f64 = 1e-6;

/// kHz to rad/ms.
#[inline]
pub fn angular(khz: f64) -> f64 {
    TAU * khz
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub n_pulses: u32,
    /// External field along the defect axis, G.
    pub b_field: f64,
    /// Inter-pulse spacings, ms, strictly increasing.
    pub tau_grid: Vec<f64>,
    /// Nuclear gyromagnetic ratio, kHz/G (cyclic).
    pub gamma_n: f64,
}

impl ExperimentSpec {
    pub fn new(n_pulses: u32, b_field: f64, tau_grid: Vec<f64>) -> Result<Self> {
        let spec = Self {
            n_pulses,
            b_field,
            tau_grid,
            gamma_n: GAMMA_13C_KHZ_PER_G,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pulses == 0 {
            return Err(Error::invalid("n_pulses must be >= 1"));
        }
        if !(self.b_field > 0.0) {
            return Err(Error::invalid(format!("b_field must be > 0, got {}", self.b_field)));
        }
        if self.gamma_n == 0.0 || !self.gamma_n.is_finite() {
            return Err(Error::invalid("gamma_n must be finite and non-zero"));
        }
        validate_tau_grid(&self.tau_grid)
    }

    /// Larmor frequency, rad/ms.
    pub fn larmor(&self) -> f64 {
        larmor(self.gamma_n, self.b_field)
    }

    pub fn with_tau_grid(&self, tau_grid: Vec<f64>) -> Result<Self> {
        validate_tau_grid(&tau_grid)?;
        Ok(Self {
            tau_grid,
            ..self.clone()
        })
    }
}

pub(crate) fn validate_tau_grid(tau: &[f64]) -> Result<()> {
    if tau.is_empty() {
        return Err(Error::invalid("tau grid is empty"));
    }
    if tau.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::invalid("tau values must be finite and > 0"));
    }
    if tau.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("tau grid must be strictly increasing"));
    }
    Ok(())
}

/// `omega_L = -gamma_n * B_z`, returned in rad/ms.
pub fn larmor(gamma_n_khz_per_g: f64, b_field_g: f64) -> f64 {
    -angular(gamma_n_khz_per_g * b_field_g)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpinBath {
    /// (a_par, a_perp) per spin, kHz.
    pub spins: Vec<(f64, f64)>,
}

impl SpinBath {
    pub fn new(spins: Vec<(f64, f64)>) -> Result<Self> {
        if let Some(&(a, b)) = spins.iter().find(|(a, b)| !(*b >= 0.0) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::invalid(format!("spin ({a}, {b}) kHz has a negative or non-finite coupling")));
        }
        Ok(Self { spins })
    }

    pub fn k(&self) -> usize {
        self.spins.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DecoherenceParam(f64);

impl DecoherenceParam {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(LAMBDA_MIN..=1.0).contains(&lambda) {
            return Err(Error::invalid(format!("lambda must lie in [{LAMBDA_MIN}, 1], got {lambda}")));
        }
        Ok(Self(lambda))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// How the spin-bath product is turned into a coherence value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalMode {
    /// `(1/2 (1 + prod M_i))^(-tau / lambda)`, as printed.
    Verbatim,
    /// `1/2 (1 + prod M_i) * exp(-tau / (lambda * lambda_scale_ms))`.
    Envelope { lambda_scale_ms: f64 },
}

impl Default for SignalMode {
    fn default() -> Self {
        SignalMode::Verbatim
    }
}

impl SignalMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SignalMode::Verbatim => Ok(()),
            SignalMode::Envelope { lambda_scale_ms } if lambda_scale_ms > 0.0 && lambda_scale_ms.is_finite() => Ok(()),
            SignalMode::Envelope { lambda_scale_ms } => Err(Error::invalid(format!(
                "envelope lambda_scale_ms must be > 0, got {lambda_scale_ms}"
            ))),
        }
    }

    /// Maps `base = 1/2 (1 + prod M)` to the observed coherence. A verbatim
    /// pole (`base == 0`) yields `+inf`.
    #[inline]
    pub fn apply(self, base: f64, tau: f64, lambda: f64) -> f64 {
        match self {
            SignalMode::Verbatim => base.powf(-tau / lambda),
            SignalMode::Envelope { lambda_scale_ms } => base * (-tau / (lambda * lambda_scale_ms)).exp(),
        }
    }
}

/// Chebyshev polynomial `T_n(x) = cos(n acos x)` by the three-term recurrence.
#[inline]
fn chebyshev(n: u32, x: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut prev, mut cur) = (1.0, x);
            for _ in 1..n {
                let next = 2.0 * x * cur - prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Single-spin modulation with couplings and Larmor frequency in rad/ms.
#[inline]
pub fn modulation(a_par: f64, a_perp: f64, omega_l: f64, n_pulses: u32, tau: f64) -> f64 {
    let shifted = a_par + omega_l;
    let omega_t = shifted.hypot(a_perp);
    if a_perp == 0.0 || omega_t == 0.0 {
        return 1.0;
    }
    let m_z = shifted / omega_t;
    let m_x = a_perp / omega_t;
    let (sa, ca) = (omega_t * tau).sin_cos();
    let (sb, cb) = (omega_l * tau).sin_cos();
    let cos_phi = (ca * cb - m_z * sa * sb).clamp(-1.0, 1.0);
    // sin^2(N phi / 2) = (1 - cos(N phi)) / 2
    let sin2 = 0.5 * (1.0 - chebyshev(n_pulses, cos_phi));
    let denom = (1.0 + cos_phi).max(f64::MIN_POSITIVE);
    let m = 1.0 - m_x * m_x * (1.0 - ca) * (1.0 - cb) / denom * sin2;
    m.clamp(-1.0, 1.0)
}

/// Modulation `M` of one spin with couplings in kHz at spacing `tau` (ms).
pub fn spin_modulation(a_par_khz: f64, a_perp_khz: f64, spec: &ExperimentSpec, tau: f64) -> f64 {
    modulation(angular(a_par_khz), angular(a_perp_khz), spec.larmor(), spec.n_pulses, tau)
}

/// Coherence of `bath` at every point of `spec.tau_grid`.
///
/// An empty bath gives a product of one and therefore a signal of one.
pub fn coherence_signal(
    bath: &SpinBath,
    lambda: DecoherenceParam,
    spec: &ExperimentSpec,
    mode: SignalMode,
) -> Result<Vec<f64>> {
    let omega_l = spec.larmor();
    let spins: Vec<(f64, f64)> = bath.spins.iter().map(|&(a, b)| (angular(a), angular(b))).collect();
    spec.tau_grid
        .iter()
        .map(|&tau| {
            let product: f64 = spins
                .iter()
                .map(|&(a_par, a_perp)| modulation(a_par, a_perp, omega_l, spec.n_pulses, tau))
                .product();
            let base = 0.5 * (1.0 + product);
            if matches!(mode, SignalMode::Verbatim) && base == 0.0 {
                return Err(Error::Pole { tau_ms: tau });
            }
            Ok(mode.apply(base, tau, lambda.get()))
        })
        .collect()
}
