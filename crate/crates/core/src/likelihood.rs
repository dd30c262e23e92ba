//! Scores of a predicted coherence signal against observed data, in log
//! space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::validate_tau_grid;

pub const DEFAULT_SIGMA2: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodMode {
    #[default]
    Gaussian,
    WassersteinMixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LikelihoodConfig {
    /// Noise-variance hyperparameter.
    pub sigma2: f64,
    /// Weight of the squared 2-Wasserstein penalty.
    pub zeta: f64,
    pub mode: LikelihoodMode,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        Self {
            sigma2: DEFAULT_SIGMA2,
            zeta: 0.0,
            mode: LikelihoodMode::Gaussian,
        }
    }
}

impl LikelihoodConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(Error::invalid(format!("sigma2 must be > 0, got {}", self.sigma2)));
        }
        if !(0.0..=1.0).contains(&self.zeta) {
            return Err(Error::invalid(format!("zeta must lie in [0, 1], got {}", self.zeta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSignal {
    /// ms, strictly increasing.
    pub tau: Vec<f64>,
    pub values: Vec<f64>,
}

impl ObservedSignal {
    pub fn new(tau: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if tau.len() != values.len() {
            return Err(Error::LengthMismatch {
                expected: tau.len(),
                got: values.len(),
            });
        }
        validate_tau_grid(&tau)?;
        Ok(Self { tau, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Reads a `tau_ms, coherence` file with a header row.
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(input);
        let headers = reader.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::invalid(format!("signal file lacks column `{name}`")))
        };
        let (ti, vi) = (col("tau_ms")?, col("coherence")?);
        let (mut tau, mut values) = (Vec::new(), Vec::new());
        for row in reader.records() {
            let row = row?;
            let get = |i: usize| -> Result<f64> {
                let raw = row.get(i).unwrap_or("");
                raw.parse()
                    .map_err(|_| Error::invalid(format!("`{raw}` is not a number in signal file")))
            };
            tau.push(get(ti)?);
            values.push(get(vi)?);
        }
        Self::new(tau, values)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tau_ms", "coherence"])?;
        for (t, v) in self.tau.iter().zip(&self.values) {
            w.write_record(&[t.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_len(data: &ObservedSignal, model: &[f64]) -> Result<()> {
    if data.len() != model.len() {
        return Err(Error::LengthMismatch {
            expected: data.len(),
            got: model.len(),
        });
    }
    Ok(())
}

/// `-(1 / 2 sigma^2) * sum (d_i - f_i)^2` over slices of equal length.
#[inline]
pub fn gaussian_score(data: &[f64], model: &[f64], sigma2: f64) -> f64 {
    let sse: f64 = data.iter().zip(model).map(|(d, f)| (d - f) * (d - f)).sum();
    let score = -sse / (2.0 * sigma2);
    if score.is_nan() {
        f64::NEG_INFINITY
    } else {
        score
    }
}

pub fn log_likelihood_gaussian(data: &ObservedSignal, model: &[f64], cfg: &LikelihoodConfig) -> Result<f64> {
    check_len(data, model)?;
    Ok(gaussian_score(&data.values, model, cfg.sigma2))
}

/// Turns a signal into a probability vector over its support: shift by the
/// minimum, divide by the sum. Constant signals map to the uniform
/// distribution.
pub fn normalize(signal: &[f64]) -> Vec<f64> {
    let min = signal.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = signal.iter().map(|v| v - min).collect();
    let total: f64 = shifted.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return vec![1.0 / signal.len() as f64; signal.len()];
    }
    shifted.into_iter().map(|v| v / total).collect()
}

/// Squared 2-Wasserstein distance between two discrete distributions on a
/// shared, sorted 1-D support, by matching quantiles.
pub fn w2_squared_on_support(support: &[f64], p: &[f64], q: &[f64]) -> f64 {
    let n = support.len();
    debug_assert!(p.len() == n && q.len() == n);
    if n == 0 {
        return 0.0;
    }
    let (mut i, mut j) = (0usize, 0usize);
    let (mut cp, mut cq) = (p[0], q[0]);
    let mut level = 0.0;
    let mut total = 0.0;
    loop {
        let next = cp.min(cq);
        if next > level {
            let d = support[i] - support[j];
            total += (next - level) * d * d;
            level = next;
        }
        let advance_p = cp <= cq;
        let advance_q = cq <= cp;
        if advance_p {
            i += 1;
        }
        if advance_q {
            j += 1;
        }
        if i == n || j == n {
            break;
        }
        if advance_p {
            cp += p[i];
        }
        if advance_q {
            cq += q[j];
        }
    }
    total
}

/// `W_2^2` between the normalised data and model signals over the tau
/// support, in ms^2.
pub fn w2_squared(data: &ObservedSignal, model: &[f64]) -> Result<f64> {
    check_len(data, model)?;
    if data.is_empty() {
        return Err(Error::invalid("W2 needs at least one point"));
    }
    let p = normalize(&data.values);
    let q = normalize(model);
    Ok(w2_squared_on_support(&data.tau, &p, &q))
}

/// The score the samplers consume.
///
/// In mixed mode this is `(1 - zeta) * gaussian - zeta * W2^2`; with
/// `zeta == 0` it is the Gaussian score bit for bit.
pub fn log_likelihood(data: &ObservedSignal, model: &[f64], cfg: &LikelihoodConfig) -> Result<f64> {
    check_len(data, model)?;
    Ok(score(data, model, cfg))
}

#[inline]
pub(crate) fn score(data: &ObservedSignal, model: &[f64], cfg: &LikelihoodConfig) -> f64 {
    let gauss = gaussian_score(&data.values, model, cfg.sigma2);
    match cfg.mode {
        LikelihoodMode::Gaussian => gauss,
        LikelihoodMode::WassersteinMixed if cfg.zeta == 0.0 => gauss,
        LikelihoodMode::WassersteinMixed => {
            if model.iter().any(|v| !v.is_finite()) {
                return f64::NEG_INFINITY;
            }
            let w2 = w2_squared_on_support(&data.tau, &normalize(&data.values), &normalize(model));
            (1.0 - cfg.zeta) * gauss - cfg.zeta * w2
        }
    }
}

/// The probability-space mixture `(1 - zeta) exp(gaussian) - zeta W2^2`.
/// Reported only; it can be negative and is never used as an acceptance
/// ratio.
pub fn literal_mixed_likelihood(data: &ObservedSignal, model: &[f64], cfg: &LikelihoodConfig) -> Result<f64> {
    let gauss = log_likelihood_gaussian(data, model, cfg)?;
    let w2 = w2_squared(data, model)?;
    Ok((1.0 - cfg.zeta) * gauss.exp() - cfg.zeta * w2)
}
