use rand::Rng;

use super::{metropolis, rwmh_site_step, ChainState, Step, TemperatureLadder};
use crate::error::{Error, Result};
use crate::target::Posterior;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    /// Site-step result per strand.
    pub steps: Vec<Step>,
    /// Pair of strands that attempted a swap.
    pub pair: (usize, usize),
    pub swapped: bool,
}

/// `log alpha_PT = (beta_a - beta_b) * (loglik_b - loglik_a)`.
pub fn swap_log_acceptance(beta_a: f64, beta_b: f64, loglik_a: f64, loglik_b: f64) -> f64 {
    if beta_a == beta_b || loglik_a == loglik_b {
        return 0.0;
    }
    (beta_a - beta_b) * (loglik_b - loglik_a)
}

/// One parallel-tempering sweep.
///
/// Every strand takes one site step under `beta_j * loglik` using its own
/// random stream, then a uniformly drawn pair `a != b` attempts to exchange
/// configurations. All strands must share the same lambda and dimension.
pub fn pt_sweep<P, R, S>(
    strands: &mut [ChainState],
    ladder: &TemperatureLadder,
    target: &P,
    strand_rngs: &mut [R],
    swap_rng: &mut S,
) -> Result<SweepOutcome>
where
    P: Posterior + ?Sized,
    R: Rng,
    S: Rng + ?Sized,
{
    let j = strands.len();
    if j < 2 {
        return Err(Error::invalid("parallel tempering needs at least two strands"));
    }
    if ladder.len() != j || strand_rngs.len() != j {
        return Err(Error::invalid(format!(
            "{} strands, {} temperatures, {} random streams",
            j,
            ladder.len(),
            strand_rngs.len()
        )));
    }
    debug_assert!(strands.iter().all(|s| s.lambda == strands[0].lambda));

    let steps = strands
        .iter_mut()
        .zip(ladder.betas())
        .zip(strand_rngs.iter_mut())
        .map(|((s, &beta), rng)| rwmh_site_step(s, target, beta, rng))
        .collect();

    let a = swap_rng.random_range(0..j);
    let mut b = swap_rng.random_range(0..j - 1);
    if b >= a {
        b += 1;
    }
    let betas = ladder.betas();
    let log_alpha = swap_log_acceptance(betas[a], betas[b], strands[a].loglik, strands[b].loglik);
    let swapped = metropolis(log_alpha, swap_rng);
    if swapped {
        let (lo, hi) = (a.min(b), a.max(b));
        let (left, right) = strands.split_at_mut(hi);
        std::mem::swap(&mut left[lo].config, &mut right[0].config);
        std::mem::swap(&mut left[lo].loglik, &mut right[0].loglik);
    }
    Ok(SweepOutcome {
        steps,
        pair: (a, b),
        swapped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamRng};
    use crate::samplers::acceptance_probability;
    use crate::samplers::testing::{frequencies, LineTarget};
    use crate::samplers::SpinConfiguration;

    #[test]
    fn swap_formula_examples() {
        assert_eq!(swap_log_acceptance(0.5, 0.5, -3.0, -9.0), 0.0);
        assert_eq!(swap_log_acceptance(1.0, 0.5, -4.0, -4.0), 0.0);
        // beta = (1, 0.5), cold -10, hot -8: min(1, e^{0.5 * 2}) = 1
        assert_eq!(acceptance_probability(swap_log_acceptance(1.0, 0.5, -10.0, -8.0)), 1.0);
        let p = acceptance_probability(swap_log_acceptance(1.0, 0.5, -8.0, -10.0));
        assert!((p - (-1f64).exp()).abs() < 1e-15);
        assert!((p - 0.36787944117144233).abs() < 1e-15);
    }

    #[test]
    fn needs_two_strands() {
        let target = LineTarget::new(vec![0.0; 3]);
        let mut strands = vec![ChainState::new(SpinConfiguration::new(vec![0]).unwrap(), 0.5, &target)];
        let ladder = TemperatureLadder::new(vec![1.0]).unwrap();
        let mut rngs = vec![stream(0, 0, 0)];
        assert!(pt_sweep(&mut strands, &ladder, &target, &mut rngs, &mut stream(0, 0, 1)).is_err());
    }

    fn run(target: &LineTarget, ladder: &TemperatureLadder, n: usize, seed: u64) -> (Vec<Vec<ChainState>>, Vec<SweepOutcome>) {
        let start = SpinConfiguration::new(vec![0, 1]).unwrap();
        let mut strands: Vec<ChainState> = (0..ladder.len()).map(|_| ChainState::new(start.clone(), 0.5, target)).collect();
        let mut rngs: Vec<StreamRng> = (0..ladder.len()).map(|j| stream(seed, 0, 16 + j as u64)).collect();
        let mut swap = stream(seed, 0, 0);
        let mut history = Vec::with_capacity(n);
        let mut outcomes = Vec::with_capacity(n);
        for _ in 0..n {
            outcomes.push(pt_sweep(&mut strands, ladder, target, &mut rngs, &mut swap).unwrap());
            history.push(strands.clone());
        }
        (history, outcomes)
    }

    #[test]
    fn swaps_exchange_never_create() {
        let target = LineTarget::complete((0..6).map(|i| (i as f64).cos()).collect());
        let ladder = TemperatureLadder::geometric(4).unwrap();
        let start = SpinConfiguration::new(vec![0, 1]).unwrap();
        let mut strands: Vec<ChainState> = (0..4).map(|_| ChainState::new(start.clone(), 0.5, &target)).collect();
        let mut rngs: Vec<StreamRng> = (0..4).map(|j| stream(5, 0, 16 + j)).collect();
        let mut swap = stream(5, 0, 0);
        for _ in 0..2000 {
            let before: Vec<ChainState> = strands.clone();
            // replay the site steps alone to obtain the pre-swap pool
            let mut pre = before.clone();
            let mut replay: Vec<StreamRng> = rngs.clone();
            for ((s, &beta), rng) in pre.iter_mut().zip(ladder.betas()).zip(replay.iter_mut()) {
                rwmh_site_step(s, &target, beta, rng);
            }
            let out = pt_sweep(&mut strands, &ladder, &target, &mut rngs, &mut swap).unwrap();
            let mut pool_pre: Vec<_> = pre.iter().map(|s| s.config.clone()).collect();
            let mut pool_post: Vec<_> = strands.iter().map(|s| s.config.clone()).collect();
            pool_pre.sort();
            pool_post.sort();
            assert_eq!(pool_pre, pool_post);
            assert_ne!(out.pair.0, out.pair.1);
            for s in &strands {
                assert_eq!(s.k(), 2);
                assert!((s.loglik - s.recompute(&target)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cold_strand_targets_untempered_posterior() {
        // 5 sites on a complete graph, k = 2, log L = sum of site weights.
        let weights = vec![0.0, 1.0, -0.5, 2.0, 0.3];
        let target = LineTarget::complete(weights.clone());
        let ladder = TemperatureLadder::geometric(3).unwrap();
        let (history, _) = run(&target, &ladder, 300_000, 7);
        let cold = frequencies(history.iter().map(|h| h[0].config.clone()));
        let hot = frequencies(history.iter().map(|h| h[2].config.clone()));
        let mut z_cold = 0.0;
        let mut z_hot = 0.0;
        let mut pairs = Vec::new();
        for a in 0..5u32 {
            for b in (a + 1)..5 {
                let w = weights[a as usize] + weights[b as usize];
                z_cold += w.exp();
                z_hot += (0.25 * w).exp();
                pairs.push((SpinConfiguration::new(vec![a, b]).unwrap(), w));
            }
        }
        for (c, w) in pairs {
            let want_cold = w.exp() / z_cold;
            let want_hot = (0.25 * w).exp() / z_hot;
            assert!((cold.get(&c).copied().unwrap_or(0.0) - want_cold).abs() < 0.01, "{c:?}");
            assert!((hot.get(&c).copied().unwrap_or(0.0) - want_hot).abs() < 0.01, "{c:?}");
        }
    }
}
