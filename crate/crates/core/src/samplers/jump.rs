use rand::Rng;

use super::{metropolis, ChainState, DimensionPrior, ProposalConfig, Step};
use crate::target::Posterior;

/// Probability of proposing a birth from dimension `k`.
fn birth_probability(k: usize, k_cap: usize, cfg: &ProposalConfig) -> f64 {
    if k == 0 {
        1.0
    } else if k >= k_cap {
        0.0
    } else {
        cfg.birth_prob
    }
}

/// One birth-death move over the number of spins.
///
/// A birth adds a site drawn uniformly from the unoccupied ones; a death
/// removes a uniformly drawn occupant. The acceptance ratio carries the
/// dimension-kernel ratio and both within-move proposal densities:
///
/// ```text
/// birth k -> k+1:  L*/L * (1 - b(k+1)) / b(k) * (n - k) / (k + 1)
/// death k -> k-1:  L*/L * b(k-1) / (1 - b(k)) * k / (n - k + 1)
/// ```
///
/// where `b(k)` is the boundary-adjusted birth probability, times the prior
/// ratio of the two configurations (`(k + 1) / (n - k)` for a birth under
/// [`DimensionPrior::UniformDimension`], one under `UniformSets`).
pub fn rjmcmc_step<P, R>(state: &mut ChainState, target: &P, cfg: &ProposalConfig, rng: &mut R) -> Step
where
    P: Posterior + ?Sized,
    R: Rng + ?Sized,
{
    let n = target.n_sites();
    let k_cap = cfg.k_max.min(n);
    let k = state.k();
    debug_assert!(k <= k_cap);
    let b = |k| birth_probability(k, k_cap, cfg);
    if k_cap == 0 {
        return Step::NoMove;
    }

    let birth = rng.random::<f64>() < b(k);
    let mut proposed = state.config.clone();
    let log_proposal = if birth {
        let site = loop {
            let s = rng.random_range(0..n) as u32;
            if !proposed.contains(s) {
                break s;
            }
        };
        proposed.insert(site);
        let (kf, nf) = (k as f64, n as f64);
        let prior = match cfg.dimension_prior {
            DimensionPrior::UniformDimension => (kf + 1.0).ln() - (nf - kf).ln(),
            DimensionPrior::UniformSets => 0.0,
        };
        prior + (1.0 - b(k + 1)).ln() - b(k).ln() + (nf - kf).ln() - (kf + 1.0).ln()
    } else {
        let index = rng.random_range(0..k);
        proposed.remove_at(index);
        let (kf, nf) = (k as f64, n as f64);
        let prior = match cfg.dimension_prior {
            DimensionPrior::UniformDimension => (nf - kf + 1.0).ln() - kf.ln(),
            DimensionPrior::UniformSets => 0.0,
        };
        prior + b(k - 1).ln() - (1.0 - b(k)).ln() + kf.ln() - (nf - kf + 1.0).ln()
    };

    let loglik = target.log_likelihood(proposed.as_slice(), state.lambda);
    if metropolis(loglik - state.loglik + log_proposal, rng) {
        state.config = proposed;
        state.loglik = loglik;
        Step::Accepted
    } else {
        Step::Rejected
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::samplers::testing::{frequencies, LineTarget};
    use crate::samplers::SpinConfiguration;

    fn sets(k_max: usize) -> ProposalConfig {
        ProposalConfig {
            k_max,
            dimension_prior: DimensionPrior::UniformSets,
            ..Default::default()
        }
    }

    #[test]
    fn empty_state_always_proposes_birth() {
        let target = LineTarget::new(vec![0.0; 5]);
        let cfg = sets(5);
        let mut rng = stream(1, 0, 0);
        for _ in 0..200 {
            let mut s = ChainState::new(SpinConfiguration::empty(), 0.5, &target);
            // flat likelihood, birth from 0: ratio = (1/2) / 1 * 5 / 1 > 1
            assert_eq!(rjmcmc_step(&mut s, &target, &cfg, &mut rng), Step::Accepted);
            assert_eq!(s.k(), 1);
        }
    }

    #[test]
    fn hand_enumerated_ratios() {
        // 4 sites, b = 1/2. Birth 1 -> 2: forward 1/2 * 1/3, reverse
        // 1/2 * 1/2, ratio 3/2, always accepted. Death 1 -> 0: forward
        // 1/2 * 1, reverse 1 * 1/4, ratio 1/2.
        let target = LineTarget::new(vec![0.0; 4]);
        let cfg = sets(3);
        let mut rng = stream(2, 0, 0);
        let n = 20_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let mut s = ChainState::new(SpinConfiguration::new(vec![1]).unwrap(), 0.5, &target);
            rjmcmc_step(&mut s, &target, &cfg, &mut rng);
            if s.k() == 2 {
                assert!(s.config.contains(1));
            }
            counts[s.k()] += 1;
        }
        let f = |c: usize| c as f64 / n as f64;
        assert!((f(counts[2]) - 0.5).abs() < 0.015);
        assert!((f(counts[0]) - 0.25).abs() < 0.015);
        assert!((f(counts[1]) - 0.25).abs() < 0.015);
    }

    #[test]
    fn stays_within_bounds_and_without_duplicates() {
        let target = LineTarget::new((0..6).map(|i| i as f64 * 0.3).collect());
        let cfg = ProposalConfig { k_max: 4, ..Default::default() };
        let mut rng = stream(3, 0, 0);
        let mut s = ChainState::new(SpinConfiguration::empty(), 0.5, &target);
        for _ in 0..5000 {
            rjmcmc_step(&mut s, &target, &cfg, &mut rng);
            assert!(s.k() <= 4);
            assert!(SpinConfiguration::new(s.config.as_slice().to_vec()).is_ok());
            assert!((s.loglik - s.recompute(&target)).abs() < 1e-10);
        }
    }

    #[test]
    fn flat_target_gives_uniform_distribution_over_sets() {
        // 5 sites, k_max = 2: 1 + 5 + 10 sets, each with mass 1/16.
        let target = LineTarget::new(vec![0.0; 5]);
        let cfg = sets(2);
        let mut rng = stream(4, 0, 0);
        let mut s = ChainState::new(SpinConfiguration::empty(), 0.5, &target);
        let n = 400_000;
        let freq = frequencies((0..n).map(|_| {
            rjmcmc_step(&mut s, &target, &cfg, &mut rng);
            s.config.clone()
        }));
        assert_eq!(freq.len(), 16);
        for (c, f) in &freq {
            assert!((f - 1.0 / 16.0).abs() < 0.006, "{c:?}: {f}");
        }
    }

    #[test]
    fn flat_target_gives_uniform_dimension() {
        // 5 sites, k_max = 2: each k has mass 1/3, shared evenly within k.
        let target = LineTarget::new(vec![0.0; 5]);
        let cfg = ProposalConfig { k_max: 2, ..Default::default() };
        let mut rng = stream(6, 0, 0);
        let mut s = ChainState::new(SpinConfiguration::empty(), 0.5, &target);
        let n = 400_000;
        let freq = frequencies((0..n).map(|_| {
            rjmcmc_step(&mut s, &target, &cfg, &mut rng);
            s.config.clone()
        }));
        assert_eq!(freq.len(), 16);
        for (c, f) in &freq {
            let want = [1.0 / 3.0, 1.0 / 15.0, 1.0 / 30.0][c.len()];
            assert!((f - want).abs() < 0.006, "{c:?}: {f} vs {want}");
        }
    }

    #[test]
    fn uniform_dimension_birth_from_empty() {
        // prior 1/5, kernel (1/2) / 1, proposal 5 / 1: accepted half the time
        let target = LineTarget::new(vec![0.0; 5]);
        let cfg = ProposalConfig::default();
        let mut rng = stream(7, 0, 0);
        let n = 20_000;
        let mut born = 0;
        for _ in 0..n {
            let mut s = ChainState::new(SpinConfiguration::empty(), 0.5, &target);
            rjmcmc_step(&mut s, &target, &cfg, &mut rng);
            born += s.k();
        }
        assert!((born as f64 / n as f64 - 0.5).abs() < 0.015);
    }
}
