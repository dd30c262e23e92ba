use rand::Rng;

use super::{metropolis, ChainState, ProposalConfig, Step};
use crate::target::Posterior;

/// Folds `x` back into `[lo, hi]` by mirroring at the walls.
pub fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo < hi);
    loop {
        if x > hi {
            x = 2.0 * hi - x;
        } else if x < lo {
            x = 2.0 * lo - x;
        } else {
            return x;
        }
    }
}

/// One Metropolis update of lambda with a uniform kernel of radius
/// `cfg.r_lambda`, reflected into `[cfg.lambda_min, 1]`. Reflection keeps the
/// kernel symmetric, so only the likelihood ratio enters.
pub fn rwmh_lambda_step<P, R>(state: &mut ChainState, target: &P, cfg: &ProposalConfig, rng: &mut R) -> Step
where
    P: Posterior + ?Sized,
    R: Rng + ?Sized,
{
    let step = rng.random_range(-cfg.r_lambda..cfg.r_lambda);
    let proposed = reflect(state.lambda + step, cfg.lambda_min, 1.0);
    let loglik = target.log_likelihood(state.config.as_slice(), proposed);
    if metropolis(loglik - state.loglik, rng) {
        state.lambda = proposed;
        state.loglik = loglik;
        Step::Accepted
    } else {
        Step::Rejected
    }
}
