use rand::Rng;

use super::{metropolis, ChainState, Step};
use crate::target::Posterior;

/// Moves one uniformly chosen occupied site to a uniformly chosen free
/// neighbour, under the tempered score `beta * loglik`.
///
/// The Hastings correction is `n_from / n_to`: the number of free neighbours
/// of the source before the move over that of the destination after it.
pub fn rwmh_site_step<P, R>(state: &mut ChainState, target: &P, beta: f64, rng: &mut R) -> Step
where
    P: Posterior + ?Sized,
    R: Rng + ?Sized,
{
    let k = state.k();
    if k == 0 {
        return Step::NoMove;
    }
    let index = rng.random_range(0..k);
    let source = state.config.as_slice()[index];
    let around_source = target.neighbors(source as usize);
    let n_from = state.config.count_free(around_source);
    if n_from == 0 {
        return Step::NoMove;
    }
    let pick = rng.random_range(0..n_from);
    let dest = around_source
        .iter()
        .copied()
        .filter(|&s| !state.config.contains(s))
        .nth(pick)
        .expect("pick < number of free neighbours");

    let mut proposed = state.config.clone();
    proposed.remove_at(index);
    proposed.insert(dest);
    let n_to = proposed.count_free(target.neighbors(dest as usize));
    debug_assert!(n_to >= 1, "the vacated source is a free neighbour of dest");

    let loglik = target.log_likelihood(proposed.as_slice(), state.lambda);
    let log_ratio = beta * (loglik - state.loglik) + (n_from as f64).ln() - (n_to as f64).ln();
    if metropolis(log_ratio, rng) {
        state.config = proposed;
        state.loglik = loglik;
        Step::Accepted
    } else {
        Step::Rejected
    }
}
