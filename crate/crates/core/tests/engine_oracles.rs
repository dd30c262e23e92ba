mod common;

use common::*;
use spinbath_core::engine::{self, error_trace, ErrorMetric};
use spinbath_core::forward::coherence_signal;
use spinbath_core::{DecoherenceParam, Posterior, ProposalConfig, ScheduleConfig, SpinBath};

fn short() -> ScheduleConfig {
    ScheduleConfig {
        n_total: 6,
        n_rwmh: 5,
        n_rjmcmc: 10,
        n_pt: 10,
        n_ensembles: 3,
        burn_in: 50,
        n_temperatures: 4,
        ..Default::default()
    }
}

#[test]
fn error_trace_matches_independent_recomputation() {
    let exp = experiment(
        six_site_catalog(),
        spinbath_core::SpinConfiguration::new(vec![1, 4]).unwrap(),
        &settings(60, 0.001),
        ENVELOPE_SPINS,
        Default::default(),
        11,
    );
    let proposal = ProposalConfig { k_max: 4, ..Default::default() };
    let out = engine::run(&exp.target, &proposal, &short(), 3).unwrap();
    let spec = exp.target.spec();
    let data = &exp.data.signal.values;
    for metric in [ErrorMetric::Absolute, ErrorMetric::Squared] {
        let traces = error_trace(&out.posterior, &exp.target, metric);
        assert_eq!(traces.len(), 3);
        for (e, trace) in &traces {
            let samples = out.posterior.ensemble(*e);
            assert_eq!(trace.len(), samples.len());
            let mut best = f64::INFINITY;
            for ((step, err), s) in trace.iter().zip(samples) {
                assert_eq!(*step, s.step);
                let couplings: Vec<(f64, f64)> = s
                    .site_ids
                    .iter()
                    .map(|&id| {
                        let site = exp.catalog.site(id as usize);
                        (site.a_par, site.a_perp)
                    })
                    .collect();
                let model = coherence_signal(
                    &SpinBath::new(couplings).unwrap(),
                    DecoherenceParam::new(s.lambda).unwrap(),
                    spec,
                    ENVELOPE_SPINS,
                )
                .unwrap();
                let want = model
                    .iter()
                    .zip(data)
                    .map(|(f, d)| match metric {
                        ErrorMetric::Absolute => (f - d).abs(),
                        ErrorMetric::Squared => (f - d).powi(2),
                    })
                    .sum::<f64>()
                    / data.len() as f64;
                assert!((err - want).abs() <= 1e-12 * want.max(1.0), "step {step}: {err} vs {want}");
                let next = best.min(*err);
                assert!(next <= best);
                best = next;
            }
        }
    }
}

#[test]
fn error_trace_is_zero_on_exact_data() {
    let truth = spinbath_core::SpinConfiguration::new(vec![0, 2]).unwrap();
    let exp = experiment(six_site_catalog(), truth.clone(), &settings(40, 0.0), ENVELOPE_SPINS, Default::default(), 2);
    let lambda = exp.data.manifest.lambda_true;
    let schedule = ScheduleConfig {
        n_total: 0,
        initial_k: Some(2),
        initial_lambda: Some(lambda),
        n_ensembles: 1,
        burn_in: 0,
        ..Default::default()
    };
    // with n_total = 0 only the initial state is recorded; replace it with the truth
    let out = engine::run(&exp.target, &ProposalConfig { k_max: 3, ..Default::default() }, &schedule, 1).unwrap();
    let mut samples = out.posterior.raw().to_vec();
    samples[0].site_ids = truth.as_slice().to_vec();
    samples[0].loglik = exp.target.log_likelihood(truth.as_slice(), lambda);
    let post = spinbath_core::PosteriorEnsemble::new(samples, 0).unwrap();
    let trace = error_trace(&post, &exp.target, ErrorMetric::Absolute);
    assert_eq!(trace[&0], vec![(0, 0.0)]);
}

#[test]
fn recorded_logliks_match_the_target() {
    let exp = experiment(
        six_site_catalog(),
        spinbath_core::SpinConfiguration::new(vec![3]).unwrap(),
        &settings(50, 0.01),
        ENVELOPE_SPINS,
        Default::default(),
        5,
    );
    let out = engine::run(&exp.target, &ProposalConfig { k_max: 4, ..Default::default() }, &short(), 8).unwrap();
    for s in out.posterior.raw() {
        assert_eq!(s.k, s.site_ids.len());
        assert!(s.site_ids.windows(2).all(|w| w[0] < w[1]));
        assert!(s.lambda > 0.0 && s.lambda <= 1.0);
        let want = exp.target.log_likelihood(&s.site_ids, s.lambda);
        assert!((s.loglik - want).abs() <= 1e-9 * want.abs().max(1.0));
    }
    let hist = out.posterior.k_histogram();
    assert_eq!(hist.values().sum::<usize>(), out.posterior.len());
}

#[test]
fn dropping_an_ensemble_leaves_the_others_untouched() {
    let exp = experiment(
        six_site_catalog(),
        spinbath_core::SpinConfiguration::new(vec![0, 5]).unwrap(),
        &settings(50, 0.01),
        ENVELOPE_SPINS,
        Default::default(),
        5,
    );
    let proposal = ProposalConfig { k_max: 4, ..Default::default() };
    let three = engine::run(&exp.target, &proposal, &short(), 21).unwrap();
    let two = engine::run(&exp.target, &proposal, &ScheduleConfig { n_ensembles: 2, ..short() }, 21).unwrap();
    for e in 0..2 {
        assert_eq!(three.posterior.ensemble(e), two.posterior.ensemble(e));
    }
}
