use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use spinbath_core::datagen::diamond::{self, DiamondConfig};
use spinbath_core::datagen::{synthesize, ScenarioSettings, SyntheticScenario};
use spinbath_core::forward::coherence_signal;
use spinbath_core::likelihood::log_likelihood;
use spinbath_core::rng::stream;
use spinbath_core::samplers::rjmcmc_step;
use spinbath_core::{
    engine, BathPosterior, ChainState, DecoherenceParam, LatticeCatalog, LikelihoodConfig, LikelihoodMode, Posterior,
    ProposalConfig, ScheduleConfig, SignalMode, SpinBath, SpinConfiguration,
};

struct Fixture {
    target: BathPosterior,
    truth: Vec<u32>,
    lambda: f64,
}

fn fixture(radius: f64, likelihood: LikelihoodConfig) -> Fixture {
    let records = diamond::generate(&DiamondConfig { radius, ..Default::default() }).unwrap();
    let catalog = Arc::new(LatticeCatalog::from_records(&records, 0.0, 5.0).unwrap());
    let mut rng = stream(1, 0, 0);
    let settings = ScenarioSettings::default();
    let scenario = SyntheticScenario::draw(&settings, SignalMode::Verbatim, &catalog, &mut rng).unwrap();
    let data = synthesize(&scenario, &catalog, 1, &mut rng).unwrap();
    let truth = scenario.truth.as_slice().to_vec();
    let lambda = scenario.lambda_true;
    let target = BathPosterior::new(catalog, scenario.spec, SignalMode::Verbatim, data.signal, likelihood).unwrap();
    Fixture { target, truth, lambda }
}

fn forward(c: &mut Criterion) {
    let f = fixture(12.0, LikelihoodConfig::default());
    let bath = SpinBath::new(
        f.truth
            .iter()
            .map(|&s| {
                let site = f.target.catalog().site(s as usize);
                (site.a_par, site.a_perp)
            })
            .collect(),
    )
    .unwrap();
    let lambda = DecoherenceParam::new(f.lambda).unwrap();
    c.bench_function("coherence_signal/k10_n250", |b| {
        b.iter(|| coherence_signal(black_box(&bath), lambda, f.target.spec(), SignalMode::Verbatim).unwrap())
    });
}

fn likelihood(c: &mut Criterion) {
    let f = fixture(12.0, LikelihoodConfig::default());
    let model = f.target.model_signal(&f.truth, f.lambda);
    let mut g = c.benchmark_group("log_likelihood");
    for (name, cfg) in [
        ("gaussian", LikelihoodConfig::default()),
        ("wasserstein_mixed", LikelihoodConfig { zeta: 0.5, mode: LikelihoodMode::WassersteinMixed, ..Default::default() }),
    ] {
        g.bench_function(name, |b| b.iter(|| log_likelihood(f.target.data(), black_box(&model), &cfg).unwrap()));
    }
    g.finish();
    c.bench_function("bath_posterior/log_likelihood_k10", |b| {
        b.iter(|| f.target.log_likelihood(black_box(&f.truth), f.lambda))
    });
}

fn kernels(c: &mut Criterion) {
    let f = fixture(12.0, LikelihoodConfig::default());
    let proposal = ProposalConfig { k_max: 20, ..Default::default() };
    c.bench_function("rjmcmc_step", |b| {
        let mut rng = stream(2, 0, 0);
        b.iter_batched(
            || ChainState::new(SpinConfiguration::new(f.truth.clone()).unwrap(), f.lambda, &f.target),
            |mut state| rjmcmc_step(&mut state, &f.target, &proposal, &mut rng),
            BatchSize::SmallInput,
        )
    });
    let schedule = ScheduleConfig {
        n_total: 2,
        n_rwmh: 20,
        n_rjmcmc: 20,
        n_pt: 5,
        n_ensembles: 2,
        burn_in: 0,
        n_temperatures: 4,
        heartbeat: 0,
        ..Default::default()
    };
    let mut g = c.benchmark_group("engine");
    g.sample_size(10);
    g.bench_function("two_cycles", |b| b.iter(|| engine::run(&f.target, &proposal, &schedule, 3).unwrap()));
    g.finish();
}

criterion_group!(benches, forward, likelihood, kernels);
criterion_main!(benches);
