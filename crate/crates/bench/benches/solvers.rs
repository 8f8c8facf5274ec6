use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spotcheck_bench::{environments, mechanisms_for};
use spotcheck_core::equilibrium::{
    enumerate_symmetric_pure_equilibria, solve_thresholds, SolverOptions,
};
use spotcheck_core::mechanism::{expected_unchecked_utility, simulate_utilities};
use spotcheck_core::signal::fixtures::e1;
use spotcheck_core::{MechanismSpec, SpotGame, Strategy, StrategyProfile};

fn unchecked_utility(c: &mut Criterion) {
    let mut g = c.benchmark_group("unchecked_utility");
    for (name, env) in environments() {
        let k = env.num_labels();
        let profile =
            StrategyProfile::with_deviant(Strategy::low_identity(k), 0, Strategy::truthful(k));
        for spec in mechanisms_for(&env) {
            g.bench_with_input(
                BenchmarkId::new(spec.kind().name(), name),
                &spec,
                |b, spec| b.iter(|| expected_unchecked_utility(spec, &env, &profile, 0).unwrap()),
            );
        }
    }
    g.finish();
}

fn thresholds(c: &mut Criterion) {
    let mut g = c.benchmark_group("thresholds");
    g.sample_size(10);
    let opts = SolverOptions::default();
    for (name, env) in environments() {
        for spec in [MechanismSpec::OutputAgreement, MechanismSpec::ShnayderDG] {
            g.bench_with_input(
                BenchmarkId::new(spec.kind().name(), name),
                &spec,
                |b, spec| b.iter(|| solve_thresholds(spec, &env, &opts).unwrap()),
            );
        }
    }
    g.finish();
}

fn enumeration(c: &mut Criterion) {
    let mut g = c.benchmark_group("equilibria");
    g.sample_size(10);
    for (name, env) in environments() {
        let game = SpotGame::new(0.2, MechanismSpec::OutputAgreement).unwrap();
        g.bench_function(name, |b| {
            b.iter(|| enumerate_symmetric_pure_equilibria(&game, &env, 1e-9).unwrap())
        });
    }
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let env = e1().with_population(10, 20);
    let profile = StrategyProfile::symmetric(Strategy::truthful(2));
    let mut g = c.benchmark_group("monte_carlo");
    g.sample_size(10);
    for spec in [
        MechanismSpec::OutputAgreement,
        MechanismSpec::ShnayderDG,
        MechanismSpec::Radanovic15,
    ] {
        g.bench_function(spec.kind().name(), |b| {
            b.iter(|| simulate_utilities(&spec, &env, &profile, 4096, 1).unwrap())
        });
    }
    g.finish();
}

criterion_group!(
    benches,
    unchecked_utility,
    thresholds,
    enumeration,
    monte_carlo
);
criterion_main!(benches);
