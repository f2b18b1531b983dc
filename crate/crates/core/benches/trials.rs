use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sembind::channel::AttackKind;
use sembind::experiment::{run_experiment, ExperimentConfig, Sigma};
use sembind::{Execution, SchemeId};

fn modes() -> Vec<(&'static str, Execution)> {
    let mut m = vec![("sequential", Execution::Sequential)];
    #[cfg(feature = "parallel")]
    m.push(("parallel", Execution::Parallel));
    m
}

fn forge_grid(c: &mut Criterion) {
    let cfg = ExperimentConfig {
        schemes: vec![SchemeId::GsLite, SchemeId::PrcLite],
        sigmas: vec![Sigma::Value(1.0)],
        attack: Some(AttackKind::Imprint),
        attack_alphas: vec![0.99],
        trials: 64,
        ..ExperimentConfig::new("bench", 7)
    };
    let mut group = c.benchmark_group("forge_grid_64_trials");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_experiment(&cfg, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, forge_grid);
criterion_main!(benches);
