use cavsim_bench::organised_mixture;
use cavsim_core::dynamics::{realisation_rng, sample_initial, Integrator};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};

fn step(c: &mut Criterion) {
    let config = organised_mixture();
    let state = sample_initial(&config, 1).unwrap();
    let particles: usize = config.species.iter().map(|s| s.n_particles).sum();
    let mut group = c.benchmark_group("integrator");
    group.throughput(Throughput::Elements(particles as u64));
    group.bench_function("step_500_particles", |b| {
        let mut integrator = Integrator::new(&config);
        let mut rng = realisation_rng(7, 0);
        b.iter_batched_ref(
            || state.clone(),
            |s| {
                integrator.sync(s);
                for _ in 0..100 {
                    integrator.step(s, &mut rng).unwrap();
                }
            },
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, step);
criterion_main!(benches);
