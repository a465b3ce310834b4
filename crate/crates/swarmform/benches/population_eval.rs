//! Population evaluation throughput: sequential fold vs rayon data-parallel.
//!
//! Run with `cargo bench -p swarmform`. The parallel case only exists under
//! the default `parallel` feature; both paths produce identical results, so
//! the comparison is purely about wall time.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use swarmform::config::RunConfig;
use swarmform::nces::{evaluate_population_sequential, sample_population};
use swarmform::scenario::{builtin, SwarmFitness};

fn joint_samples(m: usize) -> (SwarmFitness, Vec<Vec<Vec<f64>>>) {
    let spec = builtin("basic-linear").unwrap();
    let run = RunConfig::default();
    let fitness = SwarmFitness::new(spec.clone(), &run).unwrap();
    let s = fitness.layout().param_count();
    let perturbations = sample_population(spec.n_missiles, s, m, run.sigma, 7, 1);
    (fitness, perturbations)
}

fn bench_population_eval(c: &mut Criterion) {
    let mut group = c.benchmark_group("population_eval");
    group.sample_size(10);
    for &m in &[8usize, 32] {
        let (fitness, joint) = joint_samples(m);
        group.bench_with_input(BenchmarkId::new("sequential", m), &m, |b, _| {
            b.iter(|| evaluate_population_sequential(&fitness, &joint).unwrap())
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", m), &m, |b, _| {
            b.iter(|| swarmform::nces::evaluate_population_parallel(&fitness, &joint).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_population_eval);
criterion_main!(benches);
