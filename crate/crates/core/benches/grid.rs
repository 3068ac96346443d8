use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use laplace_gmrf::engine::{run_inla, EngineSettings, Model, Strategy};
use laplace_gmrf::latent::{ComponentSpec, HyperParam, LatentModelSpec, DEFAULT_FIXED_PRIOR_PRECISION};
use laplace_gmrf::likelihood::{Family, ObservationModel};
use laplace_gmrf::oracle::{brute_posterior, AxisRange, QuadratureSpec};
use laplace_gmrf::par::Execution;
use laplace_gmrf::sparse::SparseMatrix;

fn poisson_counts(n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    (0..n)
        .map(|i| {
            let rate = (1.0 + (i as f64 / 15.0).sin()).exp();
            Poisson::new(rate).unwrap().sample(&mut rng)
        })
        .collect()
}

fn ar1_poisson(n: usize) -> Model {
    let y = poisson_counts(n);
    let latent = LatentModelSpec::new(
        vec![ComponentSpec::ar1("u", n, 0, 1)],
        vec![HyperParam::log_precision("u"), HyperParam::correlation("rho")],
        DEFAULT_FIXED_PRIOR_PRECISION,
    )
    .unwrap();
    let obs = ObservationModel::single(Family::Poisson, &y, SparseMatrix::identity(n)).unwrap();
    Model::new(latent, obs).unwrap()
}

fn bench_engine(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_inla");
    group.sample_size(10);
    for (strategy, n) in [(Strategy::Gaussian, 400), (Strategy::Laplace, 12)] {
        let model = ar1_poisson(n);
        for exec in [Execution::Serial, Execution::Parallel] {
            let settings = EngineSettings {
                strategy,
                execution: exec,
                ..EngineSettings::default()
            };
            group.bench_with_input(BenchmarkId::new(format!("{strategy:?}/{exec:?}"), n), &model, |b, m| {
                b.iter(|| run_inla(m, &settings).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_oracle(c: &mut Criterion) {
    let y = poisson_counts(2);
    let latent = LatentModelSpec::new(
        vec![ComponentSpec::iid("u", 2, 0)],
        vec![HyperParam::log_precision("u")],
        DEFAULT_FIXED_PRIOR_PRECISION,
    )
    .unwrap();
    let obs = ObservationModel::single(Family::Poisson, &y, SparseMatrix::identity(2)).unwrap();
    let spec = QuadratureSpec {
        latent_ranges: vec![AxisRange::new(-3.0, 4.0, 81); 2],
        theta_ranges: vec![AxisRange::new(-4.0, 16.0, 81)],
    };
    let mut group = c.benchmark_group("brute_posterior");
    group.sample_size(10);
    for exec in [Execution::Serial, Execution::Parallel] {
        group.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| brute_posterior(&latent, &obs, &spec, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_engine, bench_oracle);
criterion_main!(benches);
