//! Particle solver and W2 cost matrix on a one-thread pool versus the
//! default pool. Build with `--no-default-features` to time the plain
//! iterator fallback instead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mvdelay::law::{cost_matrix, SegmentEnsemble};
use mvdelay::mckean::particle_solve;
use mvdelay::models::{LinearMeanField, LinearMeanFieldParams};
use mvdelay::{GroundMetric, Segment, TimeGrid};

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let default = rayon::current_num_threads();
    let mut sizes = vec![1];
    if default > 1 {
        sizes.push(default);
    }
    sizes
        .into_iter()
        .map(|n| (format!("threads={n}"), rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap()))
        .collect()
}

fn particles(c: &mut Criterion) {
    let model = LinearMeanField::new(LinearMeanFieldParams::isotropic(-0.5, 0.3, 0.4, 0.2, 1.0, 2)).unwrap();
    let grid = TimeGrid::with_horizon(16, 1.0 / 16.0, 1.0).unwrap();
    let psi = Segment::from_fn(grid.meta(), 2, |th| vec![1.0 + th; 2]).unwrap();
    let mut group = c.benchmark_group("particle_solve");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("n=2000", &name), |b| {
            b.iter(|| pool.install(|| particle_solve(&model, &psi, &grid, 0, 2000, 4).unwrap()))
        });
    }
    group.finish();
}

fn costs(c: &mut Criterion) {
    let grid = TimeGrid::with_horizon(32, 1.0 / 32.0, 1.0).unwrap();
    let ens = |shift: f64| {
        let samples = (0..400)
            .map(|i| Segment::from_fn(grid.meta(), 1, |th| vec![shift + (i as f64 * 0.37).sin() * (1.0 + th)]).unwrap())
            .collect();
        SegmentEnsemble::new(samples).unwrap()
    };
    let (a, b) = (ens(0.0), ens(0.5));
    let mut group = c.benchmark_group("cost_matrix");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("400x400", &name), |bch| {
            bch.iter(|| pool.install(|| cost_matrix(&a.views(), &b.views(), GroundMetric::SupNorm)))
        });
    }
    group.finish();
}

criterion_group!(benches, particles, costs);
criterion_main!(benches);
