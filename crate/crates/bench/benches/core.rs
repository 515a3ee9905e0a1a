use std::hint::black_box;

use argo_gp::covariance::{KernelParams, Matern};
use argo_gp::metrics::crps_gaussian;
use argo_gp::points::PointSet;
use argo_gp::predict::{predict_points, PredictOptions};
use argo_gp::synthetic::{simulate_vecchia_model, uniform_points};
use argo_gp::vecchia::{compute_u, vecchia_score, OrderingKind, ScoreLevel, VecchiaLayout};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn params() -> KernelParams {
    KernelParams {
        sigma2: 1.0,
        ranges: vec![0.2, 0.3, 0.4, 0.5, 0.6],
        nu: 0.8,
        tau2: 0.1,
        mu: 0.0,
    }
}

fn problem(n: usize, m: usize) -> (PointSet, VecchiaLayout, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let pts = uniform_points(n, 5, &mut rng);
    let z = simulate_vecchia_model(&pts, &params(), m, &mut rng).unwrap();
    let layout = VecchiaLayout::build(&pts, m, &[1.0; 5], OrderingKind::Maximin, 0);
    (pts, layout, z)
}

fn kernel(c: &mut Criterion) {
    let mut g = c.benchmark_group("matern");
    let us: Vec<f64> = (0..1000).map(|i| 1e-3 + i as f64 * 0.01).collect();
    g.throughput(Throughput::Elements(us.len() as u64));
    for nu in [0.5, 0.8, 2.3] {
        let k = Matern::new(1.0, nu);
        g.bench_with_input(BenchmarkId::from_parameter(nu), &us, |b, us| {
            b.iter(|| us.iter().map(|&u| k.correlation_and_slope(black_box(u)).1).sum::<f64>())
        });
    }
    g.finish();
    c.bench_function("crps_gaussian", |b| {
        b.iter(|| crps_gaussian(black_box(0.3), black_box(1.2), black_box(-0.4)).unwrap())
    });
}

fn factor(c: &mut Criterion) {
    let mut g = c.benchmark_group("compute_u");
    g.sample_size(10);
    for n in [5_000, 20_000] {
        let (pts, layout, _) = problem(n, 30);
        let ordered = layout.ordered_points(&pts);
        g.throughput(Throughput::Elements(n as u64));
        g.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| compute_u(&ordered, &layout.cond_sets, &params()).unwrap())
        });
    }
    g.finish();
}

fn score(c: &mut Criterion) {
    let mut g = c.benchmark_group("vecchia_score");
    g.sample_size(10);
    let (pts, layout, z) = problem(5_000, 30);
    let ordered = layout.ordered_points(&pts);
    let zo = layout.ordered_values(&z);
    for (name, level) in [
        ("loglik", ScoreLevel::Loglik),
        ("gradient", ScoreLevel::Gradient),
        ("fisher", ScoreLevel::Fisher),
    ] {
        g.bench_function(name, |b| {
            b.iter(|| vecchia_score(&ordered, &layout.cond_sets, &zo, &params(), level, true).unwrap())
        });
    }
    g.finish();
}

fn ordering(c: &mut Criterion) {
    let mut g = c.benchmark_group("layout");
    g.sample_size(10);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pts = uniform_points(20_000, 5, &mut rng);
    for kind in [OrderingKind::Maximin, OrderingKind::Random] {
        g.bench_function(format!("{kind:?}"), |b| {
            b.iter(|| VecchiaLayout::build(&pts, 30, &[1.0; 5], kind, 0))
        });
    }
    g.finish();
}

fn prediction(c: &mut Criterion) {
    let mut g = c.benchmark_group("predict");
    g.sample_size(10);
    let (pts, _, z) = problem(20_000, 30);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let test = uniform_points(1_000, 5, &mut rng);
    g.throughput(Throughput::Elements(test.len() as u64));
    for m in [30, 100] {
        g.bench_function(BenchmarkId::from_parameter(m), |b| {
            b.iter(|| {
                predict_points(&pts, &z, &params(), &test, PredictOptions { m, include_nugget: true }).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, kernel, factor, score, ordering, prediction);
criterion_main!(benches);
