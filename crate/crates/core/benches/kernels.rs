//! Hot kernels on a one-worker pool against the default pool. Build with
//! `--no-default-features` to time the sequential fallback instead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use alpha_dynamo::alpha::alpha;
use alpha_dynamo::field::{abc_flow, random_profile, BoxSpec, TWO_PI};
use alpha_dynamo::mhd::{random_state, MhdSystem};

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let all = rayon::current_num_threads();
    let mut v = vec![(
        "single".to_string(),
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap(),
    )];
    v.push((
        format!("default-{all}"),
        rayon::ThreadPoolBuilder::new()
            .num_threads(all)
            .build()
            .unwrap(),
    ));
    v
}

fn wedge(c: &mut Criterion) {
    let a = random_profile(16, 2.0, 1).field().clone();
    let b = random_profile(16, 2.0, 2).field().clone();
    let mut g = c.benchmark_group("wedge_n16");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |bch| {
            pool.install(|| bch.iter(|| a.wedge(&b)))
        });
    }
    g.finish();
}

fn fft_round_trip(c: &mut Criterion) {
    let f = random_profile(16, 2.0, 3).field().clone();
    let dims = f.product_grid();
    let mut g = c.benchmark_group("grid_round_trip_n16");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |bch| {
            pool.install(|| {
                bch.iter(|| {
                    alpha_dynamo::field::SpectralVectorField::from_grid(
                        f.to_grid(dims),
                        dims,
                        f.half(),
                    )
                })
            })
        });
    }
    g.finish();
}

fn alpha_batch(c: &mut Criterion) {
    let flows: Vec<_> = (0..8).map(|s| random_profile(8, 4.0, s)).collect();
    let mut g = c.benchmark_group("alpha_batch_8x_n8");
    g.sample_size(20);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |bch| {
            pool.install(|| bch.iter(|| flows.iter().map(alpha).collect::<Vec<_>>()))
        });
    }
    g.finish();
}

fn mhd_rhs(c: &mut Criterion) {
    let u = abc_flow(TWO_PI, TWO_PI, TWO_PI, 3);
    let sys = MhdSystem::new(&u, BoxSpec::new([8, 1, 1]).unwrap(), [25, 3, 3], 0.5).unwrap();
    let st = random_state(&sys, 2.0, 4);
    let mut g = c.benchmark_group("mhd_rhs_box8");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |bch| {
            pool.install(|| bch.iter(|| sys.rhs(&st)))
        });
    }
    g.finish();
}

criterion_group!(benches, wedge, fft_round_trip, alpha_batch, mhd_rhs);
criterion_main!(benches);
