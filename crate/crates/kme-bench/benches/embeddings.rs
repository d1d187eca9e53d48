//! Benchmarks for the hot paths: closed-form embedding distances, a single
//! empirical-error replicate, and ball packing.

use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use kme_core::estimator::{empirical_error, sample_target, Norm, Target};
use kme_core::geometry::{l2_gauss_dist2, rkhs_gauss_dist2, IsotropicGaussian};
use kme_core::kernel::RadialKernel;
use kme_core::lecam::pack_ball;

fn families(d: u32) -> Vec<RadialKernel> {
    vec![
        RadialKernel::gaussian(1.0, d).unwrap(),
        RadialKernel::gaussian_mixture(&[0.5, 0.5], &[2.0, 1.0], d).unwrap(),
        RadialKernel::inverse_multiquadric(1.0, 2.0, d).unwrap(),
        RadialKernel::matern(d as f64 / 2.0 + 1.5, 1.0, d).unwrap(),
    ]
}

fn bench_closed_forms(c: &mut Criterion) {
    let mut group = c.benchmark_group("gauss_dist2");
    group.sample_size(20).measurement_time(Duration::from_secs(3));
    let d = 3u32;
    let g0 = IsotropicGaussian::new(vec![0.0; 3], 1.0).unwrap();
    let g1 = IsotropicGaussian::new(vec![0.3, -0.2, 0.5], 1.0).unwrap();
    for kernel in families(d) {
        group.bench_function(format!("rkhs/{}", kernel.label()), |b| {
            b.iter(|| rkhs_gauss_dist2(black_box(&kernel), &g0, &g1).unwrap())
        });
        group.bench_function(format!("l2/{}", kernel.label()), |b| {
            b.iter(|| l2_gauss_dist2(black_box(&kernel), &g0, &g1).unwrap())
        });
    }
    group.finish();
}

fn bench_empirical_error(c: &mut Criterion) {
    let mut group = c.benchmark_group("empirical_error");
    group.sample_size(10).measurement_time(Duration::from_secs(5));
    let kernel = RadialKernel::gaussian(1.0, 1).unwrap();
    let target = Target::Gaussian(IsotropicGaussian::new(vec![0.0], 1.0).unwrap());
    for n in [512usize, 2048] {
        let sample = sample_target(&target, n, 7).unwrap();
        group.bench_function(format!("rkhs/n{n}"), |b| {
            b.iter(|| empirical_error(black_box(&kernel), &sample, &target, Norm::Rkhs).unwrap())
        });
    }
    group.finish();
}

fn bench_pack_ball(c: &mut Criterion) {
    let mut group = c.benchmark_group("pack_ball");
    group.sample_size(10).measurement_time(Duration::from_secs(3));
    for d in [2u32, 3] {
        group.bench_function(format!("d{d}"), |b| {
            b.iter(|| pack_ball(black_box(d), 0.1, 5).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_closed_forms, bench_empirical_error, bench_pack_ball);
criterion_main!(benches);
