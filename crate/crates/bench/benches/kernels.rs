use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pcf_core::anderson::{Anderson, GammaConfig};
use pcf_core::noise::{band_limited_field, enhance, mix};
use pcf_core::paracalc::{commutator_c, para_lt, resonant, LocalizationParams};
use pcf_core::variational::{minimize, DescentConfig, Nonlinearity};
use pcf_core::{DyadicPartition, GridSpec};

fn transforms(c: &mut Criterion) {
    let mut group = c.benchmark_group("fft_round_trip");
    for n in [64usize, 128, 256] {
        let f = band_limited_field(GridSpec::new(n, 1.0).unwrap(), 1, 0.5);
        group.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| {
            b.iter(|| black_box(f.spectral().fft_inverse()))
        });
    }
    group.finish();
}

fn products(c: &mut Criterion) {
    let mut group = c.benchmark_group("paraproducts");
    for n in [64usize, 128, 256] {
        let g = GridSpec::new(n, 1.0).unwrap();
        let p = DyadicPartition::new(g).unwrap();
        let [f, h, k] = [0u64, 1, 2].map(|i| band_limited_field(g, mix(7, i), 0.5));
        group.bench_function(BenchmarkId::new("para_lt", n), |b| b.iter(|| para_lt(&f, &h, &p).unwrap()));
        group.bench_function(BenchmarkId::new("resonant", n), |b| b.iter(|| resonant(&f, &h, &p).unwrap()));
        group.bench_function(BenchmarkId::new("commutator", n), |b| {
            b.iter(|| commutator_c(&f, &h, &k, &p).unwrap())
        });
    }
    group.finish();
}

fn solvers(c: &mut Criterion) {
    let mut group = c.benchmark_group("solvers");
    group.sample_size(10);
    for n in [64usize, 128] {
        let g = GridSpec::new(n, 1.0).unwrap();
        let p = DyadicPartition::new(g).unwrap();
        let enh = enhance(g, 3, 0.0, &p).unwrap();
        let m = Anderson::new(&enh, &p, LocalizationParams::new(1, 1), GammaConfig::default()).unwrap();
        let sharp = band_limited_field(g, 4, 1.5);
        group.bench_function(BenchmarkId::new("gamma_map", n), |b| b.iter(|| m.gamma_map(&sharp).unwrap()));
        let init = band_limited_field(g, 5, 1.0);
        let nl = Nonlinearity::double_well(10.0, 1.0);
        let cfg = DescentConfig::default();
        group.bench_function(BenchmarkId::new("minimize", n), |b| {
            b.iter(|| minimize(&init, &nl, &m, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, transforms, products, solvers);
criterion_main!(benches);
