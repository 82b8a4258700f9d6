use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use purcell_core::fdtd::{Component, Solver};
use purcell_core::geometry::{build_lattice, rasterize_with, CavityDesign, RasterOptions};
use purcell_core::trpl::{simulate_histogram_with, DecayComponent, DecayModelParams, SynthesisOptions, DEFAULT_SIGMA_NS};
use purcell_core::Backend;

fn backends() -> Vec<(&'static str, Backend)> {
    #[cfg(feature = "parallel")]
    return vec![("sequential", Backend::Sequential), ("rayon", Backend::Rayon)];
    #[cfg(not(feature = "parallel"))]
    vec![("sequential", Backend::Sequential)]
}

fn fdtd_steps(c: &mut Criterion) {
    let design = CavityDesign::default();
    let holes = build_lattice(&design).unwrap();
    let mut group = c.benchmark_group("fdtd_100_steps");
    group.sample_size(10);
    for res in [16, 32] {
        let grid = rasterize_with(&holes, &design, &RasterOptions { resolution: res, ..Default::default() }, Backend::default()).unwrap();
        for (name, backend) in backends() {
            group.bench_with_input(BenchmarkId::new(name, res), &grid, |b, grid| {
                let mut s = Solver::new(grid, 0.5, 16, 1e-6, backend).unwrap();
                let (i, j) = (grid.nx / 2, grid.ny / 2);
                b.iter(|| {
                    for _ in 0..100 {
                        s.step(&[(Component::Ey, i, j, 1e-3)]);
                    }
                    black_box(s.field(Component::Ey, i, j))
                });
            });
        }
    }
    group.finish();
}

fn rasterization(c: &mut Criterion) {
    let design = CavityDesign::default();
    let holes = build_lattice(&design).unwrap();
    let mut group = c.benchmark_group("rasterize");
    group.sample_size(10);
    for (name, backend) in backends() {
        group.bench_function(BenchmarkId::new(name, 32), |b| {
            b.iter(|| rasterize_with(&holes, &design, &RasterOptions { resolution: 32, ..Default::default() }, backend).unwrap())
        });
    }
    group.finish();
}

fn photon_synthesis(c: &mut Criterion) {
    let params = DecayModelParams {
        components: vec![
            DecayComponent { amplitude: 3.0, lifetime: 0.2 },
            DecayComponent { amplitude: 1.0, lifetime: 2.14 },
        ],
        sigma: DEFAULT_SIGMA_NS,
        baseline: 0.0,
        t0: 0.0,
    };
    let opts = SynthesisOptions { n_photons: 1_000_000, seed: 1, ..Default::default() };
    let mut group = c.benchmark_group("simulate_histogram_1e6");
    group.sample_size(10);
    for (name, backend) in backends() {
        group.bench_function(name, |b| b.iter(|| simulate_histogram_with(&params, &opts, backend).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, fdtd_steps, rasterization, photon_synthesis);
criterion_main!(benches);
