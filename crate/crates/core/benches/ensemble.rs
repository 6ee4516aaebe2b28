//! Ensemble throughput: the `par_map` path (rayon when the `parallel`
//! feature is on) against a plain sequential loop over the same amplitudes.
//!
//! `cargo bench -p hhg-core` compares both in the default build;
//! `cargo bench -p hhg-core --no-default-features` benches the sequential build.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hhg_core::exec::{par_map, with_workers};
use hhg_core::pipeline::Simulation;
use hhg_core::pulse::build_mode;
use hhg_core::tdse::{self, AbsorberSpec, NEON_SOFTENING};
use hhg_core::units::Grid;
use hhg_core::Complex64;

fn small_simulation() -> Simulation {
    let mode = build_mode(800e-9, 1, 1, 1e-12).unwrap();
    let atom = tdse::ground_state(&Grid::new(51.2, 512).unwrap(), NEON_SOFTENING).unwrap();
    Simulation::new(mode, atom, 512, 1.0, AbsorberSpec::default(), 1.0, 0.25).unwrap()
}

fn ensemble(c: &mut Criterion) {
    let sim = small_simulation();
    let am = sim.mode.amplitude_for_intensity(1e14);
    let amps: Vec<Complex64> = (0..8).map(|k| Complex64::new(am * (0.8 + 0.05 * k as f64), 0.0)).collect();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());

    let mut group = c.benchmark_group("ensemble_8_amplitudes");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| amps.iter().map(|a| sim.run(*a).unwrap().dipole.d_omega.len()).sum::<usize>())
    });
    let mut pools = vec![1, threads];
    pools.dedup();
    for workers in pools {
        group.bench_with_input(BenchmarkId::new("par_map", workers), &workers, |b, &w| {
            b.iter(|| {
                with_workers(w, || par_map(&amps, |a| sim.run(*a).unwrap().dipole.d_omega.len()))
                    .unwrap()
                    .into_iter()
                    .sum::<usize>()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, ensemble);
criterion_main!(benches);
