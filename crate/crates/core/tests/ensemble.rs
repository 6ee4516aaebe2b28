use std::fs;
use std::path::Path;

use hhg_core::correction::{self, Band, DEFAULT_MASK_FLOOR};
use hhg_core::ensemble::{self, AtomParams, CorrectionPlan, ExperimentPlan, PropagationParams, PulseParams, StateSpec};
use hhg_core::light_states::LightStateKind;
use hhg_core::pipeline::{AmplitudeCache, Simulation};
use hhg_core::{Complex64, Error};

fn tiny(out: &Path) -> ExperimentPlan {
    ExperimentPlan {
        pulse: PulseParams {
            n_ramp: 1,
            n_flat: 1,
            ..PulseParams::default()
        },
        atom: AtomParams {
            x_max_bohr: 51.2,
            n_points: 512,
            ..AtomParams::default()
        },
        propagation: PropagationParams {
            steps_per_cycle: 512,
            tail_cycles: 1.0,
            taper_cycles: 1.0,
            ..PropagationParams::default()
        },
        states: vec![
            StateSpec {
                kind: LightStateKind::Coherent,
                nodes: 1,
            },
            StateSpec {
                kind: LightStateKind::Thermal,
                nodes: 4,
            },
        ],
        spectrum_max_order: 30.0,
        out_dir: out.to_path_buf(),
        ..ExperimentPlan::default()
    }
}

fn sim(plan: &ExperimentPlan) -> Simulation {
    let p = &plan.propagation;
    Simulation::new(
        plan.pulse.build().unwrap(),
        plan.atom.build().unwrap(),
        p.steps_per_cycle,
        p.tail_cycles,
        p.absorber,
        p.taper_cycles,
        p.omega_min_factor,
    )
    .unwrap()
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn worker_count_does_not_change_any_output_byte() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = tiny(&dir.path().join("one"));
    plan.correction = Some(CorrectionPlan {
        delta_count: 3,
        quad_order: Some(2),
        ..CorrectionPlan::default()
    });
    plan.workers = 1;
    ensemble::execute(&plan).unwrap();
    let mut eight = plan.clone();
    eight.workers = 8;
    eight.out_dir = dir.path().join("eight");
    ensemble::execute(&eight).unwrap();
    for name in ["spectrum.csv", "spectrum.json", "correction_map.csv", "f_ov.csv", "correction_factor.csv"] {
        assert_eq!(fs::read(plan.out_dir.join(name)).unwrap(), fs::read(eight.out_dir.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn resume_reuses_records_and_reruns_only_corrupted_ones() {
    let dir = tempfile::tempdir().unwrap();
    let plan = tiny(dir.path());
    let fresh = ensemble::execute(&plan).unwrap();
    let csv = read(&dir.path().join("spectrum.csv"));
    let n = fresh.manifest.distinct;
    assert_eq!(fresh.manifest.propagations, n);

    let manifest = ensemble::RunManifest::read(&dir.path().join("manifest.json")).unwrap();
    let again = ensemble::resume(&manifest, &plan).unwrap();
    assert_eq!(again.manifest.propagations, 0);
    assert_eq!(again.manifest.disk_hits, n);
    assert_eq!(read(&dir.path().join("spectrum.csv")), csv);

    // flip one byte in the middle of one record
    let rec = fs::read_dir(plan.cache_path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "rec"))
        .unwrap();
    let mut bytes = fs::read(&rec).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x55;
    fs::write(&rec, bytes).unwrap();
    let repaired = ensemble::resume(&manifest, &plan).unwrap();
    assert_eq!(repaired.manifest.propagations, 1);
    assert_eq!(repaired.manifest.disk_hits, n - 1);
    assert_eq!(read(&dir.path().join("spectrum.csv")), csv);
}

#[test]
fn resume_refuses_a_changed_physical_setting() {
    let dir = tempfile::tempdir().unwrap();
    let plan = tiny(dir.path());
    let manifest = ensemble::execute(&plan).unwrap().manifest;
    let mut changed = plan.clone();
    changed.mean_intensity_w_cm2 = 2e14;
    assert!(matches!(ensemble::resume(&manifest, &changed), Err(Error::HashMismatch(_))));
    // worker count is not a physical setting
    let mut more = plan.clone();
    more.workers = 3;
    assert!(ensemble::resume(&manifest, &more).is_ok());
}

fn alpha_m(sim: &Simulation, intensity: f64) -> Complex64 {
    Complex64::new(sim.mode.amplitude_for_intensity(intensity), 0.0)
}

fn plateau_band() -> Band {
    Band { q_lo: 5.0, q_hi: 25.0 }
}

#[test]
fn deviation_of_f_ell_grows_with_the_offset() {
    let dir = tempfile::tempdir().unwrap();
    let s = sim(&tiny(dir.path()));
    let cache = AmplitudeCache::new(&s);
    let offsets: Vec<Complex64> = [0.5, 1.0, 2.0, 3.0].iter().map(|&d| Complex64::new(d, 0.0)).collect();
    let map =
        correction::correction_map(&cache, alpha_m(&s, 1e14), &offsets, plateau_band(), plateau_band(), DEFAULT_MASK_FLOOR)
            .unwrap();
    for dev in [map.max_deviation(), map.max_modulus_deviation()] {
        assert!(dev.windows(2).all(|w| w[1] >= w[0]), "{dev:?}");
    }
    for ov in &map.f_ov_values {
        assert!(ov.value.norm() <= 1.0 + 1e-9, "{}", ov.value.norm());
    }
}

// compared through 1 - |f_l|: the phase of f_l grows with the amplitude
#[test]
fn weak_driving_deviates_more_at_matched_offset() {
    let dir = tempfile::tempdir().unwrap();
    let s = sim(&tiny(dir.path()));
    let cache = AmplitudeCache::new(&s);
    let offsets = [Complex64::new(1.0, 0.0)];
    let band = Band { q_lo: 1.5, q_hi: 9.5 };
    let strong = correction::correction_map(&cache, alpha_m(&s, 1e14), &offsets, band, band, DEFAULT_MASK_FLOOR).unwrap();
    let weak = correction::correction_map(&cache, alpha_m(&s, 1e10), &offsets, band, band, DEFAULT_MASK_FLOOR).unwrap();
    let (w, s) = (weak.max_modulus_deviation()[0], strong.max_modulus_deviation()[0]);
    assert!(w > s, "{w:e} {s:e}");
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let num: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    num / den
}

// Re t1 = -int |d_a - d_b|^2 is second order in the offset; Im t1 carries the
// first-order change of the harmonic phase
#[test]
fn t1_real_part_is_quadratic_and_imaginary_part_linear_in_small_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let s = sim(&tiny(dir.path()));
    let cache = AmplitudeCache::new(&s);
    let am = alpha_m(&s, 1e14);
    let (mut re, mut im) = (Vec::new(), Vec::new());
    for d in [0.25, 0.5, 1.0, 2.0] {
        let a = cache.get(am + d).unwrap();
        let b = cache.get(am - d).unwrap();
        let t1 = correction::t1(&a.dipole, &b.dipole).unwrap();
        assert!(t1.re < 0.0);
        re.push((f64::ln(d), (-t1.re).ln()));
        im.push((f64::ln(d), t1.im.abs().ln()));
    }
    let (sr, si) = (slope(&re), slope(&im));
    assert!((sr - 2.0).abs() <= 0.1, "{sr}");
    assert!((si - 1.0).abs() <= 0.1, "{si}");
}

#[test]
fn correction_factor_is_converged_at_fourth_order() {
    let dir = tempfile::tempdir().unwrap();
    let s = sim(&tiny(dir.path()));
    let cache = AmplitudeCache::new(&s);
    let am = alpha_m(&s, 1e14);
    let band = plateau_band();
    let c4 = correction::correction_factor(&cache, am, 4, band, band, DEFAULT_MASK_FLOOR).unwrap();
    let c6 = correction::correction_factor(&cache, am, 6, band, band, DEFAULT_MASK_FLOOR).unwrap();
    let mut compared = 0;
    for (a, b) in c4.values.iter().zip(&c6.values) {
        if let (Some(a), Some(b)) = (a, b) {
            assert!((a - b).norm() < 1e-6, "{a} {b}");
            compared += 1;
        }
    }
    assert!(compared > 10);
}
