use hhg_core::light_states::{husimi, radial_quadrature, LightState, RadialCdf, TAIL_MASS};
use hhg_core::Complex64;
use proptest::prelude::*;
use statrs::function::erf::erf;
use statrs::function::gamma::gamma_lr;

const I1P: f64 = 507.26;
const NBAR: f64 = 1e14 / I1P;

fn ks(cdf: &RadialCdf, oracle: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    (0..=2000)
        .map(|k| lo + (hi - lo) * k as f64 / 2000.0)
        .map(|r| (cdf.cdf(r) - oracle(r)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn thermal_cdf_is_exponential_in_intensity() {
    for nbar in [3.0, 1e4, NBAR] {
        let s = LightState::thermal(nbar).unwrap();
        let cdf = RadialCdf::new(&s);
        let m = nbar + 1.0;
        let d = ks(&cdf, |r| -(-r * r / m).exp_m1(), 0.0, (20.0 * m).sqrt());
        assert!(d < 1e-3, "nbar {nbar}: {d:e}");
    }
}

#[test]
fn fock_cdf_is_a_gamma_distribution_in_intensity() {
    // |alpha|^2 under the Fock Husimi function is Gamma(n + 1, 1)
    for n in [0u64, 5, 50, 5000] {
        let s = LightState::fock(n);
        let cdf = RadialCdf::new(&s);
        let (lo, hi) = s.radial_support();
        let d = ks(&cdf, |r| if r > 0.0 { gamma_lr(n as f64 + 1.0, r * r) } else { 0.0 }, lo, hi);
        assert!(d < 1e-3, "n {n}: {d:e}");
    }
}

/// `P(X^2 + Y^2 <= R^2)` for independent centred Gaussians of variances
/// `s1 < s2`, integrating over the narrow direction.
fn gaussian_disk(s1: f64, s2: f64, radius: f64) -> f64 {
    let n = 4000;
    let xmax = (12.0 * s1).sqrt().min(radius);
    let h = 2.0 * xmax / n as f64;
    let mut total = 0.0;
    for k in 0..=n {
        let x = -xmax + k as f64 * h;
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        let y = (radius * radius - x * x).max(0.0).sqrt();
        let pdf = (-x * x / (2.0 * s1)).exp() / (2.0 * std::f64::consts::PI * s1).sqrt();
        total += w * pdf * erf(y / (2.0 * s2).sqrt());
    }
    total * h
}

#[test]
fn bsv_cdf_matches_a_two_gaussian_oracle() {
    for nbar in [3.0, 1e3, NBAR] {
        let s = LightState::bsv(nbar).unwrap();
        let r = nbar.sqrt().asinh();
        let e2 = (2.0 * r).exp();
        // variances of the Husimi function along and across the squeezing axis
        let (s1, s2) = (0.25 * (1.0 / e2 + 1.0), 0.25 * (e2 + 1.0));
        let cdf = RadialCdf::new(&s);
        let hi = (30.0 * s2).sqrt();
        let d = ks(&cdf, |rad| gaussian_disk(s1, s2, rad), 0.0, hi);
        assert!(d < 1e-3, "nbar {nbar}: {d:e}");
    }
}

#[test]
fn thermal_quadrature_reproduces_the_truncated_mean() {
    let m = NBAR + 1.0;
    // mean of an exponential conditioned below its 1 - TAIL_MASS quantile
    let cut = -TAIL_MASS.ln();
    let expect = m * (1.0 - cut * TAIL_MASS / (1.0 - TAIL_MASS));
    let s = LightState::thermal(NBAR).unwrap();
    for n in [32, 48] {
        let q = radial_quadrature(&s, n, I1P).unwrap();
        let got = q.mean_intensity_photons();
        assert!(((got - expect) / expect).abs() < 1e-4, "n {n}: {:e}", (got - expect) / expect);
        assert!((q.truncated_mass - TAIL_MASS).abs() < 1e-12);
    }
}

#[test]
fn bsv_quadrature_reproduces_the_truncated_mean() {
    let s = LightState::bsv(NBAR).unwrap();
    let cdf = RadialCdf::new(&s);
    let rc = cdf.quantile(1.0 - TAIL_MASS);
    // independent fine integral over the kept range, graded towards r = 0
    let n = 1_000_000;
    let (mut mass, mut moment) = (0.0, 0.0);
    for k in 0..n {
        let a = rc * (k as f64 / n as f64).powi(2);
        let b = rc * ((k + 1) as f64 / n as f64).powi(2);
        let mid = 0.5 * (a + b);
        let (pa, pm, pb) = (s.radial_density(a), s.radial_density(mid), s.radial_density(b));
        mass += (b - a) / 6.0 * (pa + 4.0 * pm + pb);
        moment += (b - a) / 6.0 * (a * a * pa + 4.0 * mid * mid * pm + b * b * pb);
    }
    let expect = moment / mass;
    let q = radial_quadrature(&s, 32, I1P).unwrap();
    let got = q.mean_intensity_photons();
    assert!(((got - expect) / expect).abs() < 1e-4, "{:e}", (got - expect) / expect);
}

fn any_state() -> impl Strategy<Value = LightState> {
    prop_oneof![
        (0.0f64..20.0, 0.0f64..6.3).prop_map(|(r, p)| LightState::coherent(Complex64::from_polar(r, p))),
        (0u64..60).prop_map(LightState::fock),
        (0.01f64..50.0).prop_map(|n| LightState::thermal(n).unwrap()),
        (0.01f64..50.0).prop_map(|n| LightState::bsv(n).unwrap()),
    ]
}

proptest! {
    #[test]
    fn husimi_is_nonnegative(state in any_state(), re in -30.0f64..30.0, im in -30.0f64..30.0) {
        let q = husimi(&state, Complex64::new(re, im));
        prop_assert!(q >= 0.0 && q.is_finite());
        prop_assert!(q <= 1.0 / std::f64::consts::PI + 1e-15);
    }

    #[test]
    fn quadrature_weights_are_a_probability_vector(state in any_state(), n in 2usize..40) {
        let q = radial_quadrature(&state, n, I1P).unwrap();
        prop_assert_eq!(q.len(), n);
        prop_assert!(q.weights.iter().all(|&w| w > 0.0));
        prop_assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(q.nodes.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(q.nodes.iter().all(|r| *r >= 0.0));
    }
}
