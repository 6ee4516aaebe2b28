//! Husimi distributions of the pulse-mode light states and the radial
//! quadratures that reduce `integral d^2 alpha Q(alpha) f(|alpha|)` to a
//! weighted sum over a handful of classical amplitudes.
//!
//! Every state's Q function is reduced to its radial marginal
//! `p(r) = r * integral dphi Q(r e^{i phi})`. Nodes are placed by
//! Gauss-Legendre on the cumulative distribution of `r`, in panels that
//! refine geometrically towards the upper tail, and the tail beyond the
//! quantile `1 - 1e-6` is dropped.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::quadrature::gauss_legendre;
use crate::{Error, Result};

/// Upper-tail probability mass left out of radial quadratures.
pub const TAIL_MASS: f64 = 1e-6;
const CDF_PANELS: usize = 40_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LightStateKind {
    Coherent,
    Fock,
    Thermal,
    Bsv,
}

impl LightStateKind {
    pub const ALL: [LightStateKind; 4] = [
        LightStateKind::Coherent,
        LightStateKind::Fock,
        LightStateKind::Thermal,
        LightStateKind::Bsv,
    ];

    pub fn label(self) -> &'static str {
        match self {
            LightStateKind::Coherent => "coherent",
            LightStateKind::Fock => "fock",
            LightStateKind::Thermal => "thermal",
            LightStateKind::Bsv => "bsv",
        }
    }
}

impl std::str::FromStr for LightStateKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "coherent" => Ok(Self::Coherent),
            "fock" => Ok(Self::Fock),
            "thermal" => Ok(Self::Thermal),
            "bsv" | "squeezed" | "squeezed_vacuum" => Ok(Self::Bsv),
            other => Err(Error::invalid(format!("unknown light state '{other}'"))),
        }
    }
}

impl std::fmt::Display for LightStateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LightState {
    Coherent { alpha0: Complex64 },
    Fock { n: u64 },
    Thermal { nbar: f64 },
    /// Single-mode squeezed vacuum `S(r e^{i theta})|0>`.
    Bsv { squeeze: f64, theta: f64 },
}

impl LightState {
    pub fn coherent(alpha0: Complex64) -> Self {
        LightState::Coherent { alpha0 }
    }

    pub fn fock(n: u64) -> Self {
        LightState::Fock { n }
    }

    pub fn thermal(nbar: f64) -> Result<Self> {
        if !(nbar >= 0.0 && nbar.is_finite()) {
            return Err(Error::invalid(format!("thermal mean photon number must be >= 0, got {nbar}")));
        }
        Ok(LightState::Thermal { nbar })
    }

    /// Squeezed vacuum with `sinh^2 r = nbar`, squeezing axis along `theta = 0`.
    pub fn bsv(nbar: f64) -> Result<Self> {
        if !(nbar >= 0.0 && nbar.is_finite()) {
            return Err(Error::invalid(format!("squeezed-vacuum photon number must be >= 0, got {nbar}")));
        }
        Ok(LightState::Bsv {
            squeeze: nbar.sqrt().asinh(),
            theta: 0.0,
        })
    }

    /// State of the given kind with `<b^dagger b> = nbar` (rounded for Fock).
    pub fn with_mean_photons(kind: LightStateKind, nbar: f64) -> Result<Self> {
        if !(nbar >= 0.0 && nbar.is_finite()) {
            return Err(Error::invalid(format!("mean photon number must be >= 0, got {nbar}")));
        }
        match kind {
            LightStateKind::Coherent => Ok(Self::coherent(Complex64::new(nbar.sqrt(), 0.0))),
            LightStateKind::Fock => Ok(Self::fock(nbar.round() as u64)),
            LightStateKind::Thermal => Self::thermal(nbar),
            LightStateKind::Bsv => Self::bsv(nbar),
        }
    }

    pub fn kind(&self) -> LightStateKind {
        match self {
            LightState::Coherent { .. } => LightStateKind::Coherent,
            LightState::Fock { .. } => LightStateKind::Fock,
            LightState::Thermal { .. } => LightStateKind::Thermal,
            LightState::Bsv { .. } => LightStateKind::Bsv,
        }
    }

    /// `<b^dagger b>`.
    pub fn mean_photons(&self) -> f64 {
        match *self {
            LightState::Coherent { alpha0 } => alpha0.norm_sqr(),
            LightState::Fock { n } => n as f64,
            LightState::Thermal { nbar } => nbar,
            LightState::Bsv { squeeze, .. } => squeeze.sinh().powi(2),
        }
    }

    /// `integral Q |alpha|^2 d^2 alpha = <b b^dagger> = <b^dagger b> + 1`.
    pub fn q_second_moment(&self) -> f64 {
        self.mean_photons() + 1.0
    }

    /// Quadrature variances `(along, across)` the squeezing axis, computed
    /// without the `1 - tanh r` cancellation.
    fn bsv_variances(squeeze: f64) -> (f64, f64) {
        let e2 = (2.0 * squeeze).exp();
        (0.25 * (1.0 + 1.0 / e2), 0.25 * (e2 + 1.0))
    }

    /// Radial marginal `p(r)` with `integral_0^inf p(r) dr = 1`.
    pub fn radial_density(&self, r: f64) -> f64 {
        if r < 0.0 {
            return 0.0;
        }
        match *self {
            LightState::Coherent { alpha0 } => {
                let r0 = alpha0.norm();
                2.0 * r * (-(r - r0) * (r - r0)).exp() * bessel_i0_scaled(2.0 * r * r0)
            }
            LightState::Fock { n } => 2.0 * r * PI * fock_q(n, r * r),
            LightState::Thermal { nbar } => {
                let m = nbar + 1.0;
                2.0 * r * (-r * r / m).exp() / m
            }
            LightState::Bsv { squeeze, .. } => {
                let (s1, s2) = Self::bsv_variances(squeeze);
                let x = r * r;
                let z = 0.25 * x * (1.0 / s1 - 1.0 / s2);
                2.0 * r * (-x / (2.0 * s2)).exp() * bessel_i0_scaled(z) / (2.0 * (s1 * s2).sqrt())
            }
        }
    }

    /// Range of `r` carrying all but a negligible (< 1e-15) part of the mass.
    pub fn radial_support(&self) -> (f64, f64) {
        match *self {
            LightState::Coherent { alpha0 } => {
                let r0 = alpha0.norm();
                ((r0 - 9.0).max(0.0), r0 + 9.0)
            }
            LightState::Fock { n } => {
                let m = n as f64 + 1.0;
                let w = 12.0 * m.sqrt() + 12.0;
                ((m - w).max(0.0).sqrt(), (m + w).sqrt())
            }
            LightState::Thermal { nbar } => (0.0, ((nbar + 1.0) * 40.0).sqrt()),
            LightState::Bsv { squeeze, .. } => {
                let (_, s2) = Self::bsv_variances(squeeze);
                (0.0, (80.0 * s2).sqrt() + 3.0)
            }
        }
    }
}

/// `e^{-z} I_0(z)` for `z >= 0`.
pub fn bessel_i0_scaled(z: f64) -> f64 {
    let z = z.abs();
    if z < 15.0 {
        let q = 0.25 * z * z;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > 1e-17 * sum {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
        }
        sum * (-z).exp()
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..60 {
            let kf = k as f64;
            let next = term * (2.0 * kf - 1.0).powi(2) / (8.0 * kf * z);
            if next > term {
                break;
            }
            term = next;
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        sum / (2.0 * PI * z).sqrt()
    }
}

/// `ln Gamma(n + 1) - n ln n + n` without cancellation for large `n`.
fn stirling_remainder(n: f64) -> f64 {
    if n < 20.0 {
        ln_gamma(n + 1.0) - if n > 0.0 { n * n.ln() } else { 0.0 } + n
    } else {
        0.5 * (2.0 * PI * n).ln() + 1.0 / (12.0 * n) - 1.0 / (360.0 * n.powi(3))
            + 1.0 / (1260.0 * n.powi(5))
    }
}

/// Fock-state Husimi function at intensity `x = |alpha|^2`.
fn fock_q(n: u64, x: f64) -> f64 {
    if n == 0 {
        return (-x).exp() / PI;
    }
    if x <= 0.0 {
        return 0.0;
    }
    let nf = n as f64;
    let u = (x - nf) / nf;
    let log_p = nf * (u.ln_1p() - u) - stirling_remainder(nf);
    log_p.exp() / PI
}

/// Husimi function `Q(alpha) = <alpha|rho|alpha> / pi`, normalized per `d^2 alpha`.
pub fn husimi(state: &LightState, alpha: Complex64) -> f64 {
    match *state {
        LightState::Coherent { alpha0 } => (-(alpha - alpha0).norm_sqr()).exp() / PI,
        LightState::Fock { n } => fock_q(n, alpha.norm_sqr()),
        LightState::Thermal { nbar } => {
            let m = nbar + 1.0;
            (-alpha.norm_sqr() / m).exp() / (PI * m)
        }
        LightState::Bsv { squeeze, theta } => {
            // rotate into the squeezing frame
            let a = alpha * Complex64::from_polar(1.0, -0.5 * theta);
            let (s1, s2) = LightState::bsv_variances(squeeze);
            let (x, y) = (a.re, a.im);
            (-x * x / (2.0 * s1) - y * y / (2.0 * s2)).exp() / (2.0 * PI * (s1 * s2).sqrt())
        }
    }
}

/// Nodes `|alpha_i|` and probability weights approximating the radial marginal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `I1p |alpha_i|^2` in W/cm^2.
    pub intensities_w_cm2: Vec<f64>,
    /// Probability mass dropped beyond the last panel.
    pub truncated_mass: f64,
}

impl RadialQuadrature {
    /// A single node carrying all the weight.
    pub fn delta(radius: f64, i1p_w_cm2: f64) -> Self {
        Self {
            nodes: vec![radius],
            weights: vec![1.0],
            intensities_w_cm2: vec![i1p_w_cm2 * radius * radius],
            truncated_mass: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&r, &w)| w * f(r)).sum()
    }

    pub fn mean_intensity_photons(&self) -> f64 {
        self.integrate(|r| r * r)
    }
}

/// Cumulative distribution of the radial marginal, tabulated with Simpson
/// panels and inverted by bisection plus Newton polishing.
pub struct RadialCdf<'a> {
    state: &'a LightState,
    r: Vec<f64>,
    cdf: Vec<f64>,
    total: f64,
}

impl<'a> RadialCdf<'a> {
    pub fn new(state: &'a LightState) -> Self {
        let (lo, hi) = state.radial_support();
        // panels graded quadratically towards the lower edge, where the
        // density of broad states switches on over a length of order one
        let edge = |k: usize| lo + (hi - lo) * (k as f64 / CDF_PANELS as f64).powi(2);
        let mut r = Vec::with_capacity(CDF_PANELS + 1);
        let mut cdf = Vec::with_capacity(CDF_PANELS + 1);
        let mut acc = 0.0;
        r.push(lo);
        cdf.push(0.0);
        for k in 0..CDF_PANELS {
            let (a, b) = (edge(k), edge(k + 1));
            acc += simpson(|x| state.radial_density(x), a, b);
            r.push(b);
            cdf.push(acc);
        }
        let total = acc;
        Self { state, r, cdf, total }
    }

    /// Mass captured by the tabulated support (should be 1 to ~1e-12).
    pub fn total_mass(&self) -> f64 {
        self.total
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = (self.r[0], *self.r.last().unwrap());
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let k = self.r.partition_point(|&e| e <= x).saturating_sub(1).min(self.r.len() - 2);
        let partial = simpson(|t| self.state.radial_density(t), self.r[k], x);
        (self.cdf[k] + partial) / self.total
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let target = u * self.total;
        let k = match self.cdf.binary_search_by(|c| c.total_cmp(&target)) {
            Ok(k) => return self.r[k],
            Err(k) => k.clamp(1, self.r.len() - 1),
        };
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let (r0, r1) = (self.r[k - 1], self.r[k]);
        let mut x = if c1 > c0 {
            r0 + (target - c0) / (c1 - c0) * (r1 - r0)
        } else {
            r0
        };
        for _ in 0..4 {
            let p = self.state.radial_density(x);
            if p <= 0.0 {
                break;
            }
            let err = self.cdf(x) - u;
            let next = (x - err / p).clamp(r0, r1);
            if (next - x).abs() <= 1e-15 * x.abs().max(1.0) {
                x = next;
                break;
            }
            x = next;
        }
        x
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
}

/// Radial quadrature with `n_nodes` Gauss-Legendre nodes on the CDF.
pub fn radial_quadrature(state: &LightState, n_nodes: usize, i1p_w_cm2: f64) -> Result<RadialQuadrature> {
    if n_nodes < 2 {
        return Err(Error::invalid(format!("radial quadrature needs at least 2 nodes, got {n_nodes}")));
    }
    let panels = n_nodes.min(6);
    let decades = -TAIL_MASS.log10();
    // upper tail mass at panel boundaries: 1, 10^{-d/P}, ..., TAIL_MASS
    let bounds: Vec<f64> = (0..=panels)
        .map(|k| {
            if k == panels {
                1.0 - TAIL_MASS
            } else {
                1.0 - 10f64.powf(-decades * k as f64 / panels as f64)
            }
        })
        .collect();
    let cdf = RadialCdf::new(state);
    let thermal_mean = match *state {
        LightState::Thermal { nbar } => Some(nbar + 1.0),
        _ => None,
    };
    let mut nodes = Vec::with_capacity(n_nodes);
    let mut weights = Vec::with_capacity(n_nodes);
    for p in 0..panels {
        let count = n_nodes / panels + usize::from(p < n_nodes % panels);
        for (u, w) in gauss_legendre(count, bounds[p], bounds[p + 1])? {
            let r = match thermal_mean {
                Some(m) => (-m * (-u).ln_1p()).sqrt(),
                None => cdf.quantile(u),
            };
            nodes.push(r);
            weights.push(w);
        }
    }
    let kept: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= kept);
    let intensities_w_cm2 = nodes.iter().map(|r| i1p_w_cm2 * r * r).collect();
    Ok(RadialQuadrature {
        nodes,
        weights,
        intensities_w_cm2,
        truncated_mass: 1.0 - kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const I1P: f64 = 507.26;

    /// Direct sum over the photon-number distribution of a thermal state,
    /// truncated at 20 nbar.
    fn thermal_q_by_fock_sum(nbar: f64, alpha: Complex64) -> f64 {
        let x = alpha.norm_sqr();
        let nmax = (20.0 * nbar).ceil() as u64 + 20;
        let mut total = 0.0;
        for n in 0..=nmax {
            let nf = n as f64;
            let log_pn = nf * (nbar / (nbar + 1.0)).ln() - (nbar + 1.0).ln();
            let log_overlap = -x + if n > 0 { nf * x.ln() } else { 0.0 } - ln_gamma(nf + 1.0);
            total += (log_pn + log_overlap).exp();
        }
        total / PI
    }

    /// Polar 2D integral of Q with Gauss-Legendre in r and trapezoid in phi.
    fn integrate_q_2d(state: &LightState, f: impl Fn(Complex64) -> f64) -> f64 {
        let (lo, hi) = state.radial_support();
        let panels = 200;
        let h = (hi - lo) / panels as f64;
        let nphi = 256;
        let mut total = 0.0;
        for p in 0..panels {
            for (r, w) in gauss_legendre(8, lo + p as f64 * h, lo + (p + 1) as f64 * h).unwrap() {
                let mut ring = 0.0;
                for k in 0..nphi {
                    let a = Complex64::from_polar(r, 2.0 * PI * k as f64 / nphi as f64);
                    ring += husimi(state, a) * f(a);
                }
                total += w * r * ring * 2.0 * PI / nphi as f64;
            }
        }
        total
    }

    fn states_small() -> Vec<LightState> {
        vec![
            LightState::coherent(Complex64::new(2.0, 1.0)),
            LightState::fock(7),
            LightState::thermal(3.0).unwrap(),
            LightState::bsv(2.5).unwrap(),
        ]
    }

    #[test]
    fn pinned_husimi_values() {
        let a0 = Complex64::new(4.4e5, -3.0);
        assert!((husimi(&LightState::coherent(a0), a0) - 1.0 / PI).abs() < 1e-15);
        let zero = Complex64::new(0.0, 0.0);
        assert!((husimi(&LightState::fock(0), zero) - 1.0 / PI).abs() < 1e-15);
        for nbar in [0.5, 4.0, 12.0] {
            let th = LightState::thermal(nbar).unwrap();
            assert!((husimi(&th, zero) - 1.0 / (PI * (nbar + 1.0))).abs() < 1e-15);
            assert!((thermal_q_by_fock_sum(nbar, zero) - husimi(&th, zero)).abs() < 1e-12);
        }
    }

    #[test]
    fn thermal_matches_fock_sum_oracle() {
        let th = LightState::thermal(5.0).unwrap();
        for a in [Complex64::new(1.0, 0.5), Complex64::new(-3.0, 2.0), Complex64::new(0.0, 6.0)] {
            let oracle = thermal_q_by_fock_sum(5.0, a);
            assert!((husimi(&th, a) - oracle).abs() < 1e-10 * oracle.max(1e-12), "{a}");
        }
    }

    #[test]
    fn fock_large_n_is_stable() {
        // at large n the radial profile in intensity is ~N(n+1, n+1)
        let n = 200_000_000_000u64;
        let peak = husimi(&LightState::fock(n), Complex64::new((n as f64).sqrt(), 0.0));
        let expect = 1.0 / (PI * (2.0 * PI * n as f64).sqrt());
        assert!((peak - expect).abs() / expect < 1e-5);
        let small = LightState::fock(3);
        let a = Complex64::new(1.5, 0.2);
        let x: f64 = a.norm_sqr();
        let direct = (-x).exp() * x.powi(3) / 6.0 / PI;
        assert!((husimi(&small, a) - direct).abs() < 1e-14);
    }

    #[test]
    fn husimi_normalized_in_two_dimensions() {
        for s in states_small() {
            let total = integrate_q_2d(&s, |_| 1.0);
            assert!((total - 1.0).abs() < 1e-8, "{:?}: {total}", s.kind());
            let second = integrate_q_2d(&s, |a| a.norm_sqr());
            assert!((second - s.q_second_moment()).abs() < 1e-7 * s.q_second_moment(), "{:?}", s.kind());
        }
    }

    #[test]
    fn husimi_nonnegative() {
        for s in states_small() {
            for k in 0..400 {
                let a = Complex64::from_polar(0.05 * k as f64, 0.37 * k as f64);
                assert!(husimi(&s, a) >= 0.0);
            }
        }
    }

    #[test]
    fn radial_marginal_is_phase_average() {
        for s in states_small() {
            for r in [0.3, 1.2, 2.7, 4.0] {
                let nphi = 512;
                let avg: f64 = (0..nphi)
                    .map(|k| husimi(&s, Complex64::from_polar(r, 2.0 * PI * k as f64 / nphi as f64)))
                    .sum::<f64>()
                    / nphi as f64;
                let expect = 2.0 * PI * r * avg;
                let got = s.radial_density(r);
                assert!((got - expect).abs() < 1e-10 * expect.max(1e-30), "{:?} r={r}", s.kind());
            }
        }
    }

    #[test]
    fn mean_photons_for_large_states() {
        let nbar = 1e14 / I1P;
        for kind in LightStateKind::ALL {
            let s = LightState::with_mean_photons(kind, nbar).unwrap();
            let tol = if kind == LightStateKind::Fock { 0.5 / nbar } else { 1e-9 };
            assert!((s.mean_photons() - nbar).abs() / nbar <= tol, "{kind}");
            let cdf = RadialCdf::new(&s);
            assert!((cdf.total_mass() - 1.0).abs() < 1e-6, "{kind}: {}", cdf.total_mass());
        }
    }

    #[test]
    fn too_few_nodes_rejected() {
        let s = LightState::thermal(1e3).unwrap();
        assert!(radial_quadrature(&s, 1, I1P).is_err());
        assert!(radial_quadrature(&s, 0, I1P).is_err());
    }

    #[test]
    fn coherent_quadrature_concentrates_at_alpha0() {
        let a0 = 4.4e5;
        let s = LightState::coherent(Complex64::new(a0, 0.0));
        for n in [2, 5, 16] {
            let q = radial_quadrature(&s, n, I1P).unwrap();
            let inside: f64 = q
                .nodes
                .iter()
                .zip(&q.weights)
                .filter(|(r, _)| (**r - a0).abs() <= 5.0)
                .map(|(_, w)| w)
                .sum();
            assert!(inside > 0.999);
            assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn thermal_quadrature_mean() {
        let nbar = 1e14 / I1P;
        let s = LightState::thermal(nbar).unwrap();
        for n in [32, 48, 64] {
            let q = radial_quadrature(&s, n, I1P).unwrap();
            let m = q.mean_intensity_photons();
            assert!((m - nbar).abs() / nbar < 1e-4, "n={n}: {}", (m - nbar) / nbar);
            assert!(q.weights.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn fock_quadrature_window() {
        let n = 200_000_000_000u64;
        let s = LightState::fock(n);
        let q = radial_quadrature(&s, 8, I1P).unwrap();
        let nf = n as f64;
        let inside: f64 = q
            .nodes
            .iter()
            .zip(&q.weights)
            .filter(|(r, _)| ((*r * *r) - nf).abs() <= 5.0 * nf.sqrt())
            .map(|(_, w)| w)
            .sum();
        assert!(inside > 0.9999);
    }
}
