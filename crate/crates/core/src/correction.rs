//! Temporal-mode correction to the diagonal approximation.
//!
//! For `alpha = alpha_m + delta` and `beta = alpha_m - delta`:
//!
//! * `t1 = (1/(3 pi c^3)) int_0^inf dw w^3 (2 d_a^* d_b - |d_a|^2 - |d_b|^2)`,
//!   the atomic-unit form of the SI prefactor `1/(12 pi^2 hbar c^3 eps0)`
//!   with `hbar = 1`, `eps0 = 1/(4 pi)`;
//! * `t2 = (1/sqrt(2 pi)) int_0^inf dw [E_a^{+*} (d_b - d_a) - E_b^+ (d_b^* - d_a^*)]`,
//!   where `1/sqrt(2 pi hbar)` reduces to `1/sqrt(2 pi)`;
//! * `f_ov = <phi_b|phi_a> exp(t1 + t2)`, with the overlap normalized by the
//!   surviving norms so that absorbed flux does not register as a deviation;
//! * `f_l = d_a(w_l) d_b^*(w_l) / |d_m(w_l)|^2 f_ov`;
//! * `C_l = int d^2 delta exp(-|delta|^2)/pi f_l`, by a product Gauss-Hermite
//!   rule whose node set is closed under `delta -> -delta`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::exec::par_map;
use crate::fourier::FrequencyAxis;
use crate::pipeline::{AmplitudeCache, NodeRun};
use crate::pulse::FieldSpectrum;
use crate::quadrature::gauss_hermite_normalized;
use crate::spectrum::{emission_prefactor, SpectralDipole};
use crate::units::{inner_product, C_AU};
use crate::{Error, Result};

/// Largest `|t1 + t2|` accepted before exponentiation.
pub const EXPONENT_GUARD: f64 = 50.0;
/// Relative floor below which `|d_m|^2` bins are masked.
pub const DEFAULT_MASK_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug)]
pub struct CorrectionInputs<'a> {
    pub alpha_m: Complex64,
    pub delta_alpha: Complex64,
    pub dipole_alpha: &'a SpectralDipole,
    pub dipole_beta: &'a SpectralDipole,
    pub dipole_mean: &'a SpectralDipole,
    pub field_alpha: &'a FieldSpectrum,
    pub field_beta: &'a FieldSpectrum,
    /// `<phi_beta|phi_alpha>` divided by both final norms.
    pub overlap: Complex64,
}

impl<'a> CorrectionInputs<'a> {
    pub fn alpha(&self) -> Complex64 {
        self.alpha_m + self.delta_alpha
    }

    pub fn beta(&self) -> Complex64 {
        self.alpha_m - self.delta_alpha
    }

    pub fn from_runs(
        alpha_m: Complex64,
        delta_alpha: Complex64,
        run_alpha: &'a NodeRun,
        run_beta: &'a NodeRun,
        run_mean: &'a NodeRun,
    ) -> Result<Self> {
        Ok(Self {
            alpha_m,
            delta_alpha,
            dipole_alpha: &run_alpha.dipole,
            dipole_beta: &run_beta.dipole,
            dipole_mean: &run_mean.dipole,
            field_alpha: &run_alpha.field,
            field_beta: &run_beta.field,
            overlap: normalized_overlap(run_alpha, run_beta)?,
        })
    }
}

/// `<phi_beta|phi_alpha> / (|phi_alpha| |phi_beta|)`.
pub fn normalized_overlap(run_alpha: &NodeRun, run_beta: &NodeRun) -> Result<Complex64> {
    if run_alpha.record.times != run_beta.record.times {
        return Err(Error::mismatch("propagations cover different time spans"));
    }
    let s = inner_product(&run_beta.final_state, &run_alpha.final_state)?;
    let na = run_alpha.final_state.norm_sqr();
    let nb = run_beta.final_state.norm_sqr();
    Ok(s / (na * nb).sqrt())
}

fn check_axes(a: &SpectralDipole, b: &SpectralDipole) -> Result<()> {
    if a.axis.same_as(&b.axis) {
        Ok(())
    } else {
        Err(Error::mismatch("spectral dipoles use different frequency axes"))
    }
}

/// Trapezoid sum over the bins of `axis`.
fn integrate(axis: &FrequencyAxis, f: impl Fn(usize) -> Complex64) -> Complex64 {
    let n = axis.len;
    let mut s = Complex64::new(0.0, 0.0);
    for j in 0..n {
        let w = if j == 0 || j + 1 == n { 0.5 } else { 1.0 };
        s += f(j) * w;
    }
    s * axis.step
}

pub fn t1(dipole_alpha: &SpectralDipole, dipole_beta: &SpectralDipole) -> Result<Complex64> {
    check_axes(dipole_alpha, dipole_beta)?;
    let axis = dipole_alpha.axis;
    let weight = |j: usize| axis.omega(j).powi(3);
    let tail = |d: &SpectralDipole| {
        let peak = (0..axis.len).map(|j| weight(j) * d.d_omega[j].norm_sqr()).fold(0.0, f64::max);
        let last = weight(axis.len - 1) * d.d_omega[axis.len - 1].norm_sqr();
        if peak > 0.0 {
            last / peak
        } else {
            0.0
        }
    };
    let worst = tail(dipole_alpha).max(tail(dipole_beta));
    if worst > 1e-8 {
        log::warn!("t1 integrand at the end of the frequency axis is {worst:.2e} of its peak; tail truncated");
    }
    let s = integrate(&axis, |j| {
        let a = dipole_alpha.d_omega[j];
        let b = dipole_beta.d_omega[j];
        (a.conj() * b * 2.0 - a.norm_sqr() - b.norm_sqr()) * weight(j)
    });
    Ok(s / (3.0 * PI * C_AU.powi(3)))
}

pub fn t2(
    field_alpha: &FieldSpectrum,
    field_beta: &FieldSpectrum,
    dipole_alpha: &SpectralDipole,
    dipole_beta: &SpectralDipole,
) -> Result<Complex64> {
    check_axes(dipole_alpha, dipole_beta)?;
    let axis = dipole_alpha.axis;
    for f in [field_alpha, field_beta] {
        if f.axis.step != axis.step {
            return Err(Error::mismatch("field and dipole spectra use different frequency steps"));
        }
    }
    let s = integrate(&axis, |j| {
        let bin = axis.first + j;
        let ea = field_alpha.at_bin(bin);
        let eb = field_beta.at_bin(bin);
        let diff = dipole_beta.d_omega[j] - dipole_alpha.d_omega[j];
        ea.conj() * diff - eb * diff.conj()
    });
    Ok(s / (2.0 * PI).sqrt())
}

/// Overlap factor and the two exponents it is built from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapFactor {
    pub value: Complex64,
    pub overlap: Complex64,
    pub t1: Complex64,
    pub t2: Complex64,
}

pub fn f_ov(inputs: &CorrectionInputs) -> Result<OverlapFactor> {
    let t1 = t1(inputs.dipole_alpha, inputs.dipole_beta)?;
    let t2 = t2(inputs.field_alpha, inputs.field_beta, inputs.dipole_alpha, inputs.dipole_beta)?;
    let x = t1 + t2;
    if !(x.norm() <= EXPONENT_GUARD) {
        return Err(Error::Overflow(x.norm()));
    }
    Ok(OverlapFactor {
        value: inputs.overlap * x.exp(),
        overlap: inputs.overlap,
        t1,
        t2,
    })
}

/// Floor on `|d_m|^2`: `rel` times the median over harmonic orders `[q_lo, q_hi]`.
pub fn mask_floor(dipole_mean: &SpectralDipole, q_lo: f64, q_hi: f64, rel: f64) -> Result<f64> {
    let mut p: Vec<f64> = (0..dipole_mean.axis.len)
        .filter(|&j| {
            let q = dipole_mean.axis.omega(j) / dipole_mean.omega0;
            q >= q_lo && q <= q_hi
        })
        .map(|j| dipole_mean.d_omega[j].norm_sqr())
        .collect();
    if p.is_empty() {
        return Err(Error::invalid(format!("no spectral bins between harmonics {q_lo} and {q_hi}")));
    }
    p.sort_by(|a, b| a.total_cmp(b));
    let m = p.len();
    let median = if m % 2 == 1 { p[m / 2] } else { 0.5 * (p[m / 2 - 1] + p[m / 2]) };
    Ok(rel * median)
}

/// `f_l` at bin `j`, or `None` when `|d_m(w_j)|^2` is below `floor`.
pub fn f_ell(inputs: &CorrectionInputs, ov: &OverlapFactor, j: usize, floor: f64) -> Option<Complex64> {
    let denom = inputs.dipole_mean.d_omega[j].norm_sqr();
    if !(denom > floor) {
        return None;
    }
    let ratio = inputs.dipole_alpha.d_omega[j] * inputs.dipole_beta.d_omega[j].conj() / denom;
    Some(ratio * ov.value)
}

/// Harmonic band used for the mask median and the reported map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub q_lo: f64,
    pub q_hi: f64,
}

impl Band {
    fn bins(&self, axis: &FrequencyAxis, omega0: f64) -> Vec<usize> {
        (0..axis.len)
            .filter(|&j| {
                let q = axis.omega(j) / omega0;
                q >= self.q_lo && q <= self.q_hi
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionMap {
    pub alpha_m: Complex64,
    pub omegas: Vec<f64>,
    pub harmonic_orders: Vec<f64>,
    pub delta_alphas: Vec<Complex64>,
    /// `f_values[i][j]` for `delta_alphas[i]` and `omegas[j]`; `None` marks a masked bin.
    pub f_values: Vec<Vec<Option<Complex64>>>,
    pub f_ov_values: Vec<OverlapFactor>,
    pub masked: Vec<bool>,
    pub floor: f64,
}

impl CorrectionMap {
    /// `max_j |1 - f_l|` over unmasked bins for each offset.
    pub fn max_deviation(&self) -> Vec<f64> {
        self.f_values
            .iter()
            .map(|row| row.iter().flatten().map(|f| (1.0 - f).norm()).fold(0.0, f64::max))
            .collect()
    }

    /// `max_j |1 - |f_l||` over unmasked bins for each offset.
    pub fn max_modulus_deviation(&self) -> Vec<f64> {
        self.f_values
            .iter()
            .map(|row| row.iter().flatten().map(|f| (1.0 - f.norm()).abs()).fold(0.0, f64::max))
            .collect()
    }

    pub fn f_ov_deviation(&self) -> Vec<f64> {
        self.f_ov_values.iter().map(|f| (1.0 - f.value).norm()).collect()
    }

    pub fn f_ov_modulus_deviation(&self) -> Vec<f64> {
        self.f_ov_values.iter().map(|f| (1.0 - f.value.norm()).abs()).collect()
    }
}

/// Real offsets `[0, max]` with `n` evenly spaced nodes.
pub fn real_offsets(max: f64, n: usize) -> Vec<Complex64> {
    if n < 2 {
        return vec![Complex64::new(0.0, 0.0); n];
    }
    (0..n)
        .map(|i| Complex64::new(max * i as f64 / (n - 1) as f64, 0.0))
        .collect()
}

/// f_ov and f_l over `offsets` at the bins of `band`; the mask median is
/// taken over `plateau`.
pub fn correction_map(
    cache: &AmplitudeCache,
    alpha_m: Complex64,
    offsets: &[Complex64],
    band: Band,
    plateau: Band,
    floor_rel: f64,
) -> Result<CorrectionMap> {
    let mean = cache.get(alpha_m)?;
    let floor = mask_floor(&mean.dipole, plateau.q_lo, plateau.q_hi, floor_rel)?;
    let axis = mean.dipole.axis;
    let bins = band.bins(&axis, mean.dipole.omega0);
    let mut amps: Vec<Complex64> = Vec::new();
    for d in offsets {
        amps.push(alpha_m + d);
        amps.push(alpha_m - d);
    }
    for r in par_map(&amps, |a| cache.get(*a).map(|_| ())) {
        r?;
    }
    let mut f_values = Vec::with_capacity(offsets.len());
    let mut f_ov_values = Vec::with_capacity(offsets.len());
    for &d in offsets {
        let ra = cache.get(alpha_m + d)?;
        let rb = cache.get(alpha_m - d)?;
        let inputs = CorrectionInputs::from_runs(alpha_m, d, &ra, &rb, &mean)?;
        let ov = f_ov(&inputs)?;
        f_values.push(bins.iter().map(|&j| f_ell(&inputs, &ov, j, floor)).collect());
        f_ov_values.push(ov);
    }
    Ok(CorrectionMap {
        alpha_m,
        omegas: bins.iter().map(|&j| axis.omega(j)).collect(),
        harmonic_orders: bins.iter().map(|&j| axis.omega(j) / mean.dipole.omega0).collect(),
        delta_alphas: offsets.to_vec(),
        masked: bins.iter().map(|&j| mean.dipole.d_omega[j].norm_sqr() <= floor).collect(),
        f_values,
        f_ov_values,
        floor,
    })
}

/// Product Gauss-Hermite nodes `(delta, weight)` for `exp(-|delta|^2)/pi`.
pub fn offset_nodes(quad_order: usize) -> Result<Vec<(Complex64, f64)>> {
    if quad_order < 2 {
        return Err(Error::invalid(format!("quadrature order must be at least 2, got {quad_order}")));
    }
    let rule = gauss_hermite_normalized(quad_order)?;
    let mut out = Vec::with_capacity(quad_order * quad_order);
    for &(x, wx) in &rule {
        for &(y, wy) in &rule {
            out.push((Complex64::new(x, y), wx * wy));
        }
    }
    Ok(out)
}

/// Gaussian average of a per-bin function of the offset. A bin masked at
/// any node stays masked.
pub fn gaussian_average<F>(quad_order: usize, f: F) -> Result<Vec<Option<Complex64>>>
where
    F: Fn(Complex64) -> Result<Vec<Option<Complex64>>> + Sync + Send,
{
    let nodes = offset_nodes(quad_order)?;
    let values = par_map(&nodes, |(d, _)| f(*d));
    let mut acc: Option<Vec<Option<Complex64>>> = None;
    for ((_, w), v) in nodes.iter().zip(values) {
        let v = v?;
        match acc.as_mut() {
            None => acc = Some(v.iter().map(|x| x.map(|z| z * *w)).collect()),
            Some(a) => {
                if a.len() != v.len() {
                    return Err(Error::mismatch("integrand changed length between nodes"));
                }
                for (s, x) in a.iter_mut().zip(&v) {
                    *s = match (*s, x) {
                        (Some(s), Some(x)) => Some(s + x * *w),
                        _ => None,
                    };
                }
            }
        }
    }
    Ok(acc.unwrap_or_default())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionFactor {
    pub alpha_m: Complex64,
    pub quad_order: usize,
    pub omegas: Vec<f64>,
    pub harmonic_orders: Vec<f64>,
    pub values: Vec<Option<Complex64>>,
}

/// `C_l(alpha_m)` at the bins of `band`.
pub fn correction_factor(
    cache: &AmplitudeCache,
    alpha_m: Complex64,
    quad_order: usize,
    band: Band,
    plateau: Band,
    floor_rel: f64,
) -> Result<CorrectionFactor> {
    let mean = cache.get(alpha_m)?;
    let floor = mask_floor(&mean.dipole, plateau.q_lo, plateau.q_hi, floor_rel)?;
    let axis = mean.dipole.axis;
    let bins = band.bins(&axis, mean.dipole.omega0);
    let values = gaussian_average(quad_order, |d| {
        let ra = cache.get(alpha_m + d)?;
        let rb = cache.get(alpha_m - d)?;
        let inputs = CorrectionInputs::from_runs(alpha_m, d, &ra, &rb, &mean)?;
        let ov = f_ov(&inputs)?;
        Ok(bins.iter().map(|&j| f_ell(&inputs, &ov, j, floor)).collect())
    })?;
    Ok(CorrectionFactor {
        alpha_m,
        quad_order,
        omegas: bins.iter().map(|&j| axis.omega(j)).collect(),
        harmonic_orders: bins.iter().map(|&j| axis.omega(j) / mean.dipole.omega0).collect(),
        values,
    })
}

/// Spectrum with the correction factor applied to the diagonal result of a
/// single amplitude, at the factor's bins.
pub fn corrected_spectrum(dipole_mean: &SpectralDipole, factor: &CorrectionFactor) -> Vec<Option<f64>> {
    factor
        .omegas
        .iter()
        .zip(&factor.values)
        .map(|(&w, c)| {
            let j = dipole_mean.axis.index_of(w)?;
            let c = (*c)?;
            Some(emission_prefactor(w) * dipole_mean.d_omega[j].norm_sqr() * c.re)
        })
        .collect()
}
