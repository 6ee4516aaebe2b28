//! The driving pulse mode: flat-top envelope, single-photon normalization and
//! the classical field `E_alpha(t)` attached to a coherent amplitude.
//!
//! Sign convention for the carrier: the mode function carries the factor `i`
//! of the plane-wave field expansion, so the real field for amplitude `alpha`
//! is
//!
//! `E(t) = 2 E1p |alpha| F(t) cos(w0 t - arg(alpha) + pi/2)`.
//!
//! The envelope `F` is centred on `t = 0` and vanishes for
//! `|t| > T_r + T_f/2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fourier::{self, FrequencyAxis, TimeGrid};
use crate::units::{si, UnitKind, CONSTANTS};
use crate::{Error, Result};

/// Oversampling of the carrier used when evaluating the normalization
/// integral numerically.
const NORM_SAMPLES_PER_CYCLE: usize = 256;
const NORM_FFT_LEN: usize = 1 << 21;
/// Upper limit of the normalization integral in units of w0.
const NORM_OMEGA_MAX: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseMode {
    pub lambda0_m: f64,
    /// Carrier angular frequency in au.
    pub omega0: f64,
    pub n_ramp: u32,
    pub n_flat: u32,
    pub area_m2: f64,
    /// Dimensionless normalization integral `I(n_r, n_f)`.
    pub norm_integral: f64,
    /// Effective number of cycles, `(2/pi) I(n_r, n_f)`.
    pub n_eff: f64,
    pub v_eff_m3: f64,
    pub e1p_v_per_m: f64,
    pub e1p_au: f64,
    /// Peak intensity per photon in W/cm^2.
    pub i1p_w_cm2: f64,
}

impl PulseMode {
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega0
    }

    pub fn ramp_duration(&self) -> f64 {
        self.n_ramp as f64 * self.period()
    }

    pub fn flat_duration(&self) -> f64 {
        self.n_flat as f64 * self.period()
    }

    /// `T_r + T_f / 2`: the envelope vanishes beyond this `|t|`.
    pub fn half_support(&self) -> f64 {
        self.ramp_duration() + 0.5 * self.flat_duration()
    }

    pub fn envelope(&self, t: f64) -> f64 {
        flat_top(t, self.ramp_duration(), self.flat_duration())
    }

    /// Coherent amplitude modulus giving the requested peak intensity.
    pub fn amplitude_for_intensity(&self, intensity_w_cm2: f64) -> f64 {
        (intensity_w_cm2 / self.i1p_w_cm2).sqrt()
    }

    pub fn photons_for_intensity(&self, intensity_w_cm2: f64) -> f64 {
        intensity_w_cm2 / self.i1p_w_cm2
    }

    pub fn peak_intensity(&self, alpha: Complex64) -> f64 {
        self.i1p_w_cm2 * alpha.norm_sqr()
    }

    /// Time grid starting at the beginning of the pulse with an integer
    /// number of steps per cycle and `tail_cycles` after the pulse ends.
    pub fn time_grid(&self, steps_per_cycle: usize, tail_cycles: f64) -> Result<TimeGrid> {
        if steps_per_cycle == 0 || !(tail_cycles >= 0.0) {
            return Err(Error::invalid("steps per cycle must be positive and tail non-negative"));
        }
        let dt = self.period() / steps_per_cycle as f64;
        let cycles = (2 * self.n_ramp + self.n_flat) as f64 + tail_cycles;
        let steps = (cycles * steps_per_cycle as f64).round() as usize;
        TimeGrid::new(-self.half_support(), dt, steps + 1)
    }
}

fn flat_top(t: f64, t_ramp: f64, t_flat: f64) -> f64 {
    let a = t.abs();
    let half = 0.5 * t_flat;
    if a <= half {
        1.0
    } else if a <= t_ramp + half {
        1.0 - (a - half) / t_ramp
    } else {
        0.0
    }
}

/// Linear flat-top envelope of the mode.
pub fn flat_top_envelope(t: f64, mode: &PulseMode) -> f64 {
    mode.envelope(t)
}

fn cycle_count(value: f64, what: &str, min: f64) -> Result<u32> {
    if !value.is_finite() || value.fract() != 0.0 {
        return Err(Error::invalid(format!(
            "{what} = {value}: the flat-top mode is only normalizable for integer cycle counts"
        )));
    }
    if value < min {
        return Err(Error::invalid(format!("{what} must be at least {min}, got {value}")));
    }
    Ok(value as u32)
}

/// Dimensionless normalization integral
/// `I(n_r, n_f) = w0^2 * integral_0^inf dw |E+(w)|^2 / w`
/// where `E+` is the unitary transform of the positive-frequency part
/// `F(t) exp(-i w0 t) / 2` of the unit-peak field `F(t) cos(w0 t)`.
///
/// Evaluated in units where `w0 = 1` by a dense FFT of the sampled envelope
/// followed by a trapezoid sum over `(0, 8 w0]`.
pub fn normalization_integral(n_ramp: f64, n_flat: f64) -> Result<f64> {
    let n_ramp = cycle_count(n_ramp, "n_ramp", 1.0)?;
    let n_flat = cycle_count(n_flat, "n_flat", 0.0)?;
    let period = 2.0 * PI;
    let t_ramp = n_ramp as f64 * period;
    let t_flat = n_flat as f64 * period;
    let cycles = (2 * n_ramp + n_flat) as usize;
    let len = cycles * NORM_SAMPLES_PER_CYCLE + 1;
    let dt = period / NORM_SAMPLES_PER_CYCLE as f64;
    let grid = TimeGrid::new(-(t_ramp + 0.5 * t_flat), dt, len)?;
    let samples: Vec<f64> = grid.times().iter().map(|&t| flat_top(t, t_ramp, t_flat)).collect();

    let n = NORM_FFT_LEN.max(grid.fft_len());
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    rustfft::FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let dnu = 2.0 * PI / (n as f64 * dt);
    let scale = dt / (2.0 * PI).sqrt();
    // |E+(w)|^2 = |F^(w - 1)|^2 / 4, with F^ evaluated at nu = w - 1
    let spectral_power = |nu_index: isize| -> f64 {
        let idx = nu_index.rem_euclid(n as isize) as usize;
        0.25 * (buf[idx] * scale).norm_sqr()
    };
    let shift = (1.0 / dnu).round() as isize;
    debug_assert!(((shift as f64) * dnu - 1.0).abs() < 0.5 * dnu);
    let kmax = (NORM_OMEGA_MAX / dnu).floor() as isize;
    // integrand vanishes at w = 0 for integer cycle counts
    let values: Vec<f64> = (0..=kmax)
        .map(|k| {
            if k == 0 {
                0.0
            } else {
                let w = k as f64 * dnu;
                spectral_power(k - shift) / w
            }
        })
        .collect();
    Ok(fourier::trapezoid(&values, dnu))
}

/// Builds the pulse mode from SI inputs.
pub fn build_mode(lambda0_m: f64, n_ramp: u32, n_flat: u32, area_m2: f64) -> Result<PulseMode> {
    if !(lambda0_m > 0.0 && lambda0_m.is_finite()) {
        return Err(Error::invalid(format!("wavelength must be positive, got {lambda0_m}")));
    }
    if !(area_m2 > 0.0 && area_m2.is_finite()) {
        return Err(Error::invalid(format!("cross-section must be positive, got {area_m2}")));
    }
    let norm_integral = normalization_integral(n_ramp as f64, n_flat as f64)?;
    let n_eff = 2.0 / PI * norm_integral;
    let omega0_si = 2.0 * PI * si::C / lambda0_m;
    let v_eff_m3 = n_eff * area_m2 * lambda0_m;
    let photon_energy = si::HBAR * omega0_si;
    let e1p_v_per_m = (photon_energy / (2.0 * si::EPS0 * v_eff_m3)).sqrt();
    let i1p_w_cm2 = si::C * photon_energy / v_eff_m3 * 1e-4;
    Ok(PulseMode {
        lambda0_m,
        omega0: omega0_si * CONSTANTS.au_time_s,
        n_ramp,
        n_flat,
        area_m2,
        norm_integral,
        n_eff,
        v_eff_m3,
        e1p_v_per_m,
        e1p_au: e1p_v_per_m / UnitKind::Efield.factor(),
        i1p_w_cm2,
    })
}

/// Real classical field sampled on a uniform time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalField {
    pub times: TimeGrid,
    pub efield: Vec<f64>,
    pub alpha: Complex64,
    pub omega0: f64,
    /// Time at which the envelope returns to zero.
    pub pulse_end: f64,
}

impl ClassicalField {
    /// Zero field on the same axis, used for field-free reference runs.
    pub fn zero_like(&self) -> Self {
        Self {
            efield: vec![0.0; self.efield.len()],
            alpha: Complex64::new(0.0, 0.0),
            ..self.clone()
        }
    }

    pub fn peak(&self) -> f64 {
        self.efield.iter().fold(0.0f64, |m, e| m.max(e.abs()))
    }
}

pub fn classical_field(mode: &PulseMode, alpha: Complex64, times: &TimeGrid) -> ClassicalField {
    let amp = 2.0 * mode.e1p_au * alpha.norm();
    let phase = alpha.arg();
    let efield = (0..times.len)
        .map(|k| {
            let t = times.t(k);
            let env = mode.envelope(t);
            if env == 0.0 || amp == 0.0 {
                0.0
            } else {
                amp * env * (mode.omega0 * t - phase + 0.5 * PI).cos()
            }
        })
        .collect();
    ClassicalField {
        times: *times,
        efield,
        alpha,
        omega0: mode.omega0,
        pulse_end: mode.half_support(),
    }
}

/// Positive-frequency samples `E+(w)`, `w > 0`, of a classical field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSpectrum {
    pub axis: FrequencyAxis,
    pub values: Vec<Complex64>,
}

impl FieldSpectrum {
    pub fn omegas(&self) -> Vec<f64> {
        self.axis.omegas()
    }

    /// Value at the bin `first + j` of another axis with the same step.
    pub fn at_bin(&self, bin: usize) -> Complex64 {
        if bin < self.axis.first || bin >= self.axis.first + self.axis.len {
            Complex64::new(0.0, 0.0)
        } else {
            self.values[bin - self.axis.first]
        }
    }
}

pub fn field_spectrum(field: &ClassicalField) -> Result<FieldSpectrum> {
    let (axis, values) = fourier::positive_spectrum(&field.efield, &field.times, 0.0)?;
    Ok(FieldSpectrum { axis, values })
}

/// Same as [`field_spectrum`] for raw samples whose uniformity is checked.
pub fn field_spectrum_from_samples(times: &[f64], efield: &[f64]) -> Result<FieldSpectrum> {
    let grid = TimeGrid::from_samples(times)?;
    let (axis, values) = fourier::positive_spectrum(efield, &grid, 0.0)?;
    Ok(FieldSpectrum { axis, values })
}
