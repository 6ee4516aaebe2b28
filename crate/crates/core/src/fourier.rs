//! Uniform time axes and the unitary Fourier transform shared by the field
//! and dipole pipelines.
//!
//! Convention: `F(w) = (2 pi)^(-1/2) * integral dt exp(+i w t) f(t)`, so a
//! carrier `exp(-i w0 t)` lands at `w = +w0`. The integral is evaluated as
//! a rectangle sum over the samples, which makes the discrete Parseval
//! identity `sum_j |F_j|^2 dw = sum_k |f_k|^2 dt` exact.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uniformly sampled instants `t_k = start + k dt`, `k < len`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start: f64,
    pub dt: f64,
    pub len: usize,
}

impl TimeGrid {
    pub fn new(start: f64, dt: f64, len: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("time step must be positive, got {dt}")));
        }
        if len < 2 {
            return Err(Error::invalid("time grid needs at least two samples"));
        }
        Ok(Self { start, dt, len })
    }

    /// Validates that arbitrary sample instants are uniformly spaced.
    pub fn from_samples(times: &[f64]) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::invalid("time grid needs at least two samples"));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        let tol = 1e-9 * dt.abs().max(times[0].abs() * 1e-6);
        for (k, t) in times.iter().enumerate() {
            let expect = times[0] + k as f64 * dt;
            if (t - expect).abs() > tol.max(1e-12 * t.abs()) {
                return Err(Error::invalid(format!(
                    "non-uniform sampling at index {k}: {t} vs expected {expect}"
                )));
            }
        }
        Self::new(times[0], dt, times.len())
    }

    pub fn t(&self, k: usize) -> f64 {
        self.start + k as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.t(self.len - 1)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.t(k)).collect()
    }

    /// FFT length used for spectra of signals on this grid.
    pub fn fft_len(&self) -> usize {
        self.len.next_power_of_two()
    }

    pub fn omega_step(&self) -> f64 {
        2.0 * std::f64::consts::PI / (self.fft_len() as f64 * self.dt)
    }
}

/// Positive-frequency bins `w_j = (first + j) dw` of a spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyAxis {
    pub step: f64,
    pub first: usize,
    pub len: usize,
}

impl FrequencyAxis {
    pub fn omega(&self, j: usize) -> f64 {
        (self.first + j) as f64 * self.step
    }

    pub fn omegas(&self) -> Vec<f64> {
        (0..self.len).map(|j| self.omega(j)).collect()
    }

    /// Index of the bin nearest to `omega`, if inside the axis.
    pub fn index_of(&self, omega: f64) -> Option<usize> {
        let k = (omega / self.step).round();
        if k < self.first as f64 {
            return None;
        }
        let j = k as usize - self.first;
        (j < self.len).then_some(j)
    }

    pub fn same_as(&self, other: &FrequencyAxis) -> bool {
        self.first == other.first && self.len == other.len && self.step == other.step
    }
}

fn plan(n: usize) -> Arc<dyn Fft<f64>> {
    // inverse plan carries the exp(+i ...) kernel
    FftPlanner::new().plan_fft_inverse(n)
}

/// Full two-sided unitary spectrum in FFT order: index `j < N/2` is
/// `w = j dw`, index `j >= N/2` is `w = (j - N) dw`.
pub fn unitary_spectrum(samples: &[f64], grid: &TimeGrid) -> Result<Vec<Complex64>> {
    if samples.len() != grid.len {
        return Err(Error::mismatch(format!(
            "{} samples on a {}-point time grid",
            samples.len(),
            grid.len
        )));
    }
    let n = grid.fft_len();
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    plan(n).process(&mut buf);
    let scale = grid.dt / (2.0 * std::f64::consts::PI).sqrt();
    let dw = grid.omega_step();
    for (j, z) in buf.iter_mut().enumerate() {
        let w = if j < n / 2 {
            j as f64 * dw
        } else {
            (j as f64 - n as f64) * dw
        };
        *z *= Complex64::from_polar(scale, w * grid.start);
    }
    Ok(buf)
}

/// Positive-frequency part `w > omega_min` of the unitary spectrum, up to
/// the Nyquist frequency (exclusive).
pub fn positive_spectrum(
    samples: &[f64],
    grid: &TimeGrid,
    omega_min: f64,
) -> Result<(FrequencyAxis, Vec<Complex64>)> {
    let full = unitary_spectrum(samples, grid)?;
    let n = full.len();
    let step = grid.omega_step();
    let first = ((omega_min / step).floor() as usize + 1).max(1);
    let last = n / 2;
    if first >= last {
        return Err(Error::invalid(format!(
            "omega_min {omega_min} is above the Nyquist frequency {}",
            last as f64 * step
        )));
    }
    let axis = FrequencyAxis {
        step,
        first,
        len: last - first,
    };
    Ok((axis, full[first..last].to_vec()))
}

/// Trapezoid rule over a uniformly spaced axis.
pub fn trapezoid<T>(values: &[T], step: f64) -> T
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
{
    match values.len() {
        0 => T::default(),
        1 => values[0] * 0.0,
        n => {
            let inner = values[1..n - 1].iter().fold(T::default(), |acc, &v| acc + v);
            (inner + (values[0] + values[n - 1]) * 0.5) * step
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parseval_is_exact() {
        let grid = TimeGrid::new(-3.0, 0.01, 700).unwrap();
        let f: Vec<f64> = grid
            .times()
            .iter()
            .map(|t| (-(t * t)).exp() * (5.0 * t).cos() + 0.1 * t)
            .collect();
        let spec = unitary_spectrum(&f, &grid).unwrap();
        let lhs: f64 = spec.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.omega_step();
        let rhs: f64 = f.iter().map(|x| x * x).sum::<f64>() * grid.dt;
        assert!((lhs - rhs).abs() / rhs < 1e-12);
    }

    #[test]
    fn gaussian_transform_matches_analytic() {
        // FT of exp(-t^2/2) under the unitary convention is exp(-w^2/2)
        let grid = TimeGrid::new(-20.0, 0.02, 2001).unwrap();
        let f: Vec<f64> = grid.times().iter().map(|t| (-0.5 * t * t).exp()).collect();
        let (axis, spec) = positive_spectrum(&f, &grid, 0.0).unwrap();
        for (j, z) in spec.iter().enumerate().take(200) {
            let w = axis.omega(j);
            assert!((z - Complex64::new((-0.5 * w * w).exp(), 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn carrier_sign_convention() {
        // sin(w0 t) = (e^{i w0 t} - e^{-i w0 t}) / 2i: the positive-frequency
        // component of the kernel exp(+i w t) picks up the  e^{-i w0 t} part
        let grid = TimeGrid::new(0.0, 0.05, 4096).unwrap();
        let w0 = 40.0 * grid.omega_step();
        let f: Vec<f64> = grid.times().iter().map(|t| (w0 * t).sin()).collect();
        let (axis, spec) = positive_spectrum(&f, &grid, 0.0).unwrap();
        let j = axis.index_of(w0).unwrap();
        let z = spec[j];
        // coefficient of e^{-i w0 t} in sin is -1/(2i) = i/2
        assert!(z.im > 0.0 && z.re.abs() < 1e-6 * z.im, "{z}");
    }

    #[test]
    fn non_uniform_sampling_rejected() {
        assert!(TimeGrid::from_samples(&[0.0, 1.0, 2.5]).is_err());
        let g = TimeGrid::from_samples(&[0.0, 0.5, 1.0, 1.5]).unwrap();
        assert_eq!(g.len, 4);
        assert!((g.dt - 0.5).abs() < 1e-15);
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let v: Vec<f64> = (0..11).map(|k| 2.0 * k as f64 * 0.1 + 1.0).collect();
        assert!((trapezoid(&v, 0.1) - 2.0).abs() < 1e-14);
    }
}
