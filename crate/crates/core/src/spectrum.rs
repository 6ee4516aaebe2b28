//! Spectral dipoles and the Husimi-weighted harmonic spectrum.
//!
//! The emitted spectral energy density of a single amplitude is
//! `omega^4 |d(omega)|^2 / (6 pi^2 eps0 c^3)`; with `eps0 = 1/(4 pi)` this
//! becomes `(2 / (3 pi)) omega^4 |d|^2 / c^3` in atomic units.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fourier::{self, FrequencyAxis};
use crate::light_states::RadialQuadrature;
use crate::tdse::DipoleRecord;
use crate::units::C_AU;
use crate::{Error, Result};

/// Lower edge of stored spectra in units of the carrier frequency.
pub const DEFAULT_OMEGA_MIN_FACTOR: f64 = 0.25;
pub const DEFAULT_TAPER_CYCLES: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowMeta {
    pub pulse_end: f64,
    /// `None` for a record used as propagated.
    pub taper_cycles: Option<f64>,
    pub omega_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralDipole {
    pub axis: FrequencyAxis,
    pub d_omega: Vec<Complex64>,
    pub alpha: Complex64,
    pub omega0: f64,
    pub window: WindowMeta,
}

impl SpectralDipole {
    pub fn omegas(&self) -> Vec<f64> {
        self.axis.omegas()
    }

    pub fn harmonic_orders(&self) -> Vec<f64> {
        self.axis.omegas().iter().map(|w| w / self.omega0).collect()
    }

    /// `a(omega) = -omega^2 d(omega)`.
    pub fn accel_spectrum(&self) -> Vec<Complex64> {
        self.d_omega
            .iter()
            .enumerate()
            .map(|(j, d)| -d * self.axis.omega(j).powi(2))
            .collect()
    }
}

/// Multiplies the acceleration by a cos^2 ramp over `taper_cycles` after the
/// end of the pulse and by zero beyond it.
pub fn temporal_window(rec: &DipoleRecord, taper_cycles: f64) -> Result<DipoleRecord> {
    if !(taper_cycles >= 0.0 && taper_cycles.is_finite()) {
        return Err(Error::invalid(format!("taper length must be >= 0 cycles, got {taper_cycles}")));
    }
    let period = 2.0 * PI / rec.omega0;
    let taper = taper_cycles * period;
    let available = rec.times.end() - rec.pulse_end;
    if taper > available * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "taper of {taper_cycles} cycles exceeds the {:.3} cycles recorded after the pulse",
            available / period
        )));
    }
    let mut out = rec.clone();
    for (k, a) in out.accel.iter_mut().enumerate() {
        let s = rec.times.t(k) - rec.pulse_end;
        let w = if s <= 0.0 {
            1.0
        } else if s < taper {
            (0.5 * PI * s / taper).cos().powi(2)
        } else {
            0.0
        };
        *a *= w;
    }
    out.taper_cycles = Some(taper_cycles);
    Ok(out)
}

/// `d(omega) = -a(omega) / omega^2` for `omega_min < omega < omega_Nyquist`.
pub fn spectral_dipole(rec: &DipoleRecord, omega_min: f64) -> Result<SpectralDipole> {
    if !(omega_min > 0.0) {
        return Err(Error::invalid(format!("omega_min must be positive, got {omega_min}")));
    }
    let (axis, a) = fourier::positive_spectrum(&rec.accel, &rec.times, omega_min)?;
    let d_omega = a
        .iter()
        .enumerate()
        .map(|(j, z)| -z / axis.omega(j).powi(2))
        .collect();
    Ok(SpectralDipole {
        axis,
        d_omega,
        alpha: rec.alpha,
        omega0: rec.omega0,
        window: WindowMeta {
            pulse_end: rec.pulse_end,
            taper_cycles: rec.taper_cycles,
            omega_min,
        },
    })
}

/// Window with the default taper and transform above `0.25 omega0`.
pub fn default_spectral_dipole(rec: &DipoleRecord) -> Result<SpectralDipole> {
    let windowed = temporal_window(rec, DEFAULT_TAPER_CYCLES)?;
    spectral_dipole(&windowed, DEFAULT_OMEGA_MIN_FACTOR * rec.omega0)
}

/// `(2 / (3 pi)) omega^4 / c^3`.
pub fn emission_prefactor(omega: f64) -> f64 {
    2.0 / (3.0 * PI) * omega.powi(4) / C_AU.powi(3)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub axis: FrequencyAxis,
    pub omega0: f64,
    pub d_eps_d_omega: Vec<f64>,
    pub state_label: String,
    pub quadrature: RadialQuadrature,
    /// `|d_i(omega)|^2` per node, kept for re-weighting.
    pub node_power: Vec<Vec<f64>>,
}

impl SpectrumResult {
    pub fn omegas(&self) -> Vec<f64> {
        self.axis.omegas()
    }

    pub fn harmonic_orders(&self) -> Vec<f64> {
        self.axis.omegas().iter().map(|w| w / self.omega0).collect()
    }

    /// Same node spectra combined with different weights.
    pub fn reweighted(&self, weights: &[f64]) -> Result<SpectrumResult> {
        if weights.len() != self.node_power.len() {
            return Err(Error::mismatch(format!(
                "{} weights for {} node spectra",
                weights.len(),
                self.node_power.len()
            )));
        }
        let mut out = self.clone();
        out.d_eps_d_omega = combine(&self.axis, &self.node_power, weights);
        out.quadrature.weights = weights.to_vec();
        Ok(out)
    }

    /// Peak spectral density within `+-0.25 omega0` of harmonic `q`.
    pub fn harmonic_peak(&self, q: f64) -> Option<f64> {
        harmonic_peak(&self.axis, &self.d_eps_d_omega, self.omega0, q)
    }
}

fn combine(axis: &FrequencyAxis, node_power: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    (0..axis.len)
        .map(|j| {
            let s: f64 = node_power.iter().zip(weights).map(|(p, w)| w * p[j]).sum();
            emission_prefactor(axis.omega(j)) * s
        })
        .collect()
}

/// `d eps/d omega = (2/(3 pi)) omega^4/c^3 sum_i w_i |d_i(omega)|^2`.
pub fn assemble_spectrum(
    dipoles: &[SpectralDipole],
    quad: &RadialQuadrature,
    state_label: &str,
) -> Result<SpectrumResult> {
    if dipoles.len() != quad.weights.len() {
        return Err(Error::mismatch(format!(
            "{} spectral dipoles for {} quadrature weights",
            dipoles.len(),
            quad.weights.len()
        )));
    }
    let first = dipoles.first().ok_or_else(|| Error::invalid("no spectral dipoles to assemble"))?;
    for d in dipoles {
        if !d.axis.same_as(&first.axis) {
            return Err(Error::mismatch("spectral dipoles use different frequency axes"));
        }
    }
    let node_power: Vec<Vec<f64>> = dipoles
        .iter()
        .map(|d| d.d_omega.iter().map(|z| z.norm_sqr()).collect())
        .collect();
    Ok(SpectrumResult {
        axis: first.axis,
        omega0: first.omega0,
        d_eps_d_omega: combine(&first.axis, &node_power, &quad.weights),
        state_label: state_label.to_string(),
        quadrature: quad.clone(),
        node_power,
    })
}

/// Maximum of `values` within `+-0.25 omega0` of harmonic `q`.
pub fn harmonic_peak(axis: &FrequencyAxis, values: &[f64], omega0: f64, q: f64) -> Option<f64> {
    let lo = (q - 0.25) * omega0;
    let hi = (q + 0.25) * omega0;
    let mut best: Option<f64> = None;
    for (j, v) in values.iter().enumerate() {
        let w = axis.omega(j);
        if w >= lo && w <= hi {
            best = Some(best.map_or(*v, |b: f64| b.max(*v)));
        }
    }
    best
}

/// Ponderomotive energy `E0^2 / (4 omega0^2)`.
pub fn ponderomotive_energy(e0: f64, omega0: f64) -> f64 {
    e0 * e0 / (4.0 * omega0 * omega0)
}

/// Cutoff harmonic order from `Ip + 3.17 Up`.
pub fn cutoff_order(ip: f64, e0: f64, omega0: f64) -> f64 {
    (ip + 3.17 * ponderomotive_energy(e0, omega0)) / omega0
}

/// Suppression in dB of the density at each even order `q` (the bin nearest
/// `q omega0`) below the stronger of the two adjacent odd peaks, for even
/// orders in `[q_lo, q_hi]`.
pub fn even_harmonic_suppression_db(
    axis: &FrequencyAxis,
    values: &[f64],
    omega0: f64,
    q_lo: u32,
    q_hi: u32,
) -> Vec<(u32, f64)> {
    let mut out = Vec::new();
    for q in q_lo..=q_hi {
        if q % 2 != 0 {
            continue;
        }
        let Some(j) = axis.index_of(q as f64 * omega0) else { continue };
        let (Some(lo), Some(hi)) = (
            harmonic_peak(axis, values, omega0, q as f64 - 1.0),
            harmonic_peak(axis, values, omega0, q as f64 + 1.0),
        ) else {
            continue;
        };
        out.push((q, 10.0 * (lo.max(hi) / values[j]).log10()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::TimeGrid;

    fn record_from(times: TimeGrid, accel: Vec<f64>, omega0: f64, pulse_end: f64) -> DipoleRecord {
        let n = accel.len();
        DipoleRecord {
            times,
            accel,
            norm_history: vec![1.0; n],
            position: vec![0.0; n],
            alpha: Complex64::new(1.0, 0.0),
            omega0,
            pulse_end,
            taper_cycles: None,
        }
    }

    #[test]
    fn hard_cutoff_and_zero_record() {
        let g = TimeGrid::new(0.0, 0.1, 1000).unwrap();
        let rec = record_from(g, vec![1.0; 1000], 1.0, 50.0);
        let w = temporal_window(&rec, 0.0).unwrap();
        for k in 0..g.len {
            let expect = if g.t(k) <= 50.0 { 1.0 } else { 0.0 };
            assert_eq!(w.accel[k], expect);
        }
        let zero = record_from(g, vec![0.0; 1000], 1.0, 50.0);
        let wz = temporal_window(&zero, 3.0).unwrap();
        assert!(wz.accel.iter().all(|&a| a == 0.0));
        let d = spectral_dipole(&wz, 0.25).unwrap();
        assert!(d.d_omega.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn taper_longer_than_tail_rejected() {
        let g = TimeGrid::new(0.0, 0.1, 1000).unwrap();
        let rec = record_from(g, vec![1.0; 1000], 1.0, 90.0);
        assert!(temporal_window(&rec, 2.0).is_err());
        assert!(temporal_window(&rec, 1.0).is_ok());
        assert!(temporal_window(&rec, -1.0).is_err());
    }

    #[test]
    fn non_positive_omega_min_rejected() {
        let g = TimeGrid::new(0.0, 0.1, 100).unwrap();
        let rec = record_from(g, vec![0.0; 100], 1.0, 5.0);
        assert!(spectral_dipole(&rec, 0.0).is_err());
        assert!(spectral_dipole(&rec, -1.0).is_err());
    }

    #[test]
    fn windowed_cosine_matches_analytic_transform() {
        // cos(w1 t) on [0, T] has transform (1/sqrt(2 pi)) sin((w - w1)T/2)/(w - w1) e^{i(w-w1)T/2} + ...
        let w1 = 3.0;
        let t_end = 200.0;
        let dt = 0.01;
        let n = (t_end / dt) as usize + 1;
        let g = TimeGrid::new(0.0, dt, n).unwrap();
        let accel: Vec<f64> = g.times().iter().map(|t| (w1 * t).cos()).collect();
        let rec = record_from(g, accel, 1.0, g.end());
        let d = spectral_dipole(&rec, 0.5).unwrap();
        let a = d.accel_spectrum();
        let (jmax, _) = a
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
            .unwrap();
        assert!((d.axis.omega(jmax) - w1).abs() <= d.axis.step);
        // bin-integrated power within +-0.5 of w1 against the analytic transform
        let analytic = |w: f64| -> f64 {
            let x = w - w1;
            let y = w + w1;
            let half = |u: f64| {
                if u.abs() < 1e-12 {
                    Complex64::new(t_end / 2.0, 0.0)
                } else {
                    (Complex64::from_polar(1.0, u * t_end) - 1.0) / Complex64::new(0.0, 2.0 * u)
                }
            };
            ((half(x) + half(y)) / (2.0 * PI).sqrt()).norm_sqr()
        };
        let mut num = 0.0;
        let mut exact = 0.0;
        for (j, z) in a.iter().enumerate() {
            let w = d.axis.omega(j);
            if (w - w1).abs() < 0.5 {
                num += z.norm_sqr();
                exact += analytic(w);
            }
        }
        assert!((num - exact).abs() / exact < 0.01, "{num} vs {exact}");
    }

    #[test]
    fn dipole_and_accel_assembly_agree() {
        let g = TimeGrid::new(-50.0, 0.05, 3000).unwrap();
        let accel: Vec<f64> = g.times().iter().map(|t| (-(t * t) / 200.0).exp() * (2.0 * t).sin()).collect();
        let rec = record_from(g, accel, 1.0, g.end());
        let d = spectral_dipole(&rec, 0.25).unwrap();
        let quad = RadialQuadrature::delta(1.0, 1.0);
        let s = assemble_spectrum(&[d.clone()], &quad, "coherent").unwrap();
        for (j, a) in d.accel_spectrum().iter().enumerate() {
            let w = d.axis.omega(j);
            let direct = 2.0 / (3.0 * PI) * a.norm_sqr() / C_AU.powi(3);
            let v = s.d_eps_d_omega[j];
            assert!((v - direct).abs() <= 1e-12 * direct.max(1e-300), "w={w}");
        }
    }

    #[test]
    fn reweighting_is_linear() {
        let g = TimeGrid::new(0.0, 0.05, 2048).unwrap();
        let mk = |f: f64| {
            let accel: Vec<f64> = g.times().iter().map(|t| (f * t).sin() * (-t / 40.0).exp()).collect();
            spectral_dipole(&record_from(g, accel, 1.0, g.end()), 0.25).unwrap()
        };
        let dipoles = vec![mk(1.0), mk(2.0), mk(3.5)];
        let quad = RadialQuadrature {
            nodes: vec![1.0, 2.0, 3.0],
            weights: vec![0.2, 0.5, 0.3],
            intensities_w_cm2: vec![1.0, 4.0, 9.0],
            truncated_mass: 0.0,
        };
        let base = assemble_spectrum(&dipoles, &quad, "x").unwrap();
        let w1 = [0.1, 0.7, 0.2];
        let w2 = [0.4, 0.1, 0.5];
        let sum: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();
        let s1 = base.reweighted(&w1).unwrap();
        let s2 = base.reweighted(&w2).unwrap();
        let s12 = base.reweighted(&sum).unwrap();
        for j in 0..base.axis.len {
            let lhs = s1.d_eps_d_omega[j] + s2.d_eps_d_omega[j];
            assert!((lhs - s12.d_eps_d_omega[j]).abs() <= 1e-12 * lhs.abs().max(1e-300));
        }
        assert!(base.reweighted(&[1.0]).is_err());
    }

    #[test]
    fn axis_mismatch_rejected() {
        let g1 = TimeGrid::new(0.0, 0.05, 2048).unwrap();
        let g2 = TimeGrid::new(0.0, 0.05, 4096).unwrap();
        let d1 = spectral_dipole(&record_from(g1, vec![0.0; 2048], 1.0, 10.0), 0.25).unwrap();
        let d2 = spectral_dipole(&record_from(g2, vec![0.0; 4096], 1.0, 10.0), 0.25).unwrap();
        let quad = RadialQuadrature {
            nodes: vec![1.0, 2.0],
            weights: vec![0.5, 0.5],
            intensities_w_cm2: vec![1.0, 4.0],
            truncated_mass: 0.0,
        };
        assert!(assemble_spectrum(&[d1, d2], &quad, "x").is_err());
    }

    #[test]
    fn cutoff_estimate() {
        // Up = 0.2196 au at 1e14 W/cm^2 and 800 nm
        let e0 = 0.053_38;
        let w0 = 0.056_95;
        let up = ponderomotive_energy(e0, w0);
        assert!((up - 0.2196).abs() < 1e-3, "{up}");
        let q = cutoff_order(0.7924, e0, w0);
        assert!((q - 26.1).abs() < 0.3, "{q}");
    }

    #[test]
    fn even_suppression_uses_stronger_neighbour() {
        let axis = FrequencyAxis {
            step: 0.125,
            first: 1,
            len: 80,
        };
        // odd peaks 1e-2 except a weak 5th, flat 1e-5 floor
        let values: Vec<f64> = (0..axis.len)
            .map(|j| {
                let q = axis.omega(j);
                let odd = (q - q.round()).abs() < 1e-9 && q.round() as i64 % 2 == 1;
                match (odd, q.round() as i64) {
                    (true, 5) => 1e-4,
                    (true, _) => 1e-2,
                    _ => 1e-5,
                }
            })
            .collect();
        let s = even_harmonic_suppression_db(&axis, &values, 1.0, 2, 8);
        assert_eq!(s.iter().map(|p| p.0).collect::<Vec<_>>(), vec![2, 4, 6, 8]);
        for (_, db) in s {
            assert!((db - 30.0).abs() < 1e-9, "{db}");
        }
    }
}
