//! Physical constants, SI <-> atomic unit conversions, and the 1D grid and
//! wavefunction containers shared by the propagator and the correction
//! machinery.
//!
//! Atomic units: hbar = e = m_e = 1 and eps0 = 1/(4 pi), so c = 1/alpha_fs.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// SI constants (CODATA 2018).
pub mod si {
    pub const C: f64 = 299_792_458.0;
    pub const HBAR: f64 = 1.054_571_817e-34;
    pub const EPS0: f64 = 8.854_187_812_8e-12;
}

/// Conversion factors between SI (plus the customary eV and W/cm^2) and
/// Hartree atomic units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Speed of light in atomic units.
    pub c_au: f64,
    pub hartree_ev: f64,
    pub bohr_m: f64,
    pub au_time_s: f64,
    pub au_efield_v_per_m: f64,
    /// Intensity of a linearly polarized field whose peak amplitude is one
    /// atomic unit of field, `I = c eps0 E^2 / 2`.
    pub au_intensity_w_per_cm2: f64,
}

pub const CONSTANTS: PhysicalConstants = PhysicalConstants {
    c_au: 137.035_999_084,
    hartree_ev: 27.211_386_245_988,
    bohr_m: 5.291_772_109_03e-11,
    au_time_s: 2.418_884_326_585_7e-17,
    au_efield_v_per_m: 5.142_206_747_63e11,
    au_intensity_w_per_cm2: 0.5
        * si::C
        * si::EPS0
        * 5.142_206_747_63e11
        * 5.142_206_747_63e11
        * 1e-4,
};

/// Speed of light in atomic units.
pub const C_AU: f64 = CONSTANTS.c_au;

/// Quantity kinds understood at the SI boundary.
///
/// The SI-side units are: length in m, time in s, energy in eV, electric
/// field in V/m, intensity in W/cm^2 and angular frequency in rad/s.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Length,
    Time,
    Energy,
    Efield,
    Intensity,
    Frequency,
}

impl UnitKind {
    pub const ALL: [UnitKind; 6] = [
        UnitKind::Length,
        UnitKind::Time,
        UnitKind::Energy,
        UnitKind::Efield,
        UnitKind::Intensity,
        UnitKind::Frequency,
    ];

    /// SI-side value of one atomic unit of this kind.
    pub fn factor(self) -> f64 {
        let k = &CONSTANTS;
        match self {
            UnitKind::Length => k.bohr_m,
            UnitKind::Time => k.au_time_s,
            UnitKind::Energy => k.hartree_ev,
            UnitKind::Efield => k.au_efield_v_per_m,
            UnitKind::Intensity => k.au_intensity_w_per_cm2,
            UnitKind::Frequency => 1.0 / k.au_time_s,
        }
    }
}

impl FromStr for UnitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "length" => Ok(UnitKind::Length),
            "time" => Ok(UnitKind::Time),
            "energy" => Ok(UnitKind::Energy),
            "efield" | "field" => Ok(UnitKind::Efield),
            "intensity" => Ok(UnitKind::Intensity),
            "frequency" => Ok(UnitKind::Frequency),
            other => Err(Error::invalid(format!("unknown unit kind '{other}'"))),
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            UnitKind::Length => "length",
            UnitKind::Time => "time",
            UnitKind::Energy => "energy",
            UnitKind::Efield => "efield",
            UnitKind::Intensity => "intensity",
            UnitKind::Frequency => "frequency",
        };
        f.write_str(s)
    }
}

pub fn to_atomic_units(value: f64, kind: UnitKind) -> f64 {
    value / kind.factor()
}

pub fn from_atomic_units(value: f64, kind: UnitKind) -> f64 {
    value * kind.factor()
}

/// String-keyed variant used by the CLI; rejects unknown kinds.
pub fn to_atomic_units_named(value: f64, kind: &str) -> Result<f64> {
    Ok(to_atomic_units(value, kind.parse()?))
}

/// Uniform grid symmetric about the origin: `x_j = -x_max + j dx`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n_points: usize,
    dx: f64,
}

impl Grid {
    pub fn new(x_max: f64, n_points: usize) -> Result<Self> {
        if !(x_max.is_finite() && x_max > 0.0) {
            return Err(Error::invalid(format!("grid half-width must be positive, got {x_max}")));
        }
        if n_points < 2 {
            return Err(Error::invalid(format!("grid needs at least 2 points, got {n_points}")));
        }
        Ok(Self {
            x_min: -x_max,
            x_max,
            n_points,
            dx: 2.0 * x_max / (n_points - 1) as f64,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn x(&self, j: usize) -> f64 {
        // mirror index keeps x_{n-1-j} == -x_j bit for bit
        let mirror = self.n_points - 1 - j;
        if j <= mirror {
            self.x_min + j as f64 * self.dx
        } else {
            -(self.x_min + mirror as f64 * self.dx)
        }
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n_points).map(move |j| self.x(j))
    }

    /// Angular wavenumbers in FFT order for the periodic extension of the grid.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points;
        let dk = 2.0 * std::f64::consts::PI / (n as f64 * self.dx);
        (0..n)
            .map(|j| {
                if j <= n / 2 {
                    j as f64 * dk
                } else {
                    -((n - j) as f64) * dk
                }
            })
            .collect()
    }
}

/// Electron state on a [`Grid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wavefunction {
    grid: Grid,
    psi: Vec<Complex64>,
}

impl Wavefunction {
    pub fn new(grid: Grid, psi: Vec<Complex64>) -> Result<Self> {
        if psi.len() != grid.len() {
            return Err(Error::mismatch(format!(
                "wavefunction has {} samples but grid has {} points",
                psi.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, psi })
    }

    /// Samples `f` on the grid and normalizes the result.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let psi = grid.points().map(f).collect();
        let mut wf = Self::new(grid, psi)?;
        let n = wf.norm_sqr();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::invalid("cannot normalize a zero wavefunction"));
        }
        wf.scale(1.0 / n.sqrt());
        Ok(wf)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.psi
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.psi
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.psi
    }

    pub fn norm_sqr(&self) -> f64 {
        self.psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx
    }

    pub fn scale(&mut self, s: f64) {
        self.psi.iter_mut().for_each(|z| *z *= s);
    }

    pub fn times(&self, c: Complex64) -> Self {
        Self {
            grid: self.grid,
            psi: self.psi.iter().map(|z| z * c).collect(),
        }
    }

    /// `<z>` expectation value (not normalized by the surviving norm).
    pub fn mean_position(&self) -> f64 {
        self.psi
            .iter()
            .zip(self.grid.points())
            .map(|(z, x)| z.norm_sqr() * x)
            .sum::<f64>()
            * self.grid.dx
    }
}

/// `<a|b> = sum conj(a_i) b_i dx`.
pub fn inner_product(a: &Wavefunction, b: &Wavefunction) -> Result<Complex64> {
    if a.grid != b.grid {
        return Err(Error::mismatch("inner product of wavefunctions on different grids"));
    }
    let s: Complex64 = a.psi.iter().zip(&b.psi).map(|(x, y)| x.conj() * y).sum();
    Ok(s * a.grid.dx)
}
