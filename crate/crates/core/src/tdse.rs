//! One-dimensional soft-Coulomb atom driven by a classical field.
//!
//! Hamiltonian (length gauge, atomic units):
//!
//! `H(t) = -1/2 d^2/dz^2 + V(z) - z E(t)`,  `V(z) = -1/sqrt(z^2 + a^2)`
//!
//! With this sign of the coupling the recorded acceleration
//! `-<V'(z)> + E(t)` is exactly `d^2<z>/dt^2` (Ehrenfest), and the dipole
//! used downstream is `<z>`.
//!
//! Time stepping is second-order Strang splitting: half potential kick
//! with the field at the start of the step, full kinetic step in momentum
//! space, half kick with the field at the end of the step.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::fourier::TimeGrid;
use crate::pulse::ClassicalField;
use crate::units::{inner_product, to_atomic_units, Grid, UnitKind, Wavefunction, C_AU};
use crate::{Error, Result};

/// Softening length giving the neon ionization potential.
pub const NEON_SOFTENING: f64 = 0.8160;
pub const NEON_IP: f64 = 0.7924;

/// Coarsest field sampling accepted by [`propagate`].
pub const MIN_STEPS_PER_CYCLE: f64 = 512.0;

/// Distance between exact re-evaluations of the field phase ramp.
const PHASE_ANCHOR: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbsorberSpec {
    /// Fraction of the grid (per side) covered by the mask.
    pub fraction: f64,
    /// Exponent of the `cos` mask.
    pub exponent: f64,
    /// Step length (au) at which the mask is applied with `exponent` as is.
    /// Other steps use `exponent * dt / reference_dt`, so the absorption per
    /// unit time does not depend on `dt`. Zero applies `exponent` every step.
    #[serde(default = "default_reference_dt")]
    pub reference_dt: f64,
}

/// One 800 nm cycle over 2048 steps.
fn default_reference_dt() -> f64 {
    to_atomic_units(800e-9, UnitKind::Length) / C_AU / 2048.0
}

impl Default for AbsorberSpec {
    fn default() -> Self {
        Self {
            fraction: 0.1,
            exponent: 0.125,
            reference_dt: default_reference_dt(),
        }
    }
}

impl AbsorberSpec {
    pub fn none() -> Self {
        Self {
            fraction: 0.0,
            exponent: 0.0,
            reference_dt: 0.0,
        }
    }

    pub fn is_none(&self) -> bool {
        self.fraction <= 0.0 || self.exponent <= 0.0
    }

    /// Exponent applied in one step of length `dt`.
    pub fn step_exponent(&self, dt: f64) -> f64 {
        if self.reference_dt > 0.0 {
            self.exponent * dt.abs() / self.reference_dt
        } else {
            self.exponent
        }
    }

    /// Mask values on `grid` at the reference step, or `None` when no
    /// absorption is requested.
    pub fn mask(&self, grid: &Grid) -> Result<Option<Vec<f64>>> {
        self.mask_with_exponent(grid, self.exponent)
    }

    fn mask_with_exponent(&self, grid: &Grid, exponent: f64) -> Result<Option<Vec<f64>>> {
        if self.is_none() {
            return Ok(None);
        }
        if !(self.fraction < 0.5) {
            return Err(Error::invalid(format!("absorber fraction {} must be below 0.5", self.fraction)));
        }
        if !(self.reference_dt >= 0.0 && self.reference_dt.is_finite()) {
            return Err(Error::invalid(format!("absorber reference step {} must be finite and >= 0", self.reference_dt)));
        }
        let width = self.fraction * grid.x_max();
        let start = grid.x_max() - width;
        let mask = grid
            .points()
            .map(|x| {
                let d = x.abs() - start;
                if d <= 0.0 {
                    1.0
                } else {
                    (0.5 * std::f64::consts::PI * d / width).cos().max(0.0).powf(exponent)
                }
            })
            .collect();
        Ok(Some(mask))
    }
}

pub fn soft_coulomb(z: f64, a: f64) -> f64 {
    -1.0 / (z * z + a * a).sqrt()
}

pub fn soft_coulomb_derivative(z: f64, a: f64) -> f64 {
    z / (z * z + a * a).powf(1.5)
}

#[derive(Clone, Debug)]
pub struct SoftCoulombAtom {
    pub a_soft: f64,
    pub grid: Grid,
    pub ground_state: Wavefunction,
    pub ground_energy: f64,
    /// `||H psi - E psi||` of the returned ground state.
    pub residual: f64,
}

/// FFT plans and the kinetic symbol for one grid.
#[derive(Clone)]
struct Spectral {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    k2_half: Vec<f64>,
    scratch: Vec<Complex64>,
}

impl Spectral {
    fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.len();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        let k2_half = grid.wavenumbers().iter().map(|k| 0.5 * k * k).collect();
        Self {
            forward,
            inverse,
            k2_half,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    /// Multiplies `psi` by `symbol(k^2/2)` in momentum space.
    fn apply_diagonal(&mut self, psi: &mut [Complex64], symbol: &[Complex64]) {
        self.forward.process_with_scratch(psi, &mut self.scratch);
        let inv_n = 1.0 / psi.len() as f64;
        for (z, s) in psi.iter_mut().zip(symbol) {
            *z *= s * inv_n;
        }
        self.inverse.process_with_scratch(psi, &mut self.scratch);
    }

    fn apply_kinetic(&mut self, psi: &[Complex64], out: &mut [Complex64]) {
        out.copy_from_slice(psi);
        self.forward.process_with_scratch(out, &mut self.scratch);
        let inv_n = 1.0 / psi.len() as f64;
        for (z, k2) in out.iter_mut().zip(&self.k2_half) {
            *z *= k2 * inv_n;
        }
        self.inverse.process_with_scratch(out, &mut self.scratch);
    }
}

impl SoftCoulombAtom {
    pub fn potential(&self, z: f64) -> f64 {
        soft_coulomb(z, self.a_soft)
    }

    /// `<psi|H0|psi> / <psi|psi>` of the field-free Hamiltonian.
    pub fn energy(&self, psi: &Wavefunction) -> Result<f64> {
        let mut sp = Spectral::new(&self.grid);
        let v: Vec<f64> = self.grid.points().map(|z| self.potential(z)).collect();
        let (e, _) = energy_and_residual(&mut sp, &v, psi.values(), self.grid.dx());
        Ok(e)
    }
}

fn apply_h(sp: &mut Spectral, v: &[f64], psi: &[Complex64], out: &mut [Complex64]) {
    sp.apply_kinetic(psi, out);
    for ((o, p), vz) in out.iter_mut().zip(psi).zip(v) {
        *o += p * vz;
    }
}

fn energy_and_residual(sp: &mut Spectral, v: &[f64], psi: &[Complex64], dx: f64) -> (f64, f64) {
    let mut hpsi = vec![Complex64::new(0.0, 0.0); psi.len()];
    apply_h(sp, v, psi, &mut hpsi);
    let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx;
    let e = psi.iter().zip(&hpsi).map(|(p, h)| (p.conj() * h).re).sum::<f64>() * dx / norm;
    let res = (hpsi
        .iter()
        .zip(psi)
        .map(|(h, p)| (h - p * e).norm_sqr())
        .sum::<f64>()
        * dx
        / norm)
        .sqrt();
    (e, res)
}

fn normalize(psi: &mut [Complex64], dx: f64) {
    let n = (psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx).sqrt();
    psi.iter_mut().for_each(|z| *z /= n);
}

/// Sets `psi` to its even part, which is where the ground state lives.
fn symmetrize(psi: &mut [Complex64]) {
    let n = psi.len();
    for j in 0..n / 2 {
        let m = 0.5 * (psi[j] + psi[n - 1 - j]);
        psi[j] = m;
        psi[n - 1 - j] = m;
    }
}

/// Lowest eigenstate of `-1/2 d^2/dz^2 + V(z)` on `grid`.
///
/// Imaginary-time split-step propagation with a decreasing step sequence,
/// followed by inverse iteration (conjugate-gradient solves of
/// `(H - sigma) x = psi` with `sigma` below the spectrum) to remove the
/// splitting bias.
pub fn ground_state(grid: &Grid, a_soft: f64) -> Result<SoftCoulombAtom> {
    if !(a_soft > 0.0 && a_soft.is_finite()) {
        return Err(Error::invalid(format!("softening length must be positive, got {a_soft}")));
    }
    let dx = grid.dx();
    let v: Vec<f64> = grid.points().map(|z| soft_coulomb(z, a_soft)).collect();
    let mut sp = Spectral::new(grid);
    let mut psi: Vec<Complex64> = grid
        .points()
        .map(|z| Complex64::new((-0.5 * z * z / (1.0 + a_soft)).exp(), 0.0))
        .collect();
    normalize(&mut psi, dx);

    let mut total_steps = 0;
    let mut energy = f64::INFINITY;
    for &(dtau, max_steps) in &[(0.2, 400usize), (0.05, 400), (0.01, 600)] {
        let half_v: Vec<Complex64> = v.iter().map(|&vz| Complex64::new((-0.5 * dtau * vz).exp(), 0.0)).collect();
        let kin: Vec<Complex64> = sp.k2_half.iter().map(|&k2| Complex64::new((-dtau * k2).exp(), 0.0)).collect();
        for step in 0..max_steps {
            for (z, h) in psi.iter_mut().zip(&half_v) {
                *z *= h;
            }
            sp.apply_diagonal(&mut psi, &kin);
            for (z, h) in psi.iter_mut().zip(&half_v) {
                *z *= h;
            }
            normalize(&mut psi, dx);
            total_steps += 1;
            if step % 20 == 19 {
                let (e, _) = energy_and_residual(&mut sp, &v, &psi, dx);
                let converged = (e - energy).abs() < 1e-12;
                energy = e;
                if converged {
                    break;
                }
            }
        }
    }

    let vmin = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let (mut e, mut res) = energy_and_residual(&mut sp, &v, &psi, dx);
    for _ in 0..8 {
        if res < 1e-11 {
            break;
        }
        // shift below the lowest eigenvalue keeps H - sigma positive definite
        let sigma = e - 0.05f64.max(0.5 * res).min(e - vmin);
        psi = cg_solve(&mut sp, &v, sigma, &psi, 1e-14, 4000);
        symmetrize(&mut psi);
        normalize(&mut psi, dx);
        let (e2, r2) = energy_and_residual(&mut sp, &v, &psi, dx);
        e = e2;
        res = r2;
    }
    if !(res < 1e-8) {
        return Err(Error::NoConvergence {
            steps: total_steps,
            residual: res,
        });
    }
    // fix the global phase so the state is real and positive at the centre
    let centre = psi[grid.len() / 2];
    let phase = Complex64::from_polar(1.0, -centre.arg());
    psi.iter_mut().for_each(|z| *z = Complex64::new((*z * phase).re, 0.0));
    normalize(&mut psi, dx);
    let (e, res) = energy_and_residual(&mut sp, &v, &psi, dx);
    Ok(SoftCoulombAtom {
        a_soft,
        grid: grid.clone(),
        ground_state: Wavefunction::new(grid.clone(), psi)?,
        ground_energy: e,
        residual: res,
    })
}

/// Conjugate gradients for `(H - sigma) x = b`, Hermitian positive definite.
fn cg_solve(sp: &mut Spectral, v: &[f64], sigma: f64, b: &[Complex64], tol: f64, max_iter: usize) -> Vec<Complex64> {
    let n = b.len();
    let shifted: Vec<f64> = v.iter().map(|vz| vz - sigma).collect();
    let dot = |a: &[Complex64], c: &[Complex64]| -> f64 { a.iter().zip(c).map(|(x, y)| (x.conj() * y).re).sum() };
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![Complex64::new(0.0, 0.0); n];
    let bb = dot(b, b);
    let mut rr = bb;
    for _ in 0..max_iter {
        apply_h(sp, &shifted, &p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for j in 0..n {
            x[j] += p[j] * alpha;
            r[j] -= ap[j] * alpha;
        }
        let rr_new = dot(&r, &r);
        if rr_new <= tol * tol * bb {
            break;
        }
        let beta = rr_new / rr;
        for j in 0..n {
            p[j] = r[j] + p[j] * beta;
        }
        rr = rr_new;
    }
    x
}

/// Real-time split-step propagator for a fixed grid, atom and time step.
#[derive(Clone)]
pub struct Propagator {
    grid: Grid,
    a_soft: f64,
    dt: f64,
    sp: Spectral,
    half_v: Vec<Complex64>,
    kinetic: Vec<Complex64>,
    dv: Vec<f64>,
    mask: Option<Vec<f64>>,
}

impl Propagator {
    pub fn new(atom: &SoftCoulombAtom, dt: f64, absorber: &AbsorberSpec) -> Result<Self> {
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::invalid(format!("time step must be finite and non-zero, got {dt}")));
        }
        let grid = atom.grid.clone();
        let sp = Spectral::new(&grid);
        let half_v = grid
            .points()
            .map(|z| Complex64::from_polar(1.0, -0.5 * dt * soft_coulomb(z, atom.a_soft)))
            .collect();
        let kinetic = sp.k2_half.iter().map(|&k2| Complex64::from_polar(1.0, -dt * k2)).collect();
        let dv = grid.points().map(|z| soft_coulomb_derivative(z, atom.a_soft)).collect();
        Ok(Self {
            mask: absorber.mask_with_exponent(&grid, absorber.step_exponent(dt))?,
            grid,
            a_soft: atom.a_soft,
            dt,
            sp,
            half_v,
            kinetic,
            dv,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn a_soft(&self) -> f64 {
        self.a_soft
    }

    /// Half kick `exp(-i (V - z E) dt / 2)`; the field ramp is built by
    /// recurrence and re-anchored every [`PHASE_ANCHOR`] points.
    fn half_kick(&self, psi: &mut [Complex64], efield: f64) {
        if efield == 0.0 {
            for (z, h) in psi.iter_mut().zip(&self.half_v) {
                *z *= h;
            }
            return;
        }
        let c = 0.5 * self.dt * efield;
        let rot = Complex64::from_polar(1.0, c * self.grid.dx());
        let n = psi.len();
        let mut j = 0;
        while j < n {
            let end = (j + PHASE_ANCHOR).min(n);
            let mut ph = Complex64::from_polar(1.0, c * self.grid.x(j));
            for k in j..end {
                psi[k] *= self.half_v[k] * ph;
                ph *= rot;
            }
            j = end;
        }
    }

    /// One Strang step from `t` to `t + dt` with the field values at both ends.
    pub fn step(&mut self, psi: &mut Wavefunction, e_start: f64, e_end: f64) -> Result<()> {
        if psi.grid() != &self.grid {
            return Err(Error::mismatch("wavefunction grid differs from propagator grid"));
        }
        let values = psi.values_mut();
        self.half_kick(values, e_start);
        let kinetic = std::mem::take(&mut self.kinetic);
        self.sp.apply_diagonal(values, &kinetic);
        self.kinetic = kinetic;
        self.half_kick(values, e_end);
        if let Some(mask) = &self.mask {
            for (z, m) in values.iter_mut().zip(mask) {
                *z *= m;
            }
        }
        Ok(())
    }

    /// `(norm, <z>, -<V'>)` of the current state.
    fn observables(&self, psi: &Wavefunction) -> (f64, f64, f64) {
        let dx = self.grid.dx();
        let mut norm = 0.0;
        let mut pos = 0.0;
        let mut force = 0.0;
        for (j, (z, dv)) in psi.values().iter().zip(&self.dv).enumerate() {
            let rho = z.norm_sqr();
            norm += rho;
            pos += rho * self.grid.x(j);
            force -= rho * dv;
        }
        (norm * dx, pos * dx, force * dx)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipoleRecord {
    pub times: TimeGrid,
    /// `d^2<z>/dt^2 = -<V'> + E` at each sample.
    pub accel: Vec<f64>,
    pub norm_history: Vec<f64>,
    pub position: Vec<f64>,
    pub alpha: Complex64,
    pub omega0: f64,
    pub pulse_end: f64,
    /// Length of the post-pulse cos^2 taper, once one has been applied.
    pub taper_cycles: Option<f64>,
}

impl DipoleRecord {
    /// CSV trace with columns `t_au,accel_au,norm`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let mut body = String::from("t_au,accel_au,norm\n");
        for k in 0..self.times.len {
            body.push_str(&format!("{:e},{:e},{:e}\n", self.times.t(k), self.accel[k], self.norm_history[k]));
        }
        w.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn final_norm(&self) -> f64 {
        *self.norm_history.last().unwrap_or(&1.0)
    }
}

/// Result of one propagation: the record and the final state.
#[derive(Clone, Debug)]
pub struct Propagation {
    pub record: DipoleRecord,
    pub final_state: Wavefunction,
}

/// Length of the time average that projects the ground state onto the
/// corresponding eigenvector of the split-step map.
const STEPPER_FILTER_SPAN: f64 = 300.0;

/// Ground state of the discrete field-free Strang map with step `dt`.
///
/// The eigenstate of `H0` differs from that of the split-step evolution by
/// `O(dt^2)`, and the difference contains continuum components that drain
/// into the absorber even without a field. A Hann-windowed time average at
/// the ground energy removes them.
pub fn stepper_ground_state(atom: &SoftCoulombAtom, dt: f64) -> Result<Wavefunction> {
    let mut prop = Propagator::new(atom, dt.abs(), &AbsorberSpec::none())?;
    let n = (STEPPER_FILTER_SPAN / dt.abs()).ceil() as usize;
    let mut psi = atom.ground_state.clone();
    let mut acc = vec![Complex64::new(0.0, 0.0); psi.values().len()];
    for k in 0..=n {
        let w = (std::f64::consts::PI * k as f64 / n as f64).sin().powi(2);
        let phase = Complex64::from_polar(w, atom.ground_energy * k as f64 * dt.abs());
        for (a, z) in acc.iter_mut().zip(psi.values()) {
            *a += z * phase;
        }
        if k < n {
            prop.step(&mut psi, 0.0, 0.0)?;
        }
    }
    let mut out = Wavefunction::new(atom.grid, acc)?;
    // keep the global phase of the input state
    let ov = inner_product(&out, &atom.ground_state)?;
    let out_norm = out.norm_sqr().sqrt();
    out = out.times(ov.unscale(ov.norm() * out_norm));
    Ok(out)
}

/// Propagates the ground state of the split-step map through `field` with
/// the field's sampling step as time step.
pub fn propagate(atom: &SoftCoulombAtom, field: &ClassicalField, absorber: &AbsorberSpec) -> Result<Propagation> {
    let initial = stepper_ground_state(atom, field.times.dt)?;
    propagate_state(atom, initial, field, absorber)
}

pub fn propagate_state(
    atom: &SoftCoulombAtom,
    initial: Wavefunction,
    field: &ClassicalField,
    absorber: &AbsorberSpec,
) -> Result<Propagation> {
    let times = field.times;
    if field.efield.len() != times.len {
        return Err(Error::mismatch("field samples and time grid differ in length"));
    }
    let period = 2.0 * std::f64::consts::PI / field.omega0;
    if times.dt > period / MIN_STEPS_PER_CYCLE * (1.0 + 1e-9) {
        return Err(Error::invalid(format!(
            "time step {} au resolves fewer than {MIN_STEPS_PER_CYCLE} steps per cycle",
            times.dt
        )));
    }
    let mut prop = Propagator::new(atom, times.dt, absorber)?;
    let mut psi = initial;
    let n = times.len;
    let mut accel = Vec::with_capacity(n);
    let mut norm_history = Vec::with_capacity(n);
    let mut position = Vec::with_capacity(n);
    let record = |psi: &Wavefunction, k: usize, accel: &mut Vec<f64>, norms: &mut Vec<f64>, pos: &mut Vec<f64>, prop: &Propagator| {
        let (norm, z, force) = prop.observables(psi);
        accel.push(force + field.efield[k] * norm);
        norms.push(norm);
        pos.push(z);
        norm
    };
    record(&psi, 0, &mut accel, &mut norm_history, &mut position, &prop);
    for k in 1..n {
        prop.step(&mut psi, field.efield[k - 1], field.efield[k])?;
        let norm = record(&psi, k, &mut accel, &mut norm_history, &mut position, &prop);
        if !(norm <= 1.0 + 1e-6) {
            return Err(Error::Unstable {
                step: k,
                norm,
                dt: times.dt,
                dx: atom.grid.dx(),
            });
        }
    }
    Ok(Propagation {
        record: DipoleRecord {
            times,
            accel,
            norm_history,
            position,
            alpha: field.alpha,
            omega0: field.omega0,
            pulse_end: field.pulse_end,
            taper_cycles: None,
        },
        final_state: psi,
    })
}

/// `<phi_beta|phi_alpha>` of two final states propagated on the same grid
/// and time span.
pub fn final_overlap(run_alpha: &Propagation, run_beta: &Propagation) -> Result<Complex64> {
    if run_alpha.record.times != run_beta.record.times {
        return Err(Error::mismatch("propagations cover different time spans"));
    }
    inner_product(&run_beta.final_state, &run_alpha.final_state)
}
