//! Experiment plans: light-state ensembles, correction maps, on-disk record
//! cache, manifests and output files.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::correction::{self, Band, CorrectionFactor, CorrectionMap};
use crate::exec::{par_map, with_workers};
use crate::fourier::TimeGrid;
use crate::light_states::{radial_quadrature, LightState, LightStateKind, RadialQuadrature};
use crate::pipeline::{amplitude_key, AmplitudeCache, NodeRun, RunEntry, RunOrigin, Simulation};
use crate::pulse::{build_mode, PulseMode};
use crate::spectrum::{assemble_spectrum, cutoff_order, SpectrumResult};
use crate::tdse::{ground_state, AbsorberSpec, DipoleRecord, Propagation, SoftCoulombAtom};
use crate::units::{Grid, Wavefunction};
use crate::{Error, Result};

const RECORD_MAGIC: &[u8; 8] = b"HHGREC01";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseParams {
    pub lambda0_nm: f64,
    pub n_ramp: u32,
    pub n_flat: u32,
    pub area_um2: f64,
}

impl Default for PulseParams {
    fn default() -> Self {
        Self {
            lambda0_nm: 800.0,
            n_ramp: 5,
            n_flat: 15,
            area_um2: 1.0,
        }
    }
}

impl PulseParams {
    pub fn build(&self) -> Result<PulseMode> {
        build_mode(self.lambda0_nm * 1e-9, self.n_ramp, self.n_flat, self.area_um2 * 1e-12)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomParams {
    pub a_soft_bohr: f64,
    pub x_max_bohr: f64,
    pub n_points: usize,
}

impl Default for AtomParams {
    fn default() -> Self {
        Self {
            a_soft_bohr: crate::tdse::NEON_SOFTENING,
            x_max_bohr: 300.0,
            n_points: 8192,
        }
    }
}

impl AtomParams {
    pub fn build(&self) -> Result<SoftCoulombAtom> {
        ground_state(&Grid::new(self.x_max_bohr, self.n_points)?, self.a_soft_bohr)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationParams {
    pub steps_per_cycle: usize,
    pub tail_cycles: f64,
    pub taper_cycles: f64,
    /// Lower edge of the spectra in units of the carrier frequency.
    pub omega_min_factor: f64,
    pub absorber: AbsorberSpec,
}

impl Default for PropagationParams {
    fn default() -> Self {
        Self {
            steps_per_cycle: 2048,
            tail_cycles: 2.0,
            taper_cycles: 2.0,
            omega_min_factor: crate::spectrum::DEFAULT_OMEGA_MIN_FACTOR,
            absorber: AbsorberSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub kind: LightStateKind,
    pub nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectionPlan {
    /// Mean amplitude; derived from `intensity_w_cm2` when absent.
    pub alpha_m: Option<f64>,
    pub intensity_w_cm2: Option<f64>,
    pub delta_max: f64,
    pub delta_count: usize,
    /// Gauss-Hermite order for `C_l`; skipped when absent.
    pub quad_order: Option<usize>,
    /// Harmonic band of the map; defaults to `[1, cutoff + 10]`.
    pub band: Option<Band>,
    /// Band used for the mask median; defaults to `[3, cutoff]`.
    pub plateau: Option<Band>,
    pub mask_floor: f64,
}

impl Default for CorrectionPlan {
    fn default() -> Self {
        Self {
            alpha_m: None,
            intensity_w_cm2: Some(1e14),
            delta_max: 3.0,
            delta_count: 13,
            quad_order: None,
            band: None,
            plateau: None,
            mask_floor: correction::DEFAULT_MASK_FLOOR,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub pulse: PulseParams,
    pub atom: AtomParams,
    pub propagation: PropagationParams,
    pub states: Vec<StateSpec>,
    pub mean_intensity_w_cm2: f64,
    /// Highest harmonic order written to the spectrum file.
    pub spectrum_max_order: f64,
    /// Write a `t_au,accel_au,norm` trace per propagated amplitude.
    pub dump_dipoles: bool,
    /// Also assemble each broad state with half its nodes and report the change.
    pub convergence_check: bool,
    pub correction: Option<CorrectionPlan>,
    pub out_dir: PathBuf,
    /// Record cache directory; `out_dir/cache` when absent.
    pub cache_dir: Option<PathBuf>,
    pub workers: usize,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            pulse: PulseParams::default(),
            atom: AtomParams::default(),
            propagation: PropagationParams::default(),
            states: vec![
                StateSpec {
                    kind: LightStateKind::Coherent,
                    nodes: 1,
                },
                StateSpec {
                    kind: LightStateKind::Fock,
                    nodes: 8,
                },
                StateSpec {
                    kind: LightStateKind::Thermal,
                    nodes: 32,
                },
                StateSpec {
                    kind: LightStateKind::Bsv,
                    nodes: 32,
                },
            ],
            mean_intensity_w_cm2: 1e14,
            spectrum_max_order: 60.0,
            dump_dipoles: false,
            convergence_check: false,
            correction: None,
            out_dir: PathBuf::from("out"),
            cache_dir: None,
            workers: 1,
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean_intensity_w_cm2 > 0.0 && self.mean_intensity_w_cm2.is_finite()) {
            return Err(Error::invalid(format!(
                "mean_intensity_W_cm2 must be positive, got {}",
                self.mean_intensity_w_cm2
            )));
        }
        if self.workers == 0 {
            return Err(Error::invalid("workers must be at least 1"));
        }
        let mut seen = HashSet::new();
        for s in &self.states {
            if !seen.insert(s.kind) {
                return Err(Error::invalid(format!("state '{}' listed twice", s.kind)));
            }
            let min = if s.kind == LightStateKind::Coherent { 1 } else { 2 };
            if s.nodes < min {
                return Err(Error::invalid(format!("state '{}' needs at least {min} nodes", s.kind)));
            }
        }
        if self.states.is_empty() && self.correction.is_none() {
            return Err(Error::invalid("plan requests neither states nor a correction map"));
        }
        let p = &self.propagation;
        if (p.steps_per_cycle as f64) < crate::tdse::MIN_STEPS_PER_CYCLE {
            return Err(Error::invalid(format!(
                "steps_per_cycle = {} is below the minimum {}",
                p.steps_per_cycle,
                crate::tdse::MIN_STEPS_PER_CYCLE
            )));
        }
        if p.taper_cycles > p.tail_cycles {
            return Err(Error::invalid("taper_cycles exceeds tail_cycles"));
        }
        if self.atom.n_points < 64 || self.atom.x_max_bohr <= 0.0 {
            return Err(Error::invalid("atom grid too small"));
        }
        if let Some(c) = &self.correction {
            if c.alpha_m.is_none() && c.intensity_w_cm2.is_none() {
                return Err(Error::invalid("correction needs alpha_m or intensity_W_cm2"));
            }
            if let Some(i) = c.intensity_w_cm2 {
                if !(i > 0.0) {
                    return Err(Error::invalid("correction intensity_W_cm2 must be positive"));
                }
            }
            if c.delta_count == 0 || !(c.delta_max >= 0.0) {
                return Err(Error::invalid("correction offsets need delta_count >= 1 and delta_max >= 0"));
            }
            if matches!(c.quad_order, Some(q) if q < 2) {
                return Err(Error::invalid("correction quad_order must be at least 2"));
            }
        }
        Ok(())
    }

    /// Hash of every setting that changes results (workers, dumps and paths excluded).
    pub fn config_hash(&self) -> String {
        let mut p = self.clone();
        p.workers = 1;
        p.dump_dipoles = false;
        p.out_dir = PathBuf::new();
        p.cache_dir = None;
        sha256_hex(serde_json::to_string(&p).expect("plan serializes").as_bytes())
    }

    pub fn cache_path(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.out_dir.join("cache"))
    }

    fn record_prefix(&self) -> String {
        let pulse = serde_json::to_string(&(&self.pulse, &self.propagation)).expect("serializes");
        let atom = serde_json::to_string(&self.atom).expect("serializes");
        format!("{}-{}", &sha256_hex(pulse.as_bytes())[..16], &sha256_hex(atom.as_bytes())[..16])
    }
}

/// Quadrature used for one state of the plan.
pub fn state_quadrature(kind: LightStateKind, nodes: usize, nbar: f64, i1p: f64) -> Result<(LightState, RadialQuadrature)> {
    let state = LightState::with_mean_photons(kind, nbar)?;
    let quad = match state {
        LightState::Coherent { alpha0 } if nodes == 1 => RadialQuadrature::delta(alpha0.norm(), i1p),
        _ => radial_quadrature(&state, nodes, i1p)?,
    };
    Ok((state, quad))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub alpha: Complex64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software: String,
    pub config_hash: String,
    pub plan: ExperimentPlan,
    pub runs: Vec<RunEntry>,
    /// Amplitude requests implied by the plan, with repetitions.
    pub requested: usize,
    pub distinct: usize,
    pub propagations: usize,
    pub disk_hits: usize,
    pub failures: Vec<Failure>,
    pub outputs: Vec<PathBuf>,
    pub ground_energy: f64,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub spectra: Vec<SpectrumResult>,
    /// Relative change against the half-size quadrature, per state, when requested.
    pub convergence: Vec<(String, f64)>,
    pub correction_map: Option<CorrectionMap>,
    pub correction_factor: Option<CorrectionFactor>,
    pub manifest: RunManifest,
}

struct Planned {
    states: Vec<(StateSpec, RadialQuadrature, Option<RadialQuadrature>)>,
    correction: Option<PlannedCorrection>,
    requested: Vec<Complex64>,
}

struct PlannedCorrection {
    alpha_m: Complex64,
    offsets: Vec<Complex64>,
    band: Band,
    plateau: Band,
}

fn plan_tasks(plan: &ExperimentPlan, mode: &PulseMode, atom: &SoftCoulombAtom) -> Result<Planned> {
    let i1p = mode.i1p_w_cm2;
    let nbar = mode.photons_for_intensity(plan.mean_intensity_w_cm2);
    let mut requested = Vec::new();
    let mut states = Vec::new();
    for s in &plan.states {
        let (_, quad) = state_quadrature(s.kind, s.nodes, nbar, i1p)?;
        requested.extend(quad.nodes.iter().map(|&r| Complex64::new(r, 0.0)));
        let half = if plan.convergence_check && s.nodes >= 4 {
            let (_, q) = state_quadrature(s.kind, s.nodes / 2, nbar, i1p)?;
            requested.extend(q.nodes.iter().map(|&r| Complex64::new(r, 0.0)));
            Some(q)
        } else {
            None
        };
        states.push((s.clone(), quad, half));
    }
    let correction = match &plan.correction {
        None => None,
        Some(c) => {
            let am = match (c.alpha_m, c.intensity_w_cm2) {
                (Some(a), _) => a,
                (None, Some(i)) => mode.amplitude_for_intensity(i),
                (None, None) => return Err(Error::invalid("correction needs alpha_m or intensity_W_cm2")),
            };
            let alpha_m = Complex64::new(am, 0.0);
            let e0 = 2.0 * mode.e1p_au * am;
            let q_cut = cutoff_order(-atom.ground_energy, e0, mode.omega0);
            let band = c.band.unwrap_or(Band {
                q_lo: 1.0,
                q_hi: q_cut + 10.0,
            });
            let plateau = c.plateau.unwrap_or(Band {
                q_lo: 3.0,
                q_hi: q_cut,
            });
            let offsets = correction::real_offsets(c.delta_max, c.delta_count);
            requested.push(alpha_m);
            for d in &offsets {
                requested.push(alpha_m + d);
                requested.push(alpha_m - d);
            }
            if let Some(order) = c.quad_order {
                for (d, _) in correction::offset_nodes(order)? {
                    requested.push(alpha_m + d);
                    requested.push(alpha_m - d);
                }
            }
            Some(PlannedCorrection {
                alpha_m,
                offsets,
                band,
                plateau,
            })
        }
    };
    Ok(Planned {
        states,
        correction,
        requested,
    })
}

fn distinct_in_order(amps: &[Complex64]) -> Vec<Complex64> {
    let mut seen = HashSet::new();
    amps.iter().copied().filter(|a| seen.insert(amplitude_key(*a))).collect()
}

/// Runs a plan from scratch or from whatever records the cache holds.
pub fn execute(plan: &ExperimentPlan) -> Result<ExperimentOutput> {
    plan.validate()?;
    let start = Instant::now();
    let mode = plan.pulse.build()?;
    let atom = plan.atom.build()?;
    let p = &plan.propagation;
    let sim = Simulation::new(
        mode.clone(),
        atom.clone(),
        p.steps_per_cycle,
        p.tail_cycles,
        p.absorber,
        p.taper_cycles,
        p.omega_min_factor,
    )?;
    let planned = plan_tasks(plan, &mode, &atom)?;
    let store = RecordStore::new(plan.cache_path(), plan.record_prefix())?;
    let cache = AmplitudeCache::with_source(|alpha| {
        match store.load(alpha, &sim) {
            Ok(Some(prop)) => return Ok((sim.finish(prop, 0.0)?, RunOrigin::DiskCache)),
            Ok(None) => {}
            Err(e) => log::warn!("{e}; re-running"),
        }
        let run = sim.run(alpha)?;
        store.save(&run)?;
        Ok((run, RunOrigin::Propagated))
    });
    let tasks = distinct_in_order(&planned.requested);
    log::info!("{} amplitude requests, {} distinct", planned.requested.len(), tasks.len());

    let results = with_workers(plan.workers, || par_map(&tasks, |a| cache.get(*a).map(|_| ())))?;
    let failures: Vec<Failure> = tasks
        .iter()
        .zip(&results)
        .filter_map(|(a, r)| {
            r.as_ref().err().map(|e| Failure {
                alpha: *a,
                error: e.to_string(),
            })
        })
        .collect();

    let fs_out = OutputWriter::new(&plan.out_dir)?;
    let mut outputs = Vec::new();
    if plan.dump_dipoles {
        let dir = plan.out_dir.join("dipoles");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (i, a) in tasks.iter().enumerate() {
            if let Ok(run) = cache.get(*a) {
                let path = dir.join(format!("amplitude_{i:04}.csv"));
                run.record.write_csv(&path)?;
                outputs.push(path);
            }
        }
    }
    let mut spectra = Vec::new();
    let mut convergence = Vec::new();
    for (spec, quad, half) in &planned.states {
        let runs: Result<Vec<_>> = quad.nodes.iter().map(|&r| cache.get(Complex64::new(r, 0.0))).collect();
        let Ok(runs) = runs else { continue };
        let dipoles: Vec<_> = runs.iter().map(|r| r.dipole.clone()).collect();
        let result = assemble_spectrum(&dipoles, quad, spec.kind.label())?;
        if let Some(hq) = half {
            let hr: Result<Vec<_>> = hq.nodes.iter().map(|&r| cache.get(Complex64::new(r, 0.0))).collect();
            if let Ok(hr) = hr {
                let hd: Vec<_> = hr.iter().map(|r| r.dipole.clone()).collect();
                let coarse = assemble_spectrum(&hd, hq, spec.kind.label())?;
                convergence.push((spec.kind.label().to_string(), max_relative_change(&result, &coarse, plan.spectrum_max_order)));
            }
        }
        spectra.push(result);
    }

    let mut correction_map = None;
    let mut correction_factor = None;
    if failures.is_empty() {
        if let (Some(pc), Some(c)) = (&planned.correction, &plan.correction) {
            let map = correction::correction_map(&cache, pc.alpha_m, &pc.offsets, pc.band, pc.plateau, c.mask_floor)?;
            outputs.push(fs_out.write("correction_map.csv", &correction_map_csv(&map))?);
            outputs.push(fs_out.write("f_ov.csv", &f_ov_csv(&map))?);
            correction_map = Some(map);
            if let Some(order) = c.quad_order {
                let cf = correction::correction_factor(&cache, pc.alpha_m, order, pc.band, pc.plateau, c.mask_floor)?;
                outputs.push(fs_out.write("correction_factor.csv", &correction_factor_csv(&cf))?);
                correction_factor = Some(cf);
            }
        }
    }
    if !spectra.is_empty() {
        let name = if failures.is_empty() { "spectrum.csv" } else { "spectrum_partial.csv" };
        outputs.push(fs_out.write(name, &spectrum_csv(&spectra, plan.spectrum_max_order))?);
        let sidecar = spectrum_sidecar(&spectra, &convergence, &mode);
        outputs.push(fs_out.write("spectrum.json", &serde_json::to_string_pretty(&sidecar)?)?);
    }

    let runs = cache.entries();
    let manifest = RunManifest {
        software: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
        config_hash: plan.config_hash(),
        plan: plan.clone(),
        requested: planned.requested.len(),
        distinct: tasks.len(),
        propagations: runs.iter().filter(|r| r.origin == RunOrigin::Propagated).count(),
        disk_hits: runs.iter().filter(|r| r.origin == RunOrigin::DiskCache).count(),
        runs,
        failures,
        outputs: outputs.clone(),
        ground_energy: atom.ground_energy,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    fs_out.write("manifest.json", &serde_json::to_string_pretty(&manifest)?)?;
    if let Some(f) = manifest.failures.first() {
        return Err(Error::Node {
            alpha: format!("{}", f.alpha),
            source: Box::new(Error::invalid(f.error.clone())),
        });
    }
    Ok(ExperimentOutput {
        spectra,
        convergence,
        correction_map,
        correction_factor,
        manifest,
    })
}

/// Re-runs a plan against an earlier manifest, reusing its cached records.
pub fn resume(manifest: &RunManifest, plan: &ExperimentPlan) -> Result<ExperimentOutput> {
    let hash = plan.config_hash();
    if manifest.config_hash != hash {
        return Err(Error::HashMismatch(format!(
            "manifest was written for configuration {} but the plan hashes to {hash}; \
             a changed physical setting would make cached records inconsistent",
            manifest.config_hash
        )));
    }
    execute(plan)
}

fn max_relative_change(fine: &SpectrumResult, coarse: &SpectrumResult, q_max: f64) -> f64 {
    let q_lo = 1.0;
    fine.d_eps_d_omega
        .iter()
        .zip(&coarse.d_eps_d_omega)
        .enumerate()
        .filter(|(j, _)| {
            let q = fine.axis.omega(*j) / fine.omega0;
            q >= q_lo && q <= q_max
        })
        .filter_map(|(_, (a, b))| (*a > 0.0).then(|| ((a - b) / a).abs()))
        .fold(0.0, f64::max)
}

struct OutputWriter {
    dir: PathBuf,
}

impl OutputWriter {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn write(&self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Spectrum table: `harmonic_order` then one column per state.
pub fn spectrum_csv(spectra: &[SpectrumResult], q_max: f64) -> String {
    let mut out = String::from("harmonic_order");
    for s in spectra {
        out.push(',');
        out.push_str(&s.state_label);
    }
    out.push('\n');
    let Some(first) = spectra.first() else { return out };
    for j in 0..first.axis.len {
        let q = first.axis.omega(j) / first.omega0;
        if q > q_max {
            break;
        }
        out.push_str(&format!("{q:e}"));
        for s in spectra {
            out.push_str(&format!(",{:e}", s.d_eps_d_omega[j]));
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct SidecarState<'a> {
    state: &'a str,
    nodes_abs_alpha: &'a [f64],
    weights: &'a [f64],
    intensities_w_cm2: &'a [f64],
    truncated_mass: f64,
    half_quadrature_max_rel_change: Option<f64>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    x_axis: &'static str,
    y_axis: &'static str,
    y_scale: &'static str,
    omega0_au: f64,
    i1p_w_cm2: f64,
    states: Vec<SidecarState<'a>>,
}

fn spectrum_sidecar<'a>(spectra: &'a [SpectrumResult], convergence: &[(String, f64)], mode: &PulseMode) -> Sidecar<'a> {
    Sidecar {
        x_axis: "harmonic order omega/omega0",
        y_axis: "spectral energy density d eps/d omega (atomic units)",
        y_scale: "log",
        omega0_au: mode.omega0,
        i1p_w_cm2: mode.i1p_w_cm2,
        states: spectra
            .iter()
            .map(|s| SidecarState {
                state: &s.state_label,
                nodes_abs_alpha: &s.quadrature.nodes,
                weights: &s.quadrature.weights,
                intensities_w_cm2: &s.quadrature.intensities_w_cm2,
                truncated_mass: s.quadrature.truncated_mass,
                half_quadrature_max_rel_change: convergence.iter().find(|c| c.0 == s.state_label).map(|c| c.1),
            })
            .collect(),
    }
}

/// `1 - |f_l|` with harmonic orders as rows and offsets as columns; masked
/// bins are written as `nan`.
pub fn correction_map_csv(map: &CorrectionMap) -> String {
    let mut out = String::from("harmonic_order");
    for d in &map.delta_alphas {
        out.push_str(&format!(",delta_{:e}_{:e}", d.re, d.im));
    }
    out.push_str(",masked\n");
    for (j, q) in map.harmonic_orders.iter().enumerate() {
        out.push_str(&format!("{q:e}"));
        for row in &map.f_values {
            match row[j] {
                Some(f) => out.push_str(&format!(",{:e}", 1.0 - f.norm())),
                None => out.push_str(",nan"),
            }
        }
        out.push_str(if map.masked[j] { ",1\n" } else { ",0\n" });
    }
    out
}

pub fn f_ov_csv(map: &CorrectionMap) -> String {
    let mut out = String::from(
        "delta_re,delta_im,f_ov_re,f_ov_im,abs_one_minus_f_ov,one_minus_abs_f_ov,overlap_re,overlap_im,t1_re,t1_im,t2_re,t2_im\n",
    );
    for (d, f) in map.delta_alphas.iter().zip(&map.f_ov_values) {
        out.push_str(&format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
            d.re,
            d.im,
            f.value.re,
            f.value.im,
            (1.0 - f.value).norm(),
            1.0 - f.value.norm(),
            f.overlap.re,
            f.overlap.im,
            f.t1.re,
            f.t1.im,
            f.t2.re,
            f.t2.im
        ));
    }
    out
}

pub fn correction_factor_csv(cf: &CorrectionFactor) -> String {
    let mut out = String::from("harmonic_order,c_re,c_im,abs_one_minus_c\n");
    for (q, c) in cf.harmonic_orders.iter().zip(&cf.values) {
        match c {
            Some(c) => out.push_str(&format!("{q:e},{:e},{:e},{:e}\n", c.re, c.im, (1.0 - c).norm())),
            None => out.push_str(&format!("{q:e},nan,nan,nan\n")),
        }
    }
    out
}

/// One binary file per amplitude holding the dipole record and the final
/// wavefunction, closed by a SHA-256 of the preceding bytes.
pub struct RecordStore {
    dir: PathBuf,
    prefix: String,
}

impl RecordStore {
    pub fn new(dir: PathBuf, prefix: String) -> Result<Self> {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir, prefix })
    }

    pub fn path_for(&self, alpha: Complex64) -> PathBuf {
        let [re, im] = amplitude_key(alpha);
        self.dir.join(format!("{}-{re:016x}{im:016x}.rec", self.prefix))
    }

    pub fn save(&self, run: &NodeRun) -> Result<()> {
        let bytes = encode_record(&run.record, &run.final_state);
        let path = self.path_for(run.alpha);
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    /// `Ok(None)` when absent, `Err(CorruptRecord)` when unreadable.
    pub fn load(&self, alpha: Complex64, sim: &Simulation) -> Result<Option<Propagation>> {
        let path = self.path_for(alpha);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let corrupt = |reason: &str| Error::CorruptRecord {
            path: path.clone(),
            reason: reason.to_string(),
        };
        let prop = decode_record(&bytes, &sim.atom.grid).map_err(|r| corrupt(&r))?;
        if prop.record.times != sim.times || amplitude_key(prop.record.alpha) != amplitude_key(alpha) {
            return Err(corrupt("record does not belong to this plan"));
        }
        Ok(Some(prop))
    }
}

fn encode_record(rec: &DipoleRecord, psi: &Wavefunction) -> Vec<u8> {
    let mut b = Vec::with_capacity(8 * (3 * rec.accel.len() + 2 * psi.values().len() + 16));
    b.extend_from_slice(RECORD_MAGIC);
    let put = |b: &mut Vec<u8>, x: f64| b.extend_from_slice(&x.to_le_bytes());
    b.extend_from_slice(&(rec.times.len as u64).to_le_bytes());
    b.extend_from_slice(&(psi.values().len() as u64).to_le_bytes());
    for x in [rec.times.start, rec.times.dt, rec.alpha.re, rec.alpha.im, rec.omega0, rec.pulse_end] {
        put(&mut b, x);
    }
    for series in [&rec.accel, &rec.norm_history, &rec.position] {
        for &x in series.iter() {
            put(&mut b, x);
        }
    }
    for z in psi.values() {
        put(&mut b, z.re);
        put(&mut b, z.im);
    }
    let digest = Sha256::digest(&b);
    b.extend_from_slice(&digest);
    b
}

fn decode_record(bytes: &[u8], grid: &Grid) -> std::result::Result<Propagation, String> {
    if bytes.len() < 8 + 16 + 32 || &bytes[..8] != RECORD_MAGIC {
        return Err("bad header".into());
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err("checksum mismatch".into());
    }
    let u = |at: usize| u64::from_le_bytes(body[at..at + 8].try_into().unwrap()) as usize;
    let n_t = u(8);
    let n_x = u(16);
    if n_x != grid.len() {
        return Err(format!("wavefunction has {n_x} points, grid has {}", grid.len()));
    }
    let expect = 24 + 8 * (6 + 3 * n_t + 2 * n_x);
    if body.len() != expect {
        return Err(format!("length {} != expected {expect}", body.len()));
    }
    let mut at = 24;
    let mut next = || {
        let x = f64::from_le_bytes(body[at..at + 8].try_into().unwrap());
        at += 8;
        x
    };
    let (start, dt, re, im, omega0, pulse_end) = (next(), next(), next(), next(), next(), next());
    let accel: Vec<f64> = (0..n_t).map(|_| next()).collect();
    let norm_history: Vec<f64> = (0..n_t).map(|_| next()).collect();
    let position: Vec<f64> = (0..n_t).map(|_| next()).collect();
    let psi: Vec<Complex64> = (0..n_x).map(|_| Complex64::new(next(), next())).collect();
    let times = TimeGrid::new(start, dt, n_t).map_err(|e| e.to_string())?;
    Ok(Propagation {
        record: DipoleRecord {
            times,
            accel,
            norm_history,
            position,
            alpha: Complex64::new(re, im),
            omega0,
            pulse_end,
            taper_cycles: None,
        },
        final_state: Wavefunction::new(grid.clone(), psi).map_err(|e| e.to_string())?,
    })
}
