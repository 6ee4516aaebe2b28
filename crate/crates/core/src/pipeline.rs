//! Single-amplitude pipeline (field, propagation, spectral dipole) and the
//! shared cache that lets spectrum and correction runs reuse propagations.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fourier::TimeGrid;
use crate::pulse::{classical_field, field_spectrum, ClassicalField, FieldSpectrum, PulseMode};
use crate::spectrum::{spectral_dipole, temporal_window, SpectralDipole};
use crate::tdse::{propagate_state, stepper_ground_state, AbsorberSpec, DipoleRecord, Propagation, SoftCoulombAtom};
use crate::units::Wavefunction;
use crate::{Error, Result};

/// Everything that turns an amplitude into a spectral dipole.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub mode: PulseMode,
    pub atom: SoftCoulombAtom,
    pub times: TimeGrid,
    pub absorber: AbsorberSpec,
    pub taper_cycles: f64,
    pub omega_min: f64,
    /// Initial state, stationary under the field-free split-step map.
    pub initial: Wavefunction,
}

impl Simulation {
    pub fn new(
        mode: PulseMode,
        atom: SoftCoulombAtom,
        steps_per_cycle: usize,
        tail_cycles: f64,
        absorber: AbsorberSpec,
        taper_cycles: f64,
        omega_min_factor: f64,
    ) -> Result<Self> {
        if taper_cycles > tail_cycles {
            return Err(Error::invalid(format!(
                "taper of {taper_cycles} cycles does not fit in a {tail_cycles}-cycle tail"
            )));
        }
        if !(omega_min_factor > 0.0) {
            return Err(Error::invalid("omega_min must be positive"));
        }
        let times = mode.time_grid(steps_per_cycle, tail_cycles)?;
        let initial = stepper_ground_state(&atom, times.dt)?;
        Ok(Self {
            initial,
            omega_min: omega_min_factor * mode.omega0,
            mode,
            atom,
            times,
            absorber,
            taper_cycles,
        })
    }

    pub fn field(&self, alpha: Complex64) -> ClassicalField {
        classical_field(&self.mode, alpha, &self.times)
    }

    pub fn propagate(&self, alpha: Complex64) -> Result<Propagation> {
        propagate_state(&self.atom, self.initial.clone(), &self.field(alpha), &self.absorber).map_err(|e| Error::Node {
            alpha: format!("{alpha}"),
            source: Box::new(e),
        })
    }

    /// Builds the derived spectra of a finished propagation.
    pub fn finish(&self, prop: Propagation, wall_time_s: f64) -> Result<NodeRun> {
        let alpha = prop.record.alpha;
        let windowed = temporal_window(&prop.record, self.taper_cycles)?;
        let dipole = spectral_dipole(&windowed, self.omega_min)?;
        let field = field_spectrum(&self.field(alpha))?;
        Ok(NodeRun {
            alpha,
            dipole,
            field,
            record: prop.record,
            final_state: prop.final_state,
            wall_time_s,
        })
    }

    pub fn run(&self, alpha: Complex64) -> Result<NodeRun> {
        let start = Instant::now();
        let prop = self.propagate(alpha)?;
        self.finish(prop, start.elapsed().as_secs_f64())
    }
}

/// One propagated amplitude with its derived spectra.
#[derive(Clone, Debug)]
pub struct NodeRun {
    pub alpha: Complex64,
    pub dipole: SpectralDipole,
    pub field: FieldSpectrum,
    pub record: DipoleRecord,
    pub final_state: Wavefunction,
    pub wall_time_s: f64,
}

impl NodeRun {
    pub fn norm_loss(&self) -> f64 {
        1.0 - self.record.final_norm()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOrigin {
    Propagated,
    DiskCache,
}

/// Bookkeeping for one distinct amplitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub alpha: Complex64,
    pub origin: RunOrigin,
    pub wall_time_s: f64,
    pub norm_loss: f64,
    /// Requests served from memory after the first.
    pub cache_hits: usize,
}

/// Bit pattern of a complex amplitude, used as a cache key.
pub fn amplitude_key(alpha: Complex64) -> [u64; 2] {
    // -0.0 and 0.0 describe the same field
    let canon = |x: f64| if x == 0.0 { 0.0f64.to_bits() } else { x.to_bits() };
    [canon(alpha.re), canon(alpha.im)]
}

type Source<'a> = dyn Fn(Complex64) -> Result<(NodeRun, RunOrigin)> + Send + Sync + 'a;

struct Slot {
    run: Mutex<Option<Arc<NodeRun>>>,
    hits: AtomicUsize,
}

/// Concurrent insert-or-get map from amplitude to its run. Concurrent
/// requests for the same amplitude wait for a single computation.
pub struct AmplitudeCache<'a> {
    source: Box<Source<'a>>,
    slots: Mutex<HashMap<[u64; 2], Arc<Slot>>>,
    entries: Mutex<Vec<RunEntry>>,
}

impl<'a> AmplitudeCache<'a> {
    /// Cache that propagates every new amplitude with `sim`.
    pub fn new(sim: &'a Simulation) -> Self {
        Self::with_source(move |alpha| Ok((sim.run(alpha)?, RunOrigin::Propagated)))
    }

    pub fn with_source(source: impl Fn(Complex64) -> Result<(NodeRun, RunOrigin)> + Send + Sync + 'a) -> Self {
        Self {
            source: Box::new(source),
            slots: Mutex::new(HashMap::new()),
            entries: Mutex::new(Vec::new()),
        }
    }

    pub fn get(&self, alpha: Complex64) -> Result<Arc<NodeRun>> {
        let slot = {
            let mut slots = self.slots.lock().expect("cache lock poisoned");
            slots
                .entry(amplitude_key(alpha))
                .or_insert_with(|| {
                    Arc::new(Slot {
                        run: Mutex::new(None),
                        hits: AtomicUsize::new(0),
                    })
                })
                .clone()
        };
        let mut guard = slot.run.lock().expect("cache slot poisoned");
        if let Some(run) = guard.as_ref() {
            slot.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(run.clone());
        }
        let (run, origin) = (self.source)(alpha)?;
        let run = Arc::new(run);
        self.entries.lock().expect("cache lock poisoned").push(RunEntry {
            alpha,
            origin,
            wall_time_s: run.wall_time_s,
            norm_loss: run.norm_loss(),
            cache_hits: 0,
        });
        *guard = Some(run.clone());
        Ok(run)
    }

    /// One entry per distinct amplitude, ordered by amplitude.
    pub fn entries(&self) -> Vec<RunEntry> {
        let slots = self.slots.lock().expect("cache lock poisoned");
        let mut out = self.entries.lock().expect("cache lock poisoned").clone();
        for e in &mut out {
            if let Some(slot) = slots.get(&amplitude_key(e.alpha)) {
                e.cache_hits = slot.hits.load(Ordering::Relaxed);
            }
        }
        out.sort_by(|a, b| a.alpha.re.total_cmp(&b.alpha.re).then(a.alpha.im.total_cmp(&b.alpha.im)));
        out
    }

    pub fn propagations(&self) -> usize {
        self.entries
            .lock()
            .expect("cache lock poisoned")
            .iter()
            .filter(|e| e.origin == RunOrigin::Propagated)
            .count()
    }

    pub fn total_hits(&self) -> usize {
        let slots = self.slots.lock().expect("cache lock poisoned");
        slots.values().map(|s| s.hits.load(Ordering::Relaxed)).sum()
    }
}
