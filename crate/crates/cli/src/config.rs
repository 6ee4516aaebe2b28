//! TOML configuration with unit-suffixed keys, mapped onto an experiment plan.

use std::path::PathBuf;

use hhg_core::correction::Band;
use hhg_core::ensemble::{
    AtomParams, CorrectionPlan, ExperimentPlan, PropagationParams, PulseParams, StateSpec,
};
use hhg_core::light_states::LightStateKind;
use hhg_core::tdse::AbsorberSpec;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub pulse: PulseSection,
    pub atom: AtomSection,
    pub propagation: PropagationSection,
    pub ensemble: EnsembleSection,
    pub correction: Option<CorrectionSection>,
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSection {
    pub lambda0_nm: f64,
    pub n_ramp_cycles: u32,
    pub n_flat_cycles: u32,
    pub area_um2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtomSection {
    pub a_soft_bohr: f64,
    pub x_max_bohr: f64,
    pub n_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagationSection {
    pub steps_per_cycle: usize,
    pub tail_cycles: f64,
    pub taper_cycles: f64,
    pub omega_min_harmonic: f64,
    pub absorber_fraction: f64,
    pub absorber_exponent: f64,
    /// Step (au) at which `absorber_exponent` applies unscaled; 0 applies it every step.
    pub absorber_reference_dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub states: Vec<LightStateKind>,
    #[serde(rename = "mean_intensity_W_cm2")]
    pub mean_intensity_w_cm2: f64,
    pub nodes_coherent: usize,
    pub nodes_fock: usize,
    pub nodes_thermal: usize,
    pub nodes_bsv: usize,
    pub spectrum_max_harmonic: f64,
    pub convergence_check: bool,
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrectionSection {
    pub alpha_m: Option<f64>,
    #[serde(rename = "intensity_W_cm2")]
    pub intensity_w_cm2: Option<f64>,
    pub delta_max: f64,
    pub delta_count: usize,
    pub quad_order: Option<usize>,
    pub harmonic_min: Option<f64>,
    pub harmonic_max: Option<f64>,
    pub plateau_harmonic_min: Option<f64>,
    pub plateau_harmonic_max: Option<f64>,
    pub mask_floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub out_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub dump_dipoles: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self::from_plan(&ExperimentPlan::default())
    }
}

impl Default for PulseSection {
    fn default() -> Self {
        Config::default().pulse
    }
}

impl Default for AtomSection {
    fn default() -> Self {
        Config::default().atom
    }
}

impl Default for PropagationSection {
    fn default() -> Self {
        Config::default().propagation
    }
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Config::default().ensemble
    }
}

impl Default for CorrectionSection {
    fn default() -> Self {
        correction_section(&CorrectionPlan::default())
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        Config::default().output
    }
}

fn correction_section(c: &CorrectionPlan) -> CorrectionSection {
    CorrectionSection {
        alpha_m: c.alpha_m,
        intensity_w_cm2: c.intensity_w_cm2,
        delta_max: c.delta_max,
        delta_count: c.delta_count,
        quad_order: c.quad_order,
        harmonic_min: c.band.map(|b| b.q_lo),
        harmonic_max: c.band.map(|b| b.q_hi),
        plateau_harmonic_min: c.plateau.map(|b| b.q_lo),
        plateau_harmonic_max: c.plateau.map(|b| b.q_hi),
        mask_floor: c.mask_floor,
    }
}

fn band(lo: Option<f64>, hi: Option<f64>, name: &str) -> Result<Option<Band>, String> {
    match (lo, hi) {
        (None, None) => Ok(None),
        (Some(q_lo), Some(q_hi)) if q_lo < q_hi => Ok(Some(Band { q_lo, q_hi })),
        (Some(_), Some(_)) => Err(format!("correction.{name}_min must be below correction.{name}_max")),
        _ => Err(format!("correction.{name}_min and correction.{name}_max must be given together")),
    }
}

impl Config {
    /// Parses a TOML document; unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Config equivalent to `plan` (inverse of [`Config::to_plan`]).
    pub fn from_plan(plan: &ExperimentPlan) -> Self {
        let nodes = |k: LightStateKind, default: usize| {
            plan.states.iter().find(|s| s.kind == k).map_or(default, |s| s.nodes)
        };
        let defaults = ExperimentPlan::default();
        let default_nodes = |k: LightStateKind| defaults.states.iter().find(|s| s.kind == k).map_or(2, |s| s.nodes);
        Self {
            pulse: PulseSection {
                lambda0_nm: plan.pulse.lambda0_nm,
                n_ramp_cycles: plan.pulse.n_ramp,
                n_flat_cycles: plan.pulse.n_flat,
                area_um2: plan.pulse.area_um2,
            },
            atom: AtomSection {
                a_soft_bohr: plan.atom.a_soft_bohr,
                x_max_bohr: plan.atom.x_max_bohr,
                n_points: plan.atom.n_points,
            },
            propagation: PropagationSection {
                steps_per_cycle: plan.propagation.steps_per_cycle,
                tail_cycles: plan.propagation.tail_cycles,
                taper_cycles: plan.propagation.taper_cycles,
                omega_min_harmonic: plan.propagation.omega_min_factor,
                absorber_fraction: plan.propagation.absorber.fraction,
                absorber_exponent: plan.propagation.absorber.exponent,
                absorber_reference_dt: plan.propagation.absorber.reference_dt,
            },
            ensemble: EnsembleSection {
                states: plan.states.iter().map(|s| s.kind).collect(),
                mean_intensity_w_cm2: plan.mean_intensity_w_cm2,
                nodes_coherent: nodes(LightStateKind::Coherent, default_nodes(LightStateKind::Coherent)),
                nodes_fock: nodes(LightStateKind::Fock, default_nodes(LightStateKind::Fock)),
                nodes_thermal: nodes(LightStateKind::Thermal, default_nodes(LightStateKind::Thermal)),
                nodes_bsv: nodes(LightStateKind::Bsv, default_nodes(LightStateKind::Bsv)),
                spectrum_max_harmonic: plan.spectrum_max_order,
                convergence_check: plan.convergence_check,
                workers: plan.workers,
            },
            correction: plan.correction.as_ref().map(correction_section),
            output: OutputSection {
                out_dir: plan.out_dir.clone(),
                cache_dir: plan.cache_dir.clone(),
                dump_dipoles: plan.dump_dipoles,
            },
        }
    }

    pub fn to_plan(&self) -> Result<ExperimentPlan, String> {
        let e = &self.ensemble;
        let nodes = |k: LightStateKind| match k {
            LightStateKind::Coherent => e.nodes_coherent,
            LightStateKind::Fock => e.nodes_fock,
            LightStateKind::Thermal => e.nodes_thermal,
            LightStateKind::Bsv => e.nodes_bsv,
        };
        let correction = match &self.correction {
            None => None,
            Some(c) => Some(CorrectionPlan {
                alpha_m: c.alpha_m,
                intensity_w_cm2: if c.alpha_m.is_some() { None } else { c.intensity_w_cm2 },
                delta_max: c.delta_max,
                delta_count: c.delta_count,
                quad_order: c.quad_order,
                band: band(c.harmonic_min, c.harmonic_max, "harmonic")?,
                plateau: band(c.plateau_harmonic_min, c.plateau_harmonic_max, "plateau_harmonic")?,
                mask_floor: c.mask_floor,
            }),
        };
        Ok(ExperimentPlan {
            pulse: PulseParams {
                lambda0_nm: self.pulse.lambda0_nm,
                n_ramp: self.pulse.n_ramp_cycles,
                n_flat: self.pulse.n_flat_cycles,
                area_um2: self.pulse.area_um2,
            },
            atom: AtomParams {
                a_soft_bohr: self.atom.a_soft_bohr,
                x_max_bohr: self.atom.x_max_bohr,
                n_points: self.atom.n_points,
            },
            propagation: PropagationParams {
                steps_per_cycle: self.propagation.steps_per_cycle,
                tail_cycles: self.propagation.tail_cycles,
                taper_cycles: self.propagation.taper_cycles,
                omega_min_factor: self.propagation.omega_min_harmonic,
                absorber: AbsorberSpec {
                    fraction: self.propagation.absorber_fraction,
                    exponent: self.propagation.absorber_exponent,
                    reference_dt: self.propagation.absorber_reference_dt,
                },
            },
            states: e.states.iter().map(|&kind| StateSpec { kind, nodes: nodes(kind) }).collect(),
            mean_intensity_w_cm2: e.mean_intensity_w_cm2,
            spectrum_max_order: e.spectrum_max_harmonic,
            dump_dipoles: self.output.dump_dipoles,
            convergence_check: e.convergence_check,
            correction,
            out_dir: self.output.out_dir.clone(),
            cache_dir: self.output.cache_dir.clone(),
            workers: e.workers,
        })
    }
}
