//! `hhg`: harmonic spectra and correction maps for quantum-light-driven HHG.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hhg_core::ensemble::{self, ExperimentPlan, RunManifest};
use hhg_core::light_states::LightStateKind;
use hhg_core::pulse::{build_mode, normalization_integral};
use hhg_core::Error;

use crate::config::Config;

#[derive(Parser, Debug)]
#[command(name = "hhg", version, about = "High-harmonic spectra driven by quantum states of light")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Reserved for sampling modes; the quadrature mode is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Husimi-weighted harmonic spectra for the configured light states.
    Spectrum {
        /// Comma-separated subset of coherent, fock, thermal, bsv.
        #[arg(long, value_delimiter = ',')]
        states: Option<Vec<String>>,
        #[arg(long = "mean-intensity", value_name = "W_CM2")]
        mean_intensity: Option<f64>,
        /// Reuse cached records of an earlier run with the same configuration.
        #[arg(long)]
        resume: bool,
    },
    /// Correction map f_ov, f_l over real offsets and optionally C_l.
    Correction {
        #[arg(long)]
        resume: bool,
    },
    /// Pulse-mode normalization and single-photon amplitudes.
    Normalize {
        #[arg(long, default_value_t = 5.0)]
        n_ramp: f64,
        #[arg(long, default_value_t = 15.0)]
        n_flat: f64,
        #[arg(long, default_value_t = 800.0)]
        lambda_nm: f64,
        #[arg(long, default_value_t = 1.0)]
        area_um2: f64,
        /// Target peak intensity for the photon-number report.
        #[arg(long, default_value_t = 1e14, value_name = "W_CM2")]
        intensity: f64,
    },
    /// Parse and check a configuration, printing the resolved values.
    Validate,
}

/// Failure classes with their exit codes.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_) | Error::HashMismatch(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load_config(global: &Global) -> Result<Config, Failure> {
    let mut cfg = match &global.config {
        None => Config::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            Config::from_toml(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
    };
    if let Some(w) = global.workers {
        cfg.ensemble.workers = w;
    }
    if let Some(d) = &global.out_dir {
        cfg.output.out_dir = d.clone();
    }
    Ok(cfg)
}

fn to_plan(cfg: &Config) -> Result<ExperimentPlan, Failure> {
    let plan = cfg.to_plan().map_err(Failure::Usage)?;
    plan.validate()?;
    Ok(plan)
}

fn run_plan(plan: &ExperimentPlan, resume: bool) -> Result<ensemble::ExperimentOutput, Failure> {
    std::fs::create_dir_all(&plan.out_dir)
        .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", plan.out_dir.display())))?;
    let resolved = Config::from_plan(plan).to_toml();
    let echo = plan.out_dir.join("config.resolved.toml");
    std::fs::write(&echo, resolved).map_err(|e| Failure::Runtime(format!("{}: {e}", echo.display())))?;
    let manifest_path = plan.out_dir.join("manifest.json");
    if resume && manifest_path.exists() {
        let manifest = RunManifest::read(&manifest_path)?;
        Ok(ensemble::resume(&manifest, plan)?)
    } else {
        Ok(ensemble::execute(plan)?)
    }
}

fn report(out: &ensemble::ExperimentOutput) {
    let m = &out.manifest;
    println!(
        "{} propagations, {} records reused, {} distinct amplitudes ({} requested), {:.1} s",
        m.propagations, m.disk_hits, m.distinct, m.requested, m.wall_time_s
    );
    for (label, change) in &out.convergence {
        println!("{label}: half-quadrature max relative change {change:.3e}");
    }
    if let Some(map) = &out.correction_map {
        let rows = map.delta_alphas.iter().zip(map.max_modulus_deviation()).zip(map.max_deviation()).zip(map.f_ov_deviation());
        for (((d, modulus), dev), ov) in rows {
            println!("delta = {:.3}: max |1 - |f_l|| = {modulus:.3e}, max |1 - f_l| = {dev:.3e}, |1 - f_ov| = {ov:.3e}", d.re);
        }
    }
    for p in &m.outputs {
        println!("wrote {}", p.display());
    }
}

fn cmd_spectrum(
    global: &Global,
    states: &Option<Vec<String>>,
    mean_intensity: Option<f64>,
    resume: bool,
) -> Result<(), Failure> {
    let mut cfg = load_config(global)?;
    if let Some(list) = states {
        let kinds: Result<Vec<LightStateKind>, _> = list.iter().map(|s| s.trim().parse()).collect();
        cfg.ensemble.states = kinds.map_err(|e: Error| Failure::Usage(format!("--states: {e}")))?;
    }
    if let Some(i) = mean_intensity {
        cfg.ensemble.mean_intensity_w_cm2 = i;
    }
    cfg.correction = None;
    let plan = to_plan(&cfg)?;
    if plan.states.is_empty() {
        return Err(Failure::Usage("ensemble.states is empty".into()));
    }
    report(&run_plan(&plan, resume)?);
    Ok(())
}

fn cmd_correction(global: &Global, resume: bool) -> Result<(), Failure> {
    let mut cfg = load_config(global)?;
    if cfg.correction.is_none() {
        return Err(Failure::Usage("configuration has no [correction] section".into()));
    }
    cfg.ensemble.states.clear();
    let plan = to_plan(&cfg)?;
    report(&run_plan(&plan, resume)?);
    Ok(())
}

fn cmd_normalize(n_ramp: f64, n_flat: f64, lambda_nm: f64, area_um2: f64, intensity: f64) -> Result<(), Failure> {
    let integral = normalization_integral(n_ramp, n_flat)?;
    let mode = build_mode(lambda_nm * 1e-9, n_ramp as u32, n_flat as u32, area_um2 * 1e-12)?;
    let photons = mode.photons_for_intensity(intensity);
    // I_1p scales as 1/V, so photons for the target intensity scale as V
    let per_nm3 = photons / (mode.v_eff_m3 * 1e27);
    println!("normalization integral I = {integral:.6}");
    println!("effective cycles n_eff = {:.6}", mode.n_eff);
    println!("effective volume V_eff = {:.6e} m^3", mode.v_eff_m3);
    println!("single-photon field E_1p = {:.2} V/m ({:.6e} au)", mode.e1p_v_per_m, mode.e1p_au);
    println!("single-photon intensity I_1p = {:.4} W/cm^2", mode.i1p_w_cm2);
    println!("photons for {intensity:e} W/cm^2: {photons:.6e} (|alpha| = {:.6e})", photons.sqrt());
    println!("photons per nm^3 of mode volume at {intensity:e} W/cm^2: {per_nm3:.4}");
    Ok(())
}

fn cmd_validate(global: &Global) -> Result<(), Failure> {
    let cfg = load_config(global)?;
    let plan = to_plan(&cfg)?;
    print!("{}", Config::from_plan(&plan).to_toml());
    println!("# config hash {}", plan.config_hash());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(seed) = cli.global.seed {
        log::info!("seed {seed} ignored: quadrature mode is deterministic");
    }
    let result = match &cli.command {
        Command::Spectrum {
            states,
            mean_intensity,
            resume,
        } => cmd_spectrum(&cli.global, states, *mean_intensity, *resume),
        Command::Correction { resume } => cmd_correction(&cli.global, *resume),
        Command::Normalize {
            n_ramp,
            n_flat,
            lambda_nm,
            area_um2,
            intensity,
        } => cmd_normalize(*n_ramp, *n_flat, *lambda_nm, *area_um2, *intensity),
        Command::Validate => cmd_validate(&cli.global),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
