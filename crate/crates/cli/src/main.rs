mod config;
mod error;
mod input;
mod svg;

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use spdmbi_core::evolution::{LindbladChannel, State};
use spdmbi_core::hamiltonians::{Axis, EffectiveVariant, LockinParams, PulseShape, RamseyParams};
use spdmbi_core::noise::NoiseModel;
use spdmbi_core::sequences::{ramsey_schedule, LockinOptions, Readout};
use spdmbi_core::spectrum::{
    analyze, lockin_point_schedule, sweep_lockin, sweep_ramsey, symmetric_grid, Engine, Format, Spectrum,
    SweepOptions, DEFAULT_GRID_POINTS,
};
use spdmbi_core::verify::{run_invariants, Fault, VerifyConfig};
use spdmbi_core::SpinSystem;

use config::{CommonArgs, EngineKind, FileConfig, LockinArgs, RamseyArgs, ReadoutKind};
use error::{config as config_error, CliError};
use input::{parse_input, DEFAULT_INPUT};

#[derive(Parser)]
#[command(name = "spdmbi", version, about = "Ramsey and lock-in spectra of interacting collective spins")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ramsey detuning spectrum.
    Ramsey {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: RamseyArgs,
    },
    /// Lock-in spectrum over the pulse-spacing detuning δτ.
    Lockin {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: LockinArgs,
    },
    /// Run the invariant suites.
    Verify(VerifyArgs),
    /// Antisymmetry residual, zero crossing and peak of a spectrum file.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 20)]
    n: u32,
    #[arg(long, default_value_t = 41)]
    grid_points: usize,
    #[arg(long)]
    threads: Option<usize>,
    /// Machine-readable report.
    #[arg(long)]
    json: bool,
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// CSV or JSON spectrum.
    file: PathBuf,
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ramsey { common, args } => cmd_ramsey(common, args),
        Command::Lockin { common, args } => cmd_lockin(common, args),
        Command::Verify(args) => cmd_verify(args),
        Command::Analyze(args) => cmd_analyze(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load(common: CommonArgs) -> Result<(CommonArgs, FileConfig), CliError> {
    let mut file = FileConfig::load(common.config.as_deref())?;
    let common = common.merge(std::mem::take(&mut file.common));
    if common.threads == Some(0) {
        return Err(config_error("threads must be >= 1"));
    }
    Ok((common, file))
}

fn positive(name: &str, value: f64) -> Result<f64, CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(config_error(format!("{name} must be > 0 (got {value})")))
    }
}

fn sweep_options(common: &CommonArgs) -> SweepOptions {
    SweepOptions { threads: common.threads, ..Default::default() }
}

fn dephasing(system: SpinSystem, gamma: f64) -> Result<Vec<LindbladChannel>, CliError> {
    if gamma == 0.0 {
        return Ok(Vec::new());
    }
    Ok(vec![LindbladChannel::collective_dephasing(system, gamma)?])
}

fn dump(common: &CommonArgs, summary: Value) {
    if common.dump_schedule == Some(true) {
        eprintln!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
    }
}

fn cmd_ramsey(common: CommonArgs, args: RamseyArgs) -> Result<(), CliError> {
    let (common, file) = load(common)?;
    let args = args.merge(file.ramsey);

    let n = args.n.unwrap_or(20);
    let system = SpinSystem::new(n)?;
    let unit = positive("omega_unit", args.omega_unit.unwrap_or(1.0))?;
    let omega = positive("omega", args.omega.unwrap_or(1.0))? * unit;
    let t_free = args.t_free.unwrap_or(2.0 * PI / omega);
    let pulse_scale = args.pulse_scale.unwrap_or(1.0);
    let ideal_pulses = args.ideal_pulses.unwrap_or(false);
    let chis = args.chi.clone().unwrap_or_else(|| vec![0.0]);
    let gammas = args.gamma.clone().unwrap_or_else(|| vec![0.0]);
    let selector = args.input.clone().unwrap_or_else(|| DEFAULT_INPUT.into());
    let grid_points = args.grid_points.unwrap_or(DEFAULT_GRID_POINTS);
    let grid_span = positive("grid_span", args.grid_span.unwrap_or(2.0))?;
    let grid = symmetric_grid(grid_span * unit, grid_points)?;
    let input = State::Pure(parse_input(system, &selector)?);

    let echo = json!({
        "command": "ramsey",
        "n": n,
        "omega_unit": unit,
        "omega": omega / unit,
        "t_free": t_free,
        "pulse_scale": pulse_scale,
        "ideal_pulses": ideal_pulses,
        "chi": chis,
        "gamma": gammas,
        "input": selector,
        "grid_points": grid_points,
        "grid_span": grid_span,
        "threads": common.threads,
        "seed": common.seed,
    });

    let mut runs = Vec::new();
    for &chi in &chis {
        for &gamma in &gammas {
            let mut p = RamseyParams::new(chi * unit, 0.0, omega, t_free)?;
            p.pulse_scale = pulse_scale;
            p.ideal_pulses = ideal_pulses;
            p.validate()?;
            let channels = dephasing(system, gamma * unit)?;
            if runs.is_empty() {
                dump(&common, ramsey_schedule(system, &p, &channels)?.summary());
            }
            let mut s = sweep_ramsey(system, &p, &grid, &input, &channels, &sweep_options(&common))?;
            s.set_meta("config", echo.clone());
            s.set_meta("run", json!({ "chi": chi, "gamma": gamma }));
            runs.push((format!("chi={chi} gamma={gamma}"), s));
        }
    }
    emit(&common, &runs, "delta")
}

fn default_variant(axis: Axis, lambda: f64, ideal: bool) -> EffectiveVariant {
    match (lambda == 0.0, ideal, axis) {
        (true, _, _) => EffectiveVariant::PddIdeal,
        (false, true, _) => EffectiveVariant::CpIdeal,
        (false, false, Axis::X) => EffectiveVariant::CpFiniteX,
        (false, false, Axis::Y) => EffectiveVariant::CpFiniteY,
    }
}

fn cmd_lockin(common: CommonArgs, args: LockinArgs) -> Result<(), CliError> {
    let (common, file) = load(common)?;
    let args = args.merge(file.lockin);

    let n = args.n.unwrap_or(20);
    let system = SpinSystem::new(n)?;
    let axis = args.axis.unwrap_or(Axis::Y);
    let lambda = args.lambda.unwrap_or(0.5);
    let pulses = args.pulses.unwrap_or(100);
    let omega_s = positive("omega_s", args.omega_s.unwrap_or(200.0 * PI))?;
    let tau_s = PI / omega_s;
    let t_pulse = args.t_pulse.unwrap_or(0.2 * tau_s);
    let ideal_pulses = args.ideal_pulses.unwrap_or(false);
    let engine_kind = args.engine.unwrap_or(EngineKind::Exact);
    let variant = args.variant.unwrap_or_else(|| default_variant(axis, lambda, ideal_pulses));
    let engine = match engine_kind {
        EngineKind::Exact => Engine::Exact,
        EngineKind::Effective => Engine::Effective(variant),
    };
    let chis = args.chi.clone().unwrap_or_else(|| vec![0.0]);
    let gammas = args.gamma.clone().unwrap_or_else(|| vec![0.0]);
    let noise_amplitude = args.noise.unwrap_or(0.0);
    let seed = common.seed.unwrap_or(0);
    let readout_kind = args.readout.unwrap_or(ReadoutKind::Ideal);
    let readout_omega = args.readout_omega.unwrap_or(PI / t_pulse);
    let readout = match readout_kind {
        ReadoutKind::Ideal => Readout::Ideal,
        ReadoutKind::Finite => Readout::Finite { omega: positive("readout_omega", readout_omega)? },
        ReadoutKind::None => Readout::None,
    };
    let selector = args.input.clone().unwrap_or_else(|| DEFAULT_INPUT.into());
    let grid_points = args.grid_points.unwrap_or(DEFAULT_GRID_POINTS);
    let grid_span = positive("grid_span", args.grid_span.unwrap_or(0.04 * tau_s))?;
    let grid = symmetric_grid(grid_span, grid_points)?;
    let input = State::Pure(parse_input(system, &selector)?);

    let mut noise = if noise_amplitude != 0.0 { NoiseModel::gaussian_white(noise_amplitude, seed) } else { NoiseModel::none() };
    noise.interval = args.noise_interval;
    noise.validate()?;

    let echo = json!({
        "command": "lockin",
        "n": n,
        "axis": axis,
        "lambda": lambda,
        "pulses": pulses,
        "t_pulse": t_pulse,
        "ideal_pulses": ideal_pulses,
        "engine": engine_kind,
        "variant": (engine_kind == EngineKind::Effective).then_some(variant),
        "chi": chis,
        "gamma_g": args.gamma_g.unwrap_or(1.0),
        "b_ac": args.b_ac.unwrap_or(1.0),
        "omega_s": omega_s,
        "noise": noise_amplitude,
        "noise_interval": args.noise_interval,
        "readout": readout,
        "gamma": gammas,
        "input": selector,
        "grid_points": grid_points,
        "grid_span": grid_span,
        "step": args.step,
        "threads": common.threads,
        "seed": seed,
    });

    let mut runs = Vec::new();
    for &chi in &chis {
        for &gamma in &gammas {
            let mut p = LockinParams::reference(axis, lambda, pulses, chi);
            p.gamma_g = args.gamma_g.unwrap_or(1.0);
            p.b_ac = args.b_ac.unwrap_or(1.0);
            p.omega_s = omega_s;
            p.tau_r = tau_s;
            p.t_pulse = t_pulse;
            p.pulses = if ideal_pulses { PulseShape::Ideal } else { PulseShape::Finite };
            p.noise = noise.clone();
            p.validate()?;
            let options = LockinOptions { readout, step: args.step, channels: dephasing(system, gamma)? };
            if runs.is_empty() {
                dump(&common, lockin_point_schedule(system, &p, engine, 0.0, &options)?.summary());
            }
            let mut s = sweep_lockin(system, &p, &grid, &input, engine, &options, &sweep_options(&common))?;
            s.set_meta("config", echo.clone());
            s.set_meta("run", json!({ "chi": chi, "gamma": gamma }));
            runs.push((format!("chi={chi} gamma={gamma}"), s));
        }
    }
    emit(&common, &runs, "delta_tau")
}

fn infer_format(common: &CommonArgs) -> Format {
    if let Some(f) = common.format {
        return f.into();
    }
    match common.out.as_deref().and_then(Path::extension).and_then(|e| e.to_str()) {
        Some("json") => Format::Json,
        _ => Format::Csv,
    }
}

fn numbered(path: &Path, index: usize) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("spectrum");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{index}.{ext}"),
        None => format!("{stem}_{index}"),
    };
    path.with_file_name(name)
}

fn emit(common: &CommonArgs, runs: &[(String, Spectrum)], x_label: &str) -> Result<(), CliError> {
    let format = infer_format(common);
    match (&common.out, runs) {
        (None, [(_, s)]) => match format {
            Format::Csv => print!("{}", s.to_csv()),
            Format::Json => println!("{}", s.to_json()),
        },
        (None, _) => return Err(config_error("several spectra requested; pass --out")),
        (Some(path), [(_, s)]) => s.write(path, format)?,
        (Some(path), many) => {
            for (i, (label, s)) in many.iter().enumerate() {
                let target = numbered(path, i);
                s.write(&target, format)?;
                eprintln!("{}: {label}", target.display());
            }
        }
    }
    if let Some(path) = &common.svg {
        let series: Vec<(String, &Spectrum)> = runs.iter().map(|(l, s)| (l.clone(), s)).collect();
        std::fs::write(path, svg::render(&series, x_label)).map_err(|source| CliError::Io { path: path.clone(), source })?;
    }
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<(), CliError> {
    let fault = match args.inject_fault.as_deref() {
        None => None,
        Some("parity") => Some(Fault::ParityBug),
        Some(other) => return Err(config_error(format!("unknown fault '{other}'"))),
    };
    let config = VerifyConfig { n_particles: args.n, grid_points: args.grid_points, threads: args.threads, fault };
    let report = run_invariants(&config)?;
    if args.json {
        println!("{}", report.to_json());
    } else {
        print!("{report}");
    }
    match report.failures().count() {
        0 => Ok(()),
        failed => Err(CliError::Invariants(failed)),
    }
}

fn show(value: Option<f64>) -> String {
    value.map_or_else(|| "n/a".into(), |v| format!("{v:.6e}"))
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let s = Spectrum::read(&args.file)?;
    let a = analyze(&s);
    if args.json {
        println!("{}", serde_json::to_string(&a).map_err(spdmbi_core::Error::from)?);
    } else {
        println!("points                 {}", a.points);
        println!("antisymmetry_residual  {}", show(a.antisymmetry_residual));
        println!("zero_crossing          {}", show(a.zero_crossing));
        println!("peak                   {}", show(a.peak));
        println!("grid_spacing           {:.6e}", a.grid_spacing);
    }
    Ok(())
}
