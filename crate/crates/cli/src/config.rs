//! Command-line flags and the matching TOML config sections.
//!
//! Every experiment field is optional on both sides; flags override file
//! values and anything still unset falls back to the documented default.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use spdmbi_core::hamiltonians::{Axis, EffectiveVariant};
use spdmbi_core::spectrum::Format;

use crate::error::CliError;

#[derive(Args, Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommonArgs {
    /// TOML file with `[common]` and per-experiment sections.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output file; required when several spectra are produced.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Overlay of all produced spectra.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Noise seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Print the compiled schedule at zero detuning to stderr.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub dump_schedule: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Csv => Format::Csv,
            OutputFormat::Json => Format::Json,
        }
    }
}

/// Ramsey sweep settings. `chi`, `omega`, `gamma` and `grid_span` are in
/// units of `omega_unit`; `t_free` is absolute.
#[derive(Args, Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct RamseyArgs {
    /// Particle number.
    #[arg(long)]
    pub n: Option<u32>,
    /// Twisting strengths (comma separated).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub chi: Option<Vec<f64>>,
    /// Rabi frequency during the pulses.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Base frequency the dimensionless rates refer to.
    #[arg(long)]
    pub omega_unit: Option<f64>,
    /// Free evolution time (default 2π/Ω).
    #[arg(long)]
    pub t_free: Option<f64>,
    /// Pulse length multiplier.
    #[arg(long)]
    pub pulse_scale: Option<f64>,
    /// Collective dephasing rates (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub gamma: Option<Vec<f64>>,
    /// x-polarized | ghz | dicke:+J | dicke:-J | dicke:<m> | custom:<file>
    #[arg(long, visible_alias = "initial-state")]
    pub input: Option<String>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Half-width of the detuning grid.
    #[arg(long)]
    pub grid_span: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub ideal_pulses: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Exact,
    Effective,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutKind {
    Ideal,
    Finite,
    None,
}

/// Lock-in sweep settings, all in absolute units.
#[derive(Args, Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct LockinArgs {
    #[arg(long)]
    pub n: Option<u32>,
    /// Pulse axis (x or y).
    #[arg(long)]
    pub axis: Option<Axis>,
    /// First pulse at (1 - λ)τ_r: 0 for PDD, 0.5 for CP.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Number of π pulses.
    #[arg(long, visible_alias = "L")]
    pub pulses: Option<u32>,
    /// Finite π-pulse length (default 0.2 τs).
    #[arg(long)]
    pub t_pulse: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub ideal_pulses: Option<bool>,
    #[arg(long, value_enum)]
    pub engine: Option<EngineKind>,
    /// Effective variant; chosen from axis, λ and pulse shape when omitted.
    #[arg(long)]
    pub variant: Option<EffectiveVariant>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub chi: Option<Vec<f64>>,
    #[arg(long)]
    pub gamma_g: Option<f64>,
    #[arg(long)]
    pub b_ac: Option<f64>,
    /// Signal frequency ωs (default 200π).
    #[arg(long)]
    pub omega_s: Option<f64>,
    /// White-noise amplitude.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Noise sample width (default: the integrator step).
    #[arg(long)]
    pub noise_interval: Option<f64>,
    #[arg(long, value_enum)]
    pub readout: Option<ReadoutKind>,
    /// Rabi frequency of a finite readout pulse (default π/T_Ω).
    #[arg(long)]
    pub readout_omega: Option<f64>,
    /// Collective dephasing rates (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub gamma: Option<Vec<f64>>,
    #[arg(long, visible_alias = "initial-state")]
    pub input: Option<String>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Half-width of the δτ grid (default 0.04 τs).
    #[arg(long)]
    pub grid_span: Option<f64>,
    /// Integrator step (default min(T_Ω, τs)/200).
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub common: CommonArgs,
    pub ramsey: RamseyArgs,
    pub lockin: LockinArgs,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

macro_rules! overlay {
    ($flags:expr, $file:expr, $($field:ident),+) => {
        Self { $($field: $flags.$field.or($file.$field)),+ }
    };
}

impl CommonArgs {
    pub fn merge(self, file: Self) -> Self {
        overlay!(self, file, config, out, format, svg, seed, threads, dump_schedule)
    }
}

impl RamseyArgs {
    pub fn merge(self, file: Self) -> Self {
        overlay!(
            self, file, n, chi, omega, omega_unit, t_free, pulse_scale, gamma, input, grid_points, grid_span,
            ideal_pulses
        )
    }
}

impl LockinArgs {
    pub fn merge(self, file: Self) -> Self {
        overlay!(
            self, file, n, axis, lambda, pulses, t_pulse, ideal_pulses, engine, variant, chi, gamma_g, b_ac,
            omega_s, noise, noise_interval, readout, readout_omega, gamma, input, grid_points, grid_span, step
        )
    }
}
