//! Detuning sweeps, spectrum analysis and spectrum files.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::evolution::{evolve, expectation, LindbladChannel, Schedule, Segment, State};
use crate::hamiltonians::{
    effective_hamiltonian_with, resonant_fourier_coefficients, EffectiveVariant, LockinParams, RamseyParams,
};
use crate::operators::{CollectiveSpin, SpinSystem};
use crate::sequences::{effective_noise, lockin_schedule, ramsey_schedule, LockinOptions, Readout, STEPS_PER_PULSE};

/// Relative tolerance of the half-step accuracy gate.
pub const ACCURACY_GATE_TOL: f64 = 1e-6;

pub const DEFAULT_GRID_POINTS: usize = 201;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Delta,
    DeltaTau,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            Self::Delta => "delta",
            Self::DeltaTau => "delta_tau",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

/// `⟨Jz⟩` sampled on a strictly increasing grid of at least three points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    sweep_variable: SweepVariable,
    points: Vec<Point>,
    meta: Value,
}

impl Spectrum {
    pub fn new(sweep_variable: SweepVariable, points: Vec<Point>, meta: Value) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidSpectrum(format!("need at least 3 points, got {}", points.len())));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidSpectrum("non-finite sample".into()));
        }
        if points.windows(2).any(|w| w[1].x <= w[0].x) {
            return Err(Error::InvalidSpectrum("x values must be strictly increasing".into()));
        }
        let meta = match meta {
            Value::Object(_) => meta,
            Value::Null => Value::Object(Map::new()),
            other => json!({ "value": other }),
        };
        Ok(Self { sweep_variable, points, meta })
    }

    pub fn from_xy(sweep_variable: SweepVariable, xs: &[f64], ys: &[f64], meta: Value) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch { expected: xs.len(), found: ys.len() });
        }
        let points = xs.iter().zip(ys).map(|(&x, &y)| Point { x, y }).collect();
        Self::new(sweep_variable, points, meta)
    }

    pub fn sweep_variable(&self) -> SweepVariable {
        self.sweep_variable
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.y).collect()
    }

    pub fn meta(&self) -> &Value {
        &self.meta
    }

    /// Adds or replaces one metadata entry.
    pub fn set_meta(&mut self, key: &str, value: Value) {
        if let Value::Object(map) = &mut self.meta {
            map.insert(key.to_string(), value);
        }
    }

    /// Sample at `x` (exact match).
    pub fn value_at(&self, x: f64) -> Option<f64> {
        self.points.iter().find(|p| p.x == x).map(|p| p.y)
    }

    fn header(&self) -> Value {
        let mut header = Map::new();
        header.insert("sweep_variable".into(), json!(self.sweep_variable));
        if let Value::Object(map) = &self.meta {
            header.extend(map.clone());
        }
        Value::Object(header)
    }

    /// CSV with a `# meta: <json>` line, an `x,y` header and 17-digit rows.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# meta: {}\nx,y\n", self.header());
        out.push_str(&self.csv_body());
        out
    }

    /// Data rows only.
    pub fn csv_body(&self) -> String {
        self.points.iter().map(|p| format!("{:.16e},{:.16e}\n", p.x, p.y)).collect()
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut meta = Value::Null;
        let mut points = Vec::new();
        let mut seen_header = false;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(json) = rest.trim_start().strip_prefix("meta:") {
                    meta = serde_json::from_str(json.trim())?;
                }
                continue;
            }
            if !seen_header {
                if line.replace(' ', "") != "x,y" {
                    return Err(Error::Parse(format!("line {}: expected 'x,y' header", n + 1)));
                }
                seen_header = true;
                continue;
            }
            let (x, y) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected two columns", n + 1)))?;
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))
            };
            points.push(Point { x: parse(x)?, y: parse(y)? });
        }
        Self::from_header(meta, points)
    }

    fn from_header(header: Value, points: Vec<Point>) -> Result<Self> {
        let mut map = match header {
            Value::Object(map) => map,
            Value::Null => Map::new(),
            _ => return Err(Error::Parse("meta header must be a JSON object".into())),
        };
        let sweep_variable = match map.remove("sweep_variable") {
            Some(v) => serde_json::from_value(v)?,
            None => return Err(Error::Parse("meta header lacks sweep_variable".into())),
        };
        Self::new(sweep_variable, points, Value::Object(map))
    }

    /// JSON document `{"meta": {...}, "points": [[x, y], ...]}`.
    pub fn to_json(&self) -> String {
        let points: Vec<[f64; 2]> = self.points.iter().map(|p| [p.x, p.y]).collect();
        serde_json::to_string_pretty(&json!({ "meta": self.header(), "points": points }))
            .expect("spectrum serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            meta: Value,
            points: Vec<[f64; 2]>,
        }
        let doc: Doc = serde_json::from_str(text)?;
        Self::from_header(doc.meta, doc.points.into_iter().map(|[x, y]| Point { x, y }).collect())
    }

    /// Parses either format, detected from the first non-blank character.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Self::from_json(text)
        } else {
            Self::from_csv(text)
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path, format: Format) -> Result<()> {
        let text = match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        };
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Parse(format!("unknown format '{other}' (expected csv or json)"))),
        }
    }
}

/// `points` values mirrored about zero: `[-x_n .. -x_1, 0, x_1 .. x_n]`
/// with `x_i = span · i / n`. The negative half is the exact negation.
pub fn symmetric_grid(span: f64, points: usize) -> Result<Vec<f64>> {
    if points < 3 || points.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("grid needs an odd number >= 3 of points, got {points}")));
    }
    if !(span > 0.0 && span.is_finite()) {
        return Err(Error::InvalidParameter(format!("grid span {span} must be > 0")));
    }
    let half = (points - 1) / 2;
    let positive: Vec<f64> = (1..=half).map(|i| span * i as f64 / half as f64).collect();
    let mut grid: Vec<f64> = positive.iter().rev().map(|x| -x).collect();
    grid.push(0.0);
    grid.extend(positive);
    Ok(grid)
}

fn check_grid(grid: &[f64], require_symmetric: bool) -> Result<()> {
    if grid.len() < 3 {
        return Err(Error::InvalidParameter("sweep grid needs at least 3 points".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("sweep grid must be strictly increasing".into()));
    }
    if require_symmetric {
        let n = grid.len();
        let symmetric = (0..n).all(|i| grid[i] == -grid[n - 1 - i]);
        if !symmetric {
            return Err(Error::InvalidParameter("sweep grid must be symmetric about 0 and contain 0".into()));
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    /// Worker threads; `None` uses the available parallelism.
    pub threads: Option<usize>,
    /// Rerun the largest-|y| point at half step and fail on disagreement.
    pub accuracy_gate: bool,
    pub require_symmetric_grid: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { threads: None, accuracy_gate: true, require_symmetric_grid: true }
    }
}

/// Outcome of the half-step rerun.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AccuracyCheck {
    pub x: f64,
    pub y: f64,
    pub y_half_step: f64,
    pub relative_change: f64,
}

fn run_parallel<T: Send>(threads: Option<usize>, grid: &[f64], f: impl Fn(f64) -> Result<T> + Sync) -> Result<Vec<T>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| grid.par_iter().map(|&x| f(x)).collect())
}

fn gate(
    grid: &[f64],
    ys: &[f64],
    rerun: impl Fn(f64) -> Result<f64>,
) -> Result<AccuracyCheck> {
    let (i, _) = ys
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, y)| if y.abs() > best.1 { (i, y.abs()) } else { best });
    let (x, y) = (grid[i], ys[i]);
    let y_half_step = rerun(x)?;
    let diff = (y_half_step - y).abs();
    let relative_change = if y == 0.0 { diff } else { diff / y.abs() };
    let check = AccuracyCheck { x, y, y_half_step, relative_change };
    if relative_change > ACCURACY_GATE_TOL {
        return Err(Error::Accuracy(format!(
            "halving the step at x = {x:.6e} changed <Jz> from {y:.12e} to {y_half_step:.12e} (relative {relative_change:.3e})"
        )));
    }
    Ok(check)
}

fn readout_jz(state: &State, schedule: &Schedule) -> Result<f64> {
    let jz = CollectiveSpin::new(schedule.system()).jz;
    expectation(&evolve(state, schedule)?, &jz)
}

fn version_tag() -> Value {
    json!(concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")))
}

fn state_tag(state: &State) -> &'static str {
    match state {
        State::Pure(_) => "pure",
        State::Mixed(_) => "density_matrix",
    }
}

/// `⟨Jz⟩` after one Ramsey sequence at `p.delta`.
pub fn ramsey_point(system: SpinSystem, p: &RamseyParams, input: &State, channels: &[LindbladChannel]) -> Result<f64> {
    readout_jz(input, &ramsey_schedule(system, p, channels)?)
}

/// Ramsey spectrum over the detuning grid (`p.delta` is ignored).
pub fn sweep_ramsey(
    system: SpinSystem,
    p: &RamseyParams,
    grid: &[f64],
    input: &State,
    channels: &[LindbladChannel],
    options: &SweepOptions,
) -> Result<Spectrum> {
    p.validate()?;
    check_grid(grid, options.require_symmetric_grid)?;
    if input.system() != system {
        return Err(Error::DimensionMismatch { expected: system.dim(), found: input.system().dim() });
    }
    let ys = run_parallel(options.threads, grid, |d| ramsey_point(system, &p.with_delta(d), input, channels))?;
    let stepped = ramsey_schedule(system, p, channels)?.is_stepped();
    let check = if options.accuracy_gate && stepped {
        Some(gate(grid, &ys, |d| {
            let sched = ramsey_schedule(system, &p.with_delta(d), channels)?.with_step_scale(0.5);
            readout_jz(input, &sched)
        })?)
    } else {
        None
    };
    let mut params = serde_json::to_value(p)?;
    params["delta"] = Value::Null;
    let meta = json!({
        "experiment": "ramsey",
        "n_particles": system.n_particles(),
        "params": params,
        "input": state_tag(input),
        "channels": channels.iter().map(LindbladChannel::describe).collect::<Vec<_>>(),
        "integrator_step": p.t_pulse / STEPS_PER_PULSE,
        "grid": { "points": grid.len(), "min": grid[0], "max": grid[grid.len() - 1] },
        "accuracy_gate": check,
        "version": version_tag(),
    });
    Spectrum::from_xy(SweepVariable::Delta, grid, &ys, meta)
}

/// Lock-in propagation engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "engine", content = "variant")]
pub enum Engine {
    /// Lab-frame pulse train.
    Exact,
    /// Time-averaged Hamiltonian applied for `L τs`.
    Effective(EffectiveVariant),
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Engine::Exact => f.write_str("exact"),
            Engine::Effective(v) => write!(f, "effective:{v}"),
        }
    }
}

/// Schedule of the effective engine: `H_eff(δτ)` for `L τs`, then readout.
/// The duration is `δτ`-independent so the sequence keeps its exchange
/// parity in `δτ`.
pub fn effective_schedule(
    system: SpinSystem,
    p: &LockinParams,
    variant: EffectiveVariant,
    delta_tau: f64,
    options: &LockinOptions,
) -> Result<Schedule> {
    let fc = match variant {
        EffectiveVariant::CpFiniteX | EffectiveVariant::CpFiniteY => Some(resonant_fourier_coefficients(p)?),
        _ => None,
    };
    let s = CollectiveSpin::new(system);
    let h = effective_hamiltonian_with(&s, p, variant, delta_tau, fc.as_ref());
    let duration = f64::from(p.pulse_count) * p.tau_s();
    let step = options.step.unwrap_or_else(|| LockinOptions::default_step(p));
    let mut schedule = Schedule::new(system);
    schedule.push(
        Segment::fixed(variant.name(), h, duration).with_step(step).with_channels(options.channels.clone()),
    )?;
    match options.readout {
        Readout::Ideal => schedule.push(Segment::kick("readout", s.jx.clone(), 0.5 * std::f64::consts::PI)?)?,
        Readout::Finite { omega } => {
            let h = &(&s.jz * &s.jz).scaled(p.chi) + &s.jx.scaled(omega);
            schedule.push(
                Segment::fixed("readout", h, 0.5 * std::f64::consts::PI / omega)
                    .with_step(step)
                    .with_channels(options.channels.clone()),
            )?;
        }
        Readout::None => {}
    }
    Ok(schedule)
}

/// Schedule for one lock-in grid point at timing detuning `δτ`.
pub fn lockin_point_schedule(
    system: SpinSystem,
    p: &LockinParams,
    engine: Engine,
    delta_tau: f64,
    options: &LockinOptions,
) -> Result<Schedule> {
    match engine {
        Engine::Exact => {
            let point = p.with_delta_tau(delta_tau);
            point.validate().map_err(|e| {
                Error::InvalidParameter(format!("grid point delta_tau = {delta_tau:e} is not realizable: {e}"))
            })?;
            lockin_schedule(system, &point, options)
        }
        Engine::Effective(v) => effective_schedule(system, p, v, delta_tau, options),
    }
}

/// `⟨Jz⟩` after readout at one timing detuning.
pub fn lockin_point(
    system: SpinSystem,
    p: &LockinParams,
    engine: Engine,
    delta_tau: f64,
    input: &State,
    options: &LockinOptions,
) -> Result<f64> {
    readout_jz(input, &lockin_point_schedule(system, p, engine, delta_tau, options)?)
}

/// Lock-in spectrum over `δτ = τ_r - τs` (`p.tau_r` is ignored).
pub fn sweep_lockin(
    system: SpinSystem,
    p: &LockinParams,
    grid: &[f64],
    input: &State,
    engine: Engine,
    lockin: &LockinOptions,
    options: &SweepOptions,
) -> Result<Spectrum> {
    check_grid(grid, options.require_symmetric_grid)?;
    if input.system() != system {
        return Err(Error::DimensionMismatch { expected: system.dim(), found: input.system().dim() });
    }
    // Pin the step and noise grid so the half-step rerun sees the same
    // noise realization and every point shares one integrator step.
    let step = lockin.step.unwrap_or_else(|| LockinOptions::default_step(p));
    let mut p = p.with_delta_tau(0.0);
    p.noise = effective_noise(&p, lockin);
    p.validate()?;
    let lockin = LockinOptions { step: Some(step), ..lockin.clone() };
    for &d in grid {
        if engine == Engine::Exact {
            p.with_delta_tau(d).validate().map_err(|e| {
                Error::InvalidParameter(format!("grid point delta_tau = {d:e} is not realizable: {e}"))
            })?;
        }
    }
    let ys = run_parallel(options.threads, grid, |d| lockin_point(system, &p, engine, d, input, &lockin))?;
    let stepped = lockin_point_schedule(system, &p, engine, 0.0, &lockin)?.is_stepped();
    let check = if options.accuracy_gate && stepped {
        let half = LockinOptions { step: Some(0.5 * step), ..lockin.clone() };
        Some(gate(grid, &ys, |d| lockin_point(system, &p, engine, d, input, &half))?)
    } else {
        None
    };
    let mut params = serde_json::to_value(&p)?;
    params["tau_r"] = Value::Null;
    let meta = json!({
        "experiment": "lockin",
        "n_particles": system.n_particles(),
        "engine": engine,
        "params": params,
        "tau_s": p.tau_s(),
        "readout": lockin.readout,
        "input": state_tag(input),
        "channels": lockin.channels.iter().map(LindbladChannel::describe).collect::<Vec<_>>(),
        "integrator_step": step,
        "seed": p.noise.seed,
        "grid": { "points": grid.len(), "min": grid[0], "max": grid[grid.len() - 1] },
        "accuracy_gate": check,
        "version": version_tag(),
    });
    Spectrum::from_xy(SweepVariable::DeltaTau, grid, &ys, meta)
}

fn mirror_index(points: &[Point], x: f64, tol: f64) -> Option<usize> {
    let i = points.partition_point(|p| p.x < x - tol);
    (i < points.len() && (points[i].x - x).abs() <= tol).then_some(i)
}

/// `max_x |y(x) + y(-x)|` over mirrored pairs, combined with `|y(0)|`.
pub fn antisymmetry_residual(s: &Spectrum) -> Result<f64> {
    let pts = s.points();
    let scale = pts.iter().map(|p| p.x.abs()).fold(0.0, f64::max);
    let tol = 1e-9 * scale;
    let zero = mirror_index(pts, 0.0, tol)
        .ok_or_else(|| Error::InvalidSpectrum("antisymmetry needs a sample at x = 0".into()))?;
    let mut residual = pts[zero].y.abs();
    for p in pts.iter().filter(|p| p.x > tol) {
        let j = mirror_index(pts, -p.x, tol)
            .ok_or_else(|| Error::InvalidSpectrum(format!("no mirror point for x = {:e}", p.x)))?;
        residual = residual.max((p.y + pts[j].y).abs());
    }
    if pts.iter().filter(|p| p.x < -tol).count() != pts.iter().filter(|p| p.x > tol).count() {
        return Err(Error::InvalidSpectrum("grid is not symmetric about 0".into()));
    }
    Ok(residual)
}

/// Sign change nearest `x = 0`, by linear interpolation.
pub fn locate_zero_crossing(s: &Spectrum) -> Result<f64> {
    let pts = s.points();
    let mut crossings: Vec<f64> = Vec::new();
    for (i, w) in pts.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        if a.y == 0.0 {
            if i == 0 || crossings.last() != Some(&a.x) {
                crossings.push(a.x);
            }
        } else if a.y.signum() != b.y.signum() && b.y != 0.0 {
            crossings.push(a.x - a.y * (b.x - a.x) / (b.y - a.y));
        }
    }
    if let Some(last) = pts.last().filter(|p| p.y == 0.0) {
        crossings.push(last.x);
    }
    let nearest = crossings
        .iter()
        .copied()
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .ok_or(Error::NoCrossing)?;
    if crossings.len() > 1 {
        warn!("{} zero crossings found; reporting the one nearest 0 at {nearest:e}", crossings.len());
    }
    Ok(nearest)
}

/// Position of the central resonance feature: the local extremum of `y`
/// (maximum or minimum) nearest `x = 0`, refined by a parabola through it
/// and its neighbours.
pub fn locate_peak(s: &Spectrum) -> Result<f64> {
    let pts = s.points();
    let n = pts.len();
    let interior = (1..n - 1).filter(|&i| {
        let (l, c, r) = (pts[i - 1].y, pts[i].y, pts[i + 1].y);
        (c >= l && c >= r && (c > l || c > r)) || (c <= l && c <= r && (c < l || c < r))
    });
    let Some(i) = interior.min_by(|&a, &b| pts[a].x.abs().total_cmp(&pts[b].x.abs())) else {
        let boundary = if pts[0].y > pts[n - 1].y { pts[0].x } else { pts[n - 1].x };
        warn!("no interior extremum; peak at grid boundary {boundary:e}");
        return Ok(boundary);
    };
    Ok(parabola_vertex(pts[i - 1], pts[i], pts[i + 1]))
}

fn parabola_vertex(a: Point, b: Point, c: Point) -> f64 {
    let num = (b.x - a.x).powi(2) * (b.y - c.y) - (b.x - c.x).powi(2) * (b.y - a.y);
    let den = (b.x - a.x) * (b.y - c.y) - (b.x - c.x) * (b.y - a.y);
    if den == 0.0 {
        b.x
    } else {
        b.x - 0.5 * num / den
    }
}

/// Summary printed by `analyze`.
#[derive(Clone, Debug, Serialize)]
pub struct Analysis {
    pub points: usize,
    pub antisymmetry_residual: Option<f64>,
    pub zero_crossing: Option<f64>,
    pub peak: Option<f64>,
    pub grid_spacing: f64,
}

pub fn analyze(s: &Spectrum) -> Analysis {
    let xs = s.xs();
    let grid_spacing = xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    Analysis {
        points: xs.len(),
        antisymmetry_residual: antisymmetry_residual(s).ok(),
        zero_crossing: locate_zero_crossing(s).ok(),
        peak: locate_peak(s).ok(),
        grid_spacing,
    }
}
