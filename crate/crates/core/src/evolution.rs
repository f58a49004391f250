//! Schedules of Hamiltonian segments and their unitary / Lindblad propagation.
//!
//! Propagation rules:
//! - static segments without dissipation use the exact `exp(-iHτ)`;
//! - drives `H(t) = base + m(t)·coupling` whose parts commute are integrated
//!   exactly through `∫m(t)dt`;
//! - other time-dependent segments use the fourth-order commutator-free
//!   Magnus step (two exponentials of Gauss-point combinations of `H`) for
//!   pure states;
//! - segments with Lindblad channels use classical RK4 on the full master
//!   equation; channel-free stepped segments act on density matrices by the
//!   same Magnus propagator as on vectors.
//!
//! Steps never straddle a discontinuity of the drive noise.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::operators::{exchange_operator, expm_hermitian, Operator, SparseOp, SpinSystem};
use crate::states::{DensityMatrix, PureState};

/// Positivity floor for evolved density matrices.
pub const POSITIVITY_FLOOR: f64 = -1e-7;

// Gauss-Legendre nodes and commutator-free Magnus weights (order 4).
const CF4_NODES: [f64; 2] = [0.5 - 0.288_675_134_594_812_9, 0.5 + 0.288_675_134_594_812_9];
const CF4_WEIGHTS: [f64; 2] = [0.25 - 0.288_675_134_594_812_9, 0.25 + 0.288_675_134_594_812_9];

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const MINUS_I: C64 = C64 { re: 0.0, im: -1.0 };

/// Dissipation channel `γ D[L]` with `D[L]ρ = LρL† - ½{L†L, ρ}`.
#[derive(Clone, Debug)]
pub struct LindbladChannel {
    operator: Operator,
    rate: f64,
    label: String,
}

impl LindbladChannel {
    pub fn new(operator: Operator, rate: f64) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("Lindblad rate {rate} must be >= 0")));
        }
        Ok(Self { operator, rate, label: "custom".into() })
    }

    /// Collective dephasing `(Jz, γ)`.
    pub fn collective_dephasing(system: SpinSystem, rate: f64) -> Result<Self> {
        let (_, _, jz) = crate::operators::collective_operators(system);
        Ok(Self::new(jz, rate)?.with_label("collective_dephasing"))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn describe(&self) -> Value {
        json!({ "operator": self.label, "rate": self.rate })
    }

    pub fn operator(&self) -> &Operator {
        &self.operator
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

/// `m(t) = amplitude · sin(ω t) + N_o(t)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriveSignal {
    pub amplitude: f64,
    pub omega: f64,
    pub noise: NoiseModel,
}

impl DriveSignal {
    pub fn value(&self, t: f64) -> f64 {
        self.amplitude * (self.omega * t).sin() + self.noise.value(t)
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let smooth = if self.omega == 0.0 {
            0.0
        } else {
            self.amplitude * ((self.omega * a).cos() - (self.omega * b).cos()) / self.omega
        };
        smooth + self.noise.integral(a, b)
    }

    /// Noise cell boundaries strictly inside `(a, b)`.
    pub fn discontinuities(&self, a: f64, b: f64) -> Vec<f64> {
        let Some(cell) = self.noise.interval.filter(|_| self.noise.is_active()) else {
            return Vec::new();
        };
        let first = (a / cell).floor() as u64 + 1;
        (first..)
            .map(|k| k as f64 * cell)
            .take_while(|&t| t < b)
            .filter(|&t| t > a)
            .collect()
    }
}

/// `H(t) = base + m(t) · coupling`.
#[derive(Clone, Debug)]
pub struct Drive {
    base: Operator,
    coupling: Operator,
    signal: DriveSignal,
    commuting: bool,
}

impl Drive {
    pub fn new(base: Operator, coupling: Operator, signal: DriveSignal) -> Result<Self> {
        if !base.is_hermitian() {
            return Err(Error::NotHermitian(base.hermitian_defect()));
        }
        if !coupling.is_hermitian() {
            return Err(Error::NotHermitian(coupling.hermitian_defect()));
        }
        let scale = 1.0 + base.max_abs() * coupling.max_abs();
        let commuting = base.commutator(&coupling).max_abs() <= 1e-12 * scale;
        Ok(Self { base, coupling, signal, commuting })
    }

    pub fn hamiltonian(&self, t: f64) -> Operator {
        &self.base + &self.coupling.scaled(self.signal.value(t))
    }

    pub fn signal(&self) -> &DriveSignal {
        &self.signal
    }

    pub fn is_commuting(&self) -> bool {
        self.commuting
    }
}

type HamiltonianFn = Arc<dyn Fn(f64) -> Operator + Send + Sync>;

#[derive(Clone)]
pub enum Generator {
    Static(Operator),
    Driven(Drive),
    /// Instantaneous rotation `exp(-i·angle·G)`.
    Kick { generator: Operator, angle: f64, unitary: Operator },
    TimeDependent(HamiltonianFn),
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Static(h) => f.debug_tuple("Static").field(h).finish(),
            Self::Driven(d) => f.debug_tuple("Driven").field(d).finish(),
            Self::Kick { angle, .. } => f.debug_struct("Kick").field("angle", angle).finish_non_exhaustive(),
            Self::TimeDependent(_) => f.write_str("TimeDependent(..)"),
        }
    }
}

impl Generator {
    fn kind(&self) -> &'static str {
        match self {
            Self::Static(_) => "static",
            Self::Driven(_) => "driven",
            Self::Kick { .. } => "kick",
            Self::TimeDependent(_) => "time_dependent",
        }
    }

    fn system(&self) -> Option<SpinSystem> {
        match self {
            Self::Static(h) => Some(h.system()),
            Self::Driven(d) => Some(d.base.system()),
            Self::Kick { unitary, .. } => Some(unitary.system()),
            Self::TimeDependent(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Segment {
    label: String,
    start: f64,
    duration: f64,
    generator: Generator,
    channels: Vec<LindbladChannel>,
    step: Option<f64>,
    meta: Value,
}

impl Segment {
    pub fn fixed(label: impl Into<String>, hamiltonian: Operator, duration: f64) -> Self {
        Self::raw(label, duration, Generator::Static(hamiltonian), None)
    }

    pub fn driven(label: impl Into<String>, drive: Drive, duration: f64, step: f64) -> Self {
        Self::raw(label, duration, Generator::Driven(drive), Some(step))
    }

    pub fn kick(label: impl Into<String>, generator: Operator, angle: f64) -> Result<Self> {
        let unitary = expm_hermitian(&generator, angle)?;
        Ok(Self::raw(label, 0.0, Generator::Kick { generator, angle, unitary }, None))
    }

    pub fn time_dependent(
        label: impl Into<String>,
        hamiltonian: impl Fn(f64) -> Operator + Send + Sync + 'static,
        duration: f64,
        step: f64,
    ) -> Self {
        Self::raw(label, duration, Generator::TimeDependent(Arc::new(hamiltonian)), Some(step))
    }

    fn raw(label: impl Into<String>, duration: f64, generator: Generator, step: Option<f64>) -> Self {
        Self { label: label.into(), start: 0.0, duration, generator, channels: Vec::new(), step, meta: Value::Null }
    }

    pub fn with_channels(mut self, channels: Vec<LindbladChannel>) -> Self {
        self.channels = channels;
        self
    }

    /// Integrator step used when the segment has to be stepped.
    pub fn with_step(mut self, step: f64) -> Self {
        self.step = Some(step);
        self
    }

    /// Free-form parameters echoed by [`Schedule::summary`].
    pub fn with_meta(mut self, meta: Value) -> Self {
        self.meta = meta;
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn channels(&self) -> &[LindbladChannel] {
        &self.channels
    }

    pub fn step(&self) -> Option<f64> {
        self.step
    }

    /// Hamiltonian at absolute time `t` (kicks report their generator).
    pub fn hamiltonian_at(&self, t: f64) -> Operator {
        match &self.generator {
            Generator::Static(h) => h.clone(),
            Generator::Driven(d) => d.hamiltonian(t),
            Generator::Kick { generator, .. } => generator.clone(),
            Generator::TimeDependent(f) => f(t),
        }
    }

    fn needs_stepping_pure(&self) -> bool {
        match &self.generator {
            Generator::Driven(d) => !d.commuting,
            Generator::TimeDependent(_) => true,
            _ => false,
        }
    }

    fn needs_stepping(&self) -> bool {
        self.needs_stepping_pure() || (!self.channels.is_empty() && self.duration > 0.0)
    }

    /// Step boundaries from `start` to `end`: the uniform grid refined at
    /// noise discontinuities so no step straddles one.
    fn step_times(&self) -> Result<Vec<f64>> {
        let (n, dt) = self.steps()?;
        let mut times: Vec<f64> = (0..n).map(|k| self.start + k as f64 * dt).collect();
        times.push(self.end());
        if let Generator::Driven(d) = &self.generator {
            let cuts = d.signal.discontinuities(self.start, self.end());
            if !cuts.is_empty() {
                times.extend(cuts);
                times.sort_by(f64::total_cmp);
                let min_gap = 1e-9 * dt;
                let end = self.end();
                let mut merged: Vec<f64> = Vec::with_capacity(times.len());
                for t in times {
                    match merged.last() {
                        Some(&last) if t - last <= min_gap => {
                            if t == end {
                                *merged.last_mut().expect("non-empty") = end;
                            }
                        }
                        _ => merged.push(t),
                    }
                }
                times = merged;
            }
        }
        Ok(times)
    }

    fn steps(&self) -> Result<(usize, f64)> {
        let step = self
            .step
            .filter(|s| *s > 0.0 && s.is_finite())
            .ok_or_else(|| Error::InvalidParameter(format!("segment '{}' needs a positive step", self.label)))?;
        let n = ((self.duration / step) - 1e-9).ceil().max(1.0) as usize;
        Ok((n, self.duration / n as f64))
    }
}

/// Ordered list of segments on one spin system. Segment start times are
/// assigned on insertion.
#[derive(Clone, Debug)]
pub struct Schedule {
    system: SpinSystem,
    segments: Vec<Segment>,
}

impl Schedule {
    pub fn new(system: SpinSystem) -> Self {
        Self { system, segments: Vec::new() }
    }

    pub fn push(&mut self, mut segment: Segment) -> Result<()> {
        if !(segment.duration >= 0.0 && segment.duration.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "segment '{}' has invalid duration {}",
                segment.label, segment.duration
            )));
        }
        let dims = segment
            .generator
            .system()
            .into_iter()
            .chain(segment.channels.iter().map(|c| c.operator.system()));
        for s in dims {
            if s != self.system {
                return Err(Error::DimensionMismatch { expected: self.system.dim(), found: s.dim() });
            }
        }
        if segment.needs_stepping() {
            segment.steps()?;
        }
        segment.start = self.total_duration();
        self.segments.push(segment);
        Ok(())
    }

    pub fn with(mut self, segment: Segment) -> Result<Self> {
        self.push(segment)?;
        Ok(self)
    }

    pub fn system(&self) -> SpinSystem {
        self.system
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.last().map_or(0.0, Segment::end)
    }

    pub fn has_channels(&self) -> bool {
        self.segments.iter().any(|s| !s.channels.is_empty())
    }

    /// True if some segment is integrated with a finite step.
    pub fn is_stepped(&self) -> bool {
        self.segments.iter().any(Segment::needs_stepping)
    }

    /// Copy with every integrator step multiplied by `factor`.
    pub fn with_step_scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for seg in &mut out.segments {
            seg.step = seg.step.map(|s| s * factor);
        }
        out
    }

    /// Prefix of the schedule up to absolute time `t`; kicks at exactly `t`
    /// are included.
    pub fn until(&self, t: f64) -> Self {
        let mut out = Schedule::new(self.system);
        for seg in &self.segments {
            if seg.start > t {
                break;
            }
            let mut s = seg.clone();
            if s.end() > t {
                s.duration = t - s.start;
            }
            out.segments.push(s);
        }
        out
    }

    /// JSON description for debugging (durations, kinds, steps, parameters).
    pub fn summary(&self) -> Value {
        let segments: Vec<Value> = self
            .segments
            .iter()
            .map(|s| {
                let mut v = json!({
                    "label": s.label,
                    "kind": s.generator.kind(),
                    "start": s.start,
                    "duration": s.duration,
                    "step": s.step,
                    "channels": s.channels.iter().map(LindbladChannel::describe).collect::<Vec<_>>(),
                });
                match &s.generator {
                    Generator::Kick { angle, .. } => v["angle"] = json!(angle),
                    Generator::Driven(d) => {
                        v["signal"] = serde_json::to_value(&d.signal).unwrap_or(Value::Null);
                        v["commuting"] = json!(d.commuting);
                    }
                    _ => {}
                }
                if !s.meta.is_null() {
                    v["params"] = s.meta.clone();
                }
                v
            })
            .collect();
        json!({
            "n_particles": self.system.n_particles(),
            "total_duration": self.total_duration(),
            "segments": segments,
        })
    }
}

/// Either kind of quantum state.
#[derive(Clone, Debug, PartialEq)]
pub enum State {
    Pure(PureState),
    Mixed(DensityMatrix),
}

impl State {
    pub fn system(&self) -> SpinSystem {
        match self {
            State::Pure(s) => s.system(),
            State::Mixed(r) => r.system(),
        }
    }

    pub fn to_density(&self) -> DensityMatrix {
        match self {
            State::Pure(s) => s.to_density(),
            State::Mixed(r) => r.clone(),
        }
    }
}

impl From<PureState> for State {
    fn from(s: PureState) -> Self {
        State::Pure(s)
    }
}

impl From<DensityMatrix> for State {
    fn from(r: DensityMatrix) -> Self {
        State::Mixed(r)
    }
}

/// Things that have expectation values.
pub trait Expectation {
    /// Complex `⟨A⟩`; callers usually want [`expectation`].
    fn raw_expectation(&self, op: &Operator) -> C64;
}

impl Expectation for PureState {
    fn raw_expectation(&self, op: &Operator) -> C64 {
        self.amplitudes().dotc(&op.apply(self.amplitudes()))
    }
}

impl Expectation for DensityMatrix {
    fn raw_expectation(&self, op: &Operator) -> C64 {
        (self.matrix() * op.matrix()).trace()
    }
}

impl Expectation for State {
    fn raw_expectation(&self, op: &Operator) -> C64 {
        match self {
            State::Pure(s) => s.raw_expectation(op),
            State::Mixed(r) => r.raw_expectation(op),
        }
    }
}

/// Real expectation value of a Hermitian observable.
pub fn expectation(state: &impl Expectation, op: &Operator) -> Result<f64> {
    if !op.is_hermitian() {
        return Err(Error::NotHermitian(op.hermitian_defect()));
    }
    let z = state.raw_expectation(op);
    if z.im.abs() > 1e-10 * z.re.abs().max(1.0) {
        return Err(Error::Accuracy(format!("expectation has imaginary residue {:.3e}", z.im)));
    }
    Ok(z.re)
}

/// `ψ ← exp(-i H dt) ψ` with `H = Σ c_k P_k`, by a scaled Taylor series on
/// the vector. Converges to round-off; substeps keep `‖H‖ dt ≤ 1`.
fn exp_action(parts: &[(&SparseOp, f64)], dt: f64, psi: &mut [C64], term: &mut Vec<C64>, next: &mut Vec<C64>) {
    let norm: f64 = parts.iter().map(|(p, c)| p.norm_inf() * c.abs()).sum();
    let substeps = (norm * dt.abs()).ceil().max(1.0) as usize;
    let h = dt / substeps as f64;
    let d = psi.len();
    term.resize(d, ZERO);
    next.resize(d, ZERO);
    for _ in 0..substeps {
        term.copy_from_slice(psi);
        for k in 1..=60 {
            next.iter_mut().for_each(|z| *z = ZERO);
            let scale = MINUS_I * (h / k as f64);
            for (p, c) in parts {
                if *c != 0.0 {
                    p.mul_vec_add(scale * *c, term, next);
                }
            }
            let mut tmax = 0.0f64;
            let mut pmax = 0.0f64;
            for i in 0..d {
                psi[i] += next[i];
                tmax = tmax.max(next[i].norm_sqr());
                pmax = pmax.max(psi[i].norm_sqr());
            }
            std::mem::swap(term, next);
            if tmax <= 1e-34 * pmax {
                break;
            }
        }
    }
}

enum StepParts<'a> {
    Driven { base: SparseOp, coupling: SparseOp, signal: &'a DriveSignal },
    Function(&'a HamiltonianFn),
    Static(SparseOp),
}

impl StepParts<'_> {
    fn for_segment(seg: &Segment) -> StepParts<'_> {
        match &seg.generator {
            Generator::Driven(d) => StepParts::Driven {
                base: SparseOp::from_operator(&d.base),
                coupling: SparseOp::from_operator(&d.coupling),
                signal: &d.signal,
            },
            Generator::TimeDependent(f) => StepParts::Function(f),
            Generator::Static(h) => StepParts::Static(SparseOp::from_operator(h)),
            Generator::Kick { .. } => unreachable!("kicks are never stepped"),
        }
    }

    /// Calls `f` with the sparse decomposition of `H(t)`.
    fn with_at<R>(&self, t: f64, f: impl FnOnce(&[(&SparseOp, f64)]) -> R) -> R {
        self.with_combination(&[(t, 1.0)], f)
    }

    /// Calls `f` with the sparse decomposition of `Σ w_i H(t_i)`.
    fn with_combination<R>(&self, points: &[(f64, f64)], f: impl FnOnce(&[(&SparseOp, f64)]) -> R) -> R {
        let weight: f64 = points.iter().map(|(_, w)| w).sum();
        match self {
            StepParts::Driven { base, coupling, signal } => {
                let c: f64 = points.iter().map(|(t, w)| w * signal.value(*t)).sum();
                f(&[(base, weight), (coupling, c)])
            }
            StepParts::Static(h) => f(&[(h, weight)]),
            StepParts::Function(g) => {
                let mut iter = points.iter();
                let (t0, w0) = iter.next().expect("at least one point");
                let sum = iter.fold(g(*t0).scaled(*w0), |acc, (t, w)| &acc + &g(*t).scaled(*w));
                let h = SparseOp::from_operator(&sum);
                f(&[(&h, 1.0)])
            }
        }
    }
}

/// One fourth-order commutator-free Magnus step on a vector.
fn magnus_step(parts: &StepParts<'_>, t0: f64, dt: f64, psi: &mut [C64], term: &mut Vec<C64>, next: &mut Vec<C64>) {
    let (t1, t2) = (t0 + CF4_NODES[0] * dt, t0 + CF4_NODES[1] * dt);
    parts.with_combination(&[(t1, CF4_WEIGHTS[1]), (t2, CF4_WEIGHTS[0])], |p| exp_action(p, dt, psi, term, next));
    parts.with_combination(&[(t1, CF4_WEIGHTS[0]), (t2, CF4_WEIGHTS[1])], |p| exp_action(p, dt, psi, term, next));
}

/// `U x` for every column of `x`, with `U` the stepped propagator of `seg`.
fn propagate_columns(seg: &Segment, x: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let parts = StepParts::for_segment(seg);
    let times = seg.step_times()?;
    let mut out = x.clone();
    let (mut term, mut next) = (Vec::new(), Vec::new());
    for mut col in out.column_iter_mut() {
        let mut v: Vec<C64> = col.iter().copied().collect();
        for w in times.windows(2) {
            magnus_step(&parts, w[0], w[1] - w[0], &mut v, &mut term, &mut next);
        }
        col.iter_mut().zip(v).for_each(|(c, z)| *c = z);
    }
    Ok(out)
}

fn exact_segment_unitary(seg: &Segment) -> Result<Option<Operator>> {
    match &seg.generator {
        Generator::Static(h) => Ok(Some(expm_hermitian(h, seg.duration)?)),
        Generator::Kick { unitary, .. } => Ok(Some(unitary.clone())),
        Generator::Driven(d) if d.commuting => {
            let phase = d.signal.integral(seg.start, seg.end());
            let total = &d.base.scaled(seg.duration) + &d.coupling.scaled(phase);
            Ok(Some(expm_hermitian(&total, 1.0)?))
        }
        _ => Ok(None),
    }
}

/// Unitary evolution of a pure state through a channel-free schedule.
pub fn evolve_pure(state: &PureState, schedule: &Schedule) -> Result<PureState> {
    if state.system() != schedule.system {
        return Err(Error::DimensionMismatch { expected: schedule.system.dim(), found: state.system().dim() });
    }
    let mut psi: Vec<C64> = state.amplitudes().iter().copied().collect();
    let (mut term, mut next) = (Vec::new(), Vec::new());
    for (index, seg) in schedule.segments.iter().enumerate() {
        if !seg.channels.is_empty() {
            return Err(Error::ChannelsRequireDensity { index });
        }
        if matches!(seg.generator, Generator::Static(_)) && seg.duration == 0.0 {
            continue;
        }
        if let Some(u) = exact_segment_unitary(seg)? {
            let v = u.apply(&DVector::from_column_slice(&psi));
            psi.copy_from_slice(v.as_slice());
            continue;
        }
        if seg.duration == 0.0 {
            continue;
        }
        let parts = StepParts::for_segment(seg);
        for w in seg.step_times()?.windows(2) {
            magnus_step(&parts, w[0], w[1] - w[0], &mut psi, &mut term, &mut next);
        }
    }
    Ok(PureState::from_raw(state.system(), DVector::from_vec(psi)))
}

/// Drift statistics gathered during density-matrix evolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DensityDiagnostics {
    pub max_trace_drift: f64,
    pub max_hermitian_drift: f64,
    pub min_eigenvalue: f64,
}

struct ChannelParts {
    rate: f64,
    op: SparseOp,
    op_dag: SparseOp,
    op_dag_op: SparseOp,
}

impl ChannelParts {
    fn new(c: &LindbladChannel) -> Self {
        let dag = c.operator.dagger();
        Self {
            rate: c.rate,
            op: SparseOp::from_operator(&c.operator),
            op_dag: SparseOp::from_operator(&dag),
            op_dag_op: SparseOp::from_operator(&(&dag * &c.operator)),
        }
    }
}

fn add_dissipator(channels: &[ChannelParts], rho: &DMatrix<C64>, out: &mut DMatrix<C64>) {
    let d = rho.nrows();
    for c in channels {
        if c.rate == 0.0 {
            continue;
        }
        let g = C64::from(c.rate);
        let mut l_rho = DMatrix::zeros(d, d);
        c.op.mul_left_add(C64::from(1.0), rho, &mut l_rho);
        c.op_dag.mul_right_add(g, &l_rho, out);
        c.op_dag_op.mul_left_add(-0.5 * g, rho, out);
        c.op_dag_op.mul_right_add(-0.5 * g, rho, out);
    }
}

fn master_rhs(parts: &[(&SparseOp, f64)], channels: &[ChannelParts], rho: &DMatrix<C64>) -> DMatrix<C64> {
    let d = rho.nrows();
    let mut out = DMatrix::zeros(d, d);
    for (p, c) in parts {
        if *c != 0.0 {
            p.mul_left_add(MINUS_I * *c, rho, &mut out);
            p.mul_right_add(-MINUS_I * *c, rho, &mut out);
        }
    }
    add_dissipator(channels, rho, &mut out);
    out
}

/// `Σ γ_k D[L_k] ρ`.
pub fn dissipator(channels: &[LindbladChannel], rho: &DMatrix<C64>) -> DMatrix<C64> {
    let parts: Vec<ChannelParts> = channels.iter().map(ChannelParts::new).collect();
    let d = rho.nrows();
    let mut out = DMatrix::zeros(d, d);
    add_dissipator(&parts, rho, &mut out);
    out
}

/// `max |U_ex† D[ρ] U_ex - D[U_ex† ρ U_ex]|`; zero when the channels respect
/// the exchange symmetry.
pub fn dissipator_symmetry_residual(channels: &[LindbladChannel], rho: &DMatrix<C64>) -> f64 {
    let Some(first) = channels.first() else { return 0.0 };
    let u = exchange_operator(first.operator.system());
    let u = u.matrix();
    let lhs = u.adjoint() * dissipator(channels, rho) * u;
    let rhs = dissipator(channels, &(u.adjoint() * rho * u));
    (lhs - rhs).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Master-equation evolution.
pub fn evolve_density(rho: &DensityMatrix, schedule: &Schedule) -> Result<DensityMatrix> {
    evolve_density_with_diagnostics(rho, schedule).map(|(r, _)| r)
}

/// Master-equation evolution returning drift statistics. Fails when the
/// minimum eigenvalue drops below [`POSITIVITY_FLOOR`].
pub fn evolve_density_with_diagnostics(
    rho: &DensityMatrix,
    schedule: &Schedule,
) -> Result<(DensityMatrix, DensityDiagnostics)> {
    let system = schedule.system;
    if rho.system() != system {
        return Err(Error::DimensionMismatch { expected: system.dim(), found: rho.system().dim() });
    }
    let mut r = rho.matrix().clone();
    let mut diag = DensityDiagnostics { max_trace_drift: 0.0, max_hermitian_drift: 0.0, min_eigenvalue: f64::INFINITY };
    for seg in &schedule.segments {
        let dissipative = !seg.channels.is_empty() && seg.duration > 0.0;
        if !dissipative && seg.needs_stepping_pure() {
            // U ρ U† = U (U ρ)† for Hermitian ρ
            let u_rho = propagate_columns(seg, &r)?;
            r = propagate_columns(seg, &u_rho.adjoint())?;
        } else if !dissipative {
            if matches!(seg.generator, Generator::Static(_)) && seg.duration == 0.0 {
                continue;
            }
            if let Some(u) = exact_segment_unitary(seg)? {
                r = u.matrix() * &r * u.matrix().adjoint();
            }
        } else {
            let parts = StepParts::for_segment(seg);
            let channels: Vec<ChannelParts> = seg.channels.iter().map(ChannelParts::new).collect();
            let f = |t: f64, x: &DMatrix<C64>| parts.with_at(t, |p| master_rhs(p, &channels, x));
            for w in seg.step_times()?.windows(2) {
                let (t, dt) = (w[0], w[1] - w[0]);
                let half = C64::from(0.5 * dt);
                let k1 = f(t, &r);
                let k2 = f(t + 0.5 * dt, &(&r + &k1 * half));
                let k3 = f(t + 0.5 * dt, &(&r + &k2 * half));
                let k4 = f(t + dt, &(&r + &k3 * C64::from(dt)));
                r += (k1 + (k2 + k3) * C64::from(2.0) + k4) * C64::from(dt / 6.0);
            }
        }
        let current = DensityMatrix::from_raw(system, r.clone());
        diag.max_trace_drift = diag.max_trace_drift.max((current.trace() - C64::from(1.0)).norm());
        diag.max_hermitian_drift = diag.max_hermitian_drift.max(current.hermitian_defect());
        let min = current.min_eigenvalue()?;
        diag.min_eigenvalue = diag.min_eigenvalue.min(min);
        if min < POSITIVITY_FLOOR {
            return Err(Error::Accuracy(format!(
                "density matrix lost positivity in segment '{}' (min eigenvalue {min:.3e})",
                seg.label
            )));
        }
    }
    if diag.min_eigenvalue == f64::INFINITY {
        diag.min_eigenvalue = rho.min_eigenvalue()?;
    }
    Ok((DensityMatrix::from_raw(system, r), diag))
}

/// Dispatches to the pure or density engine. Pure inputs are promoted to
/// density matrices when the schedule carries dissipation.
pub fn evolve(state: &State, schedule: &Schedule) -> Result<State> {
    match state {
        State::Pure(s) if !schedule.has_channels() => evolve_pure(s, schedule).map(State::Pure),
        other => evolve_density(&other.to_density(), schedule).map(State::Mixed),
    }
}
