//! Built-in invariant suites run by `spdmbi verify`.

use std::fmt;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::Result;
use crate::evolution::{
    dissipator_symmetry_residual, evolve, evolve_density_with_diagnostics, evolve_pure, expectation, LindbladChannel,
    Schedule, Segment, State,
};
use crate::hamiltonians::{
    effective_hamiltonian_with, general_hamiltonian, resonant_fourier_coefficients, symmetry_residual, Axis,
    EffectiveVariant, GeneralCoefficients, LockinParams, Parity, RamseyParams, Term,
};
use crate::lineshapes::fourier_coefficients;
use crate::operators::{collective_operators, exchange_operator, CollectiveSpin, Operator, SpinSystem};
use crate::sequences::{lockin_schedule, LockinOptions};
use crate::spectrum::{antisymmetry_residual, sweep_lockin, symmetric_grid, Engine, Spectrum, SweepOptions, SweepVariable};
use crate::states::{dicke_state, x_polarized};

/// Deliberate defects for negative-control runs.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Ramsey detuning enters as `|δ| Jz`, giving an even coefficient where
    /// an odd one is required.
    ParityBug,
}

#[derive(Clone, Debug)]
pub struct VerifyConfig {
    pub n_particles: u32,
    pub grid_points: usize,
    pub threads: Option<usize>,
    #[doc(hidden)]
    pub fault: Option<Fault>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { n_particles: 20, grid_points: 41, threads: None, fault: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantRecord {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub value: f64,
    /// Bound on `value`; `lower_bound` means `value` must exceed it.
    pub threshold: f64,
    pub lower_bound: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct VerifyReport {
    pub records: Vec<InvariantRecord>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.records.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &InvariantRecord> {
        self.records.iter().filter(|r| !r.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    fn below(&mut self, suite: &'static str, name: impl Into<String>, value: f64, threshold: f64) {
        let passed = value.is_finite() && value < threshold;
        self.records.push(InvariantRecord { suite, name: name.into(), passed, value, threshold, lower_bound: false });
    }

    fn above(&mut self, suite: &'static str, name: impl Into<String>, value: f64, threshold: f64) {
        let passed = value.is_finite() && value > threshold;
        self.records.push(InvariantRecord { suite, name: name.into(), passed, value, threshold, lower_bound: true });
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.records {
            let cmp = if r.lower_bound { ">" } else { "<" };
            writeln!(
                f,
                "[{}] {:<12} {:<58} {:.3e} {cmp} {:.1e}",
                if r.passed { "ok" } else { "FAIL" },
                r.suite,
                r.name,
                r.value,
                r.threshold
            )?;
        }
        let failed = self.failures().count();
        write!(f, "{} invariants, {} failed", self.records.len(), failed)
    }
}

/// Runs every suite and collects one record per invariant.
pub fn run_invariants(config: &VerifyConfig) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    operator_algebra(&mut report)?;
    let system = SpinSystem::new(config.n_particles)?;
    symmetry_residuals(&mut report, system, config.fault)?;
    antisymmetry_end_to_end(&mut report, system, config)?;
    lindblad_conservation(&mut report, system)?;
    fourier_identities(&mut report)?;
    Ok(report)
}

const SUITE_ALGEBRA: &str = "algebra";
const SUITE_SYMMETRY: &str = "symmetry";
const SUITE_SPECTRUM: &str = "spectrum";
const SUITE_LINDBLAD: &str = "lindblad";
const SUITE_FOURIER: &str = "fourier";

fn operator_algebra(report: &mut VerifyReport) -> Result<()> {
    for n in [1, 2, 5, 20] {
        let system = SpinSystem::new(n)?;
        let (jx, jy, jz) = collective_operators(system);
        let i = C64::i();
        let cyclic = jx
            .commutator(&jy)
            .max_abs_diff(&jz.scaled_complex(i))
            .max(jy.commutator(&jz).max_abs_diff(&jx.scaled_complex(i)))
            .max(jz.commutator(&jx).max_abs_diff(&jy.scaled_complex(i)));
        report.below(SUITE_ALGEBRA, format!("N={n} [Ja,Jb] = i eps_abc Jc"), cyclic, 1e-10);
        let j = system.j();
        let casimir = CollectiveSpin::new(system).total_squared();
        report.below(
            SUITE_ALGEBRA,
            format!("N={n} J^2 = J(J+1)"),
            casimir.max_abs_diff(&Operator::identity(system).scaled(j * (j + 1.0))),
            1e-10,
        );
        let u = exchange_operator(system);
        let signs = jx
            .conjugated_by(&u)
            .max_abs_diff(&jx)
            .max(jy.conjugated_by(&u).max_abs_diff(&(-&jy)))
            .max(jz.conjugated_by(&u).max_abs_diff(&(-&jz)));
        report.below(SUITE_ALGEBRA, format!("N={n} exchange conjugation signs"), signs, 1e-10);
        report.below(SUITE_ALGEBRA, format!("N={n} exchange unitarity"), u.unitarity_defect(), 1e-10);
    }
    Ok(())
}

fn ramsey_builder(s: &CollectiveSpin, p: &RamseyParams, fault: Option<Fault>) -> impl Fn(f64, bool) -> Operator {
    let twist = (&s.jz * &s.jz).scaled(p.chi);
    let jz = s.jz.clone();
    let drive = s.jx.scaled(p.omega);
    move |delta, pulse| {
        let detuning = match fault {
            Some(Fault::ParityBug) => delta.abs(),
            None => delta,
        };
        let h = &twist + &jz.scaled(detuning);
        if pulse {
            &h + &drive
        } else {
            h
        }
    }
}

fn ramsey_schedule_from(
    system: SpinSystem,
    p: &RamseyParams,
    build: &impl Fn(f64, bool) -> Operator,
    delta: f64,
    channels: &[LindbladChannel],
) -> Result<Schedule> {
    let mut schedule = Schedule::new(system);
    let step = p.t_pulse / 200.0;
    for (label, pulse, duration) in
        [("pulse_1", true, p.pulse_duration()), ("free", false, p.t_free), ("pulse_2", true, p.pulse_duration())]
    {
        schedule.push(Segment::fixed(label, build(delta, pulse), duration).with_step(step).with_channels(channels.to_vec()))?;
    }
    Ok(schedule)
}

fn symmetry_residuals(report: &mut VerifyReport, system: SpinSystem, fault: Option<Fault>) -> Result<()> {
    let s = CollectiveSpin::new(system);
    let p = RamseyParams::reference(1.0, 0.02)?;
    let build = ramsey_builder(&s, &p, fault);
    let deltas = [0.0, 0.137, 0.5, 1.3, 2.0];
    let residual = |pulse: bool| {
        deltas
            .iter()
            .map(|&d| symmetry_residual(|d, _| build(d, pulse), system, d, 0.0))
            .fold(0.0, f64::max)
    };
    report.below(SUITE_SYMMETRY, "ramsey pulse Hamiltonian", residual(true), 1e-10);
    report.below(SUITE_SYMMETRY, "ramsey free Hamiltonian", residual(false), 1e-10);

    let table = GeneralCoefficients::new()
        .with(Term::F1, Parity::Even, |d, t| 1.0 + d * d * t.cos())
        .with(Term::F2, Parity::Odd, |d, t| d * t.sin())
        .with(Term::F3, Parity::Odd, |d, _| d)
        .with(Term::E1, Parity::Even, |d, t| 0.1 * d.cos() * t)
        .with(Term::E2, Parity::Odd, |d, _| 0.2 * d.powi(3))
        .with(Term::E3, Parity::Odd, |d, t| 0.3 * d * t)
        .with(Term::G1, Parity::Even, |d, _| 0.01 * d * d)
        .with(Term::G2, Parity::Even, |_, t| 0.02 * t)
        .with(Term::G3, Parity::Even, |_, _| 0.05);
    let general = deltas
        .iter()
        .flat_map(|&d| [0.0, 0.7, 2.1].map(|t| (d, t)))
        .map(|(d, t)| symmetry_residual(|d, t| general_hamiltonian(system, &table, d, t), system, d, t))
        .fold(0.0, f64::max);
    report.below(SUITE_SYMMETRY, "general Hamiltonian with exchange parities", general, 1e-10);

    let lockin = LockinParams::reference(Axis::Y, 0.5, 100, 0.2 * std::f64::consts::PI);
    let fc = resonant_fourier_coefficients(&lockin)?;
    let tau_s = lockin.tau_s();
    let effective = |variant| {
        [0.003, 0.01, 0.04]
            .iter()
            .map(|&d| {
                symmetry_residual(
                    |d, _| effective_hamiltonian_with(&s, &lockin, variant, d * tau_s, Some(&fc)),
                    system,
                    d,
                    0.0,
                )
            })
            .fold(0.0, f64::max)
    };
    report.below(SUITE_SYMMETRY, "effective cp_finite_y", effective(EffectiveVariant::CpFiniteY), 1e-10);
    report.below(SUITE_SYMMETRY, "effective cp_ideal", effective(EffectiveVariant::CpIdeal), 1e-10);
    report.above(SUITE_SYMMETRY, "effective cp_finite_x breaks the symmetry", effective(EffectiveVariant::CpFiniteX), 1e-6);
    Ok(())
}

fn ramsey_spectrum(
    system: SpinSystem,
    p: &RamseyParams,
    fault: Option<Fault>,
    grid: &[f64],
    input: &State,
    channels: &[LindbladChannel],
) -> Result<Spectrum> {
    let s = CollectiveSpin::new(system);
    let build = ramsey_builder(&s, p, fault);
    let ys = grid
        .iter()
        .map(|&d| {
            let sched = ramsey_schedule_from(system, p, &build, d, channels)?;
            expectation(&evolve(input, &sched)?, &s.jz)
        })
        .collect::<Result<Vec<f64>>>()?;
    Spectrum::from_xy(SweepVariable::Delta, grid, &ys, serde_json::Value::Null)
}

fn antisymmetry_end_to_end(report: &mut VerifyReport, system: SpinSystem, config: &VerifyConfig) -> Result<()> {
    let omega = 1.0;
    let grid = symmetric_grid(2.0 * omega, config.grid_points)?;
    let symmetric = State::Pure(x_polarized(system));
    let top = State::Pure(dicke_state(system, system.j())?);
    for chi in [0.0, 0.02] {
        let p = RamseyParams::reference(omega, chi)?;
        for gamma in [0.0, 0.1] {
            let channels = if gamma > 0.0 {
                vec![LindbladChannel::collective_dephasing(system, gamma * omega)?]
            } else {
                Vec::new()
            };
            let s = ramsey_spectrum(system, &p, config.fault, &grid, &symmetric, &channels)?;
            let tag = format!("ramsey chi={chi} gamma={gamma}");
            report.below(SUITE_SPECTRUM, format!("{tag} antisymmetry residual"), antisymmetry_residual(&s)?, 1e-7);
            let s0 = s.value_at(0.0).unwrap_or(f64::NAN).abs();
            report.below(SUITE_SPECTRUM, format!("{tag} |S(0)|"), s0, 1e-8);
        }
    }

    let p = RamseyParams::reference(omega, 0.02)?;
    let sym = antisymmetry_residual(&ramsey_spectrum(system, &p, config.fault, &grid, &symmetric, &[])?)?;
    let asym = antisymmetry_residual(&ramsey_spectrum(system, &p, config.fault, &grid, &top, &[])?)?;
    report.above(SUITE_SPECTRUM, "asymmetric input residual / symmetric input residual", asym / sym.max(1e-300), 10.0);

    // Segment-boundary antisymmetry of the dephased dynamics.
    let channels = vec![LindbladChannel::collective_dephasing(system, 0.1 * omega)?];
    let s = CollectiveSpin::new(system);
    let build = ramsey_builder(&s, &p, config.fault);
    let rho = x_polarized(system).to_density();
    let mut boundary: f64 = 0.0;
    for d in [0.3, 1.1] {
        let plus = ramsey_schedule_from(system, &p, &build, d, &channels)?;
        let minus = ramsey_schedule_from(system, &p, &build, -d, &channels)?;
        for seg in plus.segments() {
            let t = seg.end();
            let a = expectation(&evolve_density_with_diagnostics(&rho, &plus.until(t))?.0, &s.jz)?;
            let b = expectation(&evolve_density_with_diagnostics(&rho, &minus.until(t))?.0, &s.jz)?;
            boundary = boundary.max((a + b).abs());
        }
    }
    report.below(SUITE_SPECTRUM, "dephased <Jz>(d) + <Jz>(-d) at segment boundaries", boundary, 1e-8);

    let lockin = LockinParams::reference(Axis::Y, 0.5, 100, 0.2 * std::f64::consts::PI);
    let lgrid = symmetric_grid(0.04 * lockin.tau_s(), config.grid_points)?;
    let options = SweepOptions { threads: config.threads, ..SweepOptions::default() };
    let eff = sweep_lockin(
        system,
        &lockin,
        &lgrid,
        &symmetric,
        Engine::Effective(EffectiveVariant::CpFiniteY),
        &LockinOptions::default(),
        &options,
    )?;
    report.below(SUITE_SPECTRUM, "effective cp_finite_y antisymmetry residual", antisymmetry_residual(&eff)?, 1e-7);

    let sched = lockin_schedule(system, &lockin, &LockinOptions::default())?;
    let out = evolve_pure(&x_polarized(system), &sched)?;
    report.below(SUITE_SPECTRUM, "lock-in exact evolution norm drift", (out.norm() - 1.0).abs(), 1e-9);
    Ok(())
}

fn lindblad_conservation(report: &mut VerifyReport, system: SpinSystem) -> Result<()> {
    let p = RamseyParams::reference(1.0, 0.02)?;
    let channel = LindbladChannel::collective_dephasing(system, 0.05)?;
    let rho = x_polarized(system).to_density();
    let (mut trace, mut herm, mut min_eig) = (0.0f64, 0.0f64, f64::INFINITY);
    for d in [-1.5, 0.0, 0.4, 2.0] {
        let sched = crate::sequences::ramsey_schedule(system, &p.with_delta(d), std::slice::from_ref(&channel))?;
        let (_, diag) = evolve_density_with_diagnostics(&rho, &sched)?;
        trace = trace.max(diag.max_trace_drift);
        herm = herm.max(diag.max_hermitian_drift);
        min_eig = min_eig.min(diag.min_eigenvalue);
    }
    report.below(SUITE_LINDBLAD, "trace drift", trace, 1e-8);
    report.below(SUITE_LINDBLAD, "Hermiticity drift", herm, 1e-8);
    report.above(SUITE_LINDBLAD, "minimum eigenvalue", min_eig, -1e-7);
    let sample = dicke_state(system, system.j() - 1.0)?.to_density();
    let mixed = (x_polarized(system).to_density().matrix() + sample.matrix()) * C64::from(0.5);
    report.below(SUITE_LINDBLAD, "collective dephasing dissipator symmetry", dissipator_symmetry_residual(&[channel], &mixed), 1e-10);
    Ok(())
}

fn fourier_identities(report: &mut VerifyReport) -> Result<()> {
    let fc = fourier_coefficients(0.2, 1.0, 200)?;
    let identity = (1..=fc.k_max()).map(|k| (fc.b_k(k) - k as f64 * 0.2 * fc.a_k(k)).abs()).fold(0.0, f64::max);
    report.below(SUITE_FOURIER, "b_k = k T_pulse a_k / tau_r", identity, 1e-12);
    report.below(SUITE_FOURIER, "a_1 series vs closed form", (fc.a_k(1) - fc.a_1).abs(), 1e-12);
    let narrow = fourier_coefficients(1e-9, 1.0, 1)?;
    report.below(SUITE_FOURIER, "zero-width a_1 -> 4/pi", (narrow.a_1 - 4.0 / std::f64::consts::PI).abs(), 1e-6);
    report.below(SUITE_FOURIER, "zero-width b_1 -> 0", narrow.b_1.abs(), 1e-6);
    Ok(())
}
