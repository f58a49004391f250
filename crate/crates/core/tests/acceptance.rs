//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use spdmbi_core::evolution::{evolve_density_with_diagnostics, expectation, Drive, DriveSignal, LindbladChannel};
use spdmbi_core::evolution::{evolve_density, Schedule, Segment, State};
use spdmbi_core::hamiltonians::{Axis, EffectiveVariant, LockinParams, PulseShape, RamseyParams};
use spdmbi_core::lineshapes::fourier_coefficients;
use spdmbi_core::noise::NoiseModel;
use spdmbi_core::operators::{collective_operators, exchange_operator, Operator};
use spdmbi_core::sequences::{ramsey_schedule, LockinOptions};
use spdmbi_core::spectrum::{
    antisymmetry_residual, locate_peak, ramsey_point, sweep_lockin, sweep_ramsey, symmetric_grid, Engine, Spectrum,
    SweepOptions,
};
use spdmbi_core::states::{dicke_state, x_polarized};
use spdmbi_core::{CollectiveSpin, SpinSystem};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed < limit
}

fn system(n: u32) -> SpinSystem {
    SpinSystem::new(n).expect("valid particle number")
}

fn sweep(threads: usize) -> SweepOptions {
    SweepOptions { threads: Some(threads), ..SweepOptions::default() }
}

fn operator_algebra() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for n in [1, 2, 5, 20] {
        let sys = system(n);
        let (jx, jy, jz) = collective_operators(sys);
        let i_jz = jz.scaled_complex(num_complex::Complex64::i());
        worst = worst.max(jx.commutator(&jy).max_abs_diff(&i_jz));
        let j = sys.j();
        let casimir = &(&(&jx * &jx) + &(&jy * &jy)) + &(&jz * &jz);
        worst = worst.max(casimir.max_abs_diff(&Operator::identity(sys).scaled(j * (j + 1.0))));
        let u = exchange_operator(sys);
        worst = worst.max(jx.conjugated_by(&u).max_abs_diff(&jx));
        worst = worst.max(jy.conjugated_by(&u).max_abs_diff(&(-&jy)));
        worst = worst.max(jz.conjugated_by(&u).max_abs_diff(&(-&jz)));
        worst = worst.max(u.unitarity_defect());
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-10 && within(elapsed, Duration::from_secs(1)),
        format!("max deviation {worst:.2e} for N in {{1,2,5,20}}, {elapsed:.2?}"),
    )
}

fn single_spin_ramsey() -> Outcome {
    let start = Instant::now();
    let sys = system(1);
    let omega = 1.0;
    let mut p = RamseyParams::reference(omega, 0.3).expect("valid");
    p.ideal_pulses = true;
    let input = State::Pure(dicke_state(sys, -0.5).expect("spin down"));
    let mut worst: f64 = 0.0;
    for delta in symmetric_grid(2.0 * omega, 21).expect("grid") {
        let y = ramsey_point(sys, &p.with_delta(delta), &input, &[]).expect("evolves");
        worst = worst.max((y - 0.5 * (delta * p.t_free).cos()).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-8 && within(elapsed, Duration::from_secs(1)),
        format!("max |<Jz> - cos(delta T_f)/2| = {worst:.2e} over 21 detunings, {elapsed:.2?}"),
    )
}

const CHIS: [f64; 3] = [0.0, 0.01, 0.02];

fn ramsey_symmetric_branch() -> Outcome {
    let start = Instant::now();
    let sys = system(20);
    let omega = 1.0;
    let grid = symmetric_grid(2.0 * omega, 201).expect("grid");
    let input = State::Pure(x_polarized(sys));
    let mut lines = Vec::new();
    let mut passed = true;
    for chi in CHIS {
        let p = RamseyParams::reference(omega, chi * omega).expect("valid");
        let s = sweep_ramsey(sys, &p, &grid, &input, &[], &SweepOptions::default()).expect("sweep");
        let r = antisymmetry_residual(&s).expect("symmetric grid");
        let s0 = s.value_at(0.0).expect("resonance sample").abs();
        passed &= r < 1e-7 && s0 < 1e-10;
        lines.push(format!("chi={chi}: residual {r:.1e}, |S(0)| {s0:.1e}"));
        for scale in [0.9, 1.1] {
            let q = RamseyParams { pulse_scale: scale, ..p.clone() };
            let s = sweep_ramsey(sys, &q, &grid, &input, &[], &SweepOptions::default()).expect("sweep");
            let r = antisymmetry_residual(&s).expect("symmetric grid");
            passed &= r < 1e-6;
            lines.push(format!("chi={chi} scale={scale}: {r:.1e}"));
        }
        let dephasing = LindbladChannel::collective_dephasing(sys, 0.05 * omega).expect("rate");
        let s = sweep_ramsey(sys, &p, &grid, &input, &[dephasing], &SweepOptions::default()).expect("sweep");
        let r = antisymmetry_residual(&s).expect("symmetric grid");
        passed &= r < 1e-6;
        lines.push(format!("chi={chi} gamma=0.05: {r:.1e}"));
    }
    let elapsed = start.elapsed();
    passed &= within(elapsed, Duration::from_secs(60));
    outcome(passed, format!("{}; {elapsed:.2?}", lines.join("; ")))
}

fn ramsey_asymmetric_branch() -> Outcome {
    let start = Instant::now();
    let sys = system(20);
    let omega = 1.0;
    let grid = symmetric_grid(2.0 * omega, 201).expect("grid");
    let spacing = grid[1] - grid[0];
    let input = State::Pure(dicke_state(sys, sys.j()).expect("top state"));
    let shifts: Vec<f64> = CHIS
        .iter()
        .map(|&chi| {
            let p = RamseyParams::reference(omega, chi * omega).expect("valid");
            let s = sweep_ramsey(sys, &p, &grid, &input, &[], &SweepOptions::default()).expect("sweep");
            locate_peak(&s).expect("peak")
        })
        .collect();
    let elapsed = start.elapsed();
    let ordered = shifts[0].abs() < shifts[1].abs() && shifts[1].abs() < shifts[2].abs();
    outcome(
        shifts[0].abs() < spacing && ordered && within(elapsed, Duration::from_secs(60)),
        format!("peak shifts {:.3e}, {:.3e}, {:.3e} (grid step {spacing:.2e}), {elapsed:.2?}", shifts[0], shifts[1], shifts[2]),
    )
}

/// The four exact lock-in sweeps, labelled.
fn lockin_runs(threads: usize) -> Vec<(&'static str, Spectrum)> {
    let sys = system(20);
    let input = State::Pure(x_polarized(sys));
    let runs = [
        ("pdd_x chi=0.2pi", LockinParams::reference(Axis::X, 0.0, 99, 0.2 * PI)),
        ("cp_x chi=0.2pi", LockinParams::reference(Axis::X, 0.5, 100, 0.2 * PI)),
        ("cp_y chi=0.2pi", LockinParams::reference(Axis::Y, 0.5, 100, 0.2 * PI)),
        ("cp_y chi=0", LockinParams::reference(Axis::Y, 0.5, 100, 0.0)),
    ];
    runs.into_iter()
        .map(|(label, p)| {
            let grid = symmetric_grid(0.04 * p.tau_s(), 201).expect("grid");
            let s = sweep_lockin(sys, &p, &grid, &input, Engine::Exact, &LockinOptions::default(), &sweep(threads))
                .expect("lock-in sweep");
            (label, s)
        })
        .collect()
}

fn lockin_exact(runs: &[(&'static str, Spectrum)], elapsed: Duration) -> Outcome {
    let residual = |label: &str| {
        let (_, s) = runs.iter().find(|(l, _)| *l == label).expect("run present");
        antisymmetry_residual(s).expect("symmetric grid")
    };
    let eps_ref = residual("cp_y chi=0.2pi");
    let cp_x = residual("cp_x chi=0.2pi");
    let (_, cp_y) = runs.iter().find(|(l, _)| *l == "cp_y chi=0.2pi").expect("run present");
    let s0 = cp_y.value_at(0.0).expect("resonance sample").abs();
    let listing: Vec<String> = runs
        .iter()
        .map(|(l, s)| format!("{l}: residual {:.2e}", antisymmetry_residual(s).unwrap_or(f64::NAN)))
        .collect();
    let separated = cp_x > 10.0 * eps_ref;
    let zero = s0 < 1e-7;
    outcome(
        separated && zero,
        format!(
            "{}; cp_x/eps_ref = {:.1} (need > 10: {}); cp_y |S(0)| = {s0:.2e} (need < 1e-7: {}); {elapsed:.1?}",
            listing.join("; "),
            cp_x / eps_ref,
            if separated { "ok" } else { "FAIL" },
            if zero { "ok" } else { "FAIL" },
        ),
    )
}

fn effective_vs_exact() -> Outcome {
    let start = Instant::now();
    let sys = system(20);
    let input = State::Pure(x_polarized(sys));
    let mut p = LockinParams::reference(Axis::Y, 0.5, 100, 0.0);
    p.pulses = PulseShape::Ideal;
    let grid = symmetric_grid(0.01 * p.tau_s(), 41).expect("grid");
    let options = LockinOptions::default();
    let exact = sweep_lockin(sys, &p, &grid, &input, Engine::Exact, &options, &SweepOptions::default()).expect("exact");
    let effective = sweep_lockin(
        sys,
        &p,
        &grid,
        &input,
        Engine::Effective(EffectiveVariant::CpIdeal),
        &options,
        &SweepOptions::default(),
    )
    .expect("effective");
    let scale = exact.ys().iter().fold(0.0f64, |m, y| m.max(y.abs()));
    let diff = exact.ys().iter().zip(effective.ys()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let relative = diff / scale;
    let elapsed = start.elapsed();
    outcome(
        relative < 0.05 && within(elapsed, Duration::from_secs(60)),
        format!("max |exact - effective| / max |exact| = {:.2}% over |delta_tau| <= 0.01 tau_s, {elapsed:.2?}", 100.0 * relative),
    )
}

fn fourier_checks() -> Outcome {
    let (t_pulse, tau_r) = (0.2, 1.0);
    let fc = fourier_coefficients(t_pulse, tau_r, 200).expect("coefficients");
    let identity = (1..=fc.k_max())
        .map(|k| (fc.b_k(k) - k as f64 * t_pulse * fc.a_k(k) / tau_r).abs())
        .fold(0.0f64, f64::max);
    let first = (fc.a_k(1) - fc.a_1).abs().max((fc.b_k(1) - fc.b_1).abs());
    let narrow = fourier_coefficients(1e-9, tau_r, 1).expect("coefficients");
    let limits = (narrow.a_1 - 4.0 / PI).abs().max(narrow.b_1.abs());
    // Zero-width limit: a_s = Σ a_k² → 2, the mean square of a unit square wave being a_s/2 = 1.
    let ideal = fourier_coefficients(1e-9, tau_r, 20_000).expect("coefficients");
    let parseval = (ideal.a_s / 2.0 - 1.0).abs();
    // Finite pulses: mean of cos²α is 1 - T_Ω/(2τ_r) (linear ramps of area π).
    let finite = fourier_coefficients(t_pulse, tau_r, 20_000).expect("coefficients");
    let parseval_finite = (finite.a_s / 2.0 - (1.0 - t_pulse / (2.0 * tau_r))).abs();
    let passed = identity <= 1e-12 && first <= 1e-12 && limits <= 1e-6 && parseval < 1e-4 && parseval_finite < 1e-4;
    outcome(
        passed,
        format!(
            "b_k identity {identity:.1e}; a_1/b_1 series vs closed form {first:.1e}; zero-width limits {limits:.1e}; \
             Parseval {parseval:.1e} (ideal), {parseval_finite:.1e} (T_pulse = 0.2 tau_r)"
        ),
    )
}

fn lindblad_conservation() -> Outcome {
    let sys = system(20);
    let omega = 1.0;
    let p = RamseyParams::reference(omega, 0.02 * omega).expect("valid");
    let dephasing = LindbladChannel::collective_dephasing(sys, 0.05 * omega).expect("rate");
    let rho = x_polarized(sys).to_density();
    let (mut trace, mut herm, mut min_eig) = (0.0f64, 0.0f64, f64::INFINITY);
    for delta in symmetric_grid(2.0 * omega, 201).expect("grid") {
        let schedule = ramsey_schedule(sys, &p.with_delta(delta), std::slice::from_ref(&dephasing)).expect("schedule");
        let (_, d) = evolve_density_with_diagnostics(&rho, &schedule).expect("evolves");
        trace = trace.max(d.max_trace_drift);
        herm = herm.max(d.max_hermitian_drift);
        min_eig = min_eig.min(d.min_eigenvalue);
    }

    // Order check on a smooth driven Lindblad schedule with a deliberately coarse step.
    let small = system(4);
    let s = CollectiveSpin::new(small);
    let base = &(&s.jz * &s.jz).scaled(0.3) + &s.jx.scaled(2.0);
    let signal = DriveSignal { amplitude: 1.5, omega: 3.0, noise: NoiseModel::none() };
    let channel = LindbladChannel::collective_dephasing(small, 0.2).expect("rate");
    let final_jz = |step: f64| {
        let drive = Drive::new(base.clone(), s.jz.clone(), signal.clone()).expect("drive");
        let schedule = Schedule::new(small)
            .with(Segment::driven("drive", drive, 2.0, step).with_channels(vec![channel.clone()]))
            .expect("schedule");
        let out = evolve_density(&dicke_state(small, 2.0).expect("state").to_density(), &schedule).expect("evolves");
        expectation(&out, &s.jz).expect("observable")
    };
    let (y1, y2, y3) = (final_jz(0.1), final_jz(0.05), final_jz(0.025));
    let factor = (y1 - y2).abs() / (y2 - y3).abs();

    let passed = trace < 1e-8 && herm < 1e-8 && min_eig > -1e-7 && factor >= 8.0;
    outcome(
        passed,
        format!(
            "trace drift {trace:.1e}, Hermiticity drift {herm:.1e}, min eigenvalue {min_eig:.1e}; \
             RK4 step-halving error ratio {factor:.1}"
        ),
    )
}

fn determinism(first: &[(&'static str, Spectrum)], second: &[(&'static str, Spectrum)]) -> Outcome {
    let identical = first.len() == second.len()
        && first.iter().zip(second).all(|((la, a), (lb, b))| la == lb && a.csv_body() == b.csv_body());
    outcome(identical, format!("{} spectra compared byte for byte across 1 and 3 worker threads", first.len()))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, o: Outcome| {
        println!("criterion {n}: {} | {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        if !o.passed {
            failed += 1;
        }
    };
    report(1, operator_algebra());
    report(2, single_spin_ramsey());
    report(3, ramsey_symmetric_branch());
    report(4, ramsey_asymmetric_branch());
    let start = Instant::now();
    let runs = lockin_runs(1);
    report(5, lockin_exact(&runs, start.elapsed()));
    report(6, effective_vs_exact());
    report(7, fourier_checks());
    report(8, lindblad_conservation());
    let rerun = lockin_runs(3);
    report(9, determinism(&runs, &rerun));
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
