//! Ramsey and lock-in parameter sets compiled into [`Schedule`]s.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::evolution::{Drive, DriveSignal, LindbladChannel, Schedule, Segment};
use crate::hamiltonians::{ramsey_hamiltonian_with, LockinParams, PulseShape, RamseyParams, RamseySegment};
use crate::noise::NoiseModel;
use crate::operators::{CollectiveSpin, Operator, SpinSystem};

/// Integrator steps per pulse length.
pub const STEPS_PER_PULSE: f64 = 200.0;

/// π/2 – free – π/2, with `channels` attached to every segment.
pub fn ramsey_schedule(system: SpinSystem, p: &RamseyParams, channels: &[LindbladChannel]) -> Result<Schedule> {
    p.validate()?;
    let s = CollectiveSpin::new(system);
    let step = p.t_pulse / STEPS_PER_PULSE;
    let pulse = ramsey_hamiltonian_with(&s, p, RamseySegment::Pulse);
    let free = ramsey_hamiltonian_with(&s, p, RamseySegment::Free);
    let make_pulse = |label: &str| -> Result<Segment> {
        if p.ideal_pulses {
            Segment::kick(label, s.jx.clone(), 0.5 * PI * p.pulse_scale)
        } else {
            Ok(Segment::fixed(label, pulse.clone(), p.pulse_duration()).with_step(step))
        }
    };
    let meta = json!({ "chi": p.chi, "delta": p.delta, "omega": p.omega });
    let mut schedule = Schedule::new(system);
    schedule.push(make_pulse("pulse_1")?.with_channels(channels.to_vec()).with_meta(meta.clone()))?;
    schedule.push(
        Segment::fixed("free", free, p.t_free)
            .with_step(step)
            .with_channels(channels.to_vec())
            .with_meta(meta.clone()),
    )?;
    schedule.push(make_pulse("pulse_2")?.with_channels(channels.to_vec()).with_meta(meta))?;
    Ok(schedule)
}

/// Final rotation before measuring `Jz`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Readout {
    /// Exact `exp(-i(π/2)Jx)`.
    #[default]
    Ideal,
    /// `ΩJx` for `π/(2Ω)` with the twisting and signal still on.
    Finite { omega: f64 },
    /// No readout rotation (measures `Jz` of the evolved state directly).
    None,
}

#[derive(Clone, Debug, Default)]
pub struct LockinOptions {
    pub readout: Readout,
    /// Integrator step; defaults to `min(T_Ω, τs)/200`.
    pub step: Option<f64>,
    pub channels: Vec<LindbladChannel>,
}

impl LockinOptions {
    pub fn default_step(p: &LockinParams) -> f64 {
        let fastest = match p.pulses {
            PulseShape::Finite => p.t_pulse.min(p.tau_s()),
            PulseShape::Ideal => p.tau_s(),
        };
        fastest / STEPS_PER_PULSE
    }
}

/// Pulse train on `[0, schedule_end]` followed by the readout rotation.
///
/// Free stretches between pulses are driven by the commuting pair
/// `χJz² + M(t)Jz` and integrated exactly; pulse windows add `π/T_Ω · J_axis`.
pub fn lockin_schedule(system: SpinSystem, p: &LockinParams, options: &LockinOptions) -> Result<Schedule> {
    p.validate()?;
    let step = options.step.unwrap_or_else(|| LockinOptions::default_step(p));
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter(format!("integrator step {step} must be > 0")));
    }
    let s = CollectiveSpin::new(system);
    let twist = (&s.jz * &s.jz).scaled(p.chi);
    let signal = DriveSignal {
        amplitude: p.gamma_g * p.b_ac,
        omega: p.omega_s,
        noise: p.noise.clone().or_interval(step),
    };
    let axis = p.axis.operator(&s);
    let channels = &options.channels;

    let mut schedule = Schedule::new(system);
    let mut cursor = 0.0;
    let free_until = |schedule: &mut Schedule, from: f64, to: f64| -> Result<()> {
        if to > from {
            let drive = Drive::new(twist.clone(), s.jz.clone(), signal.clone())?;
            schedule.push(Segment::driven("free", drive, to - from, step).with_channels(channels.clone()))?;
        }
        Ok(())
    };
    for l in 1..=p.pulse_count {
        let center = p.pulse_center(l);
        match p.pulses {
            PulseShape::Finite => {
                let start = center - 0.5 * p.t_pulse;
                if start < cursor - 1e-12 * p.tau_r {
                    return Err(Error::InvalidParameter(format!("pulse {l} overlaps its predecessor")));
                }
                free_until(&mut schedule, cursor, start)?;
                let base = &twist + &axis.scaled(p.pulse_amplitude());
                let drive = Drive::new(base, s.jz.clone(), signal.clone())?;
                schedule.push(
                    Segment::driven(format!("pi_{l}"), drive, p.t_pulse, step)
                        .with_channels(channels.clone())
                        .with_meta(json!({ "center": center, "amplitude": p.pulse_amplitude() })),
                )?;
                cursor = schedule.total_duration();
            }
            PulseShape::Ideal => {
                free_until(&mut schedule, cursor, center)?;
                cursor = schedule.total_duration().max(center);
                schedule.push(
                    Segment::kick(format!("pi_{l}"), axis.clone(), PI)?
                        .with_channels(channels.clone())
                        .with_meta(json!({ "center": center })),
                )?;
            }
        }
    }
    free_until(&mut schedule, cursor, p.schedule_end())?;
    match options.readout {
        Readout::Ideal => schedule.push(Segment::kick("readout", s.jx.clone(), 0.5 * PI)?)?,
        Readout::Finite { omega } => {
            if !(omega > 0.0 && omega.is_finite()) {
                return Err(Error::InvalidParameter(format!("readout Rabi frequency {omega} must be > 0")));
            }
            let base = &twist + &s.jx.scaled(omega);
            let drive = Drive::new(base, s.jz.clone(), signal.clone())?;
            let duration = 0.5 * PI / omega;
            let readout_step = step.min(duration / STEPS_PER_PULSE);
            schedule.push(
                Segment::driven("readout", drive, duration, readout_step)
                    .with_channels(channels.clone())
                    .with_meta(json!({ "omega": omega })),
            )?;
        }
        Readout::None => {}
    }
    Ok(schedule)
}

/// Accumulated rotation `α(t) = ∫₀ᵗ Ω_π`. Defined on `[0, schedule_end]`;
/// `α(schedule_end) = Lπ`.
pub fn alpha_profile(p: &LockinParams, t: f64) -> Result<f64> {
    let end = p.schedule_end();
    if !(0.0..=end).contains(&t) {
        return Err(Error::InvalidParameter(format!("t = {t} outside [0, {end}]")));
    }
    let total = (1..=p.pulse_count)
        .map(|l| {
            let center = p.pulse_center(l);
            match p.pulses {
                PulseShape::Finite => {
                    let start = center - 0.5 * p.t_pulse;
                    let covered = (t - start).clamp(0.0, p.t_pulse);
                    if covered == p.t_pulse {
                        PI
                    } else {
                        p.pulse_amplitude() * covered
                    }
                }
                PulseShape::Ideal => {
                    if t >= center {
                        PI
                    } else {
                        0.0
                    }
                }
            }
        })
        .sum();
    Ok(total)
}

/// Lab-frame Hamiltonian of the compiled schedule at time `t`, used to
/// cross-check the compiler against [`crate::hamiltonians::lockin_lab_hamiltonian`].
pub fn schedule_hamiltonian(schedule: &Schedule, t: f64) -> Option<Operator> {
    schedule
        .segments()
        .iter()
        .find(|s| s.duration() > 0.0 && t >= s.start() && t < s.end())
        .map(|s| s.hamiltonian_at(t))
}

/// Noise model with the grid filled in the way [`lockin_schedule`] does.
pub fn effective_noise(p: &LockinParams, options: &LockinOptions) -> NoiseModel {
    p.noise.clone().or_interval(options.step.unwrap_or_else(|| LockinOptions::default_step(p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{evolve_pure, expectation, Generator};
    use crate::hamiltonians::{lockin_lab_hamiltonian, Axis};
    use crate::states::dicke_state;

    fn sys(n: u32) -> SpinSystem {
        SpinSystem::new(n).unwrap()
    }

    #[test]
    fn ramsey_durations() {
        let p = RamseyParams::new(0.0, 0.0, 1.0, 2.0 * PI).unwrap();
        let sched = ramsey_schedule(sys(3), &p, &[]).unwrap();
        let d: Vec<f64> = sched.segments().iter().map(|s| s.duration()).collect();
        assert_eq!(d, vec![PI / 2.0, 2.0 * PI, PI / 2.0]);
        let scaled = RamseyParams { pulse_scale: 1.1, ..p };
        let sched = ramsey_schedule(sys(3), &scaled, &[]).unwrap();
        assert!((sched.segments()[0].duration() - 1.1 * PI / 2.0).abs() < 1e-15);
        assert!((sched.total_duration() - (2.0 * PI + 1.1 * PI)).abs() < 1e-12);
    }

    #[test]
    fn ramsey_channels_on_every_segment() {
        let system = sys(2);
        let p = RamseyParams::reference(1.0, 0.0).unwrap();
        let ch = LindbladChannel::collective_dephasing(system, 0.05).unwrap();
        let sched = ramsey_schedule(system, &p, &[ch]).unwrap();
        assert!(sched.segments().iter().all(|s| s.channels().len() == 1));
    }

    #[test]
    fn pulse_centres() {
        let pdd = LockinParams::reference(Axis::X, 0.0, 99, 0.0);
        let sched = lockin_schedule(sys(2), &pdd, &LockinOptions::default()).unwrap();
        let pulses: Vec<_> = sched.segments().iter().filter(|s| s.label().starts_with("pi_")).collect();
        assert_eq!(pulses.len(), 99);
        for (i, seg) in pulses.iter().enumerate() {
            let mid = 0.5 * (seg.start() + seg.end());
            assert!((mid - (i + 1) as f64 * pdd.tau_r).abs() < 1e-12 * pdd.tau_r * 100.0);
        }
        let cp = LockinParams::reference(Axis::Y, 0.5, 100, 0.0);
        let sched = lockin_schedule(sys(2), &cp, &LockinOptions::default()).unwrap();
        let first = sched.segments().iter().find(|s| s.label() == "pi_1").unwrap();
        assert!((0.5 * (first.start() + first.end()) - 0.5 * cp.tau_r).abs() < 1e-15);
        assert!((sched.total_duration() - 100.0 * cp.tau_r).abs() < 1e-12 * cp.tau_r);
    }

    #[test]
    fn pulse_area_is_pi() {
        let p = LockinParams::reference(Axis::X, 0.5, 4, 0.0);
        assert!((p.pulse_amplitude() * p.t_pulse - PI).abs() < 1e-12);
    }

    #[test]
    fn alpha_values() {
        let cp = LockinParams::reference(Axis::Y, 0.5, 100, 0.0);
        assert_eq!(alpha_profile(&cp, 0.1 * cp.tau_r).unwrap(), 0.0);
        assert!((alpha_profile(&cp, 0.5 * cp.tau_r).unwrap() - PI / 2.0).abs() < 1e-12);
        assert!((alpha_profile(&cp, 100.0 * cp.tau_r).unwrap() - 100.0 * PI).abs() < 1e-9);
        let pdd = LockinParams::reference(Axis::X, 0.0, 99, 0.0);
        assert!((alpha_profile(&pdd, pdd.schedule_end()).unwrap() - 99.0 * PI).abs() < 1e-9);
        assert!(alpha_profile(&cp, -1.0).is_err());
    }

    #[test]
    fn overlap_and_negative_start_rejected() {
        let mut p = LockinParams::reference(Axis::X, 0.5, 3, 0.0);
        p.t_pulse = 1.5 * p.tau_r;
        assert!(lockin_schedule(sys(1), &p, &LockinOptions::default()).is_err());
        let mut p = LockinParams::reference(Axis::X, 0.5, 3, 0.0);
        p.t_pulse = 0.0;
        assert!(lockin_schedule(sys(1), &p, &LockinOptions::default()).is_err());
    }

    #[test]
    fn compiled_hamiltonian_matches_lab_frame() {
        let system = sys(4);
        let p = LockinParams::reference(Axis::Y, 0.5, 6, 0.3);
        let sched = lockin_schedule(system, &p, &LockinOptions::default()).unwrap();
        for i in 0..400 {
            let t = p.schedule_end() * (i as f64 + 0.37) / 400.0;
            let compiled = schedule_hamiltonian(&sched, t).unwrap();
            let lab = lockin_lab_hamiltonian(system, &p, t).unwrap();
            assert!(compiled.max_abs_diff(&lab) < 1e-9, "t = {t}");
        }
    }

    #[test]
    fn free_segments_are_commuting() {
        let p = LockinParams::reference(Axis::X, 0.5, 3, 0.2);
        let sched = lockin_schedule(sys(3), &p, &LockinOptions::default()).unwrap();
        for seg in sched.segments().iter().filter(|s| s.label() == "free") {
            match seg.generator() {
                Generator::Driven(d) => assert!(d.is_commuting()),
                other => panic!("unexpected generator {other:?}"),
            }
        }
    }

    #[test]
    fn square_wave_without_signal() {
        // With no signal or twisting, ⟨Jz⟩ from |J,J⟩ follows J cos α(t).
        let system = sys(6);
        let mut p = LockinParams::reference(Axis::X, 0.5, 4, 0.0);
        p.b_ac = 0.0;
        let options = LockinOptions { readout: Readout::None, ..Default::default() };
        let sched = lockin_schedule(system, &p, &options).unwrap();
        let psi = dicke_state(system, 3.0).unwrap();
        let jz = CollectiveSpin::new(system).jz;
        for i in 1..=40 {
            let t = p.schedule_end() * i as f64 / 40.0;
            let out = evolve_pure(&psi, &sched.until(t)).unwrap();
            let expected = 3.0 * alpha_profile(&p, t).unwrap().cos();
            assert!((expectation(&out, &jz).unwrap() - expected).abs() < 1e-8, "t = {t}");
        }
    }
}
