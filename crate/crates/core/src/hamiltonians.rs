//! Interaction-picture Hamiltonians, parameter sets and the exchange-symmetry
//! residual `max |U_ex† H(δ,t) U_ex - H(-δ,t)|`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lineshapes::{
    cp_lineshape, fourier_coefficients, pdd_lineshape, sinc2_lineshape, sinc_lineshape,
    FourierCoefficients, DEFAULT_K_MAX,
};
use crate::noise::NoiseModel;
use crate::operators::{exchange_operator, CollectiveSpin, Operator, SpinSystem};

/// Parity of a coefficient function under `δ → -δ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
    None,
}

/// The nine terms of the general quadratic collective-spin Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    /// `Jx`
    F1,
    /// `Jy`
    F2,
    /// `Jz`
    F3,
    /// `(JyJz + JzJy)/2`
    E1,
    /// `(JzJx + JxJz)/2`
    E2,
    /// `(JxJy + JyJx)/2`
    E3,
    /// `Jx²`
    G1,
    /// `Jy²`
    G2,
    /// `Jz²`
    G3,
}

impl Term {
    pub const ALL: [Term; 9] =
        [Term::F1, Term::F2, Term::F3, Term::E1, Term::E2, Term::E3, Term::G1, Term::G2, Term::G3];

    /// Parity in `δ` a coefficient must have for the Hamiltonian to be
    /// exchange symmetric. Follows from `U_ex` fixing `Jx` and negating
    /// `Jy`, `Jz`.
    pub fn required_parity(self) -> Parity {
        match self {
            Term::F1 | Term::E1 | Term::G1 | Term::G2 | Term::G3 => Parity::Even,
            Term::F2 | Term::F3 | Term::E2 | Term::E3 => Parity::Odd,
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    fn operator(self, s: &CollectiveSpin) -> Operator {
        match self {
            Term::F1 => s.jx.clone(),
            Term::F2 => s.jy.clone(),
            Term::F3 => s.jz.clone(),
            Term::E1 => s.jy.symmetrized_product(&s.jz),
            Term::E2 => s.jz.symmetrized_product(&s.jx),
            Term::E3 => s.jx.symmetrized_product(&s.jy),
            Term::G1 => &s.jx * &s.jx,
            Term::G2 => &s.jy * &s.jy,
            Term::G3 => &s.jz * &s.jz,
        }
    }
}

type CoefficientFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A coefficient `x(δ, t)` with its declared parity in `δ`.
#[derive(Clone)]
pub struct Coefficient {
    pub parity: Parity,
    func: CoefficientFn,
}

impl Coefficient {
    pub fn new(parity: Parity, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { parity, func: Arc::new(f) }
    }

    pub fn eval(&self, delta: f64, t: f64) -> f64 {
        (self.func)(delta, t)
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coefficient").field("parity", &self.parity).finish_non_exhaustive()
    }
}

/// Coefficient table for the general Hamiltonian; unset terms are zero.
#[derive(Clone, Debug, Default)]
pub struct GeneralCoefficients {
    terms: [Option<Coefficient>; 9],
}

impl GeneralCoefficients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(
        mut self,
        term: Term,
        parity: Parity,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.terms[term.index()] = Some(Coefficient::new(parity, f));
        self
    }

    pub fn get(&self, term: Term) -> Option<&Coefficient> {
        self.terms[term.index()].as_ref()
    }

    pub fn eval(&self, term: Term, delta: f64, t: f64) -> f64 {
        self.get(term).map_or(0.0, |c| c.eval(delta, t))
    }

    /// True if every set term declares the parity the exchange symmetry requires.
    pub fn declares_exchange_parity(&self) -> bool {
        Term::ALL
            .iter()
            .all(|&t| self.get(t).is_none_or(|c| c.parity == t.required_parity()))
    }

    /// Spot-checks declared parities on the given `(δ, t)` samples and
    /// returns the terms whose values contradict their declaration.
    pub fn parity_violations(&self, samples: &[(f64, f64)], tol: f64) -> Vec<Term> {
        Term::ALL
            .iter()
            .copied()
            .filter(|&term| {
                let Some(c) = self.get(term) else { return false };
                let sign = match c.parity {
                    Parity::Even => 1.0,
                    Parity::Odd => -1.0,
                    Parity::None => return false,
                };
                samples
                    .iter()
                    .any(|&(d, t)| (c.eval(d, t) - sign * c.eval(-d, t)).abs() > tol)
            })
            .collect()
    }
}

/// `f1 Jx + f2 Jy + f3 Jz + e1 {Jy,Jz}/2 + e2 {Jz,Jx}/2 + e3 {Jx,Jy}/2
///  + g1 Jx² + g2 Jy² + g3 Jz²` evaluated at `(δ, t)`.
pub fn general_hamiltonian(
    system: SpinSystem,
    coeffs: &GeneralCoefficients,
    delta: f64,
    t: f64,
) -> Operator {
    let spin = CollectiveSpin::new(system);
    Term::ALL.iter().fold(Operator::zeros(system), |acc, &term| match coeffs.get(term) {
        Some(c) => &acc + &term.operator(&spin).scaled(c.eval(delta, t)),
        None => acc,
    })
}

/// `max |U_ex† H(δ,t) U_ex - H(-δ,t)|`. Zero (up to round-off) certifies the
/// exchange symmetry that protects antisymmetric spectra.
pub fn symmetry_residual(
    builder: impl Fn(f64, f64) -> Operator,
    system: SpinSystem,
    delta: f64,
    t: f64,
) -> f64 {
    let u = exchange_operator(system);
    builder(delta, t).conjugated_by(&u).max_abs_diff(&builder(-delta, t))
}

/// Ramsey sequence parameters. All frequencies in rad per unit time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RamseyParams {
    /// One-axis-twisting strength χ.
    pub chi: f64,
    /// Detuning δ = ωs - ωr.
    pub delta: f64,
    /// Rabi frequency Ω during pulses.
    pub omega: f64,
    /// Free evolution time T_f.
    pub t_free: f64,
    /// Nominal π/2 pulse length T_Ω = π/(2Ω).
    pub t_pulse: f64,
    /// Multiplies the pulse duration to model timing errors.
    pub pulse_scale: f64,
    /// Replace the finite pulses with instantaneous rotations `exp(-i(π/2)·scale·Jx)`.
    #[serde(default)]
    pub ideal_pulses: bool,
}

impl RamseyParams {
    pub fn new(chi: f64, delta: f64, omega: f64, t_free: f64) -> Result<Self> {
        let p = Self {
            chi,
            delta,
            omega,
            t_free,
            t_pulse: PI / (2.0 * omega),
            pulse_scale: 1.0,
            ideal_pulses: false,
        };
        p.validate()?;
        Ok(p)
    }

    /// Default figure setup: `T_f = 2π/Ω`, `T_R = 2T_Ω = π/Ω`.
    pub fn reference(omega: f64, chi: f64) -> Result<Self> {
        Self::new(chi, 0.0, omega, 2.0 * PI / omega)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return bad("omega must be > 0");
        }
        if !(self.t_free >= 0.0 && self.t_free.is_finite()) {
            return bad("t_free must be >= 0");
        }
        if !(self.t_pulse > 0.0 && self.t_pulse.is_finite()) {
            return bad("t_pulse must be > 0");
        }
        if !(self.pulse_scale > 0.0 && self.pulse_scale.is_finite()) {
            return bad("pulse_scale must be > 0");
        }
        if !self.chi.is_finite() || !self.delta.is_finite() {
            return bad("chi and delta must be finite");
        }
        Ok(())
    }

    /// Actual pulse duration `pulse_scale · T_Ω`.
    pub fn pulse_duration(&self) -> f64 {
        self.pulse_scale * self.t_pulse
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self { delta, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RamseySegment {
    Pulse,
    Free,
}

/// `χJz² + δJz + ΩJx` (pulse) or `χJz² + δJz` (free).
pub fn ramsey_hamiltonian(system: SpinSystem, p: &RamseyParams, segment: RamseySegment) -> Operator {
    let s = CollectiveSpin::new(system);
    ramsey_hamiltonian_with(&s, p, segment)
}

pub(crate) fn ramsey_hamiltonian_with(s: &CollectiveSpin, p: &RamseyParams, segment: RamseySegment) -> Operator {
    let free = &(&s.jz * &s.jz).scaled(p.chi) + &s.jz.scaled(p.delta);
    match segment {
        RamseySegment::Free => free,
        RamseySegment::Pulse => &free + &s.jx.scaled(p.omega),
    }
}

/// Rotation axis of the reference π pulses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn operator(self, s: &CollectiveSpin) -> &Operator {
        match self {
            Axis::X => &s.jx,
            Axis::Y => &s.jy,
        }
    }
}

impl FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            other => Err(Error::Parse(format!("unknown axis '{other}' (expected x or y)"))),
        }
    }
}

/// Whether reference π pulses have finite length or are instantaneous.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PulseShape {
    #[default]
    Finite,
    Ideal,
}

/// Lock-in amplifier parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LockinParams {
    pub chi: f64,
    pub gamma_g: f64,
    pub b_ac: f64,
    /// Target signal frequency ωs.
    pub omega_s: f64,
    /// Pulse spacing τ_r; the reference frequency is ωr = π/τ_r.
    pub tau_r: f64,
    /// Finite π-pulse length T_Ω (ignored for ideal pulses).
    pub t_pulse: f64,
    pub pulse_count: u32,
    /// First pulse centred at `(1 - λ)τ_r`: 0 for PDD, 1/2 for CP.
    pub lambda: f64,
    pub axis: Axis,
    #[serde(default)]
    pub pulses: PulseShape,
    #[serde(default)]
    pub noise: NoiseModel,
}

impl LockinParams {
    /// Figure setup: γ_g = 1, B_ac = 1, ωs = 200π, T_Ω = 0.2τs, τ_r = τs.
    pub fn reference(axis: Axis, lambda: f64, pulse_count: u32, chi: f64) -> Self {
        let omega_s = 200.0 * PI;
        let tau_s = PI / omega_s;
        Self {
            chi,
            gamma_g: 1.0,
            b_ac: 1.0,
            omega_s,
            tau_r: tau_s,
            t_pulse: 0.2 * tau_s,
            pulse_count,
            lambda,
            axis,
            pulses: PulseShape::Finite,
            noise: NoiseModel::none(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidParameter(what));
        if self.pulse_count == 0 {
            return bad("pulse_count must be >= 1".into());
        }
        if !(self.tau_r > 0.0 && self.tau_r.is_finite()) {
            return bad(format!("tau_r = {} must be > 0", self.tau_r));
        }
        if !(self.omega_s > 0.0 && self.omega_s.is_finite()) {
            return bad("omega_s must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return bad(format!("lambda = {} must lie in [0, 1)", self.lambda));
        }
        if self.pulses == PulseShape::Finite {
            if self.t_pulse.is_nan() || self.t_pulse <= 0.0 {
                return bad("finite pulses need t_pulse > 0 (use ideal pulses for the zero-width limit)".into());
            }
            if self.t_pulse >= self.tau_r {
                return bad(format!("t_pulse = {} must be shorter than tau_r = {}", self.t_pulse, self.tau_r));
            }
            if self.first_center() - self.t_pulse / 2.0 < 0.0 {
                return bad("first pulse window starts before t = 0".into());
            }
        }
        self.noise.validate()
    }

    pub fn omega_r(&self) -> f64 {
        PI / self.tau_r
    }

    pub fn tau_s(&self) -> f64 {
        PI / self.omega_s
    }

    /// δτ = τ_r - τs.
    pub fn delta_tau(&self) -> f64 {
        self.tau_r - self.tau_s()
    }

    pub fn with_delta_tau(&self, delta_tau: f64) -> Self {
        Self { tau_r: self.tau_s() + delta_tau, ..self.clone() }
    }

    fn first_center(&self) -> f64 {
        (1.0 - self.lambda) * self.tau_r
    }

    /// Centre of pulse `l` (1-based): `(l - λ)τ_r`.
    pub fn pulse_center(&self, l: u32) -> f64 {
        (f64::from(l) - self.lambda) * self.tau_r
    }

    /// Nominal interrogation time `L τ_r`.
    pub fn interrogation_time(&self) -> f64 {
        f64::from(self.pulse_count) * self.tau_r
    }

    /// End of the pulse train. Equals `Lτ_r` unless the last pulse window
    /// straddles it (PDD), in which case the window is completed.
    pub fn schedule_end(&self) -> f64 {
        let last = match self.pulses {
            PulseShape::Finite => self.pulse_center(self.pulse_count) + self.t_pulse / 2.0,
            PulseShape::Ideal => self.pulse_center(self.pulse_count),
        };
        self.interrogation_time().max(last)
    }

    /// π-pulse Rabi frequency `π / T_Ω`.
    pub fn pulse_amplitude(&self) -> f64 {
        PI / self.t_pulse
    }

    /// `Ω_π(t)`: `π/T_Ω` inside `|t - (l-λ)τ_r| ≤ T_Ω/2`, else zero.
    pub fn rabi(&self, t: f64) -> f64 {
        if self.pulses == PulseShape::Ideal {
            return 0.0;
        }
        let half = self.t_pulse / 2.0;
        let nearest = (t / self.tau_r + self.lambda).round().clamp(1.0, f64::from(self.pulse_count));
        let center = (nearest - self.lambda) * self.tau_r;
        if (t - center).abs() <= half {
            self.pulse_amplitude()
        } else {
            0.0
        }
    }

    /// Target signal `S(t) = γ_g B_ac sin(ωs t)`.
    pub fn signal(&self, t: f64) -> f64 {
        self.gamma_g * self.b_ac * (self.omega_s * t).sin()
    }

    /// `∫_a^b S(t) dt`.
    pub fn signal_integral(&self, a: f64, b: f64) -> f64 {
        self.gamma_g * self.b_ac * ((self.omega_s * a).cos() - (self.omega_s * b).cos()) / self.omega_s
    }

    /// `M(t) = S(t) + N_o(t)`.
    pub fn coupling(&self, t: f64) -> f64 {
        self.signal(t) + self.noise.value(t)
    }
}

/// Lab-frame lock-in Hamiltonian `χJz² + M(t)Jz + Ω_π(t) J_axis`.
pub fn lockin_lab_hamiltonian(system: SpinSystem, p: &LockinParams, t: f64) -> Result<Operator> {
    if !(0.0..=p.schedule_end()).contains(&t) {
        return Err(Error::InvalidParameter(format!(
            "t = {t} lies outside the pulse train [0, {}]",
            p.schedule_end()
        )));
    }
    let s = CollectiveSpin::new(system);
    let h = &(&s.jz * &s.jz).scaled(p.chi) + &s.jz.scaled(p.coupling(t));
    Ok(&h + &p.axis.operator(&s).scaled(p.rabi(t)))
}

/// The four time-averaged lock-in Hamiltonians.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectiveVariant {
    CpIdeal,
    PddIdeal,
    CpFiniteX,
    CpFiniteY,
}

impl EffectiveVariant {
    pub const ALL: [EffectiveVariant; 4] =
        [Self::CpIdeal, Self::PddIdeal, Self::CpFiniteX, Self::CpFiniteY];

    pub fn name(self) -> &'static str {
        match self {
            Self::CpIdeal => "cp_ideal",
            Self::PddIdeal => "pdd_ideal",
            Self::CpFiniteX => "cp_finite_x",
            Self::CpFiniteY => "cp_finite_y",
        }
    }
}

impl fmt::Display for EffectiveVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EffectiveVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s.replace('-', "_"))
            .ok_or_else(|| Error::Parse(format!("unknown effective variant '{s}'")))
    }
}

/// Fourier coefficients of the pulse train evaluated at resonance
/// (`τ_r = τs`), so the effective coefficients carry no hidden `δτ`
/// dependence.
pub fn resonant_fourier_coefficients(p: &LockinParams) -> Result<FourierCoefficients> {
    let t_pulse = match p.pulses {
        PulseShape::Finite => p.t_pulse,
        PulseShape::Ideal => 0.0,
    };
    fourier_coefficients(t_pulse, p.tau_s(), DEFAULT_K_MAX)
}

/// Effective lock-in Hamiltonian at timing detuning `δτ`.
pub fn effective_hamiltonian(
    system: SpinSystem,
    p: &LockinParams,
    variant: EffectiveVariant,
    delta_tau: f64,
) -> Result<Operator> {
    let fc = match variant {
        EffectiveVariant::CpFiniteX | EffectiveVariant::CpFiniteY => Some(resonant_fourier_coefficients(p)?),
        _ => None,
    };
    Ok(effective_hamiltonian_with(&CollectiveSpin::new(system), p, variant, delta_tau, fc.as_ref()))
}

pub(crate) fn effective_hamiltonian_with(
    s: &CollectiveSpin,
    p: &LockinParams,
    variant: EffectiveVariant,
    delta_tau: f64,
    fc: Option<&FourierCoefficients>,
) -> Operator {
    let l = p.pulse_count;
    let gb = p.gamma_g * p.b_ac;
    let jz2 = &s.jz * &s.jz;
    let ideal_prefactor = 2.0 * gb / (f64::from(l) * PI);
    match variant {
        EffectiveVariant::CpIdeal => {
            &jz2.scaled(p.chi) + &s.jz.scaled(ideal_prefactor * cp_lineshape(delta_tau, p.omega_s, l))
        }
        EffectiveVariant::PddIdeal => {
            &jz2.scaled(p.chi) + &s.jz.scaled(ideal_prefactor * pdd_lineshape(delta_tau, p.omega_s, l))
        }
        EffectiveVariant::CpFiniteX | EffectiveVariant::CpFiniteY => {
            let fc = fc.expect("finite variants need Fourier coefficients");
            let z_coef = 0.5 * fc.a_1 * gb * sinc2_lineshape(delta_tau, p.omega_s, l);
            let t_coef = 0.5 * fc.b_1 * gb * sinc_lineshape(delta_tau, p.omega_s, l);
            let (transverse, sign) = match variant {
                EffectiveVariant::CpFiniteX => (&s.jy, 1.0),
                _ => (&s.jx, -1.0),
            };
            let quad = &jz2.scaled(fc.a_s) + &(transverse * transverse).scaled(fc.b_s);
            let h = &quad.scaled(0.5 * p.chi) + &s.jz.scaled(z_coef);
            &h + &transverse.scaled(sign * t_coef)
        }
    }
}
