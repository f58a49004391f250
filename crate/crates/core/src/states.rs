//! Initial states and the exchange-symmetry criterion `C_m = ±C_{-m}`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{eigh, exchange_operator, Operator, SpinSystem};

/// Default tolerance for symmetry predicates.
pub const SYMMETRY_TOL: f64 = 1e-10;

const NORM_TOL: f64 = 1e-10;

/// Sign `s` in `C_m = s·C_{-m}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExchangeSign {
    Plus,
    Minus,
}

impl ExchangeSign {
    pub fn value(self) -> f64 {
        match self {
            Self::Plus => 1.0,
            Self::Minus => -1.0,
        }
    }
}

/// Normalized amplitude vector over the Dicke basis (ascending `m`).
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    system: SpinSystem,
    amplitudes: DVector<C64>,
}

impl PureState {
    /// Validates length and normalization (within 1e-10).
    pub fn new(system: SpinSystem, amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() != system.dim() {
            return Err(Error::DimensionMismatch { expected: system.dim(), found: amplitudes.len() });
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!("state norm {norm} is not 1")));
        }
        Ok(Self { system, amplitudes })
    }

    /// Rescales an arbitrary nonzero vector to unit norm.
    pub fn normalized(system: SpinSystem, amplitudes: DVector<C64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("cannot normalize a zero or non-finite vector".into()));
        }
        Self::new(system, amplitudes / C64::from(norm))
    }

    pub(crate) fn from_raw(system: SpinSystem, amplitudes: DVector<C64>) -> Self {
        Self { system, amplitudes }
    }

    pub fn system(&self) -> SpinSystem {
        self.system
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    /// Amplitude `C_m`.
    pub fn coefficient(&self, m: f64) -> Option<C64> {
        self.system.index_of(m).map(|k| self.amplitudes[k])
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix { system: self.system, matrix: &self.amplitudes * self.amplitudes.adjoint() }
    }

    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        self.amplitudes.iter().map(|z| [z.re, z.im]).collect()
    }

    /// Parses a JSON array of `[re, im]` pairs.
    pub fn from_json(system: SpinSystem, text: &str) -> Result<Self> {
        let pairs: Vec<[f64; 2]> = serde_json::from_str(text)?;
        let v = DVector::from_iterator(pairs.len(), pairs.iter().map(|p| C64::new(p[0], p[1])));
        Self::new(system, v)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_pairs()).expect("plain float pairs serialize")
    }

    pub fn read_json(system: SpinSystem, path: &Path) -> Result<Self> {
        Self::from_json(system, &std::fs::read_to_string(path)?)
    }
}

/// Density matrix over the Dicke basis.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    system: SpinSystem,
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace (1e-10) and positivity (eigenvalues ≥ -1e-9).
    pub fn new(system: SpinSystem, matrix: DMatrix<C64>) -> Result<Self> {
        let op = Operator::new(system, matrix)?;
        if !op.is_hermitian() {
            return Err(Error::InvalidState("density matrix is not Hermitian".into()));
        }
        let tr = op.trace();
        if (tr - C64::from(1.0)).norm() > NORM_TOL {
            return Err(Error::InvalidState(format!("density matrix trace {tr} is not 1")));
        }
        let (values, _) = eigh(&op)?;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -1e-9 {
            return Err(Error::InvalidState(format!("density matrix has eigenvalue {min:.3e}")));
        }
        Ok(Self { system, matrix: op.into_matrix() })
    }

    pub(crate) fn from_raw(system: SpinSystem, matrix: DMatrix<C64>) -> Self {
        Self { system, matrix }
    }

    pub fn system(&self) -> SpinSystem {
        self.system
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn hermitian_defect(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let herm = (&self.matrix + self.matrix.adjoint()) * C64::from(0.5);
        let (values, _) = eigh(&Operator::new(self.system, herm)?)?;
        Ok(values.into_iter().fold(f64::INFINITY, f64::min))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.matrix.iter().zip(other.matrix.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// `max |U_ex† ρ U_ex - ρ| ≤ tol`.
    pub fn is_exchange_symmetric(&self, tol: f64) -> bool {
        let u = exchange_operator(self.system);
        let conj = u.matrix().adjoint() * &self.matrix * u.matrix();
        conj.iter().zip(self.matrix.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) <= tol
    }
}

/// Dicke state `|J, m⟩`.
pub fn dicke_state(system: SpinSystem, m: f64) -> Result<PureState> {
    let k = system.index_of(m).ok_or_else(|| {
        Error::InvalidState(format!("m = {m} is not in {{-J..J}} for {system}"))
    })?;
    let mut v = DVector::zeros(system.dim());
    v[k] = C64::from(1.0);
    Ok(PureState { system, amplitudes: v })
}

/// `((|↑⟩ + |↓⟩)/√2)^⊗N`, the `+J` eigenstate of `Jx`:
/// `C_m = sqrt(binom(N, m+J)) / 2^(N/2)`.
pub fn x_polarized(system: SpinSystem) -> PureState {
    let n = system.n_particles() as usize;
    // log-space binomials keep N in the hundreds finite
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=n).scan(0.0, |acc, k| {
            *acc += (k as f64).ln();
            Some(*acc)
        }))
        .collect();
    let half_ln2 = 0.5 * n as f64 * std::f64::consts::LN_2;
    let v = DVector::from_iterator(
        n + 1,
        (0..=n).map(|k| {
            let ln_binom = ln_fact[n] - ln_fact[k] - ln_fact[n - k];
            C64::from((0.5 * ln_binom - half_ln2).exp())
        }),
    );
    let norm = v.norm();
    PureState { system, amplitudes: v / C64::from(norm) }
}

/// `(|J, J⟩ + |J, -J⟩) / √2`.
pub fn ghz_state(system: SpinSystem) -> PureState {
    let d = system.dim();
    let mut v = DVector::zeros(d);
    let a = C64::from(std::f64::consts::FRAC_1_SQRT_2);
    v[0] = a;
    v[d - 1] += a;
    if d == 1 {
        v[0] = C64::from(1.0);
    }
    PureState { system, amplitudes: v }
}

/// Coefficient test `C_m = s·C_{-m}` for a single global sign `s`, after
/// removing the global phase (largest amplitude rotated onto the positive
/// real axis). Returns the sign when the state is symmetric.
pub fn is_symmetric(state: &PureState, tol: f64) -> Option<ExchangeSign> {
    let a = &state.amplitudes;
    let d = a.len();
    let pivot = a.iter().copied().max_by(|x, y| x.norm().total_cmp(&y.norm()))?;
    if pivot.norm() == 0.0 {
        return None;
    }
    let unphase = pivot.conj() / pivot.norm();
    let c: Vec<C64> = a.iter().map(|z| z * unphase).collect();
    [ExchangeSign::Plus, ExchangeSign::Minus].into_iter().find(|sign| {
        let s = sign.value();
        (0..d).all(|k| (c[k] - c[d - 1 - k] * s).norm() <= tol)
    })
}

/// `|⟨ψ|U_ex|ψ⟩|`, equal to 1 exactly for exchange eigenstates.
pub fn exchange_overlap(state: &PureState) -> f64 {
    let u = exchange_operator(state.system);
    state.amplitudes.dotc(&u.apply(&state.amplitudes)).norm()
}
