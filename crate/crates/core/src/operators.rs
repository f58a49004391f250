//! Collective-spin operators on the symmetric (Dicke) sector.
//!
//! Basis convention shared by the whole crate: index `k = 0..=N` holds the
//! Dicke state `|J, m⟩` with `m = k - J`, i.e. magnetic quantum numbers in
//! ascending order starting at `-J`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entrywise tolerance used when deciding whether a matrix is Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// `N` spin-1/2 particles restricted to the maximal-spin sector `J = N/2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinSystem {
    n_particles: u32,
}

impl SpinSystem {
    pub fn new(n_particles: u32) -> Result<Self> {
        if n_particles == 0 {
            return Err(Error::InvalidSystem("particle number must be at least 1".into()));
        }
        Ok(Self { n_particles })
    }

    pub fn n_particles(&self) -> u32 {
        self.n_particles
    }

    /// Total spin `J = N/2`. Exact in binary floating point.
    pub fn j(&self) -> f64 {
        f64::from(self.n_particles) / 2.0
    }

    pub fn dim(&self) -> usize {
        self.n_particles as usize + 1
    }

    /// Magnetic quantum number stored at basis index `k`.
    pub fn m_at(&self, k: usize) -> f64 {
        k as f64 - self.j()
    }

    pub fn m_values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.dim()).map(move |k| self.m_at(k))
    }

    /// Basis index of `|J, m⟩`, or `None` if `m` is not an allowed value.
    pub fn index_of(&self, m: f64) -> Option<usize> {
        let shifted = m + self.j();
        let k = shifted.round();
        if (shifted - k).abs() > 1e-9 || k < 0.0 || k > f64::from(self.n_particles) {
            return None;
        }
        Some(k as usize)
    }
}

impl fmt::Display for SpinSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N={} (J={})", self.n_particles, self.j())
    }
}

/// Dense complex operator on a [`SpinSystem`]'s Dicke space.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    system: SpinSystem,
    matrix: DMatrix<C64>,
    hermitian: bool,
}

impl Operator {
    /// Wraps a matrix. The Hermitian flag is set when the matrix is
    /// Hermitian within [`HERMITIAN_TOL`].
    pub fn new(system: SpinSystem, matrix: DMatrix<C64>) -> Result<Self> {
        let dim = system.dim();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(Self::from_parts(system, matrix))
    }

    fn from_parts(system: SpinSystem, matrix: DMatrix<C64>) -> Self {
        let hermitian = hermitian_defect(&matrix) <= HERMITIAN_TOL;
        Self { system, matrix, hermitian }
    }

    pub fn zeros(system: SpinSystem) -> Self {
        let d = system.dim();
        Self { system, matrix: DMatrix::zeros(d, d), hermitian: true }
    }

    pub fn identity(system: SpinSystem) -> Self {
        let d = system.dim();
        Self { system, matrix: DMatrix::identity(d, d), hermitian: true }
    }

    pub fn diagonal(system: SpinSystem, entries: impl IntoIterator<Item = f64>) -> Result<Self> {
        let entries: Vec<C64> = entries.into_iter().map(C64::from).collect();
        if entries.len() != system.dim() {
            return Err(Error::DimensionMismatch { expected: system.dim(), found: entries.len() });
        }
        Ok(Self {
            system,
            matrix: DMatrix::from_diagonal(&DVector::from_vec(entries)),
            hermitian: true,
        })
    }

    pub fn system(&self) -> SpinSystem {
        self.system
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// `max |A - A†|`.
    pub fn hermitian_defect(&self) -> f64 {
        hermitian_defect(&self.matrix)
    }

    pub fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|j| (0..d).all(|i| i == j || self.matrix[(i, j)] == C64::new(0.0, 0.0)))
    }

    pub fn dagger(&self) -> Self {
        Self { system: self.system, matrix: self.matrix.adjoint(), hermitian: self.hermitian }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { system: self.system, matrix: &self.matrix * C64::from(factor), hermitian: self.hermitian }
    }

    pub fn scaled_complex(&self, factor: C64) -> Self {
        Self::from_parts(self.system, &self.matrix * factor)
    }

    /// `A B - B A`.
    pub fn commutator(&self, other: &Self) -> Self {
        Self::from_parts(self.system, &self.matrix * &other.matrix - &other.matrix * &self.matrix)
    }

    /// `A B + B A`.
    pub fn anticommutator(&self, other: &Self) -> Self {
        Self::from_parts(self.system, &self.matrix * &other.matrix + &other.matrix * &self.matrix)
    }

    /// `(A B + B A) / 2`, Hermitian whenever both factors are.
    pub fn symmetrized_product(&self, other: &Self) -> Self {
        self.anticommutator(other).scaled(0.5)
    }

    /// `U† A U`.
    pub fn conjugated_by(&self, u: &Self) -> Self {
        Self::from_parts(self.system, u.matrix.adjoint() * &self.matrix * &u.matrix)
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.matrix
            .iter()
            .zip(other.matrix.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        &self.matrix * v
    }

    /// Maximum deviation of `A A†` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        let p = &self.matrix * self.matrix.adjoint();
        let d = self.dim();
        p.iter()
            .zip(DMatrix::<C64>::identity(d, d).iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

fn hermitian_defect(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        debug_assert_eq!(self.system, rhs.system);
        Operator::from_parts(self.system, &self.matrix + &rhs.matrix)
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        debug_assert_eq!(self.system, rhs.system);
        Operator::from_parts(self.system, &self.matrix - &rhs.matrix)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        debug_assert_eq!(self.system, rhs.system);
        Operator::from_parts(self.system, &self.matrix * &rhs.matrix)
    }
}

impl Mul<&Operator> for f64 {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        rhs.scaled(self)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scaled(-1.0)
    }
}

/// The three collective spin components.
#[derive(Clone, Debug)]
pub struct CollectiveSpin {
    pub jx: Operator,
    pub jy: Operator,
    pub jz: Operator,
}

impl CollectiveSpin {
    pub fn new(system: SpinSystem) -> Self {
        let (jx, jy, jz) = collective_operators(system);
        Self { jx, jy, jz }
    }

    pub fn system(&self) -> SpinSystem {
        self.jz.system()
    }

    /// `Jx² + Jy² + Jz²`.
    pub fn total_squared(&self) -> Operator {
        let sum = &(&self.jx * &self.jx) + &(&self.jy * &self.jy);
        &sum + &(&self.jz * &self.jz)
    }
}

/// `Jx, Jy, Jz` built from the ladder operators
/// `⟨J, m+1|J+|J, m⟩ = sqrt(J(J+1) - m(m+1))`.
pub fn collective_operators(system: SpinSystem) -> (Operator, Operator, Operator) {
    let d = system.dim();
    let j = system.j();
    let mut raise = DMatrix::<C64>::zeros(d, d);
    for k in 0..d - 1 {
        let m = system.m_at(k);
        raise[(k + 1, k)] = C64::from((j * (j + 1.0) - m * (m + 1.0)).sqrt());
    }
    let lower = raise.adjoint();
    let jx = (&raise + &lower) * C64::new(0.5, 0.0);
    let jy = (&raise - &lower) * C64::new(0.0, -0.5);
    let jz = DMatrix::from_diagonal(&DVector::from_iterator(d, system.m_values().map(C64::from)));
    (
        Operator { system, matrix: jx, hermitian: true },
        Operator { system, matrix: jy, hermitian: true },
        Operator { system, matrix: jz, hermitian: true },
    )
}

/// Mode-exchange operator `U_ex = exp(-iπ Jx)`.
pub fn exchange_operator(system: SpinSystem) -> Operator {
    let (jx, _, _) = collective_operators(system);
    expm_hermitian(&jx, std::f64::consts::PI).expect("Jx is Hermitian by construction")
}

/// Hermitian eigendecomposition `H = V Λ V†`.
pub fn eigh(h: &Operator) -> Result<(Vec<f64>, DMatrix<C64>)> {
    if !h.is_hermitian() {
        return Err(Error::NotHermitian(h.hermitian_defect()));
    }
    let eig = SymmetricEigen::try_new(h.matrix.clone(), 1e-15, 10_000).ok_or(Error::Eigen)?;
    Ok((eig.eigenvalues.iter().copied().collect(), eig.eigenvectors))
}

/// Exact propagator `exp(-i H τ)` for a Hermitian `H`.
pub fn expm_hermitian(h: &Operator, tau: f64) -> Result<Operator> {
    if !h.is_hermitian() {
        return Err(Error::NotHermitian(h.hermitian_defect()));
    }
    let d = h.dim();
    if h.is_diagonal() {
        let phases = DVector::from_iterator(
            d,
            (0..d).map(|k| C64::from_polar(1.0, -h.matrix[(k, k)].re * tau)),
        );
        return Ok(Operator { system: h.system, matrix: DMatrix::from_diagonal(&phases), hermitian: false });
    }
    let (values, vectors) = eigh(h)?;
    let mut scaled = vectors.clone();
    for (k, lambda) in values.iter().enumerate() {
        let phase = C64::from_polar(1.0, -lambda * tau);
        for i in 0..d {
            scaled[(i, k)] *= phase;
        }
    }
    let matrix = scaled * vectors.adjoint();
    Ok(Operator { system: h.system, matrix, hermitian: false })
}

/// Compressed sparse-row view of an operator, used by the integrators'
/// inner loops where the Hamiltonians are at most tridiagonal.
#[derive(Clone, Debug)]
pub(crate) struct SparseOp {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
    /// Maximum absolute row sum (the induced infinity norm).
    norm_inf: f64,
}

impl SparseOp {
    pub(crate) fn from_operator(op: &Operator) -> Self {
        Self::from_matrix(op.matrix())
    }

    pub(crate) fn from_matrix(m: &DMatrix<C64>) -> Self {
        let dim = m.nrows();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut norm_inf = 0.0f64;
        row_ptr.push(0);
        for i in 0..dim {
            let mut row_sum = 0.0;
            for j in 0..dim {
                let v = m[(i, j)];
                if v != C64::new(0.0, 0.0) {
                    cols.push(j);
                    vals.push(v);
                    row_sum += v.norm();
                }
            }
            norm_inf = norm_inf.max(row_sum);
            row_ptr.push(cols.len());
        }
        Self { dim, row_ptr, cols, vals, norm_inf }
    }

    pub(crate) fn norm_inf(&self) -> f64 {
        self.norm_inf
    }

    /// `out += scale * A v`.
    pub(crate) fn mul_vec_add(&self, scale: C64, v: &[C64], out: &mut [C64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            let mut acc = C64::new(0.0, 0.0);
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[p] * v[self.cols[p]];
            }
            *o += scale * acc;
        }
    }

    /// `out += scale * A X`.
    pub(crate) fn mul_left_add(&self, scale: C64, x: &DMatrix<C64>, out: &mut DMatrix<C64>) {
        for i in 0..self.dim {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = scale * self.vals[p];
                let k = self.cols[p];
                for c in 0..self.dim {
                    out[(i, c)] += a * x[(k, c)];
                }
            }
        }
    }

    /// `out += scale * X A`.
    pub(crate) fn mul_right_add(&self, scale: C64, x: &DMatrix<C64>, out: &mut DMatrix<C64>) {
        for k in 0..self.dim {
            for p in self.row_ptr[k]..self.row_ptr[k + 1] {
                let a = scale * self.vals[p];
                let j = self.cols[p];
                for r in 0..self.dim {
                    out[(r, j)] += x[(r, k)] * a;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sys(n: u32) -> SpinSystem {
        SpinSystem::new(n).unwrap()
    }

    #[test]
    fn zero_particles_rejected() {
        assert!(matches!(SpinSystem::new(0), Err(Error::InvalidSystem(_))));
    }

    #[test]
    fn system_bookkeeping() {
        let s = sys(5);
        assert_eq!(s.dim(), 6);
        assert_eq!(s.j(), 2.5);
        assert_eq!(s.index_of(-2.5), Some(0));
        assert_eq!(s.index_of(2.5), Some(5));
        assert_eq!(s.index_of(0.0), None);
        assert_eq!(s.index_of(3.5), None);
    }

    #[test]
    fn jz_ascending_order() {
        let (_, _, jz) = collective_operators(sys(1));
        assert_eq!(jz.matrix()[(0, 0)].re, -0.5);
        assert_eq!(jz.matrix()[(1, 1)].re, 0.5);
        let (_, _, jz) = collective_operators(sys(2));
        let diag: Vec<f64> = (0..3).map(|k| jz.matrix()[(k, k)].re).collect();
        assert_eq!(diag, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn commutator_n4() {
        let (jx, jy, jz) = collective_operators(sys(4));
        let c = jx.commutator(&jy);
        let ijz = jz.scaled_complex(C64::i());
        assert!(c.max_abs_diff(&ijz) < 1e-12);
    }

    #[test]
    fn exchange_n1_closed_form() {
        let u = exchange_operator(sys(1));
        let m = u.matrix();
        let expect = [[C64::new(0.0, 0.0), C64::new(0.0, -1.0)], [C64::new(0.0, -1.0), C64::new(0.0, 0.0)]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((m[(i, j)] - expect[i][j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn exchange_flips_jz_n3() {
        let s = sys(3);
        let (jx, _, jz) = collective_operators(s);
        let u = exchange_operator(s);
        assert!((&jz.conjugated_by(&u) + &jz).max_abs() < 1e-10);
        assert!(jx.conjugated_by(&u).max_abs_diff(&jx) < 1e-10);
        assert!(u.unitarity_defect() < 1e-10);
    }

    #[test]
    fn expm_zero_is_identity() {
        let s = sys(3);
        let u = expm_hermitian(&Operator::zeros(s), 1.7).unwrap();
        assert!(u.max_abs_diff(&Operator::identity(s)) < 1e-15);
    }

    #[test]
    fn expm_spinor_two_pi_rotation() {
        let s = sys(1);
        let (jx, _, _) = collective_operators(s);
        let u = expm_hermitian(&jx, 2.0 * PI).unwrap();
        assert!(u.max_abs_diff(&Operator::identity(s).scaled(-1.0)) < 1e-12);
    }

    #[test]
    fn expm_rejects_non_hermitian() {
        let s = sys(1);
        let (jx, jy, _) = collective_operators(s);
        let prod = &jx * &jy;
        assert!(!prod.is_hermitian());
        assert!(matches!(expm_hermitian(&prod, 1.0), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn dimension_checked() {
        let m = DMatrix::<C64>::zeros(3, 3);
        assert!(matches!(Operator::new(sys(1), m), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn sparse_matches_dense() {
        let s = sys(6);
        let (jx, jy, jz) = collective_operators(s);
        let h = &(&jx + &jy.scaled(0.3)) + &(&jz * &jz);
        let sp = SparseOp::from_operator(&h);
        let v: Vec<C64> = (0..7).map(|k| C64::new(k as f64, 1.0 - k as f64)).collect();
        let mut out = vec![C64::new(0.0, 0.0); 7];
        sp.mul_vec_add(C64::new(1.0, 0.0), &v, &mut out);
        let dense = h.apply(&DVector::from_vec(v.clone()));
        for k in 0..7 {
            assert!((out[k] - dense[k]).norm() < 1e-12);
        }
        let x = DMatrix::from_fn(7, 7, |i, j| C64::new(i as f64 - j as f64, (i * j) as f64));
        let mut left = DMatrix::zeros(7, 7);
        let mut right = DMatrix::zeros(7, 7);
        sp.mul_left_add(C64::new(1.0, 0.0), &x, &mut left);
        sp.mul_right_add(C64::new(1.0, 0.0), &x, &mut right);
        assert!((left - h.matrix() * &x).norm() < 1e-9);
        assert!((right - &x * h.matrix()).norm() < 1e-9);
    }
}
