//! Truncated bosonic Fock spaces with a cutoff on the total photon number.
//!
//! Basis states are graded by total photon number and, within a sector,
//! ordered by descending occupation of the first mode (then the second).
//! Two modes are (L, R); a third mode is an ancilla.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Range, Sub};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::stokes::{EulerAngles, StokesVector};

/// Default tolerance on unitarity of mode matrices.
pub const UNITARY_TOL: f64 = 1e-12;

#[derive(Clone)]
pub struct FockBasis {
    n_modes: usize,
    n_max: usize,
    states: Arc<Vec<Vec<usize>>>,
    index: Arc<HashMap<Vec<usize>, usize>>,
    // sector_start[n] = first index with n photons; last entry = dimension
    sector_start: Arc<Vec<usize>>,
}

impl PartialEq for FockBasis {
    fn eq(&self, other: &Self) -> bool {
        self.n_modes == other.n_modes && self.n_max == other.n_max
    }
}

impl Eq for FockBasis {}

impl fmt::Debug for FockBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FockBasis(modes={}, n_max={}, dim={})", self.n_modes, self.n_max, self.dim())
    }
}

fn push_compositions(total: usize, modes: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if modes == 1 {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first);
        push_compositions(total - first, modes - 1, prefix, out);
        prefix.pop();
    }
}

pub fn make_basis(n_modes: usize, n_max: usize) -> Result<FockBasis> {
    if !(2..=3).contains(&n_modes) {
        return Err(Error::UnsupportedModeCount(n_modes));
    }
    if n_max < 1 {
        return Err(Error::InvalidCutoff(n_max));
    }
    let mut states = Vec::new();
    let mut sector_start = Vec::with_capacity(n_max + 2);
    for total in 0..=n_max {
        sector_start.push(states.len());
        push_compositions(total, n_modes, &mut Vec::new(), &mut states);
    }
    sector_start.push(states.len());
    let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    Ok(FockBasis {
        n_modes,
        n_max,
        states: Arc::new(states),
        index: Arc::new(index),
        sector_start: Arc::new(sector_start),
    })
}

impl FockBasis {
    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, i: usize) -> &[usize] {
        &self.states[i]
    }

    pub fn states(&self) -> &[Vec<usize>] {
        &self.states
    }

    pub fn index_of(&self, occupation: &[usize]) -> Option<usize> {
        self.index.get(occupation).copied()
    }

    pub fn total(&self, i: usize) -> usize {
        self.states[i].iter().sum()
    }

    /// Index range of the sector with exactly `n` photons.
    pub fn sector(&self, n: usize) -> Range<usize> {
        self.sector_start[n]..self.sector_start[n + 1]
    }

    /// Number of states with at most `n` photons.
    pub fn dim_up_to(&self, n: usize) -> usize {
        self.sector_start[n.min(self.n_max) + 1]
    }

    fn check_same(&self, other: &FockBasis) -> Result<()> {
        if self != other {
            return Err(Error::BasisMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Dense complex operator on a truncated Fock space.
#[derive(Clone, Debug, PartialEq)]
pub struct FockOperator {
    basis: FockBasis,
    m: DMatrix<C64>,
}

impl FockOperator {
    pub fn new(basis: &FockBasis, m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != basis.dim() || m.ncols() != basis.dim() {
            return Err(Error::BasisMismatch(format!(
                "{}x{} matrix on {basis:?}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self { basis: basis.clone(), m })
    }

    pub fn identity(basis: &FockBasis) -> Self {
        Self { basis: basis.clone(), m: DMatrix::identity(basis.dim(), basis.dim()) }
    }

    pub fn zeros(basis: &FockBasis) -> Self {
        Self { basis: basis.clone(), m: DMatrix::zeros(basis.dim(), basis.dim()) }
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn adjoint(&self) -> Self {
        Self { basis: self.basis.clone(), m: self.m.adjoint() }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { basis: self.basis.clone(), m: &self.m * c }
    }

    pub fn scale_re(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.m.iter().fold(0.0, |a, z| a.max(z.norm()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Hilbert-Schmidt inner product `tr(self^dagger other)`.
    pub fn hs_inner(&self, other: &Self) -> C64 {
        self.m.iter().zip(other.m.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    /// `max |U^dagger U - 1|` entrywise.
    pub fn unitarity_deviation(&self) -> f64 {
        let d = self.m.adjoint() * &self.m - DMatrix::<C64>::identity(self.basis.dim(), self.basis.dim());
        d.iter().fold(0.0, |a, z| a.max(z.norm()))
    }

    /// Restriction to states with at most `n` photons.
    pub fn truncated_block(&self, n: usize) -> DMatrix<C64> {
        let d = self.basis.dim_up_to(n);
        self.m.view((0, 0), (d, d)).into_owned()
    }

    /// True if the operator never raises the total photon number.
    pub fn is_number_nonincreasing(&self, tol: f64) -> bool {
        let b = &self.basis;
        (0..b.dim()).all(|j| (0..b.dim()).all(|i| b.total(i) <= b.total(j) || self.m[(i, j)].norm() <= tol))
    }

    /// True if the operator commutes with the total photon number.
    pub fn is_number_conserving(&self, tol: f64) -> bool {
        let b = &self.basis;
        (0..b.dim()).all(|j| (0..b.dim()).all(|i| b.total(i) == b.total(j) || self.m[(i, j)].norm() <= tol))
    }
}

impl<'a> Mul<&'a FockOperator> for &'a FockOperator {
    type Output = FockOperator;
    fn mul(self, rhs: &FockOperator) -> FockOperator {
        assert_eq!(self.basis, rhs.basis, "operator basis mismatch");
        FockOperator { basis: self.basis.clone(), m: &self.m * &rhs.m }
    }
}

impl<'a> Add<&'a FockOperator> for &'a FockOperator {
    type Output = FockOperator;
    fn add(self, rhs: &FockOperator) -> FockOperator {
        assert_eq!(self.basis, rhs.basis, "operator basis mismatch");
        FockOperator { basis: self.basis.clone(), m: &self.m + &rhs.m }
    }
}

impl<'a> Sub<&'a FockOperator> for &'a FockOperator {
    type Output = FockOperator;
    fn sub(self, rhs: &FockOperator) -> FockOperator {
        assert_eq!(self.basis, rhs.basis, "operator basis mismatch");
        FockOperator { basis: self.basis.clone(), m: &self.m - &rhs.m }
    }
}

/// Annihilation and creation operator pairs `(a_i, a_i^dagger)`, one per mode.
pub fn mode_operators(basis: &FockBasis) -> Vec<(FockOperator, FockOperator)> {
    (0..basis.n_modes())
        .map(|mode| {
            let mut a = DMatrix::<C64>::zeros(basis.dim(), basis.dim());
            for (j, occ) in basis.states().iter().enumerate() {
                if occ[mode] == 0 {
                    continue;
                }
                let mut lowered = occ.clone();
                lowered[mode] -= 1;
                let i = basis.index_of(&lowered).expect("lowered state in basis");
                a[(i, j)] = C64::new((occ[mode] as f64).sqrt(), 0.0);
            }
            let a = FockOperator { basis: basis.clone(), m: a };
            let ad = a.adjoint();
            (a, ad)
        })
        .collect()
}

/// Number operator of one mode (diagonal, exact).
pub fn number_operator(basis: &FockBasis, mode: usize) -> FockOperator {
    let diag = DVector::from_iterator(
        basis.dim(),
        basis.states().iter().map(|s| C64::new(s[mode] as f64, 0.0)),
    );
    FockOperator { basis: basis.clone(), m: DMatrix::from_diagonal(&diag) }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StokesOperators {
    pub s0: FockOperator,
    pub s1: FockOperator,
    pub s2: FockOperator,
    pub s3: FockOperator,
}

impl StokesOperators {
    pub fn get(&self, mu: usize) -> &FockOperator {
        match mu {
            0 => &self.s0,
            1 => &self.s1,
            2 => &self.s2,
            3 => &self.s3,
            _ => panic!("Stokes index {mu} out of range"),
        }
    }

    pub fn all(&self) -> [&FockOperator; 4] {
        [&self.s0, &self.s1, &self.s2, &self.s3]
    }
}

fn require_two_modes(basis: &FockBasis) -> Result<()> {
    if basis.n_modes() != 2 {
        return Err(Error::UnsupportedModeCount(basis.n_modes()));
    }
    Ok(())
}

pub fn stokes_operators(basis: &FockBasis) -> Result<StokesOperators> {
    require_two_modes(basis)?;
    let ops = mode_operators(basis);
    let (al, ald) = &ops[0];
    let (ar, ard) = &ops[1];
    let nl = number_operator(basis, 0);
    let nr = number_operator(basis, 1);
    let lr = ald * ar;
    let rl = ard * al;
    Ok(StokesOperators {
        s0: &nl + &nr,
        s1: &lr + &rl,
        s2: (&lr - &rl).scale(C64::new(0.0, -1.0)),
        s3: &nl - &nr,
    })
}

/// `exp(-i phi S3/2) exp(-i theta S2/2) exp(-i psi S3/2)` on a two-mode basis.
///
/// `S3` is diagonal; `S2` is exponentiated by a Hermitian eigendecomposition
/// inside each photon-number sector, so the result is exactly block diagonal.
pub fn rotation_unitary(basis: &FockBasis, e: &EulerAngles) -> Result<FockOperator> {
    require_two_modes(basis)?;
    let s2 = stokes_operators(basis)?.s2;
    let dim = basis.dim();
    let mut y = DMatrix::<C64>::zeros(dim, dim);
    for n in 0..=basis.n_max() {
        let r = basis.sector(n);
        let block = s2.matrix().view((r.start, r.start), (r.len(), r.len())).into_owned();
        let eig = SymmetricEigen::new(block);
        let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, -e.theta * l / 2.0)));
        let exp = &eig.eigenvectors * phases * eig.eigenvectors.adjoint();
        y.view_mut((r.start, r.start), (r.len(), r.len())).copy_from(&exp);
    }
    let z = |angle: f64| {
        DMatrix::from_diagonal(&DVector::from_iterator(
            dim,
            basis.states().iter().map(|s| {
                let m = s[0] as f64 - s[1] as f64;
                C64::from_polar(1.0, -angle * m / 2.0)
            }),
        ))
    };
    Ok(FockOperator { basis: basis.clone(), m: z(e.phi) * y * z(e.psi) })
}

fn check_unitary(u: &DMatrix<C64>, tol: f64) -> Result<()> {
    let d = u.adjoint() * u - DMatrix::<C64>::identity(u.nrows(), u.ncols());
    let deviation = d.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    if !(deviation <= tol) {
        return Err(Error::NotUnitary { deviation });
    }
    Ok(())
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Fock representation `U` of a mode unitary, `U^dagger a_i U = sum_j u_ij a_j`.
///
/// Equivalently `U a_i^dagger U^dagger = sum_j u_ji a_j^dagger`, so the
/// single-photon sector of `U` is `u` itself.
pub fn mode_unitary_to_fock(basis: &FockBasis, u: &DMatrix<C64>) -> Result<FockOperator> {
    let k = basis.n_modes();
    if u.nrows() != k || u.ncols() != k {
        return Err(Error::BasisMismatch(format!(
            "{}x{} mode matrix for {k} modes",
            u.nrows(),
            u.ncols()
        )));
    }
    check_unitary(u, UNITARY_TOL)?;
    let dim = basis.dim();
    let mut out = DMatrix::<C64>::zeros(dim, dim);
    for (col, occ) in basis.states().iter().enumerate() {
        // polynomial in creation operators: exponent vector -> coefficient
        let mut poly: BTreeMap<Vec<usize>, C64> = BTreeMap::new();
        poly.insert(vec![0; k], C64::new(1.0, 0.0));
        let mut norm = 1.0;
        for (i, &n_i) in occ.iter().enumerate() {
            norm *= factorial(n_i).sqrt();
            for _ in 0..n_i {
                let mut next: BTreeMap<Vec<usize>, C64> = BTreeMap::new();
                for (mono, c) in &poly {
                    for j in 0..k {
                        let w = u[(j, i)];
                        if w == C64::new(0.0, 0.0) {
                            continue;
                        }
                        let mut m = mono.clone();
                        m[j] += 1;
                        *next.entry(m).or_default() += c * w;
                    }
                }
                poly = next;
            }
        }
        for (mono, c) in poly {
            let row = basis.index_of(&mono).expect("number-conserving image in basis");
            let amp: f64 = mono.iter().map(|&m| factorial(m).sqrt()).product();
            out[(row, col)] = c * (amp / norm);
        }
    }
    Ok(FockOperator { basis: basis.clone(), m: out })
}

/// 2x2 mode matrix of `rotation_unitary(e)`, the single-photon sector.
pub fn rotation_mode_matrix(e: &EulerAngles) -> DMatrix<C64> {
    let j: Matrix2<C64> = crate::stokes::JonesMatrix::rotation(e).0;
    DMatrix::from_fn(2, 2, |r, c| j[(r, c)])
}

/// Hermitian, positive semidefinite, unit-trace operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    basis: FockBasis,
    m: DMatrix<C64>,
}

/// Validation tolerance for density matrices.
pub const STATE_TOL: f64 = 1e-12;

impl DensityMatrix {
    pub fn new(basis: &FockBasis, m: DMatrix<C64>) -> Result<Self> {
        Self::validated(basis, m, STATE_TOL)
    }

    /// Validates Hermiticity, trace and spectrum to `tol`.
    pub fn validated(basis: &FockBasis, m: DMatrix<C64>, tol: f64) -> Result<Self> {
        if m.nrows() != basis.dim() || m.ncols() != basis.dim() {
            return Err(Error::BasisMismatch(format!("{}x{} state on {basis:?}", m.nrows(), m.ncols())));
        }
        let herm = (&m - m.adjoint()).iter().fold(0.0f64, |a, z| a.max(z.norm()));
        if !(herm <= tol) {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {herm:.3e})")));
        }
        let tr = m.trace();
        if !((tr.re - 1.0).abs() <= tol && tr.im.abs() <= tol) {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        let min = SymmetricEigen::new(h).eigenvalues.min();
        if !(min >= -tol) {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(Self { basis: basis.clone(), m })
    }

    pub(crate) fn from_raw(basis: &FockBasis, m: DMatrix<C64>) -> Self {
        Self { basis: basis.clone(), m }
    }

    /// `|psi><psi|` after normalizing `psi`.
    pub fn pure(basis: &FockBasis, psi: &DVector<C64>) -> Result<Self> {
        if psi.len() != basis.dim() {
            return Err(Error::BasisMismatch(format!("state vector of length {} on {basis:?}", psi.len())));
        }
        let n = psi.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidState("zero or non-finite state vector".into()));
        }
        let v = psi / C64::new(n, 0.0);
        Ok(Self { basis: basis.clone(), m: &v * v.adjoint() })
    }

    pub fn basis_state(basis: &FockBasis, occupation: &[usize]) -> Result<Self> {
        let i = basis
            .index_of(occupation)
            .ok_or_else(|| Error::InvalidState(format!("occupation {occupation:?} not in {basis:?}")))?;
        let mut psi = DVector::<C64>::zeros(basis.dim());
        psi[i] = C64::new(1.0, 0.0);
        Self::pure(basis, &psi)
    }

    /// Two-mode coherent state truncated at the cutoff and renormalized.
    /// Returns the state and the discarded probability mass.
    pub fn coherent(basis: &FockBasis, alpha_l: C64, alpha_r: C64) -> Result<(Self, f64)> {
        require_two_modes(basis)?;
        let mean = alpha_l.norm_sqr() + alpha_r.norm_sqr();
        let psi = DVector::from_iterator(
            basis.dim(),
            basis.states().iter().map(|s| {
                let amp = alpha_l.powu(s[0] as u32) * alpha_r.powu(s[1] as u32)
                    / (factorial(s[0]) * factorial(s[1])).sqrt();
                amp * (-mean / 2.0).exp()
            }),
        );
        let kept = psi.norm_squared();
        let state = Self::pure(basis, &psi)?;
        Ok((state, (1.0 - kept).max(0.0)))
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    /// Largest total photon number carrying weight above `tol`.
    pub fn max_photon_number(&self, tol: f64) -> usize {
        let b = &self.basis;
        (0..b.dim())
            .filter(|&i| (0..b.dim()).any(|j| self.m[(i, j)].norm() > tol))
            .map(|i| b.total(i))
            .max()
            .unwrap_or(0)
    }

    /// Probabilities of the basis states.
    pub fn populations(&self) -> Vec<f64> {
        self.m.diagonal().iter().map(|z| z.re).collect()
    }

    /// `U rho U^dagger`.
    pub fn conjugate_by(&self, u: &FockOperator) -> Result<Self> {
        self.basis.check_same(u.basis())?;
        Ok(Self { basis: self.basis.clone(), m: &u.m * &self.m * u.m.adjoint() })
    }
}

pub fn expectation(rho: &DensityMatrix, op: &FockOperator) -> Result<C64> {
    rho.basis.check_same(op.basis())?;
    Ok((&rho.m * &op.m).trace())
}

pub fn stokes_expectations(rho: &DensityMatrix) -> Result<StokesVector> {
    let ops = stokes_operators(rho.basis())?;
    let v: Vec<f64> = ops
        .all()
        .iter()
        .map(|op| expectation(rho, op).map(|z| z.re))
        .collect::<Result<_>>()?;
    Ok(StokesVector::new(v[0], v[1], v[2], v[3]))
}
