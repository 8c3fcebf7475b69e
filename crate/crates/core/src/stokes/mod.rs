//! Classical polarimetry calculus.
//!
//! Stokes components are indexed in the circular basis of the two field
//! modes (L, R): `s1 = 2 Re(a_L* a_R)`, `s2 = 2 Im(a_L* a_R)`,
//! `s3 = |a_L|^2 - |a_R|^2`. The Pauli matrices below are written in the
//! same (L, R) basis, so `s_mu = E^dagger sigma_mu E` for a Jones spinor `E`.
//! Component 3 is the rotation axis of the `psi`/`phi` Euler rotations.

mod decompose;

pub use decompose::{
    classify, cloude_decompose, coherency, is_physical, lu_chipman, mueller_from_coherency,
    Classification, CloudeTerm, CoherencyMatrix, Depolarization, LuChipman, PartialLuChipman,
    PhysicalityReport,
};

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::Index;

use nalgebra::{Matrix2, Matrix3, Matrix4, SymmetricEigen, Vector3, Vector4};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for decompositions.
pub const DECOMPOSITION_TOL: f64 = 1e-9;
/// Tolerance for algebraic identities.
pub const ALGEBRAIC_TOL: f64 = 1e-12;

/// Pauli matrix `sigma_k` (k = 0 is the identity) in the (L, R) basis.
pub fn pauli(k: usize) -> Matrix2<C64> {
    let o = C64::new(0.0, 0.0);
    let l = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match k {
        0 => Matrix2::new(l, o, o, l),
        1 => Matrix2::new(o, l, l, o),
        2 => Matrix2::new(o, -i, i, o),
        3 => Matrix2::new(l, o, o, -l),
        _ => panic!("pauli index {k} out of range"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesVector {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesVector {
    pub fn new(s0: f64, s1: f64, s2: f64, s3: f64) -> Self {
        Self { s0, s1, s2, s3 }
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.s0, self.s1, self.s2, self.s3)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.s0, self.s1, self.s2, self.s3]
    }

    /// The polarization 3-vector `(s1, s2, s3)`.
    pub fn polarization(&self) -> Vector3<f64> {
        Vector3::new(self.s1, self.s2, self.s3)
    }

    /// Stokes vector of a Jones spinor `(e_L, e_R)`.
    pub fn from_spinor(e_l: C64, e_r: C64) -> Self {
        let cross = e_l.conj() * e_r;
        Self::new(
            e_l.norm_sqr() + e_r.norm_sqr(),
            2.0 * cross.re,
            2.0 * cross.im,
            e_l.norm_sqr() - e_r.norm_sqr(),
        )
    }

    pub fn degree_of_polarization(&self) -> Result<f64> {
        degree_of_polarization(self)
    }
}

impl Index<usize> for StokesVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.s0,
            1 => &self.s1,
            2 => &self.s2,
            3 => &self.s3,
            _ => panic!("Stokes index {i} out of range"),
        }
    }
}

/// `|(s1, s2, s3)| / s0`; rejects `s0 <= 0`.
pub fn degree_of_polarization(s: &StokesVector) -> Result<f64> {
    if !(s.s0 > 0.0) {
        return Err(Error::DegenerateIntensity(s.s0));
    }
    Ok(s.polarization().norm() / s.s0)
}

/// Real 4x4 Mueller matrix, row-major: `s'_mu = sum_nu m[(mu, nu)] s_nu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[[f64; 4]; 4]", from = "[[f64; 4]; 4]")]
pub struct MuellerMatrix(Matrix4<f64>);

impl MuellerMatrix {
    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    pub fn zeros() -> Self {
        Self(Matrix4::zeros())
    }

    pub fn from_matrix(m: Matrix4<f64>) -> Self {
        Self(m)
    }

    pub fn from_rows(rows: [[f64; 4]; 4]) -> Self {
        Self(Matrix4::from_fn(|i, j| rows[i][j]))
    }

    pub fn from_diagonal(d: [f64; 4]) -> Self {
        Self(Matrix4::from_diagonal(&Vector4::from(d)))
    }

    pub fn to_rows(&self) -> [[f64; 4]; 4] {
        let mut rows = [[0.0; 4]; 4];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = self.0[(i, j)];
            }
        }
        rows
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    /// Lower-right 3x3 block acting on the polarization vector.
    pub fn block3(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(1, 1).into_owned()
    }

    pub fn apply(&self, s: &StokesVector) -> StokesVector {
        StokesVector::from_vector(&(self.0 * s.to_vector()))
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(self.0 * c)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.0 - other.0).amax()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl Index<(usize, usize)> for MuellerMatrix {
    type Output = f64;
    fn index(&self, ij: (usize, usize)) -> &f64 {
        &self.0[ij]
    }
}

impl From<[[f64; 4]; 4]> for MuellerMatrix {
    fn from(rows: [[f64; 4]; 4]) -> Self {
        Self::from_rows(rows)
    }
}

impl From<MuellerMatrix> for [[f64; 4]; 4] {
    fn from(m: MuellerMatrix) -> Self {
        m.to_rows()
    }
}

impl fmt::Display for MuellerMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..4 {
            writeln!(
                f,
                "[{:>12.8} {:>12.8} {:>12.8} {:>12.8}]",
                self.0[(i, 0)],
                self.0[(i, 1)],
                self.0[(i, 2)],
                self.0[(i, 3)]
            )?;
        }
        Ok(())
    }
}

/// 2x2 complex field transformation in the (L, R) basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JonesMatrix(pub Matrix2<C64>);

impl JonesMatrix {
    pub fn identity() -> Self {
        Self(Matrix2::identity())
    }

    /// SU(2) element `exp(-i phi s3/2) exp(-i theta s2/2) exp(-i psi s3/2)`
    /// restricted to one photon.
    pub fn rotation(e: &EulerAngles) -> Self {
        let (s, c) = (e.theta / 2.0).sin_cos();
        let sum = (e.phi + e.psi) / 2.0;
        let diff = (e.phi - e.psi) / 2.0;
        Self(Matrix2::new(
            C64::from_polar(c, -sum),
            -C64::from_polar(s, -diff),
            C64::from_polar(s, diff),
            C64::from_polar(c, sum),
        ))
    }

    /// Diagonal amplitude transmission `diag(sqrt q, sqrt r)` on (L, R).
    pub fn circular_diattenuator(q: f64, r: f64) -> Self {
        Self(Matrix2::new(
            C64::new(q.sqrt(), 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(r.sqrt(), 0.0),
        ))
    }

    pub fn matrix(&self) -> &Matrix2<C64> {
        &self.0
    }
}

/// Euler angles of `exp(-i phi S3/2) exp(-i theta S2/2) exp(-i psi S3/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EulerAngles {
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
}

impl EulerAngles {
    /// Validated constructor: `phi, psi` in `[0, 2 pi)`, `theta` in `[0, pi]`.
    pub fn new(phi: f64, theta: f64, psi: f64) -> Result<Self> {
        let ok = (0.0..TAU).contains(&phi) && (0.0..=PI).contains(&theta) && (0.0..TAU).contains(&psi);
        if !ok {
            return Err(Error::InvalidAngles(format!(
                "(phi, theta, psi) = ({phi}, {theta}, {psi})"
            )));
        }
        Ok(Self { phi, theta, psi })
    }

    pub const fn zero() -> Self {
        Self { phi: 0.0, theta: 0.0, psi: 0.0 }
    }

    /// Euler angles of the inverse rotation, folded back into range.
    pub fn inverse(&self) -> Self {
        Self {
            phi: (TAU - self.psi) % TAU,
            theta: self.theta,
            psi: (TAU - self.phi) % TAU,
        }
        .flip_theta()
    }

    // R(a, -t, b) = R(a + pi, t, b - pi) on the 3x3 level.
    fn flip_theta(self) -> Self {
        if self.theta == 0.0 {
            return self;
        }
        Self {
            phi: (self.phi + PI) % TAU,
            theta: self.theta,
            psi: (self.psi + PI) % TAU,
        }
    }
}

/// 3x3 rotation acting on the polarization vector when the state is
/// rotated by `rotation_unitary(e)`.
pub fn rotation_matrix(e: &EulerAngles) -> Matrix3<f64> {
    let (sf, cf) = e.phi.sin_cos();
    let (st, ct) = e.theta.sin_cos();
    let (sp, cp) = e.psi.sin_cos();
    Matrix3::new(
        ct * cp * cf - sp * sf,
        -ct * cf * sp - cp * sf,
        cf * st,
        cf * sp + ct * cp * sf,
        cp * cf - ct * sp * sf,
        st * sf,
        -cp * st,
        st * sp,
        ct,
    )
}

pub fn mueller_apply(m: &MuellerMatrix, s: &StokesVector) -> StokesVector {
    m.apply(s)
}

/// Retarder `[[1, 0], [0, R]]`.
pub fn retarder(e: &EulerAngles) -> MuellerMatrix {
    let r = rotation_matrix(e);
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(1, 1).copy_from(&r);
    MuellerMatrix(m)
}

fn check_transmittance(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidTransmittance { name, value })
    }
}

/// Diattenuator with intensity transmittances `q`, `r` along the axis with
/// polar angle `theta` and azimuth `psi` on the Poincare sphere.
pub fn diattenuator(q: f64, r: f64, theta: f64, psi: f64) -> Result<MuellerMatrix> {
    check_transmittance("q", q)?;
    check_transmittance("r", r)?;
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = psi.sin_cos();
    let g = (q * r).sqrt();
    let half = (q - r) / 2.0;
    let k = q + r - 2.0 * g;
    let c2p = (2.0 * psi).cos();
    let m00 = (q + r) / 2.0;
    let m01 = half * cp * st;
    let m02 = half * st * sp;
    let m03 = half * ct;
    let m11 = 0.25 * (q + r + 2.0 * g + (ct * ct - c2p * st * st) * (-k));
    let m12 = 0.25 * k * st * st * (2.0 * psi).sin();
    let m13 = 0.25 * k * cp * (2.0 * theta).sin();
    let m22 = 0.25 * (q + r + 2.0 * g + (ct * ct + c2p * st * st) * (-k));
    let m23 = 0.25 * k * (2.0 * theta).sin() * sp;
    let m33 = 0.25 * (q + r + 2.0 * g + (2.0 * theta).cos() * k);
    Ok(MuellerMatrix::from_rows([
        [m00, m01, m02, m03],
        [m01, m11, m12, m13],
        [m02, m12, m22, m23],
        [m03, m13, m23, m33],
    ]))
}

/// Depolarizer `[[1, 0], [0, m3]]` with `m3` symmetric and spectrum in `[-1, 1]`.
pub fn depolarizer_sym(m3: &Matrix3<f64>) -> Result<MuellerMatrix> {
    let asym = (m3 - m3.transpose()).amax();
    if asym > ALGEBRAIC_TOL {
        return Err(Error::InvalidDepolarizer(format!(
            "block not symmetric (asymmetry {asym:.3e})"
        )));
    }
    let eig = SymmetricEigen::new(*m3);
    if let Some(bad) = eig.eigenvalues.iter().find(|l| l.abs() > 1.0 + ALGEBRAIC_TOL) {
        return Err(Error::InvalidDepolarizer(format!(
            "eigenvalue {bad} outside [-1, 1]"
        )));
    }
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(1, 1).copy_from(m3);
    Ok(MuellerMatrix(m))
}

/// `m2 * m1`: `m1` acts first.
pub fn compose(m2: &MuellerMatrix, m1: &MuellerMatrix) -> MuellerMatrix {
    MuellerMatrix(m2.0 * m1.0)
}

pub(crate) fn check_convex_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.is_empty() || weights.len() != n {
        return Err(Error::InvalidConvexWeights(format!(
            "{} weights for {} terms",
            weights.len(),
            n
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return Err(Error::InvalidConvexWeights(format!("negative weight {w}")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > ALGEBRAIC_TOL {
        return Err(Error::InvalidConvexWeights(format!("weights sum to {sum}")));
    }
    Ok(())
}

pub fn convex_combine(weights: &[f64], ms: &[MuellerMatrix]) -> Result<MuellerMatrix> {
    check_convex_weights(weights, ms.len())?;
    Ok(MuellerMatrix(
        weights
            .iter()
            .zip(ms)
            .fold(Matrix4::zeros(), |acc, (w, m)| acc + m.0 * *w),
    ))
}

/// `M_mu,nu = 1/2 tr(sigma_mu J sigma_nu J^dagger)`.
pub fn jones_to_mueller(j: &JonesMatrix) -> MuellerMatrix {
    let jd = j.0.adjoint();
    let sig: [Matrix2<C64>; 4] = std::array::from_fn(pauli);
    MuellerMatrix(Matrix4::from_fn(|mu, nu| {
        0.5 * (sig[mu] * j.0 * sig[nu] * jd).trace().re
    }))
}
