//! Coherency representation, physicality and the Cloude / Lu-Chipman
//! decompositions.

use nalgebra::{Matrix2, Matrix3, Matrix4, SymmetricEigen, Vector3};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{jones_to_mueller, pauli, JonesMatrix, MuellerMatrix};
use crate::error::{Error, Result};

/// Hermitian 4x4 matrix `H = 1/4 sum m_mu,nu (sigma_mu (x) conj(sigma_nu))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoherencyMatrix(pub Matrix4<C64>);

impl CoherencyMatrix {
    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.hermitian_part()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        [ev[0], ev[1], ev[2], ev[3]]
    }

    /// Eigenpairs sorted by descending eigenvalue.
    pub fn eigen_descending(&self) -> Vec<(f64, nalgebra::Vector4<C64>)> {
        let eig = SymmetricEigen::new(self.hermitian_part());
        let mut pairs: Vec<(f64, nalgebra::Vector4<C64>)> = (0..4)
            .map(|k| (eig.eigenvalues[k], eig.eigenvectors.column(k).into_owned()))
            .collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        pairs
    }

    fn hermitian_part(&self) -> Matrix4<C64> {
        (self.0 + self.0.adjoint()) * C64::new(0.5, 0.0)
    }
}

fn basis_element(mu: usize, nu: usize) -> Matrix4<C64> {
    pauli(mu).kronecker(&pauli(nu).map(|z| z.conj()))
}

pub fn coherency(m: &MuellerMatrix) -> CoherencyMatrix {
    let mut h = Matrix4::<C64>::zeros();
    for mu in 0..4 {
        for nu in 0..4 {
            h += basis_element(mu, nu) * C64::new(0.25 * m[(mu, nu)], 0.0);
        }
    }
    CoherencyMatrix(h)
}

/// Exact inverse of [`coherency`]: `m_mu,nu = tr(H (sigma_mu (x) conj(sigma_nu)))`.
pub fn mueller_from_coherency(h: &CoherencyMatrix) -> MuellerMatrix {
    MuellerMatrix::from_matrix(Matrix4::from_fn(|mu, nu| {
        (h.0 * basis_element(mu, nu)).trace().re
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalityReport {
    pub physical: bool,
    /// Coherency eigenvalues, ascending.
    pub eigenvalues: [f64; 4],
    pub min_eigenvalue: f64,
    /// Spectral norm of the coherency matrix.
    pub coherency_norm: f64,
    pub tolerance: f64,
}

/// Physical iff the smallest coherency eigenvalue is `>= -tol * |H|`.
pub fn is_physical(m: &MuellerMatrix, tol: f64) -> PhysicalityReport {
    let eigenvalues = coherency(m).eigenvalues();
    let min_eigenvalue = eigenvalues[0];
    let coherency_norm = eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    PhysicalityReport {
        physical: min_eigenvalue >= -tol * coherency_norm,
        eigenvalues,
        min_eigenvalue,
        coherency_norm,
        tolerance: tol,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CloudeTerm {
    pub weight: f64,
    pub mueller: MuellerMatrix,
    /// Jones matrix whose Mueller matrix is `mueller` (defined up to a phase).
    pub jones: JonesMatrix,
}

/// Positive sum of at most four nondepolarizing matrices. Weights sum to
/// one and each term carries the input's `m00`.
pub fn cloude_decompose(m: &MuellerMatrix, tol: f64) -> Result<Vec<CloudeTerm>> {
    let report = is_physical(m, tol);
    if !report.physical {
        return Err(Error::NotPhysical { min_eigenvalue: report.min_eigenvalue });
    }
    let h = coherency(m);
    let kept: Vec<(f64, nalgebra::Vector4<C64>)> = h
        .eigen_descending()
        .into_iter()
        .filter(|(l, _)| *l > tol * report.coherency_norm)
        .collect();
    let total: f64 = kept.iter().map(|(l, _)| l).sum();
    Ok(kept
        .into_iter()
        .map(|(lambda, v)| {
            let weight = lambda / total;
            // H = 1/2 vec(J) vec(J)^dagger with vec index 2a + b
            let amp = C64::new((2.0 * total).sqrt(), 0.0);
            let j = Matrix2::new(v[0] * amp, v[1] * amp, v[2] * amp, v[3] * amp);
            let jones = JonesMatrix(j);
            CloudeTerm { weight, mueller: jones_to_mueller(&jones), jones }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Depolarization {
    Nondepolarizing,
    Depolarizing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub kind: Depolarization,
    /// Coherency eigenvalues, descending.
    pub eigenvalues: [f64; 4],
    /// `lambda_2 / lambda_1`.
    pub rank_ratio: f64,
    /// `|M^T G M - c G| / |M^T G M|`, `G = diag(1, -1, -1, -1)`.
    pub lorentz_residual: f64,
    pub tolerance: f64,
}

pub fn lorentz_residual(m: &MuellerMatrix) -> f64 {
    let g = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, -1.0, -1.0, -1.0));
    let mgm = m.matrix().transpose() * g * m.matrix();
    let scale = mgm.norm();
    if scale == 0.0 {
        return 0.0;
    }
    (mgm - g * mgm[(0, 0)]).norm() / scale
}

/// Nondepolarizing iff the coherency matrix has numerical rank one.
pub fn classify(m: &MuellerMatrix, tol: f64) -> Classification {
    let mut eigenvalues = coherency(m).eigenvalues();
    eigenvalues.reverse();
    let rank_ratio = if eigenvalues[0] > 0.0 { eigenvalues[1] / eigenvalues[0] } else { f64::INFINITY };
    let kind = if eigenvalues[1] <= tol * eigenvalues[0] {
        Depolarization::Nondepolarizing
    } else {
        Depolarization::Depolarizing
    };
    Classification {
        kind,
        eigenvalues,
        rank_ratio,
        lorentz_residual: lorentz_residual(m),
        tolerance: tol,
    }
}

/// Factors of `m = depolarizer * diattenuator * retarder`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LuChipman {
    pub depolarizer: MuellerMatrix,
    pub diattenuator: MuellerMatrix,
    pub retarder: MuellerMatrix,
    /// `|m - product|_F / |m|_F`.
    pub residual: f64,
}

/// Whatever could be computed before the decomposition hit a singular step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PartialLuChipman {
    pub diattenuator: Option<MuellerMatrix>,
    pub diattenuation: Option<f64>,
}

fn diattenuator_from_vector(m00: f64, d: &Vector3<f64>) -> MuellerMatrix {
    let dn = d.norm();
    let root = (1.0 - dn * dn).max(0.0).sqrt();
    let block = if dn > 0.0 {
        let u = d / dn;
        Matrix3::identity() * root + u * u.transpose() * (1.0 - root)
    } else {
        Matrix3::identity()
    };
    let mut md = Matrix4::zeros();
    md[(0, 0)] = 1.0;
    for i in 0..3 {
        md[(0, i + 1)] = d[i];
        md[(i + 1, 0)] = d[i];
    }
    md.fixed_view_mut::<3, 3>(1, 1).copy_from(&block);
    MuellerMatrix::from_matrix(md * m00)
}

fn embed3(block: &Matrix3<f64>, column: &Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(1, 1).copy_from(block);
    m.fixed_view_mut::<3, 1>(1, 0).copy_from(column);
    m
}

/// Polar decomposition in the order depolarizer * diattenuator * retarder.
///
/// Computed as the canonical `M_delta M_R M_D` split and then rewritten with
/// the diattenuation axis carried through the retarder, `M_R M_D M_R^T`.
pub fn lu_chipman(m: &MuellerMatrix) -> Result<LuChipman> {
    let m00 = m[(0, 0)];
    if !(m00 > 0.0) {
        return Err(Error::DegenerateDecomposition {
            reason: format!("m00 = {m00} is not positive"),
            partial: Box::default(),
        });
    }
    let d = Vector3::new(m[(0, 1)], m[(0, 2)], m[(0, 3)]) / m00;
    let dn = d.norm();
    let md = diattenuator_from_vector(m00, &d);
    if dn >= 1.0 - 1e-12 {
        return Err(Error::DegenerateDecomposition {
            reason: format!("diattenuation {dn} leaves a singular diattenuator"),
            partial: Box::new(PartialLuChipman { diattenuator: Some(md), diattenuation: Some(dn) }),
        });
    }
    let md_inv = md.matrix().try_inverse().ok_or_else(|| Error::DegenerateDecomposition {
        reason: "diattenuator not invertible".into(),
        partial: Box::new(PartialLuChipman { diattenuator: Some(md), diattenuation: Some(dn) }),
    })?;
    let mp = m.matrix() * md_inv;
    let m_prime: Matrix3<f64> = mp.fixed_view::<3, 3>(1, 1).into_owned();
    let p_delta: Vector3<f64> = mp.fixed_view::<3, 1>(1, 0).into_owned();

    // polar factor m' = m_delta m_r via SVD, m_delta symmetric
    let svd = m_prime.svd(true, true);
    let mut u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let sigma = svd.singular_values;
    let mut sign = 1.0;
    if (u * v_t).determinant() < 0.0 {
        // prefer flipping a null direction so that m_delta stays positive
        let (kmin, smin) = sigma.iter().enumerate().fold((0, f64::INFINITY), |acc, (k, s)| {
            if *s < acc.1 { (k, *s) } else { acc }
        });
        if smin <= 1e-12 * sigma.max() {
            let col = -u.column(kmin);
            u.set_column(kmin, &col);
        } else {
            sign = -1.0;
        }
    }
    let m_r = (u * v_t) * sign;
    let m_delta = u * Matrix3::from_diagonal(&sigma) * u.transpose() * sign;

    let depolarizer = MuellerMatrix::from_matrix(embed3(&m_delta, &p_delta));
    let retarder = MuellerMatrix::from_matrix(embed3(&m_r, &Vector3::zeros()));
    let diattenuator = diattenuator_from_vector(m00, &(m_r * d));

    let product = depolarizer.matrix() * diattenuator.matrix() * retarder.matrix();
    let residual = (m.matrix() - product).norm() / m.norm();
    Ok(LuChipman { depolarizer, diattenuator, retarder, residual })
}
