use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::fock::{DensityMatrix, FockBasis};
use crate::stokes::{jones_to_mueller, JonesMatrix, MuellerMatrix};

fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    })
}

/// Haar-distributed `n x n` unitary (QR of a Ginibre matrix with the
/// diagonal phases of `R` removed).
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<C64> {
    let qr = ginibre(n, n, rng).qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = DVector::from_fn(n, |k, _| {
        let d = r[(k, k)];
        if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) }
    });
    q * DMatrix::from_diagonal(&phases)
}

/// Haar-distributed SU(3) element, deterministic per seed.
pub fn haar_su3(seed: u64) -> DMatrix<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = haar_unitary(3, &mut rng);
    let det = u.determinant();
    u * C64::from_polar(1.0, -det.arg() / 3.0)
}

/// Mueller matrix of the upper-left 2x2 block of a Haar SU(3) sample.
pub fn random_nondepolarizing_mueller(seed: u64) -> MuellerMatrix {
    let u = haar_su3(seed);
    let j = nalgebra::Matrix2::new(u[(0, 0)], u[(0, 1)], u[(1, 0)], u[(1, 1)]);
    jones_to_mueller(&JonesMatrix(j))
}

/// Random mixed state of the given rank on the whole truncated space.
pub fn random_density_matrix<R: Rng + ?Sized>(basis: &FockBasis, rank: usize, rng: &mut R) -> DensityMatrix {
    let a = ginibre(basis.dim(), rank.max(1), rng);
    let m = &a * a.adjoint();
    let tr = m.trace();
    DensityMatrix::from_raw(basis, m / tr)
}
