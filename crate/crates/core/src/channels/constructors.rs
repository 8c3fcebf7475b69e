use nalgebra::{DMatrix, Matrix2, SymmetricEigen, Vector3};
use num_complex::Complex64 as C64;

use super::{compose_sequence, prune, Dilation, KrausChannel};
use crate::error::{Error, Result};
use crate::fock::{make_basis, mode_unitary_to_fock, rotation_unitary, FockBasis, FockOperator};
use crate::quadrature::{Measure, QuadratureGrid};
use crate::stokes::{EulerAngles, JonesMatrix};

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn to_dmatrix(m: &Matrix2<C64>) -> DMatrix<C64> {
    DMatrix::from_fn(2, 2, |r, k| m[(r, k)])
}

fn check_transmittance(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::InvalidTransmittance { name, value });
    }
    Ok(())
}

/// Single unitary Kraus operator.
pub fn unitary_channel(u: FockOperator, provenance: impl Into<String>) -> Result<KrausChannel> {
    let deviation = u.unitarity_deviation();
    if !(deviation <= 1e-10) {
        return Err(Error::NotUnitary { deviation });
    }
    let basis = u.basis().clone();
    Ok(KrausChannel::new(&basis, vec![u], provenance)?.with_dilation(Dilation::NumberConserving))
}

pub fn retarder_channel(e: &EulerAngles, basis: &FockBasis) -> Result<KrausChannel> {
    let u = rotation_unitary(basis, e)?;
    unitary_channel(u, format!("retarder(phi={}, theta={}, psi={})", e.phi, e.theta, e.psi))
}

/// `K_l = <l|_v U |0>_v` for a unitary on (L, R, v) with `v` at `ancilla_mode`.
pub fn channel_from_ancilla_unitary(u_fock: &FockOperator, ancilla_mode: usize) -> Result<KrausChannel> {
    let big = u_fock.basis();
    if big.n_modes() != 3 {
        return Err(Error::UnsupportedModeCount(big.n_modes()));
    }
    if ancilla_mode > 2 {
        return Err(Error::BasisMismatch(format!("ancilla mode {ancilla_mode} of 3")));
    }
    let deviation = u_fock.unitarity_deviation();
    if !(deviation <= 1e-10) {
        return Err(Error::NotUnitary { deviation });
    }
    let small = make_basis(2, big.n_max())?;
    let embed = |sys: &[usize], anc: usize| {
        let mut occ = sys.to_vec();
        occ.insert(ancilla_mode, anc);
        big.index_of(&occ)
    };
    let u = u_fock.matrix();
    let mut ops = Vec::with_capacity(big.n_max() + 1);
    for l in 0..=big.n_max() {
        let k = DMatrix::from_fn(small.dim(), small.dim(), |row, col| {
            match (embed(small.state(row), l), embed(small.state(col), 0)) {
                (Some(i), Some(j)) => u[(i, j)],
                _ => C64::new(0.0, 0.0),
            }
        });
        ops.push(FockOperator::new(&small, k)?);
    }
    let mut ops = prune(ops);
    if ops.is_empty() {
        ops.push(FockOperator::zeros(&small));
    }
    Ok(KrausChannel::new(&small, ops, "ancilla dilation")?.with_dilation(if u_fock.is_number_conserving(1e-13) {
        Dilation::NumberConserving
    } else {
        Dilation::Unknown
    }))
}

/// Embeds a 2x2 block as `block (+) 1` on (L, R, v).
fn embed_block(block: &DMatrix<C64>) -> DMatrix<C64> {
    let mut u = DMatrix::<C64>::identity(3, 3);
    u.view_mut((0, 0), (2, 2)).copy_from(block);
    u
}

/// Beam splitter coupling one system mode to a vacuum ancilla with
/// intensity transmission `t`.
fn loss_mode_matrix(mode: usize, t: f64) -> DMatrix<C64> {
    let (a, b) = (t.sqrt(), (1.0 - t).sqrt());
    let mut u = DMatrix::<C64>::identity(3, 3);
    u[(mode, mode)] = c(a);
    u[(mode, 2)] = c(-b);
    u[(2, mode)] = c(b);
    u[(2, 2)] = c(a);
    u
}

fn su3_stage(u3: &DMatrix<C64>, basis: &FockBasis, provenance: String) -> Result<KrausChannel> {
    let big = make_basis(3, basis.n_max())?;
    let f = mode_unitary_to_fock(&big, u3)?;
    let ch = channel_from_ancilla_unitary(&f, 2)?;
    Ok(KrausChannel { provenance, ..ch })
}

/// Independent losses `q` on L and `r` on R, each into its own vacuum mode.
pub fn loss_channel(q: f64, r: f64, basis: &FockBasis) -> Result<KrausChannel> {
    check_transmittance("q", q)?;
    check_transmittance("r", r)?;
    let l = su3_stage(&loss_mode_matrix(0, q), basis, format!("loss_L(q={q})"))?;
    let rr = su3_stage(&loss_mode_matrix(1, r), basis, format!("loss_R(r={r})"))?;
    compose_sequence(&[l, rr])
}

/// Frame rotation carrying the circular basis onto the diattenuation axis
/// `(sin theta cos psi, sin theta sin psi, cos theta)`.
fn axis_frame(theta: f64, psi: f64) -> DMatrix<C64> {
    let (s, co) = (theta / 2.0).sin_cos();
    DMatrix::from_row_slice(
        2,
        2,
        &[c(co), -C64::from_polar(s, -psi), C64::from_polar(s, psi), c(co)],
    )
}

/// Jones matrix of the diattenuator with eigen-transmittances `q` (along
/// the axis) and `r` (against it).
pub fn diattenuator_jones(q: f64, r: f64, theta: f64, psi: f64) -> Result<JonesMatrix> {
    check_transmittance("q", q)?;
    check_transmittance("r", r)?;
    let w = axis_frame(theta, psi);
    let d = DMatrix::from_row_slice(2, 2, &[c(q.sqrt()), c(0.0), c(0.0), c(r.sqrt())]);
    let j = &w * d * w.adjoint();
    Ok(JonesMatrix(Matrix2::new(j[(0, 0)], j[(0, 1)], j[(1, 0)], j[(1, 1)])))
}

/// Two beam splitters into two vacuum ancillas, inside the axis frame:
/// `W`, loss on L, loss on R, `W^dagger` (in order of application, reversed).
pub fn diattenuator_channel_two_vacuum(q: f64, r: f64, theta: f64, psi: f64, basis: &FockBasis) -> Result<KrausChannel> {
    check_transmittance("q", q)?;
    check_transmittance("r", r)?;
    let w = axis_frame(theta, psi);
    let into = unitary_channel(mode_unitary_to_fock(basis, &w.adjoint())?, "frame^dagger")?;
    let out = unitary_channel(mode_unitary_to_fock(basis, &w)?, "frame")?;
    let loss = loss_channel(q, r, basis)?;
    let ch = compose_sequence(&[into, loss, out])?;
    Ok(KrausChannel { provenance: format!("diattenuator2vac(q={q}, r={r}, theta={theta}, psi={psi})"), ..ch })
}

/// The same diattenuator as two single-ancilla SU(3) channels, each
/// attenuating one eigen-polarization.
pub fn diattenuator_channel_su3_cascade(q: f64, r: f64, theta: f64, psi: f64, basis: &FockBasis) -> Result<KrausChannel> {
    check_transmittance("q", q)?;
    check_transmittance("r", r)?;
    let w = embed_block(&axis_frame(theta, psi));
    let stage = |mode: usize, t: f64| &w * loss_mode_matrix(mode, t) * w.adjoint();
    let first = nondepolarizing_channel_su3(&stage(0, q), basis)?;
    let second = nondepolarizing_channel_su3(&stage(1, r), basis)?;
    let ch = compose_sequence(&[first, second])?;
    Ok(KrausChannel { provenance: format!("su3_cascade(q={q}, r={r}, theta={theta}, psi={psi})"), ..ch })
}

/// Completes a 2x2 block to a special unitary 3x3 matrix.
///
/// Possible iff `1 - B B^dagger` is positive with rank at most one, which
/// forces a singular value of `B` equal to one.
pub fn complete_su3(block: &Matrix2<C64>) -> Result<DMatrix<C64>> {
    let b = to_dmatrix(block);
    let sv = b.clone().svd(false, false).singular_values;
    let singular_values = [sv[0].max(sv[1]), sv[0].min(sv[1])];
    let gap = DMatrix::<C64>::identity(2, 2) - &b * b.adjoint();
    let eig = SymmetricEigen::new(gap);
    let (lo, hi) = if eig.eigenvalues[0] <= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let (l_lo, l_hi) = (eig.eigenvalues[lo], eig.eigenvalues[hi]);
    let residual = l_lo.abs().max((-l_hi).max(0.0));
    if residual > 1e-10 {
        return Err(Error::NotCompletable { residual, singular_values });
    }
    let col = eig.eigenvectors.column(hi) * c(l_hi.max(0.0).sqrt());
    let r0 = Vector3::new(b[(0, 0)], b[(0, 1)], col[0]);
    let r1 = Vector3::new(b[(1, 0)], b[(1, 1)], col[1]);
    let r2 = r0.cross(&r1).map(|z| z.conj());
    let mut u = DMatrix::<C64>::zeros(3, 3);
    for k in 0..3 {
        u[(0, k)] = r0[k];
        u[(1, k)] = r1[k];
        u[(2, k)] = r2[k];
    }
    let det = u.determinant();
    let phase = C64::from_polar(1.0, -det.arg());
    for k in 0..3 {
        u[(2, k)] *= phase;
    }
    Ok(u)
}

/// Channel of a passive three-mode unitary with a vacuum ancilla.
pub fn nondepolarizing_channel_su3(u3: &DMatrix<C64>, basis: &FockBasis) -> Result<KrausChannel> {
    if basis.n_modes() != 2 {
        return Err(Error::UnsupportedModeCount(basis.n_modes()));
    }
    su3_stage(u3, basis, "su3".into())
}

/// Realizes any contraction `J` through its SVD: unitary, two losses, unitary.
pub fn jones_channel(j: &JonesMatrix, basis: &FockBasis) -> Result<KrausChannel> {
    let m = to_dmatrix(&j.0);
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.expect("svd u"), svd.v_t.expect("svd v_t"));
    let s = svd.singular_values;
    for (k, sk) in s.iter().enumerate() {
        if *sk > 1.0 + 1e-12 {
            return Err(Error::InvalidTransmittance { name: if k == 0 { "sigma_0" } else { "sigma_1" }, value: sk * sk });
        }
    }
    let t = |x: f64| (x * x).min(1.0);
    let into = unitary_channel(mode_unitary_to_fock(basis, &v_t)?, "svd_v^dagger")?;
    let loss = loss_channel(t(s[0]), t(s[1]), basis)?;
    let out = unitary_channel(mode_unitary_to_fock(basis, &u)?, "svd_u")?;
    let ch = compose_sequence(&[into, loss, out])?;
    Ok(KrausChannel { provenance: "jones".into(), ..ch })
}

/// `{sqrt(p) 1} U {sqrt((1 - p) w_k) R(e_k)}` over a Haar grid.
pub fn haar_depolarizer(p: f64, grid: &QuadratureGrid, basis: &FockBasis) -> Result<KrausChannel> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    if grid.measure != Measure::Haar {
        return Err(Error::InvalidGrid("Haar depolarizer needs a Haar grid".into()));
    }
    let mut ops = Vec::with_capacity(grid.len() + 1);
    if p > 0.0 {
        ops.push(FockOperator::identity(basis).scale_re(p.sqrt()));
    }
    if p < 1.0 {
        for (e, w) in &grid.nodes {
            if *w > 0.0 {
                ops.push(rotation_unitary(basis, e)?.scale_re(((1.0 - p) * w).sqrt()));
            }
        }
    }
    Ok(KrausChannel::new(basis, ops, format!("haar_depolarizer(p={p}, nodes={})", grid.len()))?
        .with_dilation(if p == 1.0 { Dilation::NumberConserving } else { Dilation::NonPhotonic }))
}

/// All light to L: `K_l = sum_M sum_m |M,0><m,M-m| e^{2 pi i l m / L} / sqrt(L)`.
///
/// Trace preserving only while `n_max < L`.
pub fn polarizer_channel_finite(l: usize, basis: &FockBasis) -> Result<KrausChannel> {
    if basis.n_max() >= l {
        return Err(Error::TruncationViolation(format!(
            "finite polarizer with L = {l} is complete only for n_max <= {}, basis has {}",
            l.saturating_sub(1),
            basis.n_max()
        )));
    }
    polarizer_channel_finite_unchecked(l, basis)
}

/// [`polarizer_channel_finite`] without the cutoff check.
pub fn polarizer_channel_finite_unchecked(l: usize, basis: &FockBasis) -> Result<KrausChannel> {
    if basis.n_modes() != 2 {
        return Err(Error::UnsupportedModeCount(basis.n_modes()));
    }
    if l == 0 {
        return Err(Error::InvalidCutoff(l));
    }
    let norm = 1.0 / (l as f64).sqrt();
    let ops = (1..=l)
        .map(|idx| {
            let mut k = DMatrix::<C64>::zeros(basis.dim(), basis.dim());
            for (col, occ) in basis.states().iter().enumerate() {
                let total = occ[0] + occ[1];
                let row = basis.index_of(&[total, 0]).expect("|M,0> in basis");
                let angle = std::f64::consts::TAU * (idx * occ[0]) as f64 / l as f64;
                k[(row, col)] = C64::from_polar(norm, angle);
            }
            FockOperator::new(basis, k)
        })
        .collect::<Result<Vec<_>>>()?;
    KrausChannel::new(basis, ops, format!("polarizer_finite(L={l})"))
}

#[cfg(test)]
mod tests {
    use super::super::{apply, extract_mueller, is_cptp, EXTRACTION_TOL, NumberBehavior};
    use super::*;
    use crate::fock::DensityMatrix;
    use crate::stokes::{diattenuator, jones_to_mueller, retarder, MuellerMatrix};
    use std::f64::consts::PI;

    #[test]
    fn ancilla_identity_gives_identity() {
        let big = make_basis(3, 3).unwrap();
        let ch = channel_from_ancilla_unitary(&FockOperator::identity(&big), 2).unwrap();
        assert_eq!(ch.len(), 1);
        let small = make_basis(2, 3).unwrap();
        assert_eq!(ch.kraus_ops()[0], FockOperator::identity(&small));
    }

    #[test]
    fn decoupled_ancilla_reproduces_retarder() {
        let b = make_basis(2, 3).unwrap();
        let e = EulerAngles::new(1.1, 0.6, 2.9).unwrap();
        let u3 = embed_block(&crate::fock::rotation_mode_matrix(&e));
        let ch = nondepolarizing_channel_su3(&u3, &b).unwrap();
        assert_eq!(ch.len(), 1);
        let r = rotation_unitary(&b, &e).unwrap();
        assert!((&ch.kraus_ops()[0] - &r).max_abs() < 1e-12);
    }

    #[test]
    fn ancilla_rejects_nonunitary() {
        let big = make_basis(3, 1).unwrap();
        let op = FockOperator::identity(&big).scale_re(0.5);
        assert!(matches!(channel_from_ancilla_unitary(&op, 2), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn two_vacuum_diattenuator_examples() {
        let b = make_basis(2, 3).unwrap();
        let id = diattenuator_channel_two_vacuum(1.0, 1.0, 0.4, 0.2, &b).unwrap();
        let m = extract_mueller(&id, EXTRACTION_TOL).unwrap().mueller;
        assert!(m.max_abs_diff(&MuellerMatrix::identity()) < 1e-12);

        let (q, r, t, p) = (0.81, 0.25, PI / 3.0, PI / 5.0);
        let ch = diattenuator_channel_two_vacuum(q, r, t, p, &b).unwrap();
        assert_eq!(ch.number_behavior(), NumberBehavior::Nonincreasing);
        assert!(is_cptp(&ch, 1e-12).passed);
        let m = extract_mueller(&ch, EXTRACTION_TOL).unwrap().mueller;
        assert!(m.max_abs_diff(&diattenuator(q, r, t, p).unwrap()) < 1e-12);

        let ch = diattenuator_channel_two_vacuum(1.0, 0.0, 0.0, 0.0, &b).unwrap();
        let out = apply(&ch, &DensityMatrix::basis_state(&b, &[1, 1]).unwrap()).unwrap();
        let expected = DensityMatrix::basis_state(&b, &[1, 0]).unwrap();
        assert!((out.matrix() - expected.matrix()).camax() < 1e-14);

        assert!(matches!(
            diattenuator_channel_two_vacuum(1.2, 0.5, 0.0, 0.0, &b),
            Err(Error::InvalidTransmittance { .. })
        ));
    }

    #[test]
    fn diattenuator_jones_matches_closed_form() {
        let j = diattenuator_jones(0.3, 0.9, 2.2, 5.1).unwrap();
        let m = jones_to_mueller(&j);
        assert!(m.max_abs_diff(&diattenuator(0.3, 0.9, 2.2, 5.1).unwrap()) < 1e-15);
    }

    #[test]
    fn su3_cascade_matches_two_vacuum() {
        let b = make_basis(2, 3).unwrap();
        let a = diattenuator_channel_su3_cascade(0.5, 0.1, 1.0, 2.0, &b).unwrap();
        let v = diattenuator_channel_two_vacuum(0.5, 0.1, 1.0, 2.0, &b).unwrap();
        let ma = extract_mueller(&a, EXTRACTION_TOL).unwrap().mueller;
        let mv = extract_mueller(&v, EXTRACTION_TOL).unwrap().mueller;
        assert!(ma.max_abs_diff(&mv) < 1e-12);
        let rho = DensityMatrix::basis_state(&b, &[2, 1]).unwrap();
        let diff = apply(&a, &rho).unwrap().matrix() - apply(&v, &rho).unwrap().matrix();
        assert!(diff.camax() < 1e-12);
    }

    #[test]
    fn su3_completion() {
        // one unit singular value: completable
        let e = EulerAngles::new(0.5, 1.0, 1.5).unwrap();
        let j = diattenuator_jones(1.0, 0.36, 0.7, 0.1).unwrap().0 * JonesMatrix::rotation(&e).0;
        let u = complete_su3(&j).unwrap();
        assert!((u.adjoint() * &u - DMatrix::<C64>::identity(3, 3)).camax() < 1e-13);
        assert!((u.determinant() - c(1.0)).norm() < 1e-13);
        assert!((u.view((0, 0), (2, 2)) - to_dmatrix(&j)).camax() < 1e-15);

        // two singular values below one: impossible
        let j = diattenuator_jones(0.81, 0.25, 1.0, 0.6).unwrap();
        match complete_su3(&j.0) {
            Err(Error::NotCompletable { singular_values, .. }) => {
                assert!((singular_values[0] - 0.9).abs() < 1e-12);
                assert!((singular_values[1] - 0.5).abs() < 1e-12);
            }
            other => panic!("expected NotCompletable, got {other:?}"),
        }
    }

    #[test]
    fn jones_channel_realizes_contractions() {
        let b = make_basis(2, 2).unwrap();
        let j = JonesMatrix(Matrix2::new(c(0.3), C64::new(0.1, 0.4), C64::new(-0.2, 0.1), C64::new(0.0, 0.5)));
        let ch = jones_channel(&j, &b).unwrap();
        assert!(is_cptp(&ch, 1e-12).passed);
        let m = extract_mueller(&ch, EXTRACTION_TOL).unwrap().mueller;
        assert!(m.max_abs_diff(&jones_to_mueller(&j)) < 1e-12);
        let big = JonesMatrix(Matrix2::new(c(2.0), c(0.0), c(0.0), c(1.0)));
        assert!(jones_channel(&big, &b).is_err());
    }

    #[test]
    fn haar_depolarizer_examples() {
        let b = make_basis(2, 3).unwrap();
        let g = QuadratureGrid::haar_default();
        let id = haar_depolarizer(1.0, &g, &b).unwrap();
        assert_eq!(id.len(), 1);
        for p in [0.0, 0.37] {
            let ch = haar_depolarizer(p, &g, &b).unwrap();
            assert!(is_cptp(&ch, 1e-12).passed);
            let m = extract_mueller(&ch, EXTRACTION_TOL).unwrap().mueller;
            assert!(m.max_abs_diff(&MuellerMatrix::from_diagonal([1.0, p, p, p])) < 1e-12);
        }
        assert!(matches!(haar_depolarizer(1.5, &g, &b), Err(Error::InvalidProbability(_))));
        let flat = QuadratureGrid::flat(4, 4, 4).unwrap();
        assert!(matches!(haar_depolarizer(0.5, &flat, &b), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn haar_depolarizer_is_rotation_isotropic() {
        let b = make_basis(2, 2).unwrap();
        let dep = haar_depolarizer(0.2, &QuadratureGrid::haar_default(), &b).unwrap();
        let e = EulerAngles::new(2.0, 1.3, 0.4).unwrap();
        let r = retarder_channel(&e, &b).unwrap();
        let rinv = retarder_channel(&e.inverse(), &b).unwrap();
        let conj = compose_sequence(&[rinv, dep.clone(), r]).unwrap();
        let m0 = extract_mueller(&dep, EXTRACTION_TOL).unwrap().mueller;
        let m1 = extract_mueller(&conj, EXTRACTION_TOL).unwrap().mueller;
        assert!(m0.max_abs_diff(&m1) < 1e-10);
        assert!(m1.max_abs_diff(&retarder(&EulerAngles::zero()).scale(1.0)) > 0.5);
    }

    #[test]
    fn finite_polarizer_examples() {
        let b = make_basis(2, 5).unwrap();
        let ch = polarizer_channel_finite(6, &b).unwrap();
        assert!(is_cptp(&ch, 1e-12).passed);
        let out = apply(&ch, &DensityMatrix::basis_state(&b, &[0, 1]).unwrap()).unwrap();
        let want = DensityMatrix::basis_state(&b, &[1, 0]).unwrap();
        assert!((out.matrix() - want.matrix()).camax() < 1e-14);
        let out = apply(&ch, &DensityMatrix::basis_state(&b, &[2, 3]).unwrap()).unwrap();
        let want = DensityMatrix::basis_state(&b, &[5, 0]).unwrap();
        assert!((out.matrix() - want.matrix()).camax() < 1e-14);
        let m = extract_mueller(&ch, EXTRACTION_TOL).unwrap().mueller;
        let all_to_l = MuellerMatrix::from_rows([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
        ]);
        assert!(m.max_abs_diff(&all_to_l) < 1e-12);

        let big = make_basis(2, 6).unwrap();
        assert!(matches!(polarizer_channel_finite(6, &big), Err(Error::TruncationViolation(_))));
        let report = is_cptp(&polarizer_channel_finite_unchecked(6, &big).unwrap(), 1e-10);
        assert!(!report.passed);
        assert!((report.deviation - 1.0).abs() < 1e-12);
    }
}
