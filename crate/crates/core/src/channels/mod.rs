//! Kraus channels on the truncated two-mode Fock space.
//!
//! Every channel carries a validity cutoff: operator identities and
//! completeness are evaluated on states with at most `valid_n_max`
//! photons. For number-nonincreasing channels this block is closed under
//! every Kraus operator, so all checks below are exact rather than
//! truncation-approximate.

mod constructors;
mod random;
mod weight;

pub use constructors::{
    channel_from_ancilla_unitary, complete_su3, diattenuator_channel_su3_cascade,
    diattenuator_channel_two_vacuum, diattenuator_jones, haar_depolarizer, jones_channel,
    loss_channel, nondepolarizing_channel_su3, polarizer_channel_finite,
    polarizer_channel_finite_unchecked, retarder_channel, unitary_channel,
};
pub use random::{haar_su3, haar_unitary, random_density_matrix, random_nondepolarizing_mueller};
pub use weight::{
    scan_weight_positivity, weight_function, weighted_rotation_channel, weighted_rotation_mueller,
    weighted_rotation_mueller_quadrature, PositivityReport, PositivityViolation, WeightFunctionSpec,
    WeightedRotation,
};

use nalgebra::{DMatrix, Matrix4, Vector4};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{stokes_operators, DensityMatrix, FockBasis, FockOperator};
use crate::stokes::{check_convex_weights, classify, Classification, MuellerMatrix};

/// Default relative residual accepted by [`extract_mueller`].
pub const EXTRACTION_TOL: f64 = 1e-8;
/// Kraus operators with Frobenius norm below this are dropped.
pub const PRUNE_TOL: f64 = 1e-14;
/// Default tolerance for [`is_cptp`] verdicts.
pub const CPTP_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumberBehavior {
    Conserving,
    Nonincreasing,
    Other,
}

impl NumberBehavior {
    fn infer(ops: &[FockOperator]) -> Self {
        let tol = 1e-13;
        if ops.iter().all(|k| k.is_number_conserving(tol)) {
            NumberBehavior::Conserving
        } else if ops.iter().all(|k| k.is_number_nonincreasing(tol)) {
            NumberBehavior::Nonincreasing
        } else {
            NumberBehavior::Other
        }
    }

    fn join(self, other: Self) -> Self {
        use NumberBehavior::*;
        match (self, other) {
            (Conserving, Conserving) => Conserving,
            (Other, _) | (_, Other) => Other,
            _ => Nonincreasing,
        }
    }
}

impl std::fmt::Display for NumberBehavior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            NumberBehavior::Conserving => "conserving",
            NumberBehavior::Nonincreasing => "nonincreasing",
            NumberBehavior::Other => "other",
        };
        f.write_str(s)
    }
}

/// What is known about a unitary dilation of the channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dilation {
    /// A photon-number-conserving unitary on system plus vacuum ancillas.
    NumberConserving,
    /// Only a continuum-ancilla or otherwise non-photonic dilation is known.
    NonPhotonic,
    Unknown,
}

impl Dilation {
    fn join(self, other: Self) -> Self {
        use Dilation::*;
        match (self, other) {
            (NumberConserving, NumberConserving) => NumberConserving,
            (Unknown, _) | (_, Unknown) => Unknown,
            _ => NonPhotonic,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KrausChannel {
    basis: FockBasis,
    ops: Vec<FockOperator>,
    number_behavior: NumberBehavior,
    dilation: Dilation,
    provenance: String,
    valid_n_max: usize,
}

impl KrausChannel {
    /// Channel on a two-mode basis; number behavior is inferred from the
    /// operators and the validity cutoff is the basis cutoff.
    pub fn new(basis: &FockBasis, ops: Vec<FockOperator>, provenance: impl Into<String>) -> Result<Self> {
        if basis.n_modes() != 2 {
            return Err(Error::UnsupportedModeCount(basis.n_modes()));
        }
        if ops.is_empty() {
            return Err(Error::BasisMismatch("a channel needs at least one Kraus operator".into()));
        }
        if let Some(k) = ops.iter().find(|k| k.basis() != basis) {
            return Err(Error::BasisMismatch(format!("Kraus operator on {:?}, channel on {basis:?}", k.basis())));
        }
        Ok(Self {
            number_behavior: NumberBehavior::infer(&ops),
            basis: basis.clone(),
            ops,
            dilation: Dilation::Unknown,
            provenance: provenance.into(),
            valid_n_max: basis.n_max(),
        })
    }

    pub fn identity(basis: &FockBasis) -> Result<Self> {
        Ok(Self::new(basis, vec![FockOperator::identity(basis)], "identity")?.with_dilation(Dilation::NumberConserving))
    }

    pub fn with_dilation(mut self, dilation: Dilation) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn with_valid_n_max(mut self, n: usize) -> Self {
        self.valid_n_max = n.min(self.basis.n_max());
        self
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn kraus_ops(&self) -> &[FockOperator] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn number_behavior(&self) -> NumberBehavior {
        self.number_behavior
    }

    pub fn dilation(&self) -> Dilation {
        self.dilation
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn valid_n_max(&self) -> usize {
        self.valid_n_max
    }
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

/// `sum_l K_l rho K_l^dagger`.
pub fn apply(ch: &KrausChannel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if rho.basis() != ch.basis() {
        return Err(Error::BasisMismatch(format!("state on {:?}, channel on {:?}", rho.basis(), ch.basis())));
    }
    let support = rho.max_photon_number(PRUNE_TOL);
    if support > ch.valid_n_max {
        return Err(Error::TruncationViolation(format!(
            "state carries {support} photons, channel valid up to {}",
            ch.valid_n_max
        )));
    }
    let r = rho.matrix();
    let out = ch
        .ops
        .iter()
        .fold(DMatrix::<C64>::zeros(r.nrows(), r.ncols()), |acc, k| {
            acc + k.matrix() * r * k.matrix().adjoint()
        });
    Ok(DensityMatrix::from_raw(ch.basis(), out))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CptpReport {
    pub passed: bool,
    /// `max |sum K^dagger K - 1|` on the validity block.
    pub deviation: f64,
    pub tolerance: f64,
    pub valid_n_max: usize,
}

pub fn is_cptp(ch: &KrausChannel, tol: f64) -> CptpReport {
    let d = ch.basis.dim_up_to(ch.valid_n_max);
    let full = ch.basis.dim();
    let sum = ch
        .ops
        .iter()
        .fold(DMatrix::<C64>::zeros(full, full), |acc, k| acc + k.matrix().adjoint() * k.matrix());
    let block = sum.view((0, 0), (d, d)).into_owned() - DMatrix::<C64>::identity(d, d);
    let deviation = max_abs(&block);
    CptpReport { passed: deviation <= tol, deviation, tolerance: tol, valid_n_max: ch.valid_n_max }
}

fn prune(ops: Vec<FockOperator>) -> Vec<FockOperator> {
    ops.into_iter().filter(|k| k.frobenius_norm() >= PRUNE_TOL).collect()
}

/// `second` after `first`, Kraus set `{B_a A_b}`.
pub fn compose_channels(second: &KrausChannel, first: &KrausChannel) -> Result<KrausChannel> {
    if second.basis != first.basis {
        return Err(Error::BasisMismatch(format!("{:?} vs {:?}", second.basis, first.basis)));
    }
    let mut ops = Vec::with_capacity(second.len() * first.len());
    for b in &second.ops {
        for a in &first.ops {
            ops.push(b * a);
        }
    }
    let mut ops = prune(ops);
    if ops.is_empty() {
        ops.push(FockOperator::zeros(&first.basis));
    }
    Ok(KrausChannel {
        basis: first.basis.clone(),
        ops,
        number_behavior: second.number_behavior.join(first.number_behavior),
        dilation: second.dilation.join(first.dilation),
        provenance: format!("compose({}, {})", second.provenance, first.provenance),
        valid_n_max: second.valid_n_max.min(first.valid_n_max),
    })
}

/// Channels applied in the given order.
pub fn compose_sequence(chs: &[KrausChannel]) -> Result<KrausChannel> {
    let (first, rest) = chs
        .split_first()
        .ok_or_else(|| Error::BasisMismatch("empty channel sequence".into()))?;
    rest.iter().try_fold(first.clone(), |acc, ch| compose_channels(ch, &acc))
}

/// Kraus set `{sqrt(p_i) K_l^(i)}`.
pub fn convex_combine_channels(weights: &[f64], chs: &[KrausChannel]) -> Result<KrausChannel> {
    check_convex_weights(weights, chs.len())?;
    let basis = chs[0].basis.clone();
    if let Some(ch) = chs.iter().find(|c| c.basis != basis) {
        return Err(Error::BasisMismatch(format!("{:?} vs {basis:?}", ch.basis)));
    }
    let mut ops = Vec::new();
    let mut behavior = NumberBehavior::Conserving;
    let mut dilation: Option<Dilation> = None;
    let mut parts = Vec::new();
    for (w, ch) in weights.iter().zip(chs) {
        if *w == 0.0 {
            continue;
        }
        ops.extend(ch.ops.iter().map(|k| k.scale_re(w.sqrt())));
        behavior = behavior.join(ch.number_behavior);
        dilation = Some(dilation.map_or(ch.dilation, |d| d.join(ch.dilation)));
        parts.push(format!("{w}:{}", ch.provenance));
    }
    // a genuine mixture has no photon-conserving dilation on record
    let dilation = match dilation {
        Some(d) if parts.len() == 1 => d,
        _ => Dilation::Unknown,
    };
    Ok(KrausChannel {
        ops: prune(ops),
        basis,
        number_behavior: behavior,
        dilation,
        provenance: format!("convex({})", parts.join(", ")),
        valid_n_max: chs.iter().map(|c| c.valid_n_max).min().unwrap_or(0),
    })
}

/// `K'_l' = sum_l u_l'l K_l`, padding the Kraus list with zeros to `dim u`.
pub fn remix_kraus(ch: &KrausChannel, u: &DMatrix<C64>) -> Result<KrausChannel> {
    let n = u.nrows();
    if u.ncols() != n || n < ch.len() {
        return Err(Error::BasisMismatch(format!(
            "{}x{} remix matrix for {} Kraus operators",
            u.nrows(),
            u.ncols(),
            ch.len()
        )));
    }
    let deviation = max_abs(&(u.adjoint() * u - DMatrix::<C64>::identity(n, n)));
    if !(deviation <= 1e-12) {
        return Err(Error::NotUnitary { deviation });
    }
    let ops = (0..n)
        .map(|row| {
            ch.ops.iter().enumerate().fold(FockOperator::zeros(&ch.basis), |acc, (l, k)| {
                &acc + &k.scale(u[(row, l)])
            })
        })
        .collect();
    Ok(KrausChannel { ops, provenance: format!("remix({})", ch.provenance), ..ch.clone() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuellerExtraction {
    pub mueller: MuellerMatrix,
    /// `|S' - M S| / |S'|` over all four components.
    pub residual: f64,
    /// Per-component relative residuals.
    pub component_residuals: [f64; 4],
}

fn hs_real(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Least-squares fit of the Heisenberg images `S'_mu = sum K^dagger S_mu K`
/// onto the Stokes operators under the Hilbert-Schmidt inner product.
pub fn extract_mueller(ch: &KrausChannel, tol: f64) -> Result<MuellerExtraction> {
    if ch.number_behavior == NumberBehavior::Other {
        return Err(Error::UnsupportedChannel(ch.number_behavior.to_string()));
    }
    let d = ch.basis.dim_up_to(ch.valid_n_max);
    let s = stokes_operators(&ch.basis)?;
    let s_block: Vec<DMatrix<C64>> = s.all().iter().map(|op| op.truncated_block(ch.valid_n_max)).collect();
    let images: Vec<DMatrix<C64>> = s
        .all()
        .iter()
        .map(|op| {
            ch.ops
                .iter()
                .fold(DMatrix::<C64>::zeros(ch.basis.dim(), ch.basis.dim()), |acc, k| {
                    acc + k.matrix().adjoint() * op.matrix() * k.matrix()
                })
                .view((0, 0), (d, d))
                .into_owned()
        })
        .collect();
    let gram = Matrix4::from_fn(|a, b| hs_real(&s_block[a], &s_block[b]));
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::BasisMismatch("Stokes operators are degenerate on this basis".into()))?;
    let mut m = Matrix4::zeros();
    let mut component_residuals = [0.0; 4];
    let (mut res_total, mut norm_total) = (0.0, 0.0);
    let mut worst = (0usize, -1.0f64);
    for mu in 0..4 {
        let rhs = Vector4::from_fn(|nu, _| hs_real(&s_block[nu], &images[mu]));
        let row = chol.solve(&rhs);
        m.set_row(mu, &row.transpose());
        let fit = (0..4).fold(DMatrix::<C64>::zeros(d, d), |acc, nu| acc + &s_block[nu] * C64::new(row[nu], 0.0));
        let res = (&images[mu] - fit).norm_squared();
        let nrm = images[mu].norm_squared();
        component_residuals[mu] = if nrm > 0.0 { (res / nrm).sqrt() } else { res.sqrt() };
        if component_residuals[mu] > worst.1 {
            worst = (mu, component_residuals[mu]);
        }
        res_total += res;
        norm_total += nrm;
    }
    let residual = if norm_total > 0.0 { (res_total / norm_total).sqrt() } else { res_total.sqrt() };
    if !(residual <= tol) {
        return Err(Error::NotMuellerRepresentable { residual, worst_component: worst.0 });
    }
    Ok(MuellerExtraction { mueller: MuellerMatrix::from_matrix(m), residual, component_residuals })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelClassification {
    pub classification: Classification,
    pub mueller: MuellerMatrix,
    pub extraction_residual: f64,
    pub number_behavior: NumberBehavior,
    pub dilation: Dilation,
    pub provenance: String,
}

/// Extracts the Mueller matrix and classifies it by coherency rank.
pub fn classify_channel(ch: &KrausChannel, tol: f64) -> Result<ChannelClassification> {
    let ex = extract_mueller(ch, EXTRACTION_TOL)?;
    Ok(ChannelClassification {
        classification: classify(&ex.mueller, tol),
        mueller: ex.mueller,
        extraction_residual: ex.residual,
        number_behavior: ch.number_behavior,
        dilation: ch.dilation,
        provenance: ch.provenance.clone(),
    })
}
