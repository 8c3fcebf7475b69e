//! Depolarizers built as weighted averages of rotations.
//!
//! The weight function is a first-order trigonometric polynomial on the
//! Euler box, normalized against the flat measure `dphi dtheta dpsi`. Its
//! coefficients are paired with matrix slots so that the flat-measure
//! average of the rotation Mueller matrices is exactly
//! `[[j, 0, 0, 0], [0, a, b, c], [0, d, e, f], [0, g, h, i]]`.

use std::f64::consts::{PI, TAU};

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use super::{Dilation, KrausChannel};
use crate::error::{Error, Result};
use crate::fock::{rotation_unitary, FockBasis};
use crate::quadrature::{Measure, QuadratureGrid};
use crate::stokes::{retarder, EulerAngles, MuellerMatrix};

/// Weight values below `-NEGATIVITY_TOL` count as violations.
pub const NEGATIVITY_TOL: f64 = 1e-12;
/// At most this many violating nodes are listed in a report.
pub const MAX_LISTED_VIOLATIONS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightFunctionSpec {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub g: f64,
    pub h: f64,
    pub i: f64,
    pub j: f64,
}

impl WeightFunctionSpec {
    /// Spec whose image has the given 3x3 block and `j = 1`.
    pub fn from_block(m: [[f64; 3]; 3]) -> Self {
        Self {
            a: m[0][0],
            b: m[0][1],
            c: m[0][2],
            d: m[1][0],
            e: m[1][1],
            f: m[1][2],
            g: m[2][0],
            h: m[2][1],
            i: m[2][2],
            j: 1.0,
        }
    }

    /// Symmetric 3x3 block, the depolarizer family.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.b - self.d).abs() <= tol && (self.c - self.g).abs() <= tol && (self.f - self.h).abs() <= tol
    }
}

/// Weight at `e`, normalized so that its flat-measure integral is `j`.
pub fn weight_function(s: &WeightFunctionSpec, e: &EulerAngles) -> f64 {
    let (sf, cf) = e.phi.sin_cos();
    let (sp, cp) = e.psi.sin_cos();
    let ct = e.theta.cos();
    let v = -4.0 * s.a * sp * sf + 4.0 * s.d * sp * cf - PI * s.g * cp - 4.0 * s.b * cp * sf
        + 4.0 * s.e * cp * cf
        + PI * s.h * sp
        + PI * s.c * cf
        + PI * s.f * sf
        + 2.0 * s.i * ct
        + s.j;
    v / (4.0 * PI.powi(3))
}

/// `[[j, 0, 0, 0], [0, a, b, c], [0, d, e, f], [0, g, h, i]]`.
pub fn weighted_rotation_mueller(s: &WeightFunctionSpec) -> MuellerMatrix {
    MuellerMatrix::from_rows([
        [s.j, 0.0, 0.0, 0.0],
        [0.0, s.a, s.b, s.c],
        [0.0, s.d, s.e, s.f],
        [0.0, s.g, s.h, s.i],
    ])
}

/// `sum_k w_k f(e_k) M_R(e_k)` on a flat grid.
pub fn weighted_rotation_mueller_quadrature(s: &WeightFunctionSpec, grid: &QuadratureGrid) -> Result<MuellerMatrix> {
    require_flat(grid)?;
    let m = grid.nodes.iter().fold(Matrix4::zeros(), |acc, (e, w)| {
        acc + retarder(e).matrix() * (w * weight_function(s, e))
    });
    Ok(MuellerMatrix::from_matrix(m))
}

fn require_flat(grid: &QuadratureGrid) -> Result<()> {
    if grid.measure != Measure::Flat {
        return Err(Error::InvalidGrid("weight functions integrate against the flat measure".into()));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityViolation {
    pub angles: EulerAngles,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub nodes_checked: usize,
    pub violations_total: usize,
    pub min_value: f64,
    pub min_at: EulerAngles,
    /// The most negative violating nodes, most negative first.
    pub violations: Vec<PositivityViolation>,
}

impl PositivityReport {
    pub fn is_positive(&self) -> bool {
        self.violations_total == 0
    }

    fn from_nodes<'a>(s: &WeightFunctionSpec, nodes: impl Iterator<Item = &'a EulerAngles>) -> Self {
        let mut checked = 0;
        let mut min = (f64::INFINITY, EulerAngles::zero());
        let mut violations = Vec::new();
        for e in nodes {
            checked += 1;
            let v = weight_function(s, e);
            if v < min.0 {
                min = (v, *e);
            }
            if v < -NEGATIVITY_TOL {
                violations.push(PositivityViolation { angles: *e, value: v });
            }
        }
        let violations_total = violations.len();
        violations.sort_by(|x, y| x.value.total_cmp(&y.value));
        violations.truncate(MAX_LISTED_VIOLATIONS);
        Self { nodes_checked: checked, violations_total, min_value: min.0, min_at: min.1, violations }
    }
}

/// Evaluates the weight on a uniform `n^3` lattice (`theta` endpoints included).
pub fn scan_weight_positivity(s: &WeightFunctionSpec, n: usize) -> Result<PositivityReport> {
    if n < 2 {
        return Err(Error::InvalidGrid(format!("scan resolution {n} < 2")));
    }
    let mut nodes = Vec::with_capacity(n * n * n);
    for a in 0..n {
        for t in 0..n {
            for p in 0..n {
                nodes.push(EulerAngles {
                    phi: TAU * a as f64 / n as f64,
                    theta: PI * t as f64 / (n - 1) as f64,
                    psi: TAU * p as f64 / n as f64,
                });
            }
        }
    }
    Ok(PositivityReport::from_nodes(s, nodes.iter()))
}

/// Outcome of [`weighted_rotation_channel`]: a negative weight is a verdict,
/// not an error.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightedRotation {
    Valid(KrausChannel),
    PositivityFailure(PositivityReport),
}

impl WeightedRotation {
    pub fn into_result(self) -> Result<KrausChannel> {
        match self {
            WeightedRotation::Valid(ch) => Ok(ch),
            WeightedRotation::PositivityFailure(r) => Err(Error::PositivityFailure(Box::new(r))),
        }
    }
}

/// Kraus set `{sqrt(f(e_k) w_k) R(e_k)}` over a flat grid, provided the
/// weight is nonnegative on every node.
pub fn weighted_rotation_channel(
    s: &WeightFunctionSpec,
    grid: &QuadratureGrid,
    basis: &FockBasis,
) -> Result<WeightedRotation> {
    if s.j != 1.0 {
        return Err(Error::InvalidWeightSpec(format!("j = {} but trace preservation needs j = 1", s.j)));
    }
    require_flat(grid)?;
    let report = PositivityReport::from_nodes(s, grid.nodes.iter().map(|(e, _)| e));
    if !report.is_positive() {
        return Ok(WeightedRotation::PositivityFailure(report));
    }
    let mut ops = Vec::with_capacity(grid.len());
    for (e, w) in &grid.nodes {
        let weight = weight_function(s, e).max(0.0) * w;
        if weight > 0.0 {
            ops.push(rotation_unitary(basis, e)?.scale_re(weight.sqrt()));
        }
    }
    let ch = KrausChannel::new(basis, ops, format!("weighted_rotation(nodes={})", grid.len()))?
        .with_dilation(Dilation::NonPhotonic);
    Ok(WeightedRotation::Valid(ch))
}
