use thiserror::Error;

use crate::channels::PositivityReport;
use crate::stokes::PartialLuChipman;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("intensity s0 = {0} must be strictly positive")]
    DegenerateIntensity(f64),

    #[error("transmittance {name} = {value} outside [0, 1]")]
    InvalidTransmittance { name: &'static str, value: f64 },

    #[error("Euler angles out of range: {0}")]
    InvalidAngles(String),

    #[error("depolarizer block invalid: {0}")]
    InvalidDepolarizer(String),

    #[error("convex weights invalid: {0}")]
    InvalidConvexWeights(String),

    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),

    #[error("Mueller matrix is not physical (min coherency eigenvalue {min_eigenvalue:.3e})")]
    NotPhysical { min_eigenvalue: f64 },

    #[error("decomposition degenerate: {reason}")]
    DegenerateDecomposition {
        reason: String,
        partial: Box<PartialLuChipman>,
    },

    #[error("unsupported mode count {0} (expected 2 or 3)")]
    UnsupportedModeCount(usize),

    #[error("invalid photon cutoff {0}")]
    InvalidCutoff(usize),

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("matrix is not unitary (deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("2x2 block cannot be completed to a 3x3 unitary (residual {residual:.3e}); singular values {singular_values:?}")]
    NotCompletable {
        residual: f64,
        singular_values: [f64; 2],
    },

    #[error("truncation violation: {0}")]
    TruncationViolation(String),

    #[error("channel output is not a Mueller transformation (relative residual {residual:.3e}, worst component S{worst_component})")]
    NotMuellerRepresentable { residual: f64, worst_component: usize },

    #[error("channel number behavior {0} does not support Mueller extraction")]
    UnsupportedChannel(String),

    #[error("weight function is negative on {} grid node(s)", .0.violations_total)]
    PositivityFailure(Box<PositivityReport>),

    #[error("weight function spec invalid: {0}")]
    InvalidWeightSpec(String),

    #[error("quadrature grid invalid: {0}")]
    InvalidGrid(String),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("invalid probe: {0}")]
    InvalidProbe(String),

    #[error("invalid measurement setting: {0}")]
    InvalidSetting(String),

    #[error("probe Stokes vectors span rank {rank} < 4")]
    DegenerateProbeSet { rank: usize },

    #[error("unsupported schema {found:?} (expected {expected:?})")]
    SchemaVersion { found: String, expected: String },

    #[error("malformed document: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
