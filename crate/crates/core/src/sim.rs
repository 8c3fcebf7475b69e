//! Shot-noise polarimetry: probe preparation, photon counting and
//! least-squares Mueller estimation.
//!
//! Each Stokes component `k` is measured by rotating the state so that `k`
//! becomes component 3 and counting photons in L and R. The three
//! settings together also give a pooled estimate of `S0`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::channels::{apply, KrausChannel};
use crate::error::{Error, Result};
use crate::fock::{rotation_unitary, stokes_expectations, DensityMatrix, FockBasis};
use crate::formats::{parse_versioned, to_json17, RECORD_SCHEMA};
use crate::stokes::{EulerAngles, MuellerMatrix, StokesVector};

/// Largest discarded coherent-state probability accepted by [`make_probe`].
pub const MAX_TRUNCATION_LOSS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeKind {
    /// `|N, 0>`, all photons left circular.
    Fock { n: usize },
    /// Two-mode coherent state, amplitudes as `[re, im]`.
    Coherent { alpha_l: [f64; 2], alpha_r: [f64; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    #[serde(flatten)]
    pub kind: ProbeKind,
    /// Rotation applied to the reference state.
    pub angles: EulerAngles,
}

impl ProbeSpec {
    pub fn fock(n: usize, angles: EulerAngles) -> Self {
        Self { kind: ProbeKind::Fock { n }, angles }
    }

    pub fn coherent(alpha_l: C64, alpha_r: C64, angles: EulerAngles) -> Self {
        Self {
            kind: ProbeKind::Coherent { alpha_l: [alpha_l.re, alpha_l.im], alpha_r: [alpha_r.re, alpha_r.im] },
            angles,
        }
    }
}

/// `N`-photon probes along `+3, -3, +1, -1, +2, -2`.
pub fn standard_probes(n: usize) -> Vec<ProbeSpec> {
    [
        (0.0, 0.0),
        (0.0, PI),
        (0.0, FRAC_PI_2),
        (PI, FRAC_PI_2),
        (FRAC_PI_2, FRAC_PI_2),
        (3.0 * FRAC_PI_2, FRAC_PI_2),
    ]
    .iter()
    .map(|&(phi, theta)| ProbeSpec::fock(n, EulerAngles { phi, theta, psi: 0.0 }))
    .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub rho: DensityMatrix,
    /// Exact Stokes vector of `rho`.
    pub stokes: StokesVector,
    /// Probability discarded by truncation (zero for Fock probes).
    pub truncation_loss: f64,
}

pub fn make_probe(spec: &ProbeSpec, basis: &FockBasis) -> Result<Probe> {
    let (rho, truncation_loss) = match &spec.kind {
        ProbeKind::Fock { n } => {
            if *n == 0 || *n > basis.n_max() {
                return Err(Error::InvalidProbe(format!("N = {n} outside 1..={}", basis.n_max())));
            }
            (DensityMatrix::basis_state(basis, &[*n, 0])?, 0.0)
        }
        ProbeKind::Coherent { alpha_l, alpha_r } => {
            let (a, b) = (C64::new(alpha_l[0], alpha_l[1]), C64::new(alpha_r[0], alpha_r[1]));
            let mean = a.norm_sqr() + b.norm_sqr();
            if !(mean <= 0.5 * basis.n_max() as f64) {
                return Err(Error::InvalidProbe(format!(
                    "mean photon number {mean} exceeds n_max / 2 = {}",
                    0.5 * basis.n_max() as f64
                )));
            }
            let (rho, lost) = DensityMatrix::coherent(basis, a, b)?;
            if lost > MAX_TRUNCATION_LOSS {
                return Err(Error::TruncationViolation(format!("coherent probe loses {lost:.3e} to the cutoff")));
            }
            (rho, lost)
        }
    };
    let rho = rho.conjugate_by(&rotation_unitary(basis, &spec.angles)?)?;
    let stokes = stokes_expectations(&rho)?;
    Ok(Probe { rho, stokes, truncation_loss })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    /// Stokes component 1, 2 or 3.
    pub component: usize,
    pub shots: u64,
    pub seed: u64,
}

impl MeasurementSetting {
    pub fn new(component: usize, shots: u64, seed: u64) -> Result<Self> {
        if !(1..=3).contains(&component) {
            return Err(Error::InvalidSetting(format!("component {component} not in 1..=3")));
        }
        if shots == 0 {
            return Err(Error::InvalidSetting("shots must be at least 1".into()));
        }
        Ok(Self { component, shots, seed })
    }
}

/// Rotation carrying Stokes component `k` onto component 3.
pub fn analyzer_angles(component: usize) -> EulerAngles {
    match component {
        1 => EulerAngles { phi: 0.0, theta: FRAC_PI_2, psi: PI },
        2 => EulerAngles { phi: 0.0, theta: FRAC_PI_2, psi: FRAC_PI_2 },
        _ => EulerAngles::zero(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountBin {
    pub n_l: usize,
    pub n_r: usize,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesSample {
    pub component: usize,
    pub shots: u64,
    /// Outcome histogram in basis order; empty bins omitted.
    pub counts: Vec<CountBin>,
    /// Mean of `n_L - n_R`.
    pub estimate: f64,
    pub stderr: f64,
    /// Mean of `n_L + n_R`.
    pub s0_estimate: f64,
    pub s0_stderr: f64,
}

fn mean_and_stderr(counts: &[CountBin], shots: u64, f: impl Fn(&CountBin) -> f64) -> (f64, f64, f64) {
    let n = shots as f64;
    let mean = counts.iter().map(|b| b.count as f64 * f(b)).sum::<f64>() / n;
    let ss = counts.iter().map(|b| b.count as f64 * (f(b) - mean).powi(2)).sum::<f64>();
    let var = if shots > 1 { ss / (n - 1.0) } else { 0.0 };
    (mean, (var / n).sqrt(), var)
}

fn sample_with(rho: &DensityMatrix, component: usize, shots: u64, rng: &mut ChaCha8Rng) -> Result<StokesSample> {
    let basis = rho.basis();
    let rotated = rho.conjugate_by(&rotation_unitary(basis, &analyzer_angles(component))?)?;
    let probs: Vec<f64> = rotated.populations().iter().map(|p| p.max(0.0)).collect();
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidState("state has no probability mass".into()));
    }
    // multinomial draw as a chain of conditional binomials
    let mut counts = Vec::new();
    let (mut left, mut mass) = (shots, total);
    for (i, p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        let k = if i + 1 == probs.len() || *p >= mass {
            left
        } else {
            let q = (p / mass).clamp(0.0, 1.0);
            Binomial::new(left, q).expect("valid binomial").sample(rng)
        };
        if k > 0 {
            let s = basis.state(i);
            counts.push(CountBin { n_l: s[0], n_r: s[1], count: k });
        }
        left -= k;
        mass -= p;
    }
    let (estimate, stderr, _) = mean_and_stderr(&counts, shots, |b| b.n_l as f64 - b.n_r as f64);
    let (s0_estimate, s0_stderr, _) = mean_and_stderr(&counts, shots, |b| (b.n_l + b.n_r) as f64);
    Ok(StokesSample { component, shots, counts, estimate, stderr, s0_estimate, s0_stderr })
}

/// Samples one setting; the stream is selected by `setting.seed`.
pub fn sample_stokes(rho: &DensityMatrix, setting: &MeasurementSetting) -> Result<StokesSample> {
    let setting = MeasurementSetting::new(setting.component, setting.shots, setting.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(setting.seed);
    sample_with(rho, setting.component, setting.shots, &mut rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub spec: ProbeSpec,
    pub input_stokes: [f64; 4],
    pub truncation_loss: f64,
    pub samples: Vec<StokesSample>,
    /// Output Stokes vector estimate, `S0` pooled over the three settings.
    pub output_estimate: [f64; 4],
    pub output_stderr: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordConfig {
    pub channel: String,
    #[serde(default)]
    pub channel_spec: Option<serde_json::Value>,
    pub n_max: usize,
    pub shots: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub schema: String,
    pub config: RecordConfig,
    pub probes: Vec<ProbeRecord>,
    pub estimate: MuellerMatrix,
    pub stderr: MuellerMatrix,
    /// Left empty by the library so that fixed seeds give identical files.
    #[serde(default)]
    pub wall_clock_seconds: Option<f64>,
}

fn rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    if !(max > 0.0) {
        return 0;
    }
    sv.iter().filter(|s| **s > 1e-10 * max).count()
}

/// Pushes every probe through the channel, samples the three settings
/// with `shots` each and solves `O = M P` by least squares.
///
/// Probe `p`, component `k` draws from ChaCha stream `3 p + k - 1` of `seed`.
pub fn estimate_mueller(channel: &KrausChannel, probes: &[ProbeSpec], shots: u64, seed: u64) -> Result<ExperimentRecord> {
    if shots == 0 {
        return Err(Error::InvalidSetting("shots must be at least 1".into()));
    }
    let basis = channel.basis();
    let prepared = probes.iter().map(|p| make_probe(p, basis)).collect::<Result<Vec<_>>>()?;
    let n = prepared.len();
    let p_mat = DMatrix::from_fn(4, n, |mu, p| prepared[p].stokes[mu]);
    let r = if n < 4 { rank(&p_mat).min(n) } else { rank(&p_mat) };
    if r < 4 {
        return Err(Error::DegenerateProbeSet { rank: r });
    }

    let mut records = Vec::with_capacity(n);
    let mut o = DMatrix::<f64>::zeros(4, n);
    let mut o_var = DMatrix::<f64>::zeros(4, n);
    for (pi, (spec, probe)) in probes.iter().zip(&prepared).enumerate() {
        let out = apply(channel, &probe.rho)?;
        let mut samples = Vec::with_capacity(3);
        for k in 1..=3 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((3 * pi + k - 1) as u64);
            samples.push(sample_with(&out, k, shots, &mut rng)?);
        }
        let pooled: Vec<CountBin> = samples.iter().flat_map(|s| s.counts.iter().copied()).collect();
        let (s0, s0_err, _) = mean_and_stderr(&pooled, 3 * shots, |b| (b.n_l + b.n_r) as f64);
        let est = [s0, samples[0].estimate, samples[1].estimate, samples[2].estimate];
        let err = [s0_err, samples[0].stderr, samples[1].stderr, samples[2].stderr];
        for mu in 0..4 {
            o[(mu, pi)] = est[mu];
            o_var[(mu, pi)] = err[mu] * err[mu];
        }
        records.push(ProbeRecord {
            spec: spec.clone(),
            input_stokes: probe.stokes.to_array(),
            truncation_loss: probe.truncation_loss,
            samples,
            output_estimate: est,
            output_stderr: err,
        });
    }

    // M = O A with A = P^T (P P^T)^-1
    let gram = &p_mat * p_mat.transpose();
    let gram_inv = gram.try_inverse().ok_or(Error::DegenerateProbeSet { rank: r })?;
    let a = p_mat.transpose() * gram_inv;
    let m = &o * &a;
    let a_sq = a.map(|x| x * x);
    let var = &o_var * a_sq;
    let estimate = MuellerMatrix::from_matrix(Matrix4::from_fn(|i, j| m[(i, j)]));
    let stderr = MuellerMatrix::from_matrix(Matrix4::from_fn(|i, j| var[(i, j)].sqrt()));
    Ok(ExperimentRecord {
        schema: RECORD_SCHEMA.into(),
        config: RecordConfig {
            channel: channel.provenance().to_string(),
            channel_spec: None,
            n_max: basis.n_max(),
            shots,
            seed,
        },
        probes: records,
        estimate,
        stderr,
        wall_clock_seconds: None,
    })
}

pub fn record_to_string(record: &ExperimentRecord) -> Result<String> {
    to_json17(record)
}

pub fn persist(record: &ExperimentRecord, path: &Path) -> Result<()> {
    fs::write(path, record_to_string(record)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ExperimentRecord> {
    parse_versioned(&fs::read_to_string(path)?, RECORD_SCHEMA)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{haar_depolarizer, retarder_channel};
    use crate::fock::make_basis;
    use crate::quadrature::QuadratureGrid;
    use crate::stokes::retarder;
    use approx::assert_abs_diff_eq;

    #[test]
    fn probe_examples() {
        let b = make_basis(2, 3).unwrap();
        let p = make_probe(&ProbeSpec::fock(1, EulerAngles::zero()), &b).unwrap();
        for (got, want) in p.stokes.to_array().iter().zip([1.0, 0.0, 0.0, 1.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-14);
        }
        let along_1 = ProbeSpec::fock(3, EulerAngles { phi: 0.0, theta: FRAC_PI_2, psi: 0.0 });
        let s = make_probe(&along_1, &b).unwrap().stokes.to_array();
        for (got, want) in s.iter().zip([3.0, 3.0, 0.0, 0.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-13);
        }
        let big = make_basis(2, 12).unwrap();
        let coh = ProbeSpec::coherent(C64::new(1.0, 0.0), C64::new(0.0, 0.0), EulerAngles::zero());
        let p = make_probe(&coh, &big).unwrap();
        for (got, want) in p.stokes.to_array().iter().zip([1.0, 0.0, 0.0, 1.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-8);
        }
        assert!(p.truncation_loss < 1e-6);
    }

    #[test]
    fn probe_validation() {
        let b = make_basis(2, 4).unwrap();
        assert!(matches!(make_probe(&ProbeSpec::fock(5, EulerAngles::zero()), &b), Err(Error::InvalidProbe(_))));
        let bright = ProbeSpec::coherent(C64::new(2.0, 0.0), C64::new(0.0, 0.0), EulerAngles::zero());
        assert!(matches!(make_probe(&bright, &b), Err(Error::InvalidProbe(_))));
        let leaky = ProbeSpec::coherent(C64::new(1.4, 0.0), C64::new(0.0, 0.0), EulerAngles::zero());
        assert!(matches!(make_probe(&leaky, &b), Err(Error::TruncationViolation(_))));
    }

    #[test]
    fn standard_probes_point_along_axes() {
        let b = make_basis(2, 1).unwrap();
        let want = [
            [1.0, 0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0, -1.0],
            [1.0, 1.0, 0.0, 0.0],
            [1.0, -1.0, 0.0, 0.0],
            [1.0, 0.0, 1.0, 0.0],
            [1.0, 0.0, -1.0, 0.0],
        ];
        for (spec, w) in standard_probes(1).iter().zip(want) {
            let s = make_probe(spec, &b).unwrap().stokes.to_array();
            for k in 0..4 {
                assert_abs_diff_eq!(s[k], w[k], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn analyzers_map_components_to_axis_three() {
        for k in 1..=3 {
            let r = crate::stokes::rotation_matrix(&analyzer_angles(k));
            for j in 0..3 {
                let want = if j + 1 == k { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(r[(2, j)], want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn sampling_examples() {
        let b = make_basis(2, 1).unwrap();
        let l = DensityMatrix::basis_state(&b, &[1, 0]).unwrap();
        let s = sample_stokes(&l, &MeasurementSetting::new(3, 1000, 1).unwrap()).unwrap();
        assert_eq!(s.counts, vec![CountBin { n_l: 1, n_r: 0, count: 1000 }]);
        assert_eq!((s.estimate, s.stderr), (1.0, 0.0));

        let plus1 = make_probe(&standard_probes(1)[2], &b).unwrap().rho;
        let shots = 100_000;
        let s = sample_stokes(&plus1, &MeasurementSetting::new(3, shots, 2).unwrap()).unwrap();
        assert!(s.estimate.abs() < 5.0 * s.stderr);
        assert!((s.stderr - 1.0 / (shots as f64).sqrt()).abs() < 1e-4);
        let s1 = sample_stokes(&plus1, &MeasurementSetting::new(1, 10, 2).unwrap()).unwrap();
        assert_eq!(s1.estimate, 1.0);

        assert!(MeasurementSetting::new(4, 10, 0).is_err());
        assert!(MeasurementSetting::new(1, 0, 0).is_err());
    }

    #[test]
    fn depolarized_output_is_isotropic_on_average() {
        let b = make_basis(2, 1).unwrap();
        let ch = haar_depolarizer(0.0, &QuadratureGrid::haar_default(), &b).unwrap();
        let out = apply(&ch, &make_probe(&standard_probes(1)[4], &b).unwrap().rho).unwrap();
        for k in 1..=3 {
            let s = sample_stokes(&out, &MeasurementSetting::new(k, 50_000, 7).unwrap()).unwrap();
            assert!(s.estimate.abs() < 5.0 * s.stderr);
        }
    }

    #[test]
    fn number_conserving_channel_keeps_photon_number_per_shot() {
        let b = make_basis(2, 3).unwrap();
        let e = EulerAngles::new(0.4, 1.0, 2.0).unwrap();
        let rec = estimate_mueller(&retarder_channel(&e, &b).unwrap(), &standard_probes(3), 2000, 5).unwrap();
        for p in &rec.probes {
            for s in &p.samples {
                assert!(s.counts.iter().all(|c| c.n_l + c.n_r == 3));
            }
        }
        let m = retarder(&e);
        for i in 0..4 {
            for j in 0..4 {
                let z = (rec.estimate[(i, j)] - m[(i, j)]).abs();
                assert!(z <= 5.0 * rec.stderr[(i, j)] + 1e-12, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn degenerate_probe_sets_are_rejected() {
        let b = make_basis(2, 1).unwrap();
        let ch = KrausChannel::identity(&b).unwrap();
        let probes = &standard_probes(1)[..3];
        assert!(matches!(estimate_mueller(&ch, probes, 10, 0), Err(Error::DegenerateProbeSet { rank: 3 })));
        let twice = vec![standard_probes(1)[0].clone(); 5];
        assert!(matches!(estimate_mueller(&ch, &twice, 10, 0), Err(Error::DegenerateProbeSet { rank: 1 })));
    }

    #[test]
    fn records_round_trip_and_are_deterministic() {
        let b = make_basis(2, 1).unwrap();
        let ch = haar_depolarizer(0.5, &QuadratureGrid::haar_default(), &b).unwrap();
        let rec = estimate_mueller(&ch, &standard_probes(1), 500, 42).unwrap();
        let again = estimate_mueller(&ch, &standard_probes(1), 500, 42).unwrap();
        assert_eq!(record_to_string(&rec).unwrap(), record_to_string(&again).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.record.json");
        persist(&rec, &path).unwrap();
        assert_eq!(load(&path).unwrap(), rec);
        let text = fs::read_to_string(&path).unwrap().replace(RECORD_SCHEMA, "qpolar/record/0");
        fs::write(&path, text).unwrap();
        assert!(matches!(load(&path), Err(Error::SchemaVersion { .. })));
    }
}
