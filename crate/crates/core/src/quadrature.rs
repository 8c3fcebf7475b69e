//! Product quadrature over Euler angles.
//!
//! Uniform nodes in `phi` and `psi` integrate trigonometric polynomials of
//! degree below the node count exactly; Gauss-Legendre nodes handle `theta`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stokes::EulerAngles;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, ascending nodes.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n.div_ceil(2) {
        // Chebyshev initial guess, then Newton on P_n
        let mut x = (PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// Normalized invariant measure, weights sum to 1.
    Haar,
    /// `dphi dtheta dpsi` over the full Euler box, weights sum to `4 pi^3`.
    Flat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureGrid {
    pub nodes: Vec<(EulerAngles, f64)>,
    pub measure: Measure,
}

fn check_counts(n_phi: usize, n_theta: usize, n_psi: usize) -> Result<()> {
    if n_phi == 0 || n_theta == 0 || n_psi == 0 {
        return Err(Error::InvalidGrid(format!("node counts ({n_phi}, {n_theta}, {n_psi}) must be positive")));
    }
    Ok(())
}

fn uniform(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| TAU * k as f64 / n as f64)
}

impl QuadratureGrid {
    /// Haar grid with Gauss-Legendre nodes in `cos theta`.
    pub fn haar(n_phi: usize, n_theta: usize, n_psi: usize) -> Result<Self> {
        check_counts(n_phi, n_theta, n_psi)?;
        let (x, w) = gauss_legendre(n_theta);
        let mut nodes = Vec::with_capacity(n_phi * n_theta * n_psi);
        for phi in uniform(n_phi) {
            for (xk, wk) in x.iter().zip(&w) {
                for psi in uniform(n_psi) {
                    let e = EulerAngles { phi, theta: xk.clamp(-1.0, 1.0).acos(), psi };
                    nodes.push((e, wk / 2.0 / (n_phi * n_psi) as f64));
                }
            }
        }
        Ok(Self { nodes, measure: Measure::Haar })
    }

    /// Smallest Haar grid that integrates the Stokes-operator images exactly.
    pub fn haar_default() -> Self {
        Self::haar(4, 3, 4).expect("fixed counts are valid")
    }

    /// Haar grid exact for the full channel action on states with up to
    /// `n_max` photons (harmonics up to order `n_max` in each angle).
    pub fn haar_exact_for(n_max: usize) -> Self {
        let n = (n_max + 1).max(4);
        Self::haar(n, (n_max + 1).max(3), n).expect("positive counts")
    }

    /// Flat grid with Gauss-Legendre nodes in `theta` on `[0, pi]`.
    pub fn flat(n_phi: usize, n_theta: usize, n_psi: usize) -> Result<Self> {
        check_counts(n_phi, n_theta, n_psi)?;
        let (x, w) = gauss_legendre(n_theta);
        let mut nodes = Vec::with_capacity(n_phi * n_theta * n_psi);
        let dphi = TAU / n_phi as f64;
        let dpsi = TAU / n_psi as f64;
        for phi in uniform(n_phi) {
            for (xk, wk) in x.iter().zip(&w) {
                for psi in uniform(n_psi) {
                    let e = EulerAngles { phi, theta: PI * (xk + 1.0) / 2.0, psi };
                    nodes.push((e, wk * PI / 2.0 * dphi * dpsi));
                }
            }
        }
        Ok(Self { nodes, measure: Measure::Flat })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|(_, w)| w).sum()
    }
}
