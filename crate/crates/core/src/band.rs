//! Renormalized polaron band, group velocities and Boltzmann averages.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::Result;
use crate::lattice::{ModelParams, MomentumGrid};
use crate::solver::{build_e, AMatrix};

/// Polaron band on the grid, indexed by grid index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolaronBand {
    pub energies: Vec<f64>,
    pub velocities: Vec<f64>,
    pub bandwidth: f64,
}

impl PolaronBand {
    pub fn from_energies(energies: Vec<f64>) -> Self {
        let velocities = group_velocity(&energies);
        let (lo, hi) = min_max(&energies);
        Self { energies, velocities, bandwidth: hi - lo }
    }

    pub fn n(&self) -> usize {
        self.energies.len()
    }

    pub fn min_energy(&self) -> f64 {
        min_max(&self.energies).0
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// J̃_k = Σ_{k'} ⟨θ_k⟩² [exp E^0]_{kk'} J_{k'}.
pub fn renormalized_transfer(a: &AMatrix, theta: &[f64], p: &ModelParams) -> Result<Vec<f64>> {
    let grid = p.grid();
    let n = p.n_sites;
    let e0 = build_e(a, p, 0.0);
    let ex = crate::expm::matrix_exp(&e0.q(0).view())?;
    let bare: Vec<f64> = (0..n).map(|k| p.bare_band(grid.k(k))).collect();
    Ok((0..n)
        .map(|k| {
            let s: Complex64 = (0..n).map(|kp| ex[[k, kp]] * bare[kp]).sum();
            theta[k] * theta[k] * s.re
        })
        .collect())
}

/// ε̃_k = ε + J̃_k − N⁻¹ Σ_q |A_k^q|² ω.
pub fn band(p: &ModelParams, a: &AMatrix, theta: &[f64]) -> Result<PolaronBand> {
    let n = p.n_sites;
    let jt = renormalized_transfer(a, theta, p)?;
    let energies = (0..n)
        .map(|k| {
            let binding: f64 = (0..n).map(|q| a.get(k, q).norm_sqr()).sum::<f64>() * p.omega / n as f64;
            p.epsilon + jt[k] - binding
        })
        .collect();
    Ok(PolaronBand::from_energies(energies))
}

/// Spectral derivative dE/dk of a band sampled on the grid (grid-index order).
/// The Nyquist mode of an even grid is dropped, so the result is exact for any
/// trigonometric polynomial the grid resolves.
pub fn group_velocity(energies: &[f64]) -> Vec<f64> {
    let n = energies.len();
    if n == 0 {
        return Vec::new();
    }
    let grid = MomentumGrid::from_len(n);
    let coeffs: Vec<(i64, Complex64)> = (0..n)
        .map(|j| {
            let mode = grid.signed(j);
            let c: Complex64 = energies
                .iter()
                .enumerate()
                .map(|(m, &e)| Complex64::from_polar(e, -2.0 * PI * (j * m) as f64 / n as f64))
                .sum::<Complex64>()
                / n as f64;
            (mode, c)
        })
        .filter(|&(mode, _)| !(n % 2 == 0 && mode.unsigned_abs() as usize * 2 == n))
        .collect();
    (0..n)
        .map(|m| {
            let k = 2.0 * PI * m as f64 / n as f64;
            coeffs
                .iter()
                .map(|&(mode, c)| Complex64::new(0.0, mode as f64) * c * Complex64::from_polar(1.0, mode as f64 * k))
                .sum::<Complex64>()
                .re
        })
        .collect()
}

/// Boltzmann average Σ_k v_k e^{−ε̃_k/T} / Σ_k e^{−ε̃_k/T}. At T = 0 this is
/// the mean over the degenerate band minima.
pub fn thermal_avg(values: &[f64], band: &PolaronBand, temperature: f64) -> f64 {
    assert_eq!(values.len(), band.n(), "values and band must share the grid");
    let e_min = band.min_energy();
    if temperature <= 0.0 {
        let scale = band.energies.iter().map(|e| e.abs()).fold(1.0, f64::max);
        let tol = 1e-12 * scale;
        let (sum, count) = values
            .iter()
            .zip(&band.energies)
            .filter(|(_, &e)| e - e_min <= tol)
            .fold((0.0, 0usize), |(s, c), (&v, _)| (s + v, c + 1));
        return sum / count as f64;
    }
    let (num, den) = values.iter().zip(&band.energies).fold((0.0, 0.0), |(num, den), (&v, &e)| {
        let w = (-(e - e_min) / temperature).exp();
        (num + v * w, den + w)
    });
    num / den
}
