//! Free-phonon time factors for a single mean frequency with a Gaussian
//! density of states.

use num_complex::Complex64;
use serde::Serialize;

use crate::lattice::{bose_factor, occupation, ModelParams};

/// Fourier transform of the Gaussian phonon density of states, exp(−Δ²t²/4).
pub fn decay(t: f64, delta: f64) -> f64 {
    (-delta * delta * t * t / 4.0).exp()
}

/// N·P(t) = [(2n+1)cos ωt + i sin ωt]·exp(−Δ²t²/4).
///
/// Every time-dependent E-matrix is this scalar times a static matrix, which is
/// what lets correlators be tabulated as functions of one complex variable.
pub fn reduced_propagator(p: &ModelParams, t: f64) -> Complex64 {
    let c = bose_factor(p.temperature, p.omega);
    let wt = p.omega * t;
    Complex64::new(c * wt.cos(), wt.sin()) * decay(t, p.delta)
}

/// P(t) with P(0) = (2n+1)/N.
pub fn p_factor(p: &ModelParams, t: f64) -> Complex64 {
    reduced_propagator(p, t) / p.n_sites as f64
}

/// Single-phonon time factors entering the mixed and two-field correlators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhononPropagators {
    pub p_factor: Complex64,
    /// [n e^{−iωt} − (n+1) e^{iωt}]·A(t), the bracket of ⟨Zψ(t)⟩.
    pub psi_down: Complex64,
    /// [(n+1) e^{iωt} − n e^{−iωt}]·A(t), the bracket of ⟨ψZ(t)⟩.
    pub psi_up: Complex64,
    /// ⟨ψ_Q ψ_{−Q}(t)⟩ = [(n+1) e^{iωt} + n e^{−iωt}]·A(t).
    pub psi_psi: Complex64,
}

impl PhononPropagators {
    pub fn at(p: &ModelParams, t: f64) -> Self {
        let n = occupation(p.temperature, p.omega);
        let a = decay(t, p.delta);
        let plus = Complex64::from_polar(1.0, p.omega * t);
        let minus = plus.conj();
        Self {
            p_factor: p_factor(p, t),
            psi_down: (minus * n - plus * (n + 1.0)) * a,
            psi_up: (plus * (n + 1.0) - minus * n) * a,
            psi_psi: (plus * (n + 1.0) + minus * n) * a,
        }
    }
}
