//! Momentum grid, bare band, coupling geometry and thermal phonon factors.
//!
//! Units throughout: ħ = ω = a = e = k_B = 1. Temperatures are k_B T / ħω.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PolaronError, Result};

/// How the nearest-neighbour transfer integral maps onto the bare band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BandConvention {
    /// Lattice sum over both neighbours: J_k = 2J cos k.
    #[default]
    TwoJCos,
    /// J_k = J cos k.
    JCos,
}

impl BandConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            BandConvention::TwoJCos => "two-j-cos",
            BandConvention::JCos => "j-cos",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "two-j-cos" => Some(BandConvention::TwoJCos),
            "j-cos" => Some(BandConvention::JCos),
            _ => None,
        }
    }
}

/// Physical and lattice parameters of the extended Holstein chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_sites: usize,
    /// Nearest-neighbour transfer integral J.
    pub transfer: f64,
    /// Diagonal coupling amplitude g.
    pub g: f64,
    /// Off-diagonal (antisymmetric) coupling amplitude φ.
    pub phi: f64,
    /// Mean phonon frequency.
    pub omega: f64,
    /// Gaussian phonon bandwidth Δ.
    pub delta: f64,
    pub temperature: f64,
    /// On-site energy ε.
    pub epsilon: f64,
    pub band_convention: BandConvention,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            n_sites: 6,
            transfer: 0.1,
            g: 0.0,
            phi: 0.0,
            omega: 1.0,
            delta: 0.1,
            temperature: 1.0,
            epsilon: 0.0,
            band_convention: BandConvention::TwoJCos,
        }
    }
}

impl ModelParams {
    /// Builds parameters from the squared couplings g² and φ², the form used by
    /// configuration files and presets.
    pub fn with_squared_couplings(mut self, g2: f64, phi2: f64) -> Self {
        self.g = g2.max(0.0).sqrt();
        self.phi = phi2.max(0.0).sqrt();
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn g2(&self) -> f64 {
        self.g * self.g
    }

    pub fn phi2(&self) -> f64 {
        self.phi * self.phi
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(PolaronError::InvalidParameter(msg));
        if self.n_sites < 2 {
            return bad(format!("n_sites must be at least 2, got {}", self.n_sites));
        }
        for (name, v) in [
            ("transfer", self.transfer),
            ("g", self.g),
            ("phi", self.phi),
            ("omega", self.omega),
            ("delta", self.delta),
            ("temperature", self.temperature),
            ("epsilon", self.epsilon),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite, got {v}"));
            }
        }
        if self.g < 0.0 || self.phi < 0.0 {
            return bad("couplings must be non-negative".into());
        }
        if self.omega <= 0.0 {
            return bad(format!("omega must be positive, got {}", self.omega));
        }
        if self.delta < 0.0 {
            return bad(format!("phonon bandwidth must be non-negative, got {}", self.delta));
        }
        if self.temperature < 0.0 {
            return bad(format!("temperature must be non-negative, got {}", self.temperature));
        }
        Ok(())
    }

    pub fn grid(&self) -> MomentumGrid {
        MomentumGrid { n: self.n_sites }
    }

    /// 2n + 1 for the mean phonon frequency at this temperature.
    pub fn bose(&self) -> f64 {
        bose_factor(self.temperature, self.omega)
    }

    pub fn bare_band(&self, k: f64) -> f64 {
        bare_band(k, self)
    }

    /// f_k^q for momenta given as grid indices.
    pub fn coupling_at(&self, k: usize, q: usize) -> Complex64 {
        let grid = self.grid();
        coupling(grid.k(k), grid.k(q), self)
    }
}

/// Uniform Brillouin-zone grid with N points. Momenta are handled as indices
/// `m` in `0..N` standing for k = 2πm/N (mod 2π); the wave number reported for
/// an index is folded into [−π, π).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MomentumGrid {
    n: usize,
}

impl MomentumGrid {
    pub(crate) fn from_len(n: usize) -> Self {
        Self { n }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Signed integer label of index `m` in the centred range.
    pub fn signed(&self, m: usize) -> i64 {
        let n = self.n as i64;
        let m = (m % self.n) as i64;
        if m >= n - n / 2 {
            m - n
        } else {
            m
        }
    }

    /// Wave number for index `m`, in [−π, π).
    pub fn k(&self, m: usize) -> f64 {
        self.signed(m) as f64 * self.spacing()
    }

    #[inline]
    pub fn add(&self, a: usize, b: usize) -> usize {
        (a + b) % self.n
    }

    #[inline]
    pub fn sub(&self, a: usize, b: usize) -> usize {
        (a + self.n - b % self.n) % self.n
    }

    #[inline]
    pub fn neg(&self, a: usize) -> usize {
        (self.n - a % self.n) % self.n
    }

    /// Reduces an arbitrary signed label onto the grid.
    #[inline]
    pub fn wrap(&self, m: i64) -> usize {
        m.rem_euclid(self.n as i64) as usize
    }

    pub fn zero(&self) -> usize {
        0
    }

    /// Grid index of wave number `k`, if `k` lies on the grid (mod 2π).
    pub fn index_of(&self, k: f64) -> Option<usize> {
        let x = k / self.spacing();
        let r = x.round();
        if (x - r).abs() > 1e-9 {
            return None;
        }
        Some(self.wrap(r as i64))
    }

    /// Indices ordered by ascending wave number, starting at the most negative.
    pub fn ordered(&self) -> Vec<usize> {
        let n = self.n as i64;
        let lo = -(n / 2);
        (0..n).map(|j| self.wrap(lo + j)).collect()
    }

    /// Wave numbers in ascending order.
    pub fn points(&self) -> Vec<f64> {
        self.ordered().into_iter().map(|m| self.k(m)).collect()
    }
}

pub fn make_grid(n: usize) -> Result<MomentumGrid> {
    if n < 2 {
        return Err(PolaronError::InvalidParameter(format!(
            "grid needs at least 2 points, got {n}"
        )));
    }
    Ok(MomentumGrid { n })
}

pub fn bare_band(k: f64, p: &ModelParams) -> f64 {
    match p.band_convention {
        BandConvention::TwoJCos => 2.0 * p.transfer * k.cos(),
        BandConvention::JCos => p.transfer * k.cos(),
    }
}

/// Antisymmetric coupling geometry f_k^q = g − iφ[sin k − sin(k − q)].
pub fn coupling(k: f64, q: f64, p: &ModelParams) -> Complex64 {
    Complex64::new(p.g, -p.phi * (k.sin() - (k - q).sin()))
}

/// 2n + 1 = coth(ω / 2T); equals 1 at T = 0.
pub fn bose_factor(temperature: f64, omega: f64) -> f64 {
    if temperature <= 0.0 {
        return 1.0;
    }
    let x = omega / (2.0 * temperature);
    if x > 20.0 {
        return 1.0 + 2.0 * (-2.0 * x).exp();
    }
    1.0 / x.tanh()
}

/// Bose–Einstein occupation n at the mean frequency.
pub fn occupation(temperature: f64, omega: f64) -> f64 {
    0.5 * (bose_factor(temperature, omega) - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn smallest_grid() {
        let g = make_grid(2).unwrap();
        assert_eq!(g.points(), vec![-PI, 0.0]);
        assert!(make_grid(1).is_err());
        assert!(make_grid(0).is_err());
    }

    #[test]
    fn six_point_grid() {
        let g = make_grid(6).unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 6);
        assert_abs_diff_eq!(pts[0], -PI, epsilon = 1e-15);
        for w in pts.windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], PI / 3.0, epsilon = 1e-12);
        }
        assert_eq!(pts.iter().filter(|&&k| k == 0.0).count(), 1);
    }

    #[test]
    fn odd_grid_is_centred() {
        let g = make_grid(5).unwrap();
        let pts = g.points();
        assert_eq!(pts.iter().filter(|&&k| k == 0.0).count(), 1);
        assert!(pts.iter().all(|&k| (-PI..PI).contains(&k)));
    }

    #[test]
    fn modular_wrap() {
        let g = make_grid(6).unwrap();
        let a = g.index_of(PI - PI / 3.0).unwrap();
        let b = g.index_of(2.0 * PI / 3.0).unwrap();
        assert_eq!(g.add(a, b), g.index_of(-PI + PI / 3.0).unwrap());
    }

    #[test]
    fn bare_band_values() {
        let p = ModelParams::default();
        assert_abs_diff_eq!(bare_band(0.0, &p), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(bare_band(PI / 2.0, &p), 0.0, epsilon = 1e-15);
        let half = ModelParams { band_convention: BandConvention::JCos, ..p };
        assert_abs_diff_eq!(bare_band(0.0, &half), 0.1, epsilon = 1e-15);
        for n in 2..12 {
            let g = make_grid(n).unwrap();
            let s: f64 = g.points().iter().map(|&k| bare_band(k, &p)).sum();
            assert_abs_diff_eq!(s, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn coupling_values() {
        let p = ModelParams::default().with_squared_couplings(0.3, 0.2);
        for &k in &[-2.0, 0.1, 1.3] {
            let f = coupling(k, 0.0, &p);
            assert_eq!(f.im, 0.0);
            assert_abs_diff_eq!(f.re, p.g, epsilon = 1e-15);
        }
        let q = ModelParams::default().with_squared_couplings(0.0, 1.0);
        let f = coupling(PI / 2.0, PI / 2.0, &q);
        assert_abs_diff_eq!(f.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f.im, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn coupling_hermiticity_on_grid() {
        // f_k^q = conj(f_{k-q}^{-q}) over every grid pair
        let p = ModelParams { n_sites: 8, ..Default::default() }.with_squared_couplings(0.5, 0.7);
        let g = p.grid();
        for k in 0..8 {
            for q in 0..8 {
                let lhs = p.coupling_at(k, q);
                let rhs = p.coupling_at(g.sub(k, q), g.neg(q)).conj();
                assert_abs_diff_eq!((lhs - rhs).norm(), 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn bose_values() {
        assert_eq!(bose_factor(0.0, 1.0), 1.0);
        assert_abs_diff_eq!(bose_factor(1.0, 1.0), 1.0 / 0.5f64.tanh(), epsilon = 1e-14);
        assert_abs_diff_eq!(bose_factor(1.0, 1.0), 2.163953413738653, epsilon = 1e-12);
        assert_abs_diff_eq!(bose_factor(4.0, 1.0), 8.041623328375598, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn modular_arithmetic_closed_and_associative(n in 2usize..40, a in 0usize..1000, b in 0usize..1000, c in 0usize..1000) {
            let g = make_grid(n).unwrap();
            let (a, b, c) = (a % n, b % n, c % n);
            prop_assert!(g.add(a, b) < n);
            prop_assert_eq!(g.add(g.add(a, b), c), g.add(a, g.add(b, c)));
            prop_assert_eq!(g.sub(g.add(a, b), b), a);
            prop_assert_eq!(g.add(a, g.neg(a)), 0);
            let k = g.k(a) + g.k(b);
            prop_assert_eq!(g.index_of(k), Some(g.add(a, b)));
        }

        #[test]
        fn bose_monotone(t1 in 0.0f64..10.0, dt in 0.001f64..5.0) {
            let lo = bose_factor(t1, 1.0);
            let hi = bose_factor(t1 + dt, 1.0);
            prop_assert!(lo >= 1.0);
            prop_assert!(hi >= lo);
        }

        #[test]
        fn bare_band_even(n in 2usize..30, m in 0usize..30) {
            let p = ModelParams::default();
            let g = make_grid(n).unwrap();
            let m = m % n;
            let e1 = bare_band(g.k(m), &p);
            let e2 = bare_band(g.k(g.neg(m)), &p);
            prop_assert!((e1 - e2).abs() < 1e-14);
        }
    }
}
