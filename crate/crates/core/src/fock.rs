//! Exact θ-operator correlators in a truncated phonon Fock space.
//!
//! Small lattices only: the electron index and N phonon modes, each cut at
//! n_max quanta, are represented densely and the transformation is
//! exponentiated directly. The phonons are dispersionless here, so the
//! matching analytic values are those with Δ = 0.

use std::collections::HashMap;

use ndarray::{s, Array2};
use num_complex::Complex64;
use serde::Serialize;

use crate::correlation::{four_theta_in, two_theta_in, CorrelationContext, TimeSlice};
use crate::error::{PolaronError, Result};
use crate::expm::matrix_exp;
use crate::lattice::{occupation, ModelParams};
use crate::solver::AMatrix;

/// Largest total dimension the oracle will build.
pub const MAX_DIMENSION: usize = 5000;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TruncatedSpace {
    pub n_sites: usize,
    pub n_max: usize,
    /// Phonon dimension (n_max+1)^N.
    pub phonon_dim: usize,
}

impl TruncatedSpace {
    pub fn new(n_sites: usize, n_max: usize) -> Result<Self> {
        if n_sites < 2 {
            return Err(PolaronError::InvalidParameter("oracle needs at least two sites".into()));
        }
        let phonon_dim = (n_max + 1)
            .checked_pow(n_sites as u32)
            .filter(|d| d.saturating_mul(n_sites) <= MAX_DIMENSION)
            .ok_or(PolaronError::TooLarge(
                (n_max + 1).saturating_pow(n_sites as u32).saturating_mul(n_sites),
                MAX_DIMENSION,
            ))?;
        Ok(Self { n_sites, n_max, phonon_dim })
    }

    pub fn dimension(&self) -> usize {
        self.n_sites * self.phonon_dim
    }

    fn occupation(&self, state: usize, mode: usize) -> usize {
        (state / (self.n_max + 1).pow(mode as u32)) % (self.n_max + 1)
    }

    fn stride(&self, mode: usize) -> usize {
        (self.n_max + 1).pow(mode as u32)
    }

    /// Annihilation operator of one mode.
    pub fn lowering(&self, mode: usize) -> Array2<f64> {
        let d = self.phonon_dim;
        let mut b = Array2::zeros((d, d));
        for s in 0..d {
            let n = self.occupation(s, mode);
            if n > 0 {
                b[[s - self.stride(mode), s]] = (n as f64).sqrt();
            }
        }
        b
    }

    /// Total phonon number Σ_q n_q of each basis state.
    pub fn quanta(&self) -> Vec<usize> {
        (0..self.phonon_dim).map(|s| (0..self.n_sites).map(|m| self.occupation(s, m)).sum()).collect()
    }
}

/// exp(−𝒮) on C^N ⊗ Fock, with 𝒮_{kk'} = N^{−1/2}A_{−k'}^{k−k'}(b†_{k'−k} − b_{k−k'}),
/// the matrix of the exponent of U = exp(N^{−1/2}Σ_{kq}A_{−k}^q(b†_{−q} − b_q)a†_{k+q}a_k).
/// This 𝒮 is anti-Hermitian whenever A_k^q = (A_{k−q}^{−q})*.
pub fn build_theta(a: &AMatrix, space: &TruncatedSpace) -> Result<Array2<Complex64>> {
    let n = space.n_sites;
    if a.n() != n {
        return Err(PolaronError::InvalidParameter("A-matrix size does not match the oracle space".into()));
    }
    let d = space.phonon_dim;
    let lowering: Vec<Array2<f64>> = (0..n).map(|m| space.lowering(m)).collect();
    let wrap = |x: i64| x.rem_euclid(n as i64) as usize;
    let scale = 1.0 / (n as f64).sqrt();
    let mut s_op = Array2::<Complex64>::zeros((n * d, n * d));
    for k in 0..n {
        for kp in 0..n {
            let amp = a.get(wrap(-(kp as i64)), wrap(k as i64 - kp as i64)) * scale;
            if amp == ZERO {
                continue;
            }
            let up = lowering[wrap(kp as i64 - k as i64)].t();
            let down = &lowering[wrap(k as i64 - kp as i64)];
            let mut block = s_op.slice_mut(s![k * d..(k + 1) * d, kp * d..(kp + 1) * d]);
            for i in 0..d {
                for j in 0..d {
                    let v = up[[i, j]] - down[[i, j]];
                    if v != 0.0 {
                        block[[i, j]] = amp * v;
                    }
                }
            }
        }
    }
    matrix_exp(&s_op.mapv(|v| -v).view())
}

/// Thermal phonon state and the exact transformation for one space.
pub struct FockOracle {
    pub space: TruncatedSpace,
    theta: Array2<Complex64>,
    energies: Vec<f64>,
    weights: Vec<f64>,
}

impl FockOracle {
    pub fn new(p: &ModelParams, a: &AMatrix, n_max: usize) -> Result<Self> {
        p.validate()?;
        let space = TruncatedSpace::new(p.n_sites, n_max)?;
        let theta = build_theta(a, &space)?;
        let energies: Vec<f64> = space.quanta().into_iter().map(|q| q as f64 * p.omega).collect();
        let weights: Vec<f64> = if p.temperature == 0.0 {
            energies.iter().map(|&e| if e == 0.0 { 1.0 } else { 0.0 }).collect()
        } else {
            energies.iter().map(|&e| (-e / p.temperature).exp()).collect()
        };
        let z: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / z).collect();
        Ok(Self { space, theta, energies, weights })
    }

    /// The full transformation exp(−𝒮).
    pub fn theta(&self) -> &Array2<Complex64> {
        &self.theta
    }

    /// Phonon-space block θ_{kk'}.
    pub fn block(&self, k: usize, kp: usize) -> Array2<Complex64> {
        let d = self.space.phonon_dim;
        self.theta.slice(s![k * d..(k + 1) * d, kp * d..(kp + 1) * d]).to_owned()
    }

    /// θ†_{kk'} = (θ_{kk'})†, the image of a†_k under the transformation.
    fn adjoint_block(&self, k: usize, kp: usize) -> Array2<Complex64> {
        self.block(k, kp).t().mapv(|v| v.conj())
    }

    /// Tr[ρ A e^{iHt} B e^{−iHt}].
    pub fn thermal(&self, a: &Array2<Complex64>, b: &Array2<Complex64>, t: f64) -> Complex64 {
        let d = self.space.phonon_dim;
        let mut s = ZERO;
        for i in 0..d {
            let w = self.weights[i];
            if w == 0.0 {
                continue;
            }
            for j in 0..d {
                let x = a[[i, j]] * b[[j, i]];
                if x != ZERO {
                    s += x * w * Complex64::from_polar(1.0, (self.energies[j] - self.energies[i]) * t);
                }
            }
        }
        s
    }

    /// ⟨θ†_{kk'} θ_{qq'}(t)⟩.
    pub fn two_theta(&self, k: usize, kp: usize, q: usize, qp: usize, t: f64) -> Complex64 {
        self.thermal(&self.adjoint_block(k, kp), &self.block(q, qp), t)
    }

    /// θ†_{k1k2} θ_{k3k4} as a phonon-space operator.
    pub fn pair(&self, k: [usize; 4]) -> Array2<Complex64> {
        self.adjoint_block(k[0], k[1]).dot(&self.block(k[2], k[3]))
    }

    /// ⟨θ†_{k1k2} θ_{k3k4} θ†_{q1q2}(t) θ_{q3q4}(t)⟩.
    pub fn four_theta(&self, k: [usize; 4], q: [usize; 4], t: f64) -> Complex64 {
        self.thermal(&self.pair(k), &self.pair(q), t)
    }

    /// ⟨ψ_q ψ_{−q}(t)⟩ with ψ_q = b_q + b†_{−q}.
    pub fn field_correlator(&self, q: usize, t: f64) -> Complex64 {
        let n = self.space.n_sites;
        let mq = (n - q) % n;
        let psi = |m: usize| -> Array2<Complex64> {
            let mm = (n - m) % n;
            (&self.space.lowering(m) + &self.space.lowering(mm).t()).mapv(|v| Complex64::new(v, 0.0))
        };
        self.thermal(&psi(q), &psi(mq), t)
    }
}

/// Quantities an oracle can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OracleQuantity {
    TwoTheta([usize; 4]),
    FourTheta([usize; 4], [usize; 4]),
}

impl OracleQuantity {
    fn eval(&self, o: &FockOracle, pairs: &mut HashMap<[usize; 4], Array2<Complex64>>, t: f64) -> Complex64 {
        match *self {
            OracleQuantity::TwoTheta(i) => o.two_theta(i[0], i[1], i[2], i[3], t),
            OracleQuantity::FourTheta(k, q) => {
                for idx in [k, q] {
                    pairs.entry(idx).or_insert_with(|| o.pair(idx));
                }
                o.thermal(&pairs[&k], &pairs[&q], t)
            }
        }
    }

    fn analytic(&self, ctx: &CorrelationContext, slice: &TimeSlice) -> Complex64 {
        match *self {
            OracleQuantity::TwoTheta(i) => two_theta_in(ctx, slice, i[0], i[1], i[2], i[3]),
            OracleQuantity::FourTheta(k, q) => four_theta_in(ctx, slice, k, q),
        }
    }

    /// Every two-θ and four-θ index combination of an N-site lattice.
    pub fn all(n: usize) -> Vec<Self> {
        let two = (0..n.pow(4)).map(|i| OracleQuantity::TwoTheta(digits(i, n)));
        let four = (0..n.pow(8)).map(|i| {
            let d = digits8(i, n);
            OracleQuantity::FourTheta([d[0], d[1], d[2], d[3]], [d[4], d[5], d[6], d[7]])
        });
        two.chain(four).collect()
    }
}

/// Exact values at `n_max`, rejected when `n_max + 2` moves any of them by
/// more than `tol`.
pub fn exact_values(p: &ModelParams, a: &AMatrix, n_max: usize, items: &[(OracleQuantity, f64)], tol: f64) -> Result<Vec<Complex64>> {
    let lo = FockOracle::new(p, a, n_max)?;
    let hi = FockOracle::new(p, a, n_max + 2)?;
    let (mut lo_pairs, mut hi_pairs) = (HashMap::new(), HashMap::new());
    let mut out = Vec::with_capacity(items.len());
    let mut worst = 0.0f64;
    for (q, t) in items {
        let v = q.eval(&lo, &mut lo_pairs, *t);
        worst = worst.max((q.eval(&hi, &mut hi_pairs, *t) - v).norm());
        out.push(v);
    }
    if worst > tol {
        return Err(PolaronError::CutoffNotConverged(worst, tol));
    }
    Ok(out)
}

pub fn exact_two_theta(p: &ModelParams, a: &AMatrix, n_max: usize, idx: [usize; 4], t: f64, tol: f64) -> Result<Complex64> {
    Ok(exact_values(p, a, n_max, &[(OracleQuantity::TwoTheta(idx), t)], tol)?[0])
}

pub fn exact_four_theta(p: &ModelParams, a: &AMatrix, n_max: usize, k: [usize; 4], q: [usize; 4], t: f64, tol: f64) -> Result<Complex64> {
    Ok(exact_values(p, a, n_max, &[(OracleQuantity::FourTheta(k, q), t)], tol)?[0])
}

/// One line of an oracle comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    pub quantity: OracleQuantity,
    pub temperature: f64,
    pub t: f64,
    pub analytic: [f64; 2],
    pub exact: [f64; 2],
    pub abs_error: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub n_sites: usize,
    pub n_max: usize,
    pub g2: f64,
    pub cutoff_tol: f64,
    pub max_two_theta_error: f64,
    pub max_four_theta_error: f64,
    pub rows: Vec<OracleRow>,
}

/// Compares the analytic θ averages (Δ = 0) with exact values for a uniform
/// field A = g over every index combination of an N-site lattice.
pub fn constant_field_report(p: &ModelParams, n_max: usize, temperatures: &[f64], times: &[f64], cutoff_tol: f64) -> Result<OracleReport> {
    let a = AMatrix::constant(p.n_sites, Complex64::new(p.g, 0.0));
    field_report(p, &a, n_max, temperatures, times, &OracleQuantity::all(p.n_sites), cutoff_tol)
}

/// Compares the analytic θ averages (Δ = 0) with exact values for the field
/// `a`, held fixed across `temperatures`.
pub fn field_report(
    p: &ModelParams,
    a: &AMatrix,
    n_max: usize,
    temperatures: &[f64],
    times: &[f64],
    quantities: &[OracleQuantity],
    cutoff_tol: f64,
) -> Result<OracleReport> {
    let mut rows = Vec::new();
    let (mut e2, mut e4) = (0.0f64, 0.0f64);
    for &temp in temperatures {
        let pt = ModelParams { delta: 0.0, temperature: temp, ..*p };
        let ctx = CorrelationContext::new(&pt, a)?;
        let items: Vec<(OracleQuantity, f64)> = times.iter().flat_map(|&t| quantities.iter().map(move |&q| (q, t))).collect();
        let exact = exact_values(&pt, a, n_max, &items, cutoff_tol)?;
        let slices = times.iter().map(|&t| Ok((t.to_bits(), ctx.slice(t)?))).collect::<Result<HashMap<u64, TimeSlice>>>()?;
        for ((q, t), ex) in items.iter().zip(exact) {
            let an = q.analytic(&ctx, &slices[&t.to_bits()]);
            let err = (an - ex).norm();
            match q {
                OracleQuantity::TwoTheta(_) => e2 = e2.max(err),
                OracleQuantity::FourTheta(..) => e4 = e4.max(err),
            }
            rows.push(OracleRow {
                quantity: *q,
                temperature: temp,
                t: *t,
                analytic: [an.re, an.im],
                exact: [ex.re, ex.im],
                abs_error: err,
                rel_error: if ex.norm() > 0.0 { err / ex.norm() } else { err },
            });
        }
    }
    Ok(OracleReport {
        n_sites: p.n_sites,
        n_max,
        g2: p.g2(),
        cutoff_tol,
        max_two_theta_error: e2,
        max_four_theta_error: e4,
        rows,
    })
}

fn digits(mut x: usize, n: usize) -> [usize; 4] {
    let mut d = [0; 4];
    for v in d.iter_mut() {
        *v = x % n;
        x /= n;
    }
    d
}

fn digits8(mut x: usize, n: usize) -> [usize; 8] {
    let mut d = [0; 8];
    for v in d.iter_mut() {
        *v = x % n;
        x /= n;
    }
    d
}

/// Thermal occupation used by the oracle's Boltzmann weights, exposed for
/// comparisons with ⟨ψψ⟩.
pub fn mode_occupation(p: &ModelParams) -> f64 {
    occupation(p.temperature, p.omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagators::PhononPropagators;

    fn params(n: usize, g2: f64, t: f64) -> ModelParams {
        ModelParams { n_sites: n, temperature: t, delta: 0.0, ..Default::default() }.with_squared_couplings(g2, 0.0)
    }

    #[test]
    fn guard_rejects_large_spaces() {
        assert!(matches!(TruncatedSpace::new(3, 20), Err(PolaronError::TooLarge(..))));
        assert!(matches!(TruncatedSpace::new(40, 8), Err(PolaronError::TooLarge(..))));
        assert_eq!(TruncatedSpace::new(2, 8).unwrap().dimension(), 162);
    }

    #[test]
    fn zero_field_is_identity() {
        let space = TruncatedSpace::new(2, 3).unwrap();
        let th = build_theta(&AMatrix::zeros(2), &space).unwrap();
        for i in 0..space.dimension() {
            for j in 0..space.dimension() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((th[[i, j]] - want).norm() < 1e-15);
            }
        }
        let o = FockOracle::new(&params(2, 0.0, 0.5), &AMatrix::zeros(2), 3).unwrap();
        let v = o.two_theta(0, 0, 1, 1, 0.7);
        assert!((v - 1.0).norm() < 1e-14);
        assert!(o.two_theta(0, 1, 0, 1, 0.7).norm() < 1e-15);
        let f = o.four_theta([0, 0, 1, 1], [1, 1, 0, 0], 0.3);
        assert!((f - 1.0).norm() < 1e-14);
    }

    #[test]
    fn transformation_is_unitary() {
        let p = params(2, 0.3, 0.0);
        let a = AMatrix::from_values(ndarray::arr2(&[
            [Complex64::new(0.5, 0.0), Complex64::new(0.3, 0.2)],
            [Complex64::new(0.5, 0.0), Complex64::new(0.3, -0.2)],
        ]));
        let space = TruncatedSpace::new(p.n_sites, 6).unwrap();
        let th = build_theta(&a, &space).unwrap();
        let d = space.phonon_dim;
        let prod = th.t().mapv(|v| v.conj()).dot(&th);
        // the truncated ladder is not exactly anti-Hermitian-closed; check the
        // low-occupation corner where the cutoff is irrelevant
        for k in 0..2 {
            for kp in 0..2 {
                let want = if k == kp { 1.0 } else { 0.0 };
                assert!((prod[[k * d, kp * d]] - want).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn uniform_field_is_a_displacement() {
        // with A = g the k-diagonal blocks of θ in the site basis act as
        // displacement of the local mode: ⟨0|θ_site|0⟩ = e^{−g²/2}
        let g2 = 0.2;
        let p = params(2, g2, 0.0);
        let a = AMatrix::constant(2, Complex64::new(p.g, 0.0));
        let o = FockOracle::new(&p, &a, 12).unwrap();
        let site: Complex64 = (o.block(0, 0) + o.block(0, 1))[[0, 0]];
        assert!((site - (-g2 / 2.0).exp()).norm() < 1e-10);
    }

    #[test]
    fn matches_analytic_at_zero_temperature() {
        for &g2 in &[0.1, 0.3] {
            let p = params(2, g2, 0.0);
            let r = constant_field_report(&p, 14, &[0.0], &[0.0, 0.5, 1.0], 1e-9).unwrap();
            assert!(r.max_two_theta_error < 1e-9, "{g2}: {}", r.max_two_theta_error);
            assert!(r.max_four_theta_error < 1e-7, "{g2}: {}", r.max_four_theta_error);
        }
    }

    #[test]
    fn cutoff_convergence_at_finite_temperature() {
        let p = params(2, 0.05, 0.5);
        let a = AMatrix::constant(2, Complex64::new(p.g, 0.0));
        let v = exact_two_theta(&p, &a, 12, [0, 0, 1, 1], 0.5, 1e-9).unwrap();
        assert!(v.norm() > 0.1);
        assert!(matches!(
            exact_two_theta(&p, &a, 1, [0, 0, 1, 1], 0.5, 1e-12),
            Err(PolaronError::CutoffNotConverged(..))
        ));
    }

    #[test]
    fn field_correlator_sign() {
        let p = params(2, 0.0, 0.7);
        let o = FockOracle::new(&p, &AMatrix::zeros(2), 24).unwrap();
        for &t in &[0.0, 0.4, 1.9] {
            let want = PhononPropagators::at(&p, t).psi_psi;
            for q in 0..2 {
                assert!((o.field_correlator(q, t) - want).norm() < 1e-8, "{q} {t}");
            }
        }
        assert!(mode_occupation(&p) > 0.0);
    }
}
