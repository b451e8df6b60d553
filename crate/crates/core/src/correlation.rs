//! Thermal θ-operator averages and the residual-interaction correlator
//! ⟨V_{k1k2} V_{q1q2}(t)⟩ = X + Y + Λ.
//!
//! Every time-dependent E-matrix is E^q(t) = (z/N)·C^q with the scalar
//! z = N·P(t), so each correlator is an entire function of z multiplied by
//! known single-phonon time factors. Two evaluation routes exist:
//!
//! * the literal route ([`two_theta_avg`], [`four_theta_avg`],
//!   [`vv_correlation`]) transcribes the sums term by term and is meant for
//!   small lattices and cross-checks;
//! * [`CorrelationEngine`] regroups the same sums into weighted pairs of
//!   four-θ averages, samples them on the circle |z| = N·P(0), which encloses
//!   every z(t), and evaluates the resulting Taylor series. Time integration
//!   then costs a polynomial evaluation per step.

use std::collections::HashMap;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::series;
use crate::error::{PolaronError, Result};
use crate::expm::matrix_exp;
use crate::lattice::{ModelParams, MomentumGrid};
use crate::propagators::{reduced_propagator, PhononPropagators};
use crate::solver::{coupling_matrices, theta_avg, AMatrix, Solution};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Converged state needed by every correlator: parameters, A-matrix, the
/// Debye–Waller factors and the static coupling matrices C^q.
#[derive(Debug, Clone)]
pub struct CorrelationContext {
    pub params: ModelParams,
    pub a: AMatrix,
    pub theta: Vec<f64>,
    coupling: Vec<Array2<Complex64>>,
    static_slice: TimeSlice,
    grid: MomentumGrid,
}

/// exp(±E^q) for every q at one value of the reduced propagator.
#[derive(Debug, Clone)]
pub struct TimeSlice {
    pub z: Complex64,
    plus: Vec<Array2<Complex64>>,
    minus: Vec<Array2<Complex64>>,
}

impl TimeSlice {
    #[inline]
    pub fn exp(&self, sign: i8, q: usize, i: usize, j: usize) -> Complex64 {
        if sign > 0 {
            self.plus[q][[i, j]]
        } else {
            self.minus[q][[i, j]]
        }
    }
}

impl CorrelationContext {
    pub fn new(params: &ModelParams, a: &AMatrix) -> Result<Self> {
        params.validate()?;
        if a.n() != params.n_sites {
            return Err(PolaronError::InvalidParameter("A-matrix size does not match n_sites".into()));
        }
        let coupling = coupling_matrices(a);
        let r = reduced_propagator(params, 0.0);
        let e0: Array2<Complex64> = coupling[0].mapv(|c| c * r / params.n_sites as f64);
        let theta = theta_avg(&e0);
        let mut ctx = Self {
            params: *params,
            a: a.clone(),
            theta,
            coupling,
            static_slice: TimeSlice { z: r, plus: Vec::new(), minus: Vec::new() },
            grid: params.grid(),
        };
        ctx.static_slice = ctx.slice_at(r)?;
        Ok(ctx)
    }

    pub fn from_solution(s: &Solution) -> Result<Self> {
        Self::new(&s.params, &s.a)
    }

    pub fn n(&self) -> usize {
        self.params.n_sites
    }

    pub fn grid(&self) -> MomentumGrid {
        self.grid
    }

    pub fn static_slice(&self) -> &TimeSlice {
        &self.static_slice
    }

    pub fn slice(&self, t: f64) -> Result<TimeSlice> {
        self.slice_at(reduced_propagator(&self.params, t))
    }

    /// exp(±E^q) at reduced propagator `z`.
    pub fn slice_at(&self, z: Complex64) -> Result<TimeSlice> {
        let n = self.n() as f64;
        let mut plus = Vec::with_capacity(self.coupling.len());
        let mut minus = Vec::with_capacity(self.coupling.len());
        for c in &self.coupling {
            let e = c.mapv(|v| v * z / n);
            plus.push(matrix_exp(&e.view())?);
            minus.push(matrix_exp(&e.mapv(|v| -v).view())?);
        }
        Ok(TimeSlice { z, plus, minus })
    }

    /// True when every C^q is the same constant, i.e. A is uniform.
    fn uniform_coupling(&self) -> Option<f64> {
        if !self.a.is_constant(1e-13) {
            return None;
        }
        let c = self.a.get(0, 0).norm_sqr();
        Some(c)
    }
}

/// ⟨θ†_{kk'} θ_{qq'}(t)⟩ from a prepared slice.
pub fn two_theta_in(ctx: &CorrelationContext, slice: &TimeSlice, k: usize, kp: usize, q: usize, qp: usize) -> Complex64 {
    let g = ctx.grid;
    if g.sub(k, kp) != g.sub(q, qp) {
        return ZERO;
    }
    let e = slice.exp(1, g.sub(k, q), g.neg(qp), g.neg(q));
    e * (ctx.theta[g.neg(kp)] * ctx.theta[g.neg(qp)])
}

/// ⟨θ†_{kk'} θ_{qq'}(t)⟩, building exp(E(t)) for this call.
pub fn two_theta_avg(ctx: &CorrelationContext, k: usize, kp: usize, q: usize, qp: usize, t: f64) -> Result<Complex64> {
    let g = ctx.grid;
    if g.sub(k, kp) != g.sub(q, qp) {
        return Ok(ZERO);
    }
    let z = reduced_propagator(&ctx.params, t);
    let e = ctx.coupling[g.sub(k, q)].mapv(|v| v * z / ctx.n() as f64);
    let ex = matrix_exp(&e.view())?;
    Ok(ex[[g.neg(qp), g.neg(q)]] * (ctx.theta[g.neg(kp)] * ctx.theta[g.neg(qp)]))
}

/// ⟨θ†_{k1k2} θ_{k3k4} θ†_{q1q2}(t) θ_{q3q4}(t)⟩ by the literal triple sum.
pub fn four_theta_in(ctx: &CorrelationContext, slice: &TimeSlice, k: [usize; 4], q: [usize; 4]) -> Complex64 {
    let n = ctx.n() as i64;
    let w = |x: i64| x.rem_euclid(n) as usize;
    let [k1, k2, k3, k4] = k.map(|x| x as i64);
    let [q1, q2, q3, q4] = q.map(|x| x as i64);
    if w(k1 + q1 + k4 + q4) != w(k2 + q2 + k3 + q3) {
        return ZERO;
    }
    let st = &ctx.static_slice;
    let mut sum = Compensated::default();
    for r1 in 0..n {
        let s1 = two_theta_in(ctx, st, w(k2 + r1), w(k2), w(k3), w(k3 - r1));
        for r2 in 0..n {
            let s2 = two_theta_in(ctx, st, w(q2 + r2), w(q2), w(q3), w(q3 - r2));
            for r3 in 0..n {
                let rho = k3 + r3 - q1 - k4 - r1;
                let m1 = slice.exp(-1, w(k1 + q4 + r3 - q2 - q3), w(rho), w(-q2 - r2));
                let m2 = slice.exp(1, w(k1 + r2 - q3), w(-q4 - r3), w(r2 - q3));
                let m3 = slice.exp(1, w(k3 - q1 - r1), w(-q1), w(rho));
                let m4 = slice.exp(-1, w(k4 - q4 - r3), w(-q4), w(-q4 - r3));
                sum.add(s1 * s2 * m1 * m2 * m3 * m4);
            }
        }
    }
    sum.value()
}

/// Neumaier summation, applied to real and imaginary parts separately.
#[derive(Default)]
struct Compensated {
    sum: Complex64,
    carry: Complex64,
}

impl Compensated {
    fn add(&mut self, x: Complex64) {
        let step = |s: &mut f64, c: &mut f64, x: f64| {
            let t = *s + x;
            *c += if s.abs() >= x.abs() { (*s - t) + x } else { (x - t) + *s };
            *s = t;
        };
        step(&mut self.sum.re, &mut self.carry.re, x.re);
        step(&mut self.sum.im, &mut self.carry.im, x.im);
    }

    fn value(&self) -> Complex64 {
        self.sum + self.carry
    }
}

pub fn four_theta_avg(ctx: &CorrelationContext, k: [usize; 4], q: [usize; 4], t: f64) -> Result<Complex64> {
    let slice = ctx.slice(t)?;
    Ok(four_theta_in(ctx, &slice, k, q))
}

/// ⟨T_a T_b(t)⟩ = ⟨θ†θ θ†(t)θ(t)⟩ − ⟨θ†θ⟩⟨θ†θ⟩.
pub fn tt_correlator(ctx: &CorrelationContext, slice: &TimeSlice, a: [usize; 4], b: [usize; 4]) -> Complex64 {
    let st = &ctx.static_slice;
    four_theta_in(ctx, slice, a, b)
        - two_theta_in(ctx, st, a[0], a[1], a[2], a[3]) * two_theta_in(ctx, st, b[0], b[1], b[2], b[3])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationValue {
    pub value: Complex64,
    pub t: f64,
}

/// Static tables shared by the literal and regrouped sums.
struct Tables {
    n: usize,
    omega: f64,
    /// J_k.
    band: Vec<f64>,
    /// f_{−k}^{Q}, indexed [k][Q].
    fm: Array2<Complex64>,
    a: AMatrix,
}

impl Tables {
    fn new(ctx: &CorrelationContext) -> Self {
        let p = &ctx.params;
        let g = ctx.grid;
        let n = p.n_sites;
        Self {
            n,
            omega: p.omega,
            band: (0..n).map(|k| p.bare_band(g.k(k))).collect(),
            fm: Array2::from_shape_fn((n, n), |(k, q)| p.coupling_at(g.neg(k), q)),
            a: ctx.a.clone(),
        }
    }

    #[inline]
    fn w(&self, x: i64) -> usize {
        x.rem_euclid(self.n as i64) as usize
    }

    /// A_{x}^{y} with signed labels.
    #[inline]
    fn av(&self, x: i64, y: i64) -> Complex64 {
        self.a.get(self.w(x), self.w(y))
    }

    /// Static coefficient of ⟨Z_{k1,k2;k3,k4} ψ_q⟩ and ⟨ψ_q Z_{k1,k2;k3,k4}⟩:
    /// N^{−1/2}{A_{−k2}^{k1−k2} δ_{k2−k1,q} − A_{−k4}^{k3−k4} δ_{k4−k3,q}}.
    fn zc(&self, k1: i64, k2: i64, k3: i64, k4: i64, q: i64) -> Complex64 {
        let mut s = ZERO;
        if self.w(k2 - k1) == self.w(q) {
            s += self.av(-k2, k1 - k2);
        }
        if self.w(k4 - k3) == self.w(q) {
            s -= self.av(-k4, k3 - k4);
        }
        s / (self.n as f64).sqrt()
    }

    /// Operator terms of V_{k1k2} without the ψ part, duplicates merged.
    fn side(&self, k1: i64, k2: i64) -> Vec<(Complex64, [usize; 4])> {
        let n = self.n as i64;
        let inv_n = 1.0 / self.n as f64;
        let mut map: HashMap<[usize; 4], Complex64> = HashMap::new();
        let mut order: Vec<[usize; 4]> = Vec::new();
        let mut push = |key: [usize; 4], c: Complex64| {
            map.entry(key)
                .and_modify(|v| *v += c)
                .or_insert_with(|| {
                    order.push(key);
                    c
                });
        };
        for k3 in 0..n {
            push([self.w(k3), self.w(k1), self.w(k3), self.w(k2)], Complex64::new(self.band[k3 as usize], 0.0));
            for q1 in 0..n {
                let f = self.fm[[k3 as usize, q1 as usize]] * (-self.omega * inv_n);
                push(
                    [self.w(k3 + q1), self.w(k1), self.w(k3), self.w(k2 - q1)],
                    f * self.av(-k1, -q1),
                );
                push(
                    [self.w(k3 + q1), self.w(k1 + q1), self.w(k3), self.w(k2)],
                    f * self.av(-k1, q1).conj(),
                );
            }
        }
        order.into_iter().map(|k| (map[&k], k)).collect()
    }
}

/// ⟨V_{k1k2} V_{q1q2}(t)⟩ by direct transcription of the X, Y and Λ sums.
/// Cost grows like N⁹; intended for N ≤ 4.
pub fn vv_correlation(ctx: &CorrelationContext, k1: usize, k2: usize, q1: usize, q2: usize, t: f64) -> Result<CorrelationValue> {
    let slice = ctx.slice(t)?;
    let h = PhononPropagators::at(&ctx.params, t);
    let tb = Tables::new(ctx);
    let n = tb.n as i64;
    let nf = tb.n as f64;
    let sq = nf.sqrt();
    let om = tb.omega;
    let (k1, k2, q1, q2) = (k1 as i64, k2 as i64, q1 as i64, q2 as i64);
    let w = |x: i64| tb.w(x);
    let tt = |a: [i64; 4], b: [i64; 4]| tt_correlator(ctx, &slice, a.map(w), b.map(w));
    let jb = |k: i64| tb.band[w(k)];
    let fm = |k: i64, q: i64| tb.fm[[w(k), w(q)]];

    let mut x = ZERO;
    for k3 in 0..n {
        for k4 in 0..n {
            x += jb(k3) * jb(k4) * tt([k3, k1, k3, k2], [k4, q1, k4, q2]);
            for qq in 0..n {
                let c = jb(k3) * om * fm(k4, qq) / nf;
                x -= c
                    * (tb.av(-q1, -qq) * tt([k3, k1, k3, k2], [k4 + qq, q1, k4, q2 - qq])
                        + tb.av(-q1, qq).conj() * tt([k3, k1, k3, k2], [k4 + qq, q1 + qq, k4, q2]));
                let c = jb(k4) * om * fm(k3, qq) / nf;
                x -= c
                    * (tb.av(-k1, -qq) * tt([k3 + qq, k1, k3, k2 - qq], [k4, q1, k4, q2])
                        + tb.av(-k1, qq).conj() * tt([k3 + qq, k1 + qq, k3, k2], [k4, q1, k4, q2]));
            }
            for a1 in 0..n {
                for a2 in 0..n {
                    let c = om * om * fm(k3, a1) * fm(k4, a2) / (nf * nf);
                    let pa = [k3 + a1, k1, k3, k2 - a1];
                    let pb = [k3 + a1, k1 + a1, k3, k2];
                    let qa = [k4 + a2, q1, k4, q2 - a2];
                    let qb = [k4 + a2, q1 + a2, k4, q2];
                    let (ca, cb) = (tb.av(-k1, -a1), tb.av(-k1, a1).conj());
                    let (da, db) = (tb.av(-q1, -a2), tb.av(-q1, a2).conj());
                    x += c * (ca * da * tt(pa, qa) + ca * db * tt(pa, qb) + cb * da * tt(pb, qa) + cb * db * tt(pb, qb));
                }
            }
        }
    }

    let mut y_down = ZERO;
    let mut y_up = ZERO;
    for k3 in 0..n {
        for k4 in 0..n {
            for qq in 0..n {
                let z = tb.zc(k1, k3, k3, k2, qq);
                if z != ZERO {
                    y_down += jb(k3) * om * fm(k4, qq) * z * tt([k3, k1, k3, k2], [k4 + qq, q1, k4, q2]) / sq;
                }
                let z = tb.zc(q1, k4, k4, q2, qq);
                if z != ZERO {
                    y_up += jb(k4) * om * fm(k3, qq) * z * tt([k3 + qq, k1, k3, k2], [k4, q1, k4, q2]) / sq;
                }
            }
            for a1 in 0..n {
                for a2 in 0..n {
                    let c = om * om * fm(k3, a1) * fm(k4, a2) / (nf * sq);
                    let z1 = tb.zc(k1, k3 + a1, k3, k2 - a1, a2);
                    let z2 = tb.zc(k1 + a1, k3 + a1, k3, k2, a2);
                    if z1 != ZERO {
                        y_down -= c * tb.av(-k1, -a1) * z1 * tt([k3 + a1, k1, k3, k2 - a1], [k4 + a2, q1, k4, q2]);
                    }
                    if z2 != ZERO {
                        y_down -= c * tb.av(-k1, a1).conj() * z2 * tt([k3 + a1, k1 + a1, k3, k2], [k4 + a2, q1, k4, q2]);
                    }
                    let z1 = tb.zc(q1, k4 + a2, k4, q2 - a2, a1);
                    let z2 = tb.zc(q1 + a2, k4 + a2, k4, q2, a1);
                    if z1 != ZERO {
                        y_up -= c * tb.av(-q1, -a2) * z1 * tt([k3 + a1, k1, k3, k2], [k4 + a2, q1, k4, q2 - a2]);
                    }
                    if z2 != ZERO {
                        y_up -= c * tb.av(-q1, a2).conj() * z2 * tt([k3 + a1, k1, k3, k2], [k4 + a2, q1 + a2, k4, q2]);
                    }
                }
            }
        }
    }

    let mut l_sq = ZERO;
    let mut l_pp = ZERO;
    for k3 in 0..n {
        for k4 in 0..n {
            for a1 in 0..n {
                for a2 in 0..n {
                    let base = om * om * fm(k3, a1) * fm(k4, a2) / nf;
                    let lam = lambda_coefficient(&tb, k1, k2, q1, q2, k3, k4, a1, a2);
                    let pp = w(a1) == w(-a2);
                    if lam == ZERO && !pp {
                        continue;
                    }
                    let v = tt([k3 + a1, k1, k3, k2], [k4 + a2, q1, k4, q2]);
                    l_sq += base * lam * v;
                    if pp {
                        l_pp += base * v;
                    }
                }
            }
        }
    }

    let value = x + h.psi_down * y_down + h.psi_up * y_up + h.psi_down * h.psi_down * l_sq + h.psi_psi * l_pp;
    Ok(CorrelationValue { value, t })
}

/// N⁻¹ × the four A·A·δ·δ terms multiplying the squared Zψ bracket in Λ.
#[allow(clippy::too_many_arguments)]
fn lambda_coefficient(tb: &Tables, k1: i64, k2: i64, q1: i64, q2: i64, k3: i64, k4: i64, a1: i64, a2: i64) -> Complex64 {
    let w = |x: i64| tb.w(x);
    let d1 = w(k1 - k3 - a1) == w(-a2);
    let d2 = w(-a1) == w(q1 - k4 - a2);
    let d3 = w(a1) == w(q2 - k4);
    let d4 = w(k2 - k3) == w(a2);
    let mut s = ZERO;
    if d1 && d2 {
        s -= tb.av(-k3 - a1, k1 - k3 - a1) * tb.av(-k4 - a2, q1 - k4 - a2);
    }
    if d1 && d3 {
        s += tb.av(-k3 - a1, k1 - k3 - a1) * tb.av(-q2, k4 - q2);
    }
    if d4 && d2 {
        s += tb.av(-k2, k3 - k2) * tb.av(-k4 - a2, q1 - k4 - a2);
    }
    if d4 && d3 {
        s -= tb.av(-k2, k3 - k2) * tb.av(-q2, k4 - q2);
    }
    s / tb.n as f64
}

/// Number of time-factor components of a correlator.
pub const COMPONENTS: usize = 5;

/// The z-dependent parts of one correlator: X, the Zψ and ψZ parts of Y, and
/// the squared-bracket and ψψ parts of Λ. The full value is
/// X + h↓·Y↓ + h↑·Y↑ + h↓²·Λ₂ + ⟨ψψ⟩·Λ_ψ.
pub type TupleComponents = [Complex64; COMPONENTS];

/// Time factors multiplying each component.
pub fn component_factors(p: &ModelParams, t: f64) -> TupleComponents {
    let h = PhononPropagators::at(p, t);
    [Complex64::new(1.0, 0.0), h.psi_down, h.psi_up, h.psi_down * h.psi_down, h.psi_psi]
}

pub fn combine(c: &TupleComponents, f: &TupleComponents) -> Complex64 {
    c.iter().zip(f).map(|(a, b)| a * b).sum()
}

#[derive(Debug, Clone, Copy)]
struct PairTerm {
    a: [u8; 4],
    b: [u8; 4],
    w: TupleComponents,
    /// Σ_c w_c ⟨θ†θ⟩_a⟨θ†θ⟩_b, subtracted at every node.
    subtract: TupleComponents,
}

fn pack(a: [usize; 4], b: [usize; 4]) -> u64 {
    a.iter().chain(b.iter()).fold(0u64, |acc, &x| (acc << 8) | x as u64)
}

/// Regroups the X, Y and Λ sums of one tuple into Σ w·⟨T_a T_b⟩ pairs.
fn build_pairs(ctx: &CorrelationContext, tb: &Tables, tuple: [usize; 4]) -> Vec<PairTerm> {
    let n = tb.n as i64;
    let nf = tb.n as f64;
    let sq = nf.sqrt();
    let om = tb.omega;
    let [k1, k2, q1, q2] = tuple.map(|x| x as i64);
    let w = |x: i64| tb.w(x);
    let mut map: HashMap<u64, usize> = HashMap::new();
    let mut terms: Vec<PairTerm> = Vec::new();
    let mut add = |a: [i64; 4], b: [i64; 4], comp: usize, c: Complex64| {
        if c == ZERO {
            return;
        }
        let (a, b) = (a.map(w), b.map(w));
        let key = pack(a, b);
        let idx = *map.entry(key).or_insert_with(|| {
            terms.push(PairTerm {
                a: a.map(|x| x as u8),
                b: b.map(|x| x as u8),
                w: [ZERO; COMPONENTS],
                subtract: [ZERO; COMPONENTS],
            });
            terms.len() - 1
        });
        terms[idx].w[comp] += c;
    };

    let sa = tb.side(k1, k2);
    let sb = tb.side(q1, q2);
    for (ca, a) in &sa {
        for (cb, b) in &sb {
            add(a.map(|x| x as i64), b.map(|x| x as i64), 0, ca * cb);
        }
    }

    let jb = |k: i64| tb.band[w(k)];
    let fm = |k: i64, q: i64| tb.fm[[w(k), w(q)]];
    for k3 in 0..n {
        for k4 in 0..n {
            for qq in 0..n {
                let z = tb.zc(k1, k3, k3, k2, qq);
                add([k3, k1, k3, k2], [k4 + qq, q1, k4, q2], 1, jb(k3) * om * fm(k4, qq) * z / sq);
                let z = tb.zc(q1, k4, k4, q2, qq);
                add([k3 + qq, k1, k3, k2], [k4, q1, k4, q2], 2, jb(k4) * om * fm(k3, qq) * z / sq);
            }
            for a1 in 0..n {
                for a2 in 0..n {
                    let c = -om * om * fm(k3, a1) * fm(k4, a2) / (nf * sq);
                    add(
                        [k3 + a1, k1, k3, k2 - a1],
                        [k4 + a2, q1, k4, q2],
                        1,
                        c * tb.av(-k1, -a1) * tb.zc(k1, k3 + a1, k3, k2 - a1, a2),
                    );
                    add(
                        [k3 + a1, k1 + a1, k3, k2],
                        [k4 + a2, q1, k4, q2],
                        1,
                        c * tb.av(-k1, a1).conj() * tb.zc(k1 + a1, k3 + a1, k3, k2, a2),
                    );
                    add(
                        [k3 + a1, k1, k3, k2],
                        [k4 + a2, q1, k4, q2 - a2],
                        2,
                        c * tb.av(-q1, -a2) * tb.zc(q1, k4 + a2, k4, q2 - a2, a1),
                    );
                    add(
                        [k3 + a1, k1, k3, k2],
                        [k4 + a2, q1 + a2, k4, q2],
                        2,
                        c * tb.av(-q1, a2).conj() * tb.zc(q1 + a2, k4 + a2, k4, q2, a1),
                    );
                    let base = om * om * fm(k3, a1) * fm(k4, a2) / nf;
                    let pa = [k3 + a1, k1, k3, k2];
                    let pb = [k4 + a2, q1, k4, q2];
                    add(pa, pb, 3, base * lambda_coefficient(tb, k1, k2, q1, q2, k3, k4, a1, a2));
                    if w(a1) == w(-a2) {
                        add(pa, pb, 4, base);
                    }
                }
            }
        }
    }

    let st = ctx.static_slice();
    for t in &mut terms {
        let a = t.a.map(|x| x as usize);
        let b = t.b.map(|x| x as usize);
        let s = two_theta_in(ctx, st, a[0], a[1], a[2], a[3]) * two_theta_in(ctx, st, b[0], b[1], b[2], b[3]);
        for c in 0..COMPONENTS {
            t.subtract[c] = t.w[c] * s;
        }
    }
    terms
}

/// Node-major storage of exp(±E^q) over a set of z values.
struct NodeTables {
    n: usize,
    m: usize,
    data: Vec<Complex64>,
    /// ⟨θ†θ⟩ static factors S[K2][K3][r].
    stat: Vec<Complex64>,
}

impl NodeTables {
    fn build(ctx: &CorrelationContext, zs: &[Complex64]) -> Result<Self> {
        let n = ctx.n();
        let m = zs.len();
        let mut data = vec![ZERO; 2 * n * n * n * m];
        let slices: Vec<TimeSlice> = zs.par_iter().map(|&z| ctx.slice_at(z)).collect::<Result<_>>()?;
        for (node, s) in slices.iter().enumerate() {
            for (si, sign) in [1i8, -1].into_iter().enumerate() {
                for q in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            data[(((si * n + q) * n + i) * n + j) * m + node] = s.exp(sign, q, i, j);
                        }
                    }
                }
            }
        }
        Ok(Self { n, m, data, stat: static_factors(ctx) })
    }

    #[inline]
    fn row(&self, plus: bool, q: usize, i: usize, j: usize) -> &[Complex64] {
        let si = if plus { 0 } else { 1 };
        let o = (((si * self.n + q) * self.n + i) * self.n + j) * self.m;
        &self.data[o..o + self.m]
    }
}

fn static_factors(ctx: &CorrelationContext) -> Vec<Complex64> {
    let n = ctx.n();
    let g = ctx.grid();
    let st = ctx.static_slice();
    let mut s = vec![ZERO; n * n * n];
    for k2 in 0..n {
        for k3 in 0..n {
            for r in 0..n {
                s[(k2 * n + k3) * n + r] = two_theta_in(ctx, st, g.add(k2, r), k2, k3, g.sub(k3, r));
            }
        }
    }
    s
}

/// Four-θ average over all nodes for one (a, b) pair; returns false when the
/// momentum-conservation delta vanishes.
fn four_theta_nodes(tab: &NodeTables, a: [u8; 4], b: [u8; 4], scratch: &mut Scratch, out: &mut [Complex64]) -> bool {
    let n = tab.n;
    let m = tab.m;
    let ni = n as i64;
    let w = |x: i64| x.rem_euclid(ni) as usize;
    let [k1, k2, k3, k4] = a.map(|x| x as i64);
    let [q1, q2, q3, q4] = b.map(|x| x as i64);
    if w(k1 + q1 + k4 + q4) != w(k2 + q2 + k3 + q3) {
        return false;
    }
    let s1 = |r1: i64| tab.stat[(w(k2) * n + w(k3)) * n + w(r1)];
    let s2 = |r2: i64| tab.stat[(w(q2) * n + w(q3)) * n + w(r2)];

    // w3[r1][ρ] = S1(r1)·exp(E^{k3−q1−r1})[−q1, ρ]
    let w3 = &mut scratch.w3;
    for r1 in 0..ni {
        let c = s1(r1);
        for rho in 0..n {
            let src = tab.row(true, w(k3 - q1 - r1), w(-q1), rho);
            let dst = &mut w3[(r1 as usize * n + rho) * m..][..m];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = c * s;
            }
        }
    }
    out.iter_mut().for_each(|o| *o = ZERO);
    for r3 in 0..ni {
        let v = &mut scratch.v;
        for r2 in 0..ni {
            let c = s2(r2);
            let src = tab.row(true, w(k1 + r2 - q3), w(-q4 - r3), w(r2 - q3));
            let dst = &mut v[r2 as usize * m..][..m];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = c * s;
            }
        }
        let u = &mut scratch.u;
        u.iter_mut().for_each(|x| *x = ZERO);
        let l1 = w(k1 + q4 + r3 - q2 - q3);
        for rho in 0..n {
            let dst = &mut u[rho * m..][..m];
            for r2 in 0..ni {
                let mrow = tab.row(false, l1, rho, w(-q2 - r2));
                let vr = &v[r2 as usize * m..][..m];
                for ((d, x), y) in dst.iter_mut().zip(mrow).zip(vr) {
                    *d += x * y;
                }
            }
        }
        let acc = &mut scratch.acc;
        acc.iter_mut().for_each(|x| *x = ZERO);
        for r1 in 0..ni {
            let rho = w(k3 + r3 - q1 - k4 - r1);
            let wr = &w3[(r1 as usize * n + rho) * m..][..m];
            let ur = &u[rho * m..][..m];
            for ((d, x), y) in acc.iter_mut().zip(wr).zip(ur) {
                *d += x * y;
            }
        }
        let m4 = tab.row(false, w(k4 - q4 - r3), w(-q4), w(-q4 - r3));
        for ((o, x), y) in out.iter_mut().zip(acc.iter()).zip(m4) {
            *o += x * y;
        }
    }
    true
}

struct Scratch {
    w3: Vec<Complex64>,
    v: Vec<Complex64>,
    u: Vec<Complex64>,
    acc: Vec<Complex64>,
    f4: Vec<Complex64>,
}

impl Scratch {
    fn new(n: usize, m: usize) -> Self {
        Self {
            w3: vec![ZERO; n * n * m],
            v: vec![ZERO; n * m],
            u: vec![ZERO; n * m],
            acc: vec![ZERO; m],
            f4: vec![ZERO; m],
        }
    }
}

/// Four-θ averages for a uniform A-matrix, where exp(sE^q) = I + m_s·𝟙𝟙ᵀ for
/// every q. The triple sum collapses to a polynomial in (m₀, m₋, m₊) whose
/// integer coefficients depend only on the momentum labels, so each tuple
/// reduces once to a 3×3 polynomial in (m₋, m₊) per component.
struct UniformKernel {
    n: usize,
    /// θ⁴, the product of the four Debye–Waller factors.
    theta4: f64,
    /// (e^{c·z₀} − 1)/N at the static point.
    m0: f64,
    c: f64,
}

/// Coefficients of m₋^j m₊^l per component, and the static subtraction.
struct UniformTuple {
    poly: [[[Complex64; 3]; 3]; COMPONENTS],
    subtract: TupleComponents,
}

impl UniformKernel {
    fn new(ctx: &CorrelationContext, c: f64) -> Self {
        let n = ctx.n();
        let r = ctx.static_slice().z.re;
        Self { n, theta4: ctx.theta[0].powi(4), m0: ((c * r).exp() - 1.0) / n as f64, c }
    }

    /// θ⁻⁴⟨T_a T_b⟩ as a polynomial in (m₋, m₊), or None when the momentum
    /// delta vanishes.
    fn labels(&self, a: [u8; 4], b: [u8; 4]) -> Option<[[f64; 3]; 3]> {
        let ni = self.n as i64;
        let w = |x: i64| x.rem_euclid(ni);
        let [k1, k2, k3, k4] = a.map(|x| x as i64);
        let [q1, q2, q3, q4] = b.map(|x| x as i64);
        if w(k1 + q1 + k4 + q4) != w(k2 + q2 + k3 + q3) {
            return None;
        }
        // coefficient of m0^i m₋^j m₊^l
        let mut poly = [[[0.0f64; 3]; 3]; 3];
        let quad = |x: bool, y: bool| [(x && y) as u8 as f64, x as u8 as f64 + y as u8 as f64, 1.0];
        for r1 in 0..ni {
            for r2 in 0..ni {
                for r3 in 0..ni {
                    let d_s1 = r1 == 0;
                    let d_s2 = r2 == 0;
                    let d_m1 = w(k3 + r3 - q1 - k4 - r1) == w(-q2 - r2);
                    let d_m2 = w(-q4 - r3) == w(r2 - q3);
                    let d_m3 = w(k3 + r3 - k4 - r1) == 0;
                    let d_m4 = r3 == 0;
                    let p0 = quad(d_s1, d_s2);
                    let pm = quad(d_m1, d_m4);
                    let pp = quad(d_m2, d_m3);
                    for i in 0..3 {
                        if p0[i] == 0.0 {
                            continue;
                        }
                        for j in 0..3 {
                            if pm[j] == 0.0 {
                                continue;
                            }
                            for l in 0..3 {
                                poly[i][j][l] += p0[i] * pm[j] * pp[l];
                            }
                        }
                    }
                }
            }
        }
        let mut reduced = [[0.0f64; 3]; 3];
        for (i, plane) in poly.iter().enumerate() {
            let s = self.m0.powi(i as i32);
            for j in 0..3 {
                for l in 0..3 {
                    reduced[j][l] += plane[j][l] * s;
                }
            }
        }
        Some(reduced)
    }

    fn reduce(&self, pairs: &[PairTerm]) -> UniformTuple {
        let mut out = UniformTuple { poly: [[[ZERO; 3]; 3]; COMPONENTS], subtract: [ZERO; COMPONENTS] };
        for pt in pairs {
            let reduced = self.labels(pt.a, pt.b);
            for c in 0..COMPONENTS {
                out.subtract[c] += pt.subtract[c];
                if let Some(r) = &reduced {
                    for j in 0..3 {
                        for l in 0..3 {
                            out.poly[c][j][l] += pt.w[c] * r[j][l];
                        }
                    }
                }
            }
        }
        out
    }

    fn components(&self, t: &UniformTuple, zs: &[Complex64]) -> [Vec<Complex64>; COMPONENTS] {
        let nf = self.n as f64;
        let mut comps: [Vec<Complex64>; COMPONENTS] = std::array::from_fn(|_| Vec::with_capacity(zs.len()));
        for &z in zs {
            let mm = ((-z * self.c).exp() - 1.0) / nf;
            let mp = ((z * self.c).exp() - 1.0) / nf;
            let pm = [Complex64::new(1.0, 0.0), mm, mm * mm];
            let pp = [Complex64::new(1.0, 0.0), mp, mp * mp];
            for c in 0..COMPONENTS {
                let mut s = ZERO;
                for j in 0..3 {
                    for l in 0..3 {
                        s += pm[j] * pp[l] * t.poly[c][j][l];
                    }
                }
                comps[c].push(s * self.theta4 - t.subtract[c]);
            }
        }
        comps
    }
}

fn general_components(tab: &NodeTables, pairs: &[PairTerm], n: usize, m: usize) -> [Vec<Complex64>; COMPONENTS] {
    let mut comps: [Vec<Complex64>; COMPONENTS] = std::array::from_fn(|_| vec![ZERO; m]);
    let mut scratch = Scratch::new(n, m);
    let mut f4 = std::mem::take(&mut scratch.f4);
    for pt in pairs {
        let nonzero = four_theta_nodes(tab, pt.a, pt.b, &mut scratch, &mut f4);
        for c in 0..COMPONENTS {
            let wc = pt.w[c];
            if wc == ZERO {
                continue;
            }
            let sub = pt.subtract[c];
            let dst = &mut comps[c];
            if nonzero {
                for (d, f) in dst.iter_mut().zip(&f4) {
                    *d += wc * f - sub;
                }
            } else {
                for d in dst.iter_mut() {
                    *d -= sub;
                }
            }
        }
    }
    comps
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EngineSettings {
    /// Relative truncation tolerance of the expansion in z.
    pub tol: f64,
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Use the closed-form kernel when A is uniform.
    pub uniform_kernel: bool,
}

impl Default for EngineSettings {
    fn default() -> Self {
        Self { tol: 1e-12, min_nodes: 16, max_nodes: 512, uniform_kernel: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EngineReport {
    pub nodes: usize,
    pub tail: f64,
    pub converged: bool,
    pub pairs: usize,
}

/// Correlators of a fixed list of (k1, k2, q1, q2) tuples as Taylor series in
/// the reduced propagator.
pub struct CorrelationEngine {
    ctx: CorrelationContext,
    tuples: Vec<[usize; 4]>,
    pairs: Vec<Vec<PairTerm>>,
    uniform: Option<(UniformKernel, Vec<UniformTuple>)>,
    radius: f64,
    coeffs: Vec<[Vec<Complex64>; COMPONENTS]>,
    settings: EngineSettings,
    report: EngineReport,
}

impl CorrelationEngine {
    pub fn new(ctx: CorrelationContext, tuples: Vec<[usize; 4]>, settings: EngineSettings) -> Result<Self> {
        let n = ctx.n();
        if n > 255 {
            return Err(PolaronError::InvalidParameter("lattice too large for the correlation engine".into()));
        }
        if let Some(t) = tuples.iter().find(|t| t.iter().any(|&x| x >= n)) {
            return Err(PolaronError::InvalidParameter(format!("tuple {t:?} is off the grid")));
        }
        let tb = Tables::new(&ctx);
        let pairs: Vec<Vec<PairTerm>> = tuples.par_iter().map(|&t| build_pairs(&ctx, &tb, t)).collect();
        let radius = ctx.static_slice().z.re;
        let uniform = match ctx.uniform_coupling() {
            Some(c) if settings.uniform_kernel => {
                let k = UniformKernel::new(&ctx, c);
                let reduced = pairs.par_iter().map(|p| k.reduce(p)).collect();
                Some((k, reduced))
            }
            _ => None,
        };
        let mut engine = Self {
            ctx,
            tuples,
            pairs,
            uniform,
            radius,
            coeffs: Vec::new(),
            settings,
            report: EngineReport { nodes: 0, tail: 0.0, converged: false, pairs: 0 },
        };
        engine.report.pairs = engine.pairs.iter().map(Vec::len).sum();
        if engine.uniform.is_some() {
            engine.pairs = Vec::new();
        }
        engine.fit()?;
        Ok(engine)
    }

    pub fn context(&self) -> &CorrelationContext {
        &self.ctx
    }

    pub fn tuples(&self) -> &[[usize; 4]] {
        &self.tuples
    }

    pub fn report(&self) -> EngineReport {
        self.report
    }

    fn evaluate(&self, zs: &[Complex64]) -> Result<Vec<[Vec<Complex64>; COMPONENTS]>> {
        if let Some((k, reduced)) = &self.uniform {
            return Ok(reduced.par_iter().map(|t| k.components(t, zs)).collect());
        }
        let tab = NodeTables::build(&self.ctx, zs)?;
        let n = self.ctx.n();
        Ok(self.pairs.par_iter().map(|p| general_components(&tab, p, n, zs.len())).collect())
    }

    fn fit(&mut self) -> Result<()> {
        let r = self.radius;
        let hmax = [1.0, r, r, r * r, r];
        let mut m = self.settings.min_nodes.max(2).next_power_of_two();
        let mut values = self.evaluate(&series::circle_nodes(m, r))?;
        loop {
            let coeffs: Vec<[Vec<Complex64>; COMPONENTS]> =
                values.iter().map(|v| std::array::from_fn(|c| series::coefficients(&v[c]))).collect();
            let scale = values
                .iter()
                .flat_map(|v| (0..COMPONENTS).map(move |c| v[c].iter().map(|x| x.norm()).fold(0.0, f64::max) * hmax[c]))
                .fold(0.0, f64::max);
            let tail = coeffs
                .iter()
                .flat_map(|cs| (0..COMPONENTS).map(move |c| series::tail(&cs[c]) * hmax[c]))
                .fold(0.0, f64::max);
            let rel = if scale > 0.0 { tail / scale } else { 0.0 };
            let converged = rel <= self.settings.tol;
            if converged || 2 * m > self.settings.max_nodes {
                self.coeffs = coeffs
                    .into_iter()
                    .map(|cs| cs.map(|mut c| {
                        c.truncate(m / 2);
                        c
                    }))
                    .collect();
                self.report = EngineReport { nodes: m, tail: rel, converged, pairs: self.report.pairs };
                return Ok(());
            }
            let fresh: Vec<Complex64> = series::circle_nodes(2 * m, r).into_iter().skip(1).step_by(2).collect();
            let extra = self.evaluate(&fresh)?;
            values = values
                .into_iter()
                .zip(extra)
                .map(|(old, new)| {
                    std::array::from_fn(|c| old[c].iter().zip(&new[c]).flat_map(|(a, b)| [*a, *b]).collect())
                })
                .collect();
            m *= 2;
        }
    }

    /// Interpolated components of tuple `i` at reduced propagator `z`,
    /// |z| ≤ N·P(0).
    pub fn components_at(&self, i: usize, z: Complex64) -> TupleComponents {
        let x = z / self.radius;
        std::array::from_fn(|c| series::horner(&self.coeffs[i][c], x))
    }

    /// Components of tuple `i` computed directly at `z`, without interpolation.
    pub fn direct_components(&self, i: usize, z: Complex64) -> Result<TupleComponents> {
        let comps = match &self.uniform {
            Some((k, reduced)) => k.components(&reduced[i], &[z]),
            None => general_components(&NodeTables::build(&self.ctx, &[z])?, &self.pairs[i], self.ctx.n(), 1),
        };
        Ok(std::array::from_fn(|c| comps[c][0]))
    }

    /// ⟨V V(t)⟩ for tuple `i`, interpolated.
    pub fn vv(&self, i: usize, t: f64) -> Complex64 {
        let z = reduced_propagator(&self.ctx.params, t);
        combine(&self.components_at(i, z), &component_factors(&self.ctx.params, t))
    }

    pub fn vv_direct(&self, i: usize, t: f64) -> Result<Complex64> {
        let z = reduced_propagator(&self.ctx.params, t);
        Ok(combine(&self.direct_components(i, z)?, &component_factors(&self.ctx.params, t)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::solve;

    fn params(n: usize, g2: f64, phi2: f64, t: f64) -> ModelParams {
        ModelParams { n_sites: n, temperature: t, ..Default::default() }.with_squared_couplings(g2, phi2)
    }

    fn lcg(seed: &mut u64, n: usize) -> usize {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 33) % n as u64) as usize
    }

    fn solved(n: usize, g2: f64, phi2: f64, t: f64) -> CorrelationContext {
        let p = params(n, g2, phi2, t);
        CorrelationContext::from_solution(&solve(&p, None).unwrap()).unwrap()
    }

    #[test]
    fn two_theta_identity_when_uncoupled() {
        let p = params(4, 0.0, 0.0, 1.0);
        let ctx = CorrelationContext::new(&p, &AMatrix::zeros(4)).unwrap();
        for k in 0..4 {
            for kp in 0..4 {
                for q in 0..4 {
                    for qp in 0..4 {
                        let v = two_theta_avg(&ctx, k, kp, q, qp, 0.7).unwrap();
                        let want = if k == kp && q == qp { 1.0 } else { 0.0 };
                        assert!((v - want).norm() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn two_theta_static_matches_e() {
        let ctx = solved(4, 0.1, 0.3, 1.0);
        let g = ctx.grid();
        let e0 = crate::solver::build_e(&ctx.a, &ctx.params, 0.0);
        let exps = e0.exponentials(1.0).unwrap();
        for k in 0..4 {
            for q in 0..4 {
                for d in 0..4 {
                    let (kp, qp) = (g.sub(k, d), g.sub(q, d));
                    let v = two_theta_avg(&ctx, k, kp, q, qp, 0.0).unwrap();
                    let want = exps[g.sub(k, q)][[g.neg(qp), g.neg(q)]] * ctx.theta[g.neg(kp)] * ctx.theta[g.neg(qp)];
                    assert!((v - want).norm() < 1e-15);
                    assert_eq!(two_theta_avg(&ctx, k, g.add(kp, 1), q, qp, 0.0).unwrap(), ZERO);
                }
            }
        }
    }

    #[test]
    fn cached_equals_direct_bitwise() {
        let ctx = solved(3, 0.1, 0.3, 1.0);
        let mut seed = 11u64;
        for &t in &[0.0, 0.37, 2.5] {
            let slice = ctx.slice(t).unwrap();
            for _ in 0..20 {
                let k: [usize; 4] = std::array::from_fn(|_| lcg(&mut seed, 3));
                let q: [usize; 4] = std::array::from_fn(|_| lcg(&mut seed, 3));
                assert_eq!(four_theta_in(&ctx, &slice, k, q), four_theta_avg(&ctx, k, q, t).unwrap());
                assert_eq!(
                    two_theta_in(&ctx, &slice, k[0], k[1], k[2], k[3]),
                    two_theta_avg(&ctx, k[0], k[1], k[2], k[3], t).unwrap()
                );
            }
        }
    }

    #[test]
    fn four_theta_uncoupled_factorizes() {
        let p = params(3, 0.0, 0.0, 1.0);
        let ctx = CorrelationContext::new(&p, &AMatrix::zeros(3)).unwrap();
        let mut seed = 5u64;
        for _ in 0..200 {
            let k: [usize; 4] = std::array::from_fn(|_| lcg(&mut seed, 3));
            let q: [usize; 4] = std::array::from_fn(|_| lcg(&mut seed, 3));
            let f = four_theta_avg(&ctx, k, q, 1.1).unwrap();
            let st = ctx.static_slice();
            let want = two_theta_in(&ctx, st, k[0], k[1], k[2], k[3]) * two_theta_in(&ctx, st, q[0], q[1], q[2], q[3]);
            assert!((f - want).norm() < 1e-15);
        }
    }

    #[test]
    fn four_theta_violating_delta_is_zero() {
        let ctx = solved(4, 0.1, 0.3, 1.0);
        let mut seed = 9u64;
        let slice = ctx.slice(0.8).unwrap();
        let mut checked = 0;
        while checked < 200 {
            let k: [usize; 4] = std::array::from_fn(|_| lcg(&mut seed, 4));
            let q: [usize; 4] = std::array::from_fn(|_| lcg(&mut seed, 4));
            if (k[0] + q[0] + k[3] + q[3]) % 4 == (k[1] + q[1] + k[2] + q[2]) % 4 {
                continue;
            }
            assert_eq!(four_theta_in(&ctx, &slice, k, q), ZERO);
            checked += 1;
        }
    }

    #[test]
    fn tt_decays() {
        let ctx = solved(3, 0.1, 0.3, 1.0);
        let t_end = 10.0 / ctx.params.delta;
        let s0 = ctx.static_slice().clone();
        let s1 = ctx.slice(t_end).unwrap();
        let mut seed = 3u64;
        for _ in 0..50 {
            let a: [usize; 4] = std::array::from_fn(|_| lcg(&mut seed, 3));
            let b: [usize; 4] = std::array::from_fn(|_| lcg(&mut seed, 3));
            let v0 = tt_correlator(&ctx, &s0, a, b);
            let v1 = tt_correlator(&ctx, &s1, a, b);
            assert!(v1.norm() <= 1e-8 * v0.norm().max(1e-300) || v1.norm() < 1e-15);
        }
    }

    #[test]
    fn zero_coupling_vv_vanishes() {
        let p = params(3, 0.0, 0.0, 1.0);
        let ctx = CorrelationContext::new(&p, &AMatrix::zeros(3)).unwrap();
        for &t in &[0.0, 1.3] {
            assert_eq!(vv_correlation(&ctx, 0, 1, 1, 0, t).unwrap().value.norm(), 0.0);
        }
    }

    #[test]
    fn engine_matches_literal_general_field() {
        for &n in &[3usize, 4] {
            let ctx = solved(n, 0.1, 0.3, 1.0);
            let mut seed = 21u64;
            let tuples: Vec<[usize; 4]> = (0..4).map(|_| std::array::from_fn(|_| lcg(&mut seed, n))).collect();
            let engine = CorrelationEngine::new(ctx.clone(), tuples.clone(), EngineSettings::default()).unwrap();
            for (i, t4) in tuples.iter().enumerate() {
                for &t in &[0.0, 0.9, -2.3] {
                    let lit = vv_correlation(&ctx, t4[0], t4[1], t4[2], t4[3], t).unwrap().value;
                    let dir = engine.vv_direct(i, t).unwrap();
                    let int = engine.vv(i, t);
                    let scale = lit.norm().max(1e-12);
                    assert!((dir - lit).norm() < 1e-12 * scale.max(1.0), "n={n} {t4:?} t={t}: {dir} vs {lit}");
                    assert!((int - lit).norm() < 1e-10 * scale.max(1e-3), "n={n} {t4:?} t={t}: {int} vs {lit}");
                }
            }
        }
    }

    #[test]
    fn uniform_kernel_matches_general() {
        let p = params(4, 0.5, 0.0, 1.5);
        let a = AMatrix::constant(4, Complex64::new(p.g, 0.0));
        let ctx = CorrelationContext::new(&p, &a).unwrap();
        let tuples = vec![[0, 1, 1, 0], [2, 3, 1, 0], [1, 1, 3, 3], [0, 2, 3, 1]];
        let fast = CorrelationEngine::new(ctx.clone(), tuples.clone(), EngineSettings::default()).unwrap();
        let slow = CorrelationEngine::new(
            ctx.clone(),
            tuples,
            EngineSettings { uniform_kernel: false, ..Default::default() },
        )
        .unwrap();
        for i in 0..4 {
            for &t in &[0.0, 0.4, 3.0] {
                let z = reduced_propagator(&p, t);
                let a = fast.direct_components(i, z).unwrap();
                let b = slow.direct_components(i, z).unwrap();
                for c in 0..COMPONENTS {
                    assert!((a[c] - b[c]).norm() < 1e-13 * (1.0 + b[c].norm()), "i={i} c={c}: {} vs {}", a[c], b[c]);
                }
            }
        }
    }

    #[test]
    fn vv_decays_and_is_nonnegative_at_zero() {
        for (phi2, hermitian) in [(0.0, true), (0.3, false)] {
            let ctx = solved(4, 0.1, phi2, 1.0);
            let t_end = 10.0 / ctx.params.delta;
            let tuples: Vec<[usize; 4]> = (0..4).flat_map(|k| (0..4).map(move |kp| [k, kp, kp, k])).collect();
            let engine = CorrelationEngine::new(ctx, tuples.clone(), EngineSettings::default()).unwrap();
            for i in 0..tuples.len() {
                let v0 = engine.vv(i, 0.0);
                let v1 = engine.vv(i, t_end);
                assert!(v1.norm() < 1e-8 * v0.norm().max(1e-300) || v1.norm() < 1e-14, "{:?}", tuples[i]);
                if hermitian {
                    assert!(v0.im.abs() < 1e-10 * v0.norm().max(1.0), "{:?}: {v0}", tuples[i]);
                    assert!(v0.re >= -1e-10, "{:?}: {v0}", tuples[i]);
                }
            }
        }
    }
}
