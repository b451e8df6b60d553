//! Self-consistent determination of the transformation coefficients A_k^q.
//!
//! The fixed point couples three objects: the triadic matrices
//! E^q_{kk'} = P(t)·conj(A_{k−q}^{k−k'})·A_k^{k−k'}, the Debye–Waller factors
//! ⟨θ_k⟩ = exp(−½ Σ_{k'} E^0_{kk'}), and the coefficient update
//! A_k^q = ⟨θ_{k−q}⟩⟨θ_k⟩ Σ_{k'} f_{k'}^q [exp E^q]_{kk'}.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PolaronError, Result};
use crate::expm::matrix_exp;
use crate::lattice::{BandConvention, ModelParams, MomentumGrid};
use crate::propagators::{p_factor, reduced_propagator};

/// Transformation coefficients indexed `[k, q]` by grid index.
#[derive(Debug, Clone, PartialEq)]
pub struct AMatrix {
    values: Array2<Complex64>,
}

impl AMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { values: Array2::zeros((n, n)) }
    }

    pub fn constant(n: usize, value: Complex64) -> Self {
        Self { values: Array2::from_elem((n, n), value) }
    }

    pub fn from_values(values: Array2<Complex64>) -> Self {
        assert_eq!(values.nrows(), values.ncols(), "A-matrix must be square");
        Self { values }
    }

    /// A_k^q = f_k^q, the bare coupling.
    pub fn from_coupling(p: &ModelParams) -> Self {
        let n = p.n_sites;
        Self { values: Array2::from_shape_fn((n, n), |(k, q)| p.coupling_at(k, q)) }
    }

    /// Scalar Munn–Silbey form A_k^q = gξ − iφη[sin k − sin(k−q)].
    pub fn scalar_ansatz(p: &ModelParams, xi: f64, eta: f64) -> Self {
        let grid = p.grid();
        let n = p.n_sites;
        Self {
            values: Array2::from_shape_fn((n, n), |(k, q)| {
                let (kv, qv) = (grid.k(k), grid.k(q));
                Complex64::new(p.g * xi, -p.phi * eta * (kv.sin() - (kv - qv).sin()))
            }),
        }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    #[inline]
    pub fn get(&self, k: usize, q: usize) -> Complex64 {
        self.values[[k, q]]
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn max_abs_diff(&self, other: &AMatrix) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// max |A_k^q − conj(A_{k−q}^{−q})|.
    pub fn symmetry_error(&self) -> f64 {
        let n = self.n();
        let grid = MomentumGrid::from_len(n);
        let mut worst = 0.0f64;
        for k in 0..n {
            for q in 0..n {
                let partner = self.values[[grid.sub(k, q), grid.neg(q)]].conj();
                worst = worst.max((self.values[[k, q]] - partner).norm());
            }
        }
        worst
    }

    /// True when every entry equals the first one to `tol` (relative).
    pub fn is_constant(&self, tol: f64) -> bool {
        let first = self.values[[0, 0]];
        let scale = first.norm().max(f64::MIN_POSITIVE);
        self.values.iter().all(|z| (z - first).norm() <= tol * scale)
    }

    fn mix(&self, other: &AMatrix, alpha: f64) -> AMatrix {
        let mut values = self.values.mapv(|z| z * (1.0 - alpha));
        values.scaled_add(Complex64::new(alpha, 0.0), &other.values);
        AMatrix { values }
    }
}

/// Per-q matrices E^q_{kk'}; `matrices[q]` is indexed `[k, k']`.
#[derive(Debug, Clone)]
pub struct TriadicE {
    pub matrices: Vec<Array2<Complex64>>,
    pub t: f64,
}

impl TriadicE {
    pub fn q(&self, q: usize) -> &Array2<Complex64> {
        &self.matrices[q]
    }

    /// Largest infinity norm over q.
    pub fn max_norm(&self) -> f64 {
        self.matrices
            .iter()
            .map(|m| {
                m.rows()
                    .into_iter()
                    .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    pub fn exponentials(&self, sign: f64) -> Result<Vec<Array2<Complex64>>> {
        self.matrices
            .par_iter()
            .map(|m| matrix_exp(&m.mapv(|z| z * sign).view()))
            .collect()
    }
}

/// Static coupling matrices C^q_{kk'} = conj(A_{k−q}^{k−k'})·A_k^{k−k'}, so that
/// E^q(t) = P(t)·C^q.
pub fn coupling_matrices(a: &AMatrix) -> Vec<Array2<Complex64>> {
    let n = a.n();
    let grid = MomentumGrid::from_len(n);
    (0..n)
        .map(|q| {
            Array2::from_shape_fn((n, n), |(k, kp)| {
                let d = grid.sub(k, kp);
                a.get(grid.sub(k, q), d).conj() * a.get(k, d)
            })
        })
        .collect()
}

/// E^q_{kk'}(t) for every grid q.
pub fn build_e(a: &AMatrix, p: &ModelParams, t: f64) -> TriadicE {
    let pt = p_factor(p, t);
    let matrices = coupling_matrices(a).into_iter().map(|c| c.mapv(|z| z * pt)).collect();
    TriadicE { matrices, t }
}

/// E^q built from the reduced propagator value `z` = N·P instead of a time.
pub fn build_e_at(c: &[Array2<Complex64>], z: Complex64) -> Vec<Array2<Complex64>> {
    let n = c.len() as f64;
    c.iter().map(|m| m.mapv(|v| v * z / n)).collect()
}

/// ⟨θ_k⟩ = exp(−½ Σ_{k'} E^0_{kk'}).
pub fn theta_avg(e0: &Array2<Complex64>) -> Vec<f64> {
    e0.rows()
        .into_iter()
        .map(|r| (-0.5 * r.iter().map(|z| z.re).sum::<f64>()).exp())
        .collect()
}

/// Right-hand side of the coefficient self-consistency for static E.
pub fn update_a(p: &ModelParams, e: &TriadicE, theta: &[f64]) -> Result<AMatrix> {
    let n = p.n_sites;
    let grid = p.grid();
    let exps = e.exponentials(1.0)?;
    let mut values = Array2::<Complex64>::zeros((n, n));
    for q in 0..n {
        let f: Vec<Complex64> = (0..n).map(|kp| p.coupling_at(kp, q)).collect();
        let ex = &exps[q];
        for k in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for kp in 0..n {
                s += f[kp] * ex[[k, kp]];
            }
            values[[k, q]] = s * theta[grid.sub(k, q)] * theta[k];
        }
    }
    if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(PolaronError::NumericalBreakdown("non-finite coefficient update".into()));
    }
    Ok(AMatrix { values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iters: usize,
    /// Initial mixing fraction α in A ← (1−α)A + α·RHS.
    pub damping: f64,
    pub min_damping: f64,
    /// Abort when any ‖E^q‖_∞ exceeds this.
    pub e_norm_limit: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: 10_000, damping: 0.5, min_damping: 1.0 / 1024.0, e_norm_limit: 50.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    pub damping_used: f64,
}

/// Real scaling fields ξ_k^q and η_k^q; either may be undefined when its
/// coupling vanishes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFields {
    xi: Option<Array2<f64>>,
    eta: Option<Array2<f64>>,
}

impl ScalingFields {
    pub fn xi(&self) -> Result<&Array2<f64>> {
        self.xi.as_ref().ok_or(PolaronError::UndefinedField("xi"))
    }

    pub fn eta(&self) -> Result<&Array2<f64>> {
        self.eta.as_ref().ok_or(PolaronError::UndefinedField("eta"))
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub params: ModelParams,
    pub a: AMatrix,
    pub theta: Vec<f64>,
    pub scaling: ScalingFields,
    pub report: SolverReport,
}

/// One application of the self-consistent map; returns the update and the
/// Debye–Waller factors of the input.
pub fn self_consistent_map(p: &ModelParams, a: &AMatrix, settings: &SolverSettings) -> Result<(AMatrix, Vec<f64>, f64)> {
    let e = build_e(a, p, 0.0);
    let norm = e.max_norm();
    let theta = theta_avg(e.q(0));
    if norm > settings.e_norm_limit {
        return Ok((a.clone(), theta, norm));
    }
    Ok((update_a(p, &e, &theta)?, theta, norm))
}

pub fn solve(p: &ModelParams, init: Option<&AMatrix>) -> Result<Solution> {
    solve_with(p, init, &SolverSettings::default())
}

pub fn solve_with(p: &ModelParams, init: Option<&AMatrix>, settings: &SolverSettings) -> Result<Solution> {
    p.validate()?;
    let mut a = match init {
        Some(a0) => {
            if a0.n() != p.n_sites {
                return Err(PolaronError::InvalidParameter(format!(
                    "initial A-matrix has size {}, expected {}",
                    a0.n(),
                    p.n_sites
                )));
            }
            a0.clone()
        }
        None => AMatrix::from_coupling(p),
    };
    let mut alpha = settings.damping;
    let mut prev = f64::INFINITY;
    let mut residual = f64::INFINITY;
    for it in 1..=settings.max_iters {
        let (rhs, theta, norm) = self_consistent_map(p, &a, settings)?;
        if norm > settings.e_norm_limit {
            return Err(PolaronError::NotConverged(SolverReport {
                iterations: it,
                final_residual: residual,
                converged: false,
                damping_used: alpha,
            }));
        }
        residual = rhs.max_abs_diff(&a);
        if !residual.is_finite() {
            return Err(PolaronError::NumericalBreakdown("non-finite residual".into()));
        }
        if residual < settings.tol {
            let scaling = extract_scaling(&a, p);
            return Ok(Solution {
                params: *p,
                a,
                theta,
                scaling,
                report: SolverReport { iterations: it, final_residual: residual, converged: true, damping_used: alpha },
            });
        }
        if residual > prev {
            alpha = (alpha * 0.5).max(settings.min_damping);
        }
        prev = residual;
        a = a.mix(&rhs, alpha);
    }
    Err(PolaronError::NotConverged(SolverReport {
        iterations: settings.max_iters,
        final_residual: residual,
        converged: false,
        damping_used: alpha,
    }))
}

/// Solves at each temperature in ascending order, seeding every point with the
/// previous converged field. A failed point falls back to the bare coupling for
/// the next one.
pub fn solve_continuation(p: &ModelParams, temperatures: &[f64], settings: &SolverSettings) -> Vec<Result<Solution>> {
    let mut out = Vec::with_capacity(temperatures.len());
    let mut seed: Option<AMatrix> = None;
    for &t in temperatures {
        let pt = p.with_temperature(t);
        let r = solve_with(&pt, seed.as_ref(), settings);
        seed = r.as_ref().ok().map(|s| s.a.clone());
        out.push(r);
    }
    out
}

const SINGULAR_EPS: f64 = 1e-12;

/// Splits A into ξ = Re A / g and η = −Im A / (φ[sin k − sin(k−q)]). On the
/// lines where the sine difference vanishes (q = 0 and q = 2k ± π) η is filled
/// with the mean of the nearest regular values on either side in q.
pub fn extract_scaling(a: &AMatrix, p: &ModelParams) -> ScalingFields {
    let n = a.n();
    let grid = p.grid();
    let xi = (p.g > 0.0).then(|| Array2::from_shape_fn((n, n), |(k, q)| a.get(k, q).re / p.g));
    let eta = (p.phi > 0.0).then(|| {
        let sdiff = |k: usize, q: usize| grid.k(k).sin() - (grid.k(k) - grid.k(q)).sin();
        let singular = |k: usize, q: usize| sdiff(k, q).abs() < SINGULAR_EPS;
        let mut eta = Array2::from_shape_fn((n, n), |(k, q)| {
            if singular(k, q) {
                f64::NAN
            } else {
                -a.get(k, q).im / (p.phi * sdiff(k, q))
            }
        });
        for k in 0..n {
            for q in 0..n {
                if !singular(k, q) {
                    continue;
                }
                let mut vals = Vec::with_capacity(2);
                for step in [1usize, n - 1] {
                    let mut j = q;
                    for _ in 0..n {
                        j = (j + step) % n;
                        if !singular(k, j) {
                            vals.push(-a.get(k, j).im / (p.phi * sdiff(k, j)));
                            break;
                        }
                    }
                }
                eta[[k, q]] = if vals.is_empty() { 0.0 } else { vals.iter().sum::<f64>() / vals.len() as f64 };
            }
        }
        eta
    });
    ScalingFields { xi, eta }
}

/// Writes a converged field as a text table: `#`-prefixed header lines with the
/// parameters and residual, then one CSV row per (k, q).
pub fn write_field_table<W: Write>(mut w: W, p: &ModelParams, a: &AMatrix, report: &SolverReport) -> std::io::Result<()> {
    let grid = p.grid();
    let mut h = String::new();
    let _ = writeln!(h, "# polaron A-matrix field table");
    let _ = writeln!(h, "# n_sites = {}", p.n_sites);
    let _ = writeln!(h, "# transfer = {:e}", p.transfer);
    let _ = writeln!(h, "# g = {:e}", p.g);
    let _ = writeln!(h, "# phi = {:e}", p.phi);
    let _ = writeln!(h, "# omega = {:e}", p.omega);
    let _ = writeln!(h, "# delta = {:e}", p.delta);
    let _ = writeln!(h, "# temperature = {:e}", p.temperature);
    let _ = writeln!(h, "# epsilon = {:e}", p.epsilon);
    let _ = writeln!(h, "# band_convention = {}", p.band_convention.as_str());
    let _ = writeln!(h, "# iterations = {}", report.iterations);
    let _ = writeln!(h, "# residual = {:e}", report.final_residual);
    let _ = writeln!(h, "# converged = {}", report.converged);
    let _ = writeln!(h, "k_index,q_index,k,q,re,im");
    w.write_all(h.as_bytes())?;
    for k in 0..p.n_sites {
        for q in 0..p.n_sites {
            let z = a.get(k, q);
            writeln!(w, "{},{},{:.17e},{:.17e},{:.17e},{:.17e}", k, q, grid.k(k), grid.k(q), z.re, z.im)?;
        }
    }
    Ok(())
}

/// Reads a table produced by [`write_field_table`].
pub fn read_field_table<R: BufRead>(r: R) -> Result<(ModelParams, AMatrix, f64)> {
    let bad = |m: String| PolaronError::InvalidParameter(format!("field table: {m}"));
    let mut p = ModelParams::default();
    let mut residual = f64::NAN;
    let mut rows: Vec<(usize, usize, Complex64)> = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| bad(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let Some((key, val)) = rest.split_once('=') else { continue };
            let (key, val) = (key.trim(), val.trim());
            let num = || val.parse::<f64>().map_err(|e| bad(format!("{key}: {e}")));
            match key {
                "n_sites" => p.n_sites = val.parse().map_err(|e| bad(format!("n_sites: {e}")))?,
                "transfer" => p.transfer = num()?,
                "g" => p.g = num()?,
                "phi" => p.phi = num()?,
                "omega" => p.omega = num()?,
                "delta" => p.delta = num()?,
                "temperature" => p.temperature = num()?,
                "epsilon" => p.epsilon = num()?,
                "band_convention" => {
                    p.band_convention = BandConvention::parse(val).ok_or_else(|| bad(format!("band convention {val}")))?
                }
                "residual" => residual = num()?,
                _ => {}
            }
            continue;
        }
        if line.starts_with("k_index") {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(bad(format!("expected 6 columns, got {}", cols.len())));
        }
        let k: usize = cols[0].parse().map_err(|e| bad(format!("{e}")))?;
        let q: usize = cols[1].parse().map_err(|e| bad(format!("{e}")))?;
        let re: f64 = cols[4].parse().map_err(|e| bad(format!("{e}")))?;
        let im: f64 = cols[5].parse().map_err(|e| bad(format!("{e}")))?;
        rows.push((k, q, Complex64::new(re, im)));
    }
    let n = p.n_sites;
    if rows.len() != n * n {
        return Err(bad(format!("expected {} rows, got {}", n * n, rows.len())));
    }
    let mut values = Array2::zeros((n, n));
    for (k, q, z) in rows {
        if k >= n || q >= n {
            return Err(bad(format!("index ({k}, {q}) out of range")));
        }
        values[[k, q]] = z;
    }
    Ok((p, AMatrix { values }, residual))
}

/// Static E at the current temperature, scaled by N·P(0) = 2n+1.
pub fn static_scale(p: &ModelParams) -> f64 {
    reduced_propagator(p, 0.0).re
}
