//! W-rate integrals, scattering and hopping rates, diffusion coefficient and
//! mobility.

use num_complex::Complex64;
use serde::Serialize;

use crate::band::{band, thermal_avg, PolaronBand};
use crate::correlation::{CorrelationContext, CorrelationEngine, EngineReport, EngineSettings};
use crate::error::{PolaronError, Result};
use crate::lattice::ModelParams;
use crate::propagators::reduced_propagator;
use crate::solver::{solve_with, AMatrix, Solution, SolverSettings};

/// Which momentum the inner sum of the hopping-rate bracket runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum HopSum {
    /// Σ_{k'} with free index k.
    #[default]
    OverKPrime,
    /// Σ_k with free index k', kept for comparison.
    OverK,
}

impl HopSum {
    pub fn as_str(self) -> &'static str {
        match self {
            HopSum::OverKPrime => "over-k-prime",
            HopSum::OverK => "over-k",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "over-k-prime" => Some(HopSum::OverKPrime),
            "over-k" => Some(HopSum::OverK),
            _ => None,
        }
    }
}

/// Prefactor of the scattering-rate sum Γ_{k'} = c Σ_{k≠k'} Re W_{k,k;k',k'}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum RateNorm {
    /// c = 1: the golden-rule sum over final states.
    #[default]
    Total,
    /// c = 1/N.
    PerSite,
}

impl RateNorm {
    pub fn as_str(self) -> &'static str {
        match self {
            RateNorm::Total => "total",
            RateNorm::PerSite => "per-site",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "total" => Some(RateNorm::Total),
            "per-site" => Some(RateNorm::PerSite),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransportSettings {
    /// Upper bound on the time step.
    pub dt: f64,
    /// t_max = t_max_factor / Δ.
    pub t_max_factor: f64,
    /// Required (|ΔE|_max + 2ω)·dt.
    pub phase_step: f64,
    pub hop_sum: HopSum,
    pub rate_norm: RateNorm,
    pub engine: EngineSettings,
    pub solver: SolverSettings,
}

impl Default for TransportSettings {
    fn default() -> Self {
        Self {
            dt: 0.05,
            t_max_factor: 10.0,
            phase_step: 0.1,
            hop_sum: HopSum::OverKPrime,
            rate_norm: RateNorm::Total,
            engine: EngineSettings::default(),
            solver: SolverSettings::default(),
        }
    }
}

/// Time grid actually used for the W integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quadrature {
    pub dt: f64,
    pub t_max: f64,
    pub intervals: usize,
}

impl Quadrature {
    pub fn new(p: &ModelParams, band: &PolaronBand, s: &TransportSettings) -> Self {
        let t_max = s.t_max_factor / p.delta;
        let dt_phase = s.phase_step / (band.bandwidth + 2.0 * p.omega);
        let dt = s.dt.min(dt_phase);
        let mut intervals = (t_max / dt).ceil() as usize;
        intervals += intervals % 2;
        intervals = intervals.max(2);
        Self { dt: t_max / intervals as f64, t_max, intervals }
    }

    fn weight(&self, j: usize) -> f64 {
        let w = if j == 0 || j == self.intervals {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        w * self.dt / 3.0
    }
}

/// W_{k,k+q;k',k'+q} for q ∈ {0, +h, −h}, indexed [q slot][k][k'].
#[derive(Debug, Clone, Serialize)]
pub struct WTensor {
    pub n: usize,
    /// Momentum offsets in grid units, in slot order.
    pub shifts: [i64; 3],
    entries: Vec<Complex64>,
    pub quadrature: Quadrature,
    pub engine: EngineReport,
    /// Relative imaginary part of the equal-time q = 0 correlators.
    pub hermiticity_defect: f64,
}

/// The (k1, k2, q1, q2) correlator feeding W_{k,k+q;k',k'+q}.
fn w_tuple(n: usize, k: usize, q: i64, kp: usize) -> [usize; 4] {
    let w = |x: i64| x.rem_euclid(n as i64) as usize;
    [w(kp as i64 + q), w(k as i64 + q), k, kp]
}

/// Simpson integral of ⟨V_{k'+q,k+q}V_{kk'}(t)⟩e^{−i(E_{k'+q}−E_{k+q})t} +
/// ⟨V_{k'+q,k+q}V_{kk'}(−t)⟩e^{−i(E_k−E_{k'})t} for each tuple.
fn integrate(engine: &CorrelationEngine, band: &PolaronBand, quad: &Quadrature) -> Result<Vec<Complex64>> {
    let p = engine.context().params;
    let tuples = engine.tuples();
    let mut out = vec![Complex64::new(0.0, 0.0); tuples.len()];
    let de: Vec<(f64, f64)> = tuples
        .iter()
        .map(|t| (band.energies[t[0]] - band.energies[t[1]], band.energies[t[2]] - band.energies[t[3]]))
        .collect();
    for j in 0..=quad.intervals {
        let t = j as f64 * quad.dt;
        let wj = quad.weight(j);
        let fwd = crate::correlation::component_factors(&p, t);
        let bwd = crate::correlation::component_factors(&p, -t);
        let z = reduced_propagator(&p, t);
        for (i, o) in out.iter_mut().enumerate() {
            let a = crate::correlation::combine(&engine.components_at(i, z), &fwd);
            let b = crate::correlation::combine(&engine.components_at(i, z.conj()), &bwd);
            let v = a * Complex64::from_polar(1.0, -de[i].0 * t) + b * Complex64::from_polar(1.0, -de[i].1 * t);
            if !v.is_finite() {
                return Err(PolaronError::NumericalBreakdown(format!("non-finite W integrand at t = {t}")));
            }
            *o += v * wj;
        }
    }
    Ok(out)
}

impl WTensor {
    pub fn compute(ctx: &CorrelationContext, band: &PolaronBand, settings: &TransportSettings) -> Result<Self> {
        let n = ctx.n();
        let shifts = [0i64, 1, -1];
        let mut tuples = Vec::with_capacity(3 * n * n);
        for &q in &shifts {
            for k in 0..n {
                for kp in 0..n {
                    tuples.push(w_tuple(n, k, q, kp));
                }
            }
        }
        let engine = CorrelationEngine::new(ctx.clone(), tuples, settings.engine)?;
        let quadrature = Quadrature::new(&ctx.params, band, settings);
        let entries = integrate(&engine, band, &quadrature)?;
        let (mut im_max, mut abs_max) = (0.0f64, 0.0f64);
        for i in 0..n * n {
            let v = engine.vv(i, 0.0);
            im_max = im_max.max(v.im.abs());
            abs_max = abs_max.max(v.norm());
        }
        let hermiticity_defect = if abs_max > 0.0 { im_max / abs_max } else { 0.0 };
        Ok(Self { n, shifts, entries, quadrature, engine: engine.report(), hermiticity_defect })
    }

    fn slot(&self, q: i64) -> usize {
        self.shifts.iter().position(|&s| s == q).expect("W is stored for q ∈ {0, ±h} only")
    }

    /// W_{k,k+q;k',k'+q} with q in grid units.
    pub fn get(&self, k: usize, q: i64, kp: usize) -> Complex64 {
        self.entries[(self.slot(q) * self.n + k) * self.n + kp]
    }

    /// W_{k,k;k',k'}.
    pub fn diagonal(&self, k: usize, kp: usize) -> Complex64 {
        self.get(k, 0, kp)
    }
}

/// Single W entry from its own engine; W_{k,k+q;k',k'+q}.
pub fn w_rate(ctx: &CorrelationContext, band: &PolaronBand, k: usize, q: i64, kp: usize, settings: &TransportSettings) -> Result<Complex64> {
    let engine = CorrelationEngine::new(ctx.clone(), vec![w_tuple(ctx.n(), k, q, kp)], settings.engine)?;
    let quad = Quadrature::new(&ctx.params, band, settings);
    Ok(integrate(&engine, band, &quad)?[0])
}

/// Γ_{k'k'} = c Σ_{k≠k'} Re W_{k,k;k',k'}.
pub fn scattering_rate(w: &WTensor, norm: RateNorm) -> Vec<f64> {
    let n = w.n;
    let c = match norm {
        RateNorm::Total => 1.0,
        RateNorm::PerSite => 1.0 / n as f64,
    };
    (0..n)
        .map(|kp| c * (0..n).filter(|&k| k != kp).map(|k| w.diagonal(k, kp).re).sum::<f64>())
        .collect()
}

/// γ_kk = ½ ∇_q² Σ Re(½W_{k,k;k'+q,k'+q} − W_{k,k+q;k',k'+q}) at q = 0, by the
/// symmetric second difference with h = 2π/N.
pub fn hopping_rate(w: &WTensor, hop_sum: HopSum) -> Vec<f64> {
    let n = w.n;
    let h = 2.0 * std::f64::consts::PI / n as f64;
    let wrap = |x: i64| x.rem_euclid(n as i64) as usize;
    let term = |k: usize, q: i64, kp: usize| 0.5 * w.diagonal(k, wrap(kp as i64 + q)).re - w.get(k, q, kp).re;
    let f = |free: usize, q: i64| -> f64 {
        (0..n)
            .map(|other| match hop_sum {
                HopSum::OverKPrime => term(free, q, other),
                HopSum::OverK => term(other, q, free),
            })
            .sum()
    };
    (0..n)
        .map(|k| 0.5 * second_difference(f(k, 1), f(k, 0), f(k, -1), h))
        .collect()
}

/// [F(h) − 2F(0) + F(−h)]/h².
pub fn second_difference(plus: f64, zero: f64, minus: f64, h: f64) -> f64 {
    (plus - 2.0 * zero + minus) / (h * h)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportPoint {
    pub temperature: f64,
    pub gamma_scatter: Vec<f64>,
    pub gamma_hop: Vec<f64>,
    pub d_band: f64,
    pub d_hop: f64,
    pub d_total: f64,
    pub mobility: f64,
    pub bandwidth: f64,
    pub min_gamma: f64,
    pub solver_residual: f64,
    /// max |Im W| / max |Re W| over the diagonal entries.
    pub level_shift_ratio: f64,
    /// max |Im ⟨V_{k'k}V_{kk'}⟩| / max |⟨V_{k'k}V_{kk'}⟩| at t = 0; zero for an exact pairing.
    pub hermiticity_defect: f64,
    pub quadrature: Quadrature,
    pub engine: EngineReport,
}

/// D = ⟨⟨ν²/Γ⟩⟩ + ⟨⟨γ⟩⟩ and μ = D/T for a converged state.
pub fn diffusion(solution: &Solution, settings: &TransportSettings) -> Result<TransportPoint> {
    let p = solution.params;
    if p.temperature <= 0.0 {
        return Err(PolaronError::InvalidParameter("transport needs T > 0".into()));
    }
    if p.delta <= 0.0 {
        return Err(PolaronError::InvalidParameter("transport needs a positive phonon bandwidth".into()));
    }
    let ctx = CorrelationContext::from_solution(solution)?;
    let b = band(&p, &solution.a, &ctx.theta)?;
    let w = WTensor::compute(&ctx, &b, settings)?;
    let gamma = scattering_rate(&w, settings.rate_norm);
    let max = gamma.iter().map(|g| g.abs()).fold(0.0, f64::max);
    for (i, &g) in gamma.iter().enumerate() {
        if g < -1e-8 * max {
            return Err(PolaronError::NonPositiveRate { index: i, value: g });
        }
        if g <= 1e-8 * max || max == 0.0 {
            return Err(PolaronError::DegenerateZeroScattering(i));
        }
    }
    let hop = hopping_rate(&w, settings.hop_sum);
    let band_term: Vec<f64> = b.velocities.iter().zip(&gamma).map(|(v, g)| v * v / g).collect();
    let d_band = thermal_avg(&band_term, &b, p.temperature);
    let d_hop = thermal_avg(&hop, &b, p.temperature);
    let d_total = d_band + d_hop;
    let (mut re_max, mut im_max) = (0.0f64, 0.0f64);
    for k in 0..w.n {
        for kp in 0..w.n {
            let v = w.diagonal(k, kp);
            re_max = re_max.max(v.re.abs());
            im_max = im_max.max(v.im.abs());
        }
    }
    Ok(TransportPoint {
        temperature: p.temperature,
        min_gamma: gamma.iter().copied().fold(f64::INFINITY, f64::min),
        gamma_scatter: gamma,
        gamma_hop: hop,
        d_band,
        d_hop,
        d_total,
        mobility: d_total / p.temperature,
        bandwidth: b.bandwidth,
        solver_residual: solution.report.final_residual,
        level_shift_ratio: if re_max > 0.0 { im_max / re_max } else { 0.0 },
        hermiticity_defect: w.hermiticity_defect,
        quadrature: w.quadrature,
        engine: w.engine,
    })
}

/// One temperature of a sweep; failures are kept in place.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub temperature: f64,
    pub point: Option<TransportPoint>,
    pub error: Option<String>,
}

impl SweepRecord {
    pub fn status(&self) -> &str {
        match (&self.point, &self.error) {
            (Some(_), _) => "ok",
            (None, Some(e)) => e.as_str(),
            (None, None) => "skipped",
        }
    }
}

/// Solve and run transport at each temperature, warm-starting each solve from
/// the previous converged field.
pub fn sweep(p: &ModelParams, temperatures: &[f64], settings: &TransportSettings) -> Vec<SweepRecord> {
    let mut warm: Option<AMatrix> = None;
    temperatures
        .iter()
        .map(|&t| {
            let pt = p.with_temperature(t);
            let result = solve_with(&pt, warm.as_ref(), &settings.solver).and_then(|s| {
                warm = Some(s.a.clone());
                diffusion(&s, settings)
            });
            match result {
                Ok(point) => SweepRecord { temperature: t, point: Some(point), error: None },
                Err(e) => SweepRecord { temperature: t, point: None, error: Some(e.to_string()) },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::solve;

    fn params(n: usize, g2: f64, phi2: f64, t: f64) -> ModelParams {
        ModelParams { n_sites: n, temperature: t, ..Default::default() }.with_squared_couplings(g2, phi2)
    }

    #[test]
    fn stencil_is_exact_for_quadratics() {
        let f = |q: f64| 0.7 - 1.3 * q + 2.5 * q * q;
        let h = 0.4;
        assert!((second_difference(f(h), f(0.0), f(-h), h) - 5.0).abs() < 1e-12);
        let one_sided = (f(2.0 * h) - 2.0 * f(h) + f(0.0)) / (h * h);
        assert!((one_sided - 5.0).abs() < 1e-12);
        let g = |q: f64| q.powi(3) + q * q;
        let sym = second_difference(g(h), g(0.0), g(-h), h);
        let fwd = (g(2.0 * h) - 2.0 * g(h) + g(0.0)) / (h * h);
        assert!((sym - 2.0).abs() < 1e-12);
        assert!((fwd - 2.0 - 6.0 * h).abs() < 1e-12);
    }

    #[test]
    fn quadrature_grid() {
        let p = params(6, 0.5, 0.0, 1.0);
        let b = PolaronBand::from_energies(vec![0.0, 0.1, 0.3, 0.2, 0.3, 0.1]);
        let q = Quadrature::new(&p, &b, &TransportSettings::default());
        assert_eq!(q.intervals % 2, 0);
        assert!((q.t_max - 100.0).abs() < 1e-12);
        assert!(q.dt * (b.bandwidth + 2.0) <= 0.1 + 1e-12);
        let total: f64 = (0..=q.intervals).map(|j| q.weight(j)).sum();
        assert!((total - q.t_max).abs() < 1e-9);
    }

    #[test]
    fn zero_coupling_is_degenerate() {
        let p = params(4, 0.0, 0.0, 1.0);
        let s = solve(&p, None).unwrap();
        match diffusion(&s, &TransportSettings::default()) {
            Err(PolaronError::DegenerateZeroScattering(_)) => {}
            other => panic!("expected degenerate scattering, got {other:?}"),
        }
    }

    #[test]
    fn decomposition_and_mobility() {
        let p = params(4, 0.5, 0.0, 2.0);
        let s = solve(&p, None).unwrap();
        let pt = diffusion(&s, &TransportSettings::default()).unwrap();
        assert_eq!(pt.d_total, pt.d_band + pt.d_hop);
        assert!((pt.mobility - pt.d_total / 2.0).abs() < 1e-15);
        assert!(pt.gamma_scatter.iter().all(|&g| g > 0.0));
        let per_site = TransportSettings { rate_norm: RateNorm::PerSite, ..Default::default() };
        let lit = diffusion(&s, &per_site).unwrap();
        for (a, b) in lit.gamma_scatter.iter().zip(&pt.gamma_scatter) {
            assert!((a * 4.0 - b).abs() < 1e-14 * b.abs());
        }
        assert_eq!(lit.d_hop, pt.d_hop);
    }

    #[test]
    fn single_entry_matches_tensor() {
        let p = params(4, 0.3, 0.2, 1.0);
        let s = solve(&p, None).unwrap();
        let ctx = CorrelationContext::from_solution(&s).unwrap();
        let b = band(&p, &s.a, &ctx.theta).unwrap();
        let set = TransportSettings::default();
        let w = WTensor::compute(&ctx, &b, &set).unwrap();
        for &(k, q, kp) in &[(0usize, 0i64, 1usize), (2, 1, 3), (1, -1, 1)] {
            let single = w_rate(&ctx, &b, k, q, kp, &set).unwrap();
            assert!((single - w.get(k, q, kp)).norm() < 1e-9 * (1.0 + single.norm()));
        }
    }

    #[test]
    fn sweep_single_point_matches_pipeline() {
        let p = params(4, 0.5, 0.0, 1.0);
        let set = TransportSettings::default();
        let rec = sweep(&p, &[1.0], &set);
        assert_eq!(rec.len(), 1);
        let direct = diffusion(&solve_with(&p, None, &set.solver).unwrap(), &set).unwrap();
        let got = rec[0].point.as_ref().unwrap();
        assert!((got.d_total - direct.d_total).abs() < 1e-12 * direct.d_total.abs());
    }

    #[test]
    fn sweep_keeps_failures() {
        let p = params(4, 0.5, 0.0, 1.0);
        let rec = sweep(&p, &[0.0, 1.0], &TransportSettings::default());
        assert!(rec[0].point.is_none() && rec[0].error.is_some());
        assert!(rec[1].point.is_some());
    }
}
