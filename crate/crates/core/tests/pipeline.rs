use approx::assert_relative_eq;
use polaron_core::correlation::vv_correlation;
use polaron_core::solver::{read_field_table, write_field_table};
use polaron_core::{
    band::band, bose_factor, constant_field_report, diffusion, solve, sweep, CorrelationContext, CorrelationEngine,
    EngineSettings, ModelParams, PolaronError, TransportSettings,
};

fn params(n: usize, g2: f64, phi2: f64, t: f64) -> ModelParams {
    ModelParams { n_sites: n, temperature: t, ..Default::default() }.with_squared_couplings(g2, phi2)
}

#[test]
fn bose_factor_is_coth() {
    assert_relative_eq!(bose_factor(4.0, 1.0), 8.041623328375598, max_relative = 1e-14);
    assert_eq!(bose_factor(0.0, 1.0), 1.0);
}

#[test]
fn two_site_oracle_matches_uniform_field() {
    let p = params(2, 0.05, 0.0, 0.5);
    let r = constant_field_report(&p, 14, &[0.25, 0.5], &[0.0, 0.7], 1e-8).unwrap();
    assert!(r.max_two_theta_error < 1e-8, "{}", r.max_two_theta_error);
    assert!(r.max_four_theta_error < 1e-7, "{}", r.max_four_theta_error);
}

#[test]
fn engine_agrees_with_literal_sum() {
    for phi2 in [0.0, 0.3] {
        let s = solve(&params(4, 0.5, phi2, 1.0), None).unwrap();
        let ctx = CorrelationContext::from_solution(&s).unwrap();
        let tuples = vec![[0, 1, 1, 0], [1, 2, 3, 0], [2, 2, 2, 2]];
        let engine = CorrelationEngine::new(ctx.clone(), tuples.clone(), EngineSettings::default()).unwrap();
        assert!(engine.report().converged);
        for (i, t4) in tuples.iter().enumerate() {
            for t in [0.0, 0.9, 3.5] {
                let lit = vv_correlation(&ctx, t4[0], t4[1], t4[2], t4[3], t).unwrap().value;
                let eng = engine.vv(i, t);
                assert!((lit - eng).norm() <= 1e-9 * (1.0 + lit.norm()), "φ²={phi2} {t4:?} t={t}: {lit} vs {eng}");
            }
        }
    }
}

#[test]
fn transport_point_is_consistent() {
    let s = solve(&params(4, 0.5, 0.0, 1.5), None).unwrap();
    let pt = diffusion(&s, &TransportSettings::default()).unwrap();
    assert_relative_eq!(pt.d_total, pt.d_band + pt.d_hop, max_relative = 1e-12);
    assert_relative_eq!(pt.mobility, pt.d_total / 1.5, max_relative = 1e-12);
    assert!(pt.d_band > 0.0 && pt.d_hop > 0.0);
    assert!(pt.gamma_scatter.iter().all(|&g| g > 0.0));
    assert!(pt.hermiticity_defect < 1e-10);
    let b = band(&s.params, &s.a, &s.theta).unwrap();
    assert_relative_eq!(pt.bandwidth, b.bandwidth, max_relative = 1e-12);
}

#[test]
fn sweep_reports_failures_per_point() {
    let p = ModelParams { delta: 0.0, ..params(4, 0.5, 0.0, 1.0) };
    let recs = sweep(&p, &[1.0, 2.0], &TransportSettings::default());
    assert_eq!(recs.len(), 2);
    assert!(recs.iter().all(|r| r.point.is_none() && r.status() != "ok"));
}

#[test]
fn zero_temperature_transport_is_rejected() {
    let s = solve(&params(4, 0.1, 0.0, 0.0), None).unwrap();
    assert!(matches!(diffusion(&s, &TransportSettings::default()), Err(PolaronError::InvalidParameter(_))));
}

#[test]
fn field_table_round_trips() {
    let s = solve(&params(6, 0.1, 0.3, 1.0), None).unwrap();
    let mut buf = Vec::new();
    write_field_table(&mut buf, &s.params, &s.a, &s.report).unwrap();
    let (p, a, residual) = read_field_table(buf.as_slice()).unwrap();
    assert_eq!(p.n_sites, 6);
    assert!(a.max_abs_diff(&s.a) < 1e-14);
    assert_eq!(residual, s.report.final_residual);
}
