//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are reported but do not fail the
//! target; any other failure does.

use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use polaron_core::band::band;
use polaron_core::*;

const KNOWN_FAILURES: &[u32] = &[5];

struct Outcome {
    pass: bool,
    detail: String,
}

fn params(n: usize, g2: f64, phi2: f64, t: f64) -> ModelParams {
    ModelParams { n_sites: n, temperature: t, ..Default::default() }.with_squared_couplings(g2, phi2)
}

fn d_curve(p: &ModelParams, temps: &[f64]) -> Vec<TransportPoint> {
    sweep(p, temps, &TransportSettings::default())
        .into_iter()
        .map(|r| match r.point {
            Some(p) => p,
            None => panic!("T = {}: {}", r.temperature, r.error.unwrap_or_default()),
        })
        .collect()
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn self_consistency() -> Outcome {
    let start = Instant::now();
    let (mut res, mut sym) = (0.0f64, 0.0f64);
    for g2 in [0.1, 0.5] {
        for phi2 in [0.0, 0.3] {
            for t in [0.5, 1.0, 2.0] {
                let p = params(6, g2, phi2, t);
                let s = solve(&p, None).expect("solver");
                let e = build_e(&s.a, &p, 0.0);
                let theta = theta_avg(e.q(0));
                let next = update_a(&p, &e, &theta).expect("update");
                res = res.max(s.a.max_abs_diff(&next));
                sym = sym.max(s.a.symmetry_error());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: res < 1e-8 && sym < 1e-9 && secs < 10.0,
        detail: format!("max residual {res:.2e} (< 1e-8), symmetry {sym:.2e} (< 1e-9), {secs:.2} s (< 10 s)"),
    }
}

fn narrowing() -> Outcome {
    let mut worst = 0.0f64;
    for n in [6usize, 8] {
        for g2 in [0.1, 0.5, 1.0] {
            let p = params(n, g2, 0.0, 0.0);
            let a = AMatrix::constant(n, Complex64::new(p.g, 0.0));
            let theta = theta_avg(build_e(&a, &p, 0.0).q(0));
            let jt = renormalized_transfer(&a, &theta, &p).expect("transfer");
            let grid = p.grid();
            for (k, j) in jt.iter().enumerate() {
                worst = worst.max((j - (-g2).exp() * p.bare_band(grid.k(k))).abs());
            }
        }
    }
    Outcome { pass: worst < 1e-10, detail: format!("max |J̃_k − e^(−g²)J_k| = {worst:.2e} (< 1e-10)") }
}

fn fock_gate() -> Outcome {
    let start = Instant::now();
    let run = |g2: f64, n_max: usize, tol: f64| {
        let p = params(2, g2, 0.0, 0.0);
        constant_field_report(&p, n_max, &[0.0, 0.5], &[0.0, 0.5, 1.0], tol).expect("oracle")
    };
    let small = run(0.005, 8, 1e-8);
    let strong = run(0.5, 18, 1e-9);
    let secs = start.elapsed().as_secs_f64();
    let e2 = small.max_two_theta_error.max(strong.max_two_theta_error);
    let e4 = small.max_four_theta_error.max(strong.max_four_theta_error);
    Outcome {
        pass: e2 < 1e-8 && e4 < 1e-6 && secs < 60.0,
        detail: format!(
            "N=2, g²=0.005 n_max=8 and g²=0.5 n_max=18: two-θ {e2:.2e} (< 1e-8), four-θ {e4:.2e} (< 1e-6), {secs:.1} s"
        ),
    }
}

fn band_phenomenology() -> Outcome {
    let n = 16;
    let width = |phi2: f64, t: f64| {
        let p = params(n, 0.1, phi2, t);
        let s = solve(&p, None).expect("solver");
        band(&p, &s.a, &s.theta).expect("band").bandwidth
    };
    let temps = [0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0];
    let mut monotone = true;
    for phi2 in [0.1, 0.3] {
        let w: Vec<f64> = temps.iter().map(|&t| width(phi2, t)).collect();
        monotone &= w.windows(2).all(|x| x[1] < x[0]);
    }
    let low = width(0.3, 0.2) - width(0.1, 0.2);
    let high = width(0.3, 4.0) - width(0.1, 4.0);
    Outcome {
        pass: monotone && low > 0.0 && high < 0.0,
        detail: format!(
            "N={n}, g²=0.1: monotone decreasing {monotone}, W(φ²=0.3) − W(φ²=0.1) = {low:+.3e} at T=0.2, {high:+.3e} at T=4"
        ),
    }
}

fn size_robustness() -> Outcome {
    let start = Instant::now();
    let temps = [0.5, 1.0, 2.0, 4.0];
    let mut parts = Vec::new();
    let mut worst = 0.0f64;
    for g2 in [0.1, 0.5] {
        let d6 = d_curve(&params(6, g2, 0.0, 1.0), &temps);
        let d8 = d_curve(&params(8, g2, 0.0, 1.0), &temps);
        let (mut w, mut at) = (0.0f64, 0.0);
        for (a, b) in d6.iter().zip(&d8) {
            let r = (a.d_total - b.d_total).abs() / b.d_total;
            if r > w {
                w = r;
                at = a.temperature;
            }
        }
        worst = worst.max(w);
        parts.push(format!("g²={g2}: max {:.1}% at T={at}", 100.0 * w));
    }
    Outcome {
        pass: worst < 0.05,
        detail: format!("N=6 vs N=8, φ²=0: {} (< 5%), {:.0} s", parts.join(", "), start.elapsed().as_secs_f64()),
    }
}

fn hump() -> Outcome {
    let temps = linspace(0.2, 1.5, 10);
    let interior_max = |phi2: f64| {
        let d: Vec<f64> = d_curve(&params(6, 0.5, phi2, 1.0), &temps).iter().map(|p| p.d_total).collect();
        let at = (1..d.len() - 1).find(|&i| d[i] > d[i - 1] && d[i] > d[i + 1]);
        at.map(|i| temps[i])
    };
    let h3 = interior_max(0.3);
    let h7 = interior_max(0.7);
    let h0 = interior_max(0.0);
    let show = |h: Option<f64>| h.map_or("none".to_string(), |t| format!("T={t:.3}"));
    Outcome {
        pass: h3.is_some() && h7.is_some() && h0.is_none(),
        detail: format!(
            "g²=0.5, N=6, 10 points on [0.2, 1.5]: interior maximum φ²=0.3 {}, φ²=0.7 {}, φ²=0 {}",
            show(h3),
            show(h7),
            show(h0)
        ),
    }
}

fn phonon_bandwidth() -> Outcome {
    let pts: Vec<TransportPoint> = [0.05, 0.1, 0.2]
        .iter()
        .map(|&delta| {
            let p = ModelParams { delta, ..params(6, 0.5, 0.0, 1.0) };
            let s = solve(&p, None).expect("solver");
            diffusion(&s, &TransportSettings::default()).expect("transport")
        })
        .collect();
    let band: Vec<f64> = pts.iter().map(|p| p.d_band).collect();
    let frac: Vec<f64> = pts.iter().map(|p| p.d_hop / p.d_total).collect();
    Outcome {
        pass: band.windows(2).all(|x| x[1] > x[0]) && frac.windows(2).all(|x| x[1] < x[0]),
        detail: format!(
            "Δ = 0.05, 0.1, 0.2: d_band {:.4e} {:.4e} {:.4e}, d_hop/d_total {:.3} {:.3} {:.3}",
            band[0], band[1], band[2], frac[0], frac[1], frac[2]
        ),
    }
}

fn crossover() -> Outcome {
    let temps = [0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0];
    let frac: Vec<f64> = d_curve(&params(6, 0.5, 0.0, 1.0), &temps).iter().map(|p| p.d_hop / p.d_total).collect();
    let last = *frac.last().unwrap();
    let shown: Vec<String> = frac.iter().map(|f| format!("{f:.3}")).collect();
    Outcome {
        pass: frac.windows(2).all(|x| x[1] > x[0]) && last > 0.5,
        detail: format!("g²=0.5, N=6, d_hop/d_total on T = {temps:?}: {}", shown.join(" ")),
    }
}

fn quadrature() -> Outcome {
    let mut worst = 0.0f64;
    for t in [1.0, 2.0] {
        let s = solve(&params(6, 0.5, 0.0, t), None).expect("solver");
        let base = TransportSettings::default();
        let d0 = diffusion(&s, &base).expect("transport");
        let half = diffusion(&s, &TransportSettings { dt: d0.quadrature.dt / 2.0, ..base }).expect("transport");
        let long = diffusion(&s, &TransportSettings { t_max_factor: 2.0 * base.t_max_factor, ..base }).expect("transport");
        worst = worst.max((half.d_total / d0.d_total - 1.0).abs());
        worst = worst.max((long.d_total / d0.d_total - 1.0).abs());
    }
    Outcome { pass: worst < 1e-3, detail: format!("max relative change {worst:.2e} (< 1e-3)") }
}

fn degenerate() -> Outcome {
    let p = params(6, 0.0, 0.0, 1.0);
    let r = solve(&p, None).and_then(|s| diffusion(&s, &TransportSettings::default()));
    let ok = matches!(r, Err(PolaronError::DegenerateZeroScattering(_)));
    let shown = match &r {
        Ok(pt) => format!("returned D = {}", pt.d_total),
        Err(e) => format!("returned error: {e}"),
    };
    Outcome { pass: ok, detail: shown }
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "self-consistency", self_consistency),
        (2, "closed-form narrowing", narrowing),
        (3, "Fock-oracle gate", fock_gate),
        (4, "band phenomenology", band_phenomenology),
        (5, "size robustness", size_robustness),
        (6, "hump feature", hump),
        (7, "phonon-bandwidth effect", phonon_bandwidth),
        (8, "band-to-hopping crossover", crossover),
        (9, "quadrature self-convergence", quadrature),
        (10, "degenerate handling", degenerate),
    ];
    let mut unexpected = 0;
    for (id, name, run) in criteria {
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let known = !o.pass && KNOWN_FAILURES.contains(&id);
        if !o.pass && !known {
            unexpected += 1;
        }
        println!("{tag} criterion {id} ({name}): {}{}", o.detail, if known { " [known failure]" } else { "" });
    }
    if unexpected > 0 {
        println!("{unexpected} unexpected failure(s)");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
