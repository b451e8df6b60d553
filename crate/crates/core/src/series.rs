//! Taylor expansion of entire functions from samples on a circle.
//!
//! Samples at the M-th roots of unity scaled by R give the coefficients of
//! f(R·x) = Σ b_k x^k by the trapezoidal rule; evaluation anywhere in the
//! closed disk |x| ≤ 1 is then backward stable.

use std::f64::consts::PI;

use num_complex::Complex64;

/// R·e^{2πij/m}, j = 0..m. For m = 2^p the node sets are nested: the nodes
/// for m are the even-indexed nodes for 2m.
pub fn circle_nodes(m: usize, radius: f64) -> Vec<Complex64> {
    assert!(m >= 1);
    (0..m).map(|j| Complex64::from_polar(radius, 2.0 * PI * j as f64 / m as f64)).collect()
}

/// b_k = m⁻¹ Σ_j f_j e^{−2πijk/m}, k = 0..m.
pub fn coefficients(values: &[Complex64]) -> Vec<Complex64> {
    let m = values.len();
    let roots: Vec<Complex64> = (0..m).map(|j| Complex64::from_polar(1.0, -2.0 * PI * j as f64 / m as f64)).collect();
    (0..m)
        .map(|k| {
            let s: Complex64 = values.iter().enumerate().map(|(j, v)| v * roots[(j * k) % m]).sum();
            s / m as f64
        })
        .collect()
}

/// Σ b_k x^k by Horner's rule.
pub fn horner(coeffs: &[Complex64], x: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

/// Σ |b_k| over the upper half of the coefficients, which bounds both the
/// aliasing in the lower half and the error of dropping the upper half.
pub fn tail(coeffs: &[Complex64]) -> f64 {
    coeffs[coeffs.len() / 2..].iter().map(|c| c.norm()).sum()
}
