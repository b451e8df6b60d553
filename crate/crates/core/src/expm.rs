//! Dense complex matrix exponential by scaling and squaring with diagonal
//! Padé approximants (degrees 3 through 13).

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::error::{PolaronError, Result};

const THETA: [(usize, f64); 5] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
    (13, 5.371920351148152e0),
];

fn pade_coefficients(m: usize) -> &'static [f64] {
    match m {
        3 => &[120.0, 60.0, 12.0, 1.0],
        5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => &[17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0],
        9 => &[
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
        13 => &[
            64764752532480000.0,
            32382376266240000.0,
            7771770303897600.0,
            1187353796428800.0,
            129060195264000.0,
            10559470521600.0,
            670442572800.0,
            33522128640.0,
            1323241920.0,
            40840800.0,
            960960.0,
            16380.0,
            182.0,
            1.0,
        ],
        _ => unreachable!("unsupported Padé degree {m}"),
    }
}

fn one_norm(a: &ArrayView2<Complex64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn identity(n: usize) -> Array2<Complex64> {
    Array2::from_diag_elem(n, Complex64::new(1.0, 0.0))
}

/// Solves `a · x = b` in place by Gaussian elimination with partial pivoting.
fn solve_in_place(mut a: Array2<Complex64>, mut b: Array2<Complex64>) -> Result<Array2<Complex64>> {
    let n = a.nrows();
    for col in 0..n {
        let (piv, max) = (col..n)
            .map(|r| (r, a[[r, col]].norm()))
            .fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if max == 0.0 || !max.is_finite() {
            return Err(PolaronError::NumericalBreakdown(
                "singular Padé denominator in matrix exponential".into(),
            ));
        }
        if piv != col {
            for j in 0..n {
                a.swap([piv, j], [col, j]);
            }
            for j in 0..b.ncols() {
                b.swap([piv, j], [col, j]);
            }
        }
        let inv = a[[col, col]].inv();
        for r in col + 1..n {
            let factor = a[[r, col]] * inv;
            if factor == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in col..n {
                let v = a[[col, j]];
                a[[r, j]] -= factor * v;
            }
            for j in 0..b.ncols() {
                let v = b[[col, j]];
                b[[r, j]] -= factor * v;
            }
        }
    }
    for col in (0..n).rev() {
        let inv = a[[col, col]].inv();
        for j in 0..b.ncols() {
            let mut s = b[[col, j]];
            for k in col + 1..n {
                s -= a[[col, k]] * b[[k, j]];
            }
            b[[col, j]] = s * inv;
        }
    }
    Ok(b)
}

/// exp(M) for a square complex matrix.
pub fn matrix_exp(m: &ArrayView2<Complex64>) -> Result<Array2<Complex64>> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "matrix_exp needs a square matrix");
    if n == 0 {
        return Ok(Array2::zeros((0, 0)));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(PolaronError::NumericalBreakdown(
            "non-finite entry passed to matrix exponential".into(),
        ));
    }
    if n == 1 {
        let v = m[[0, 0]].exp();
        return check_finite(Array2::from_elem((1, 1), v));
    }

    let norm = one_norm(m);
    let ident = identity(n);

    for &(deg, theta) in &THETA[..4] {
        if norm <= theta {
            let a = m.to_owned();
            let (u, v) = pade_low(&a, &ident, deg);
            let r = solve_in_place(&v - &u, &v + &u)?;
            return check_finite(r);
        }
    }

    let theta13 = THETA[4].1;
    let s = if norm > theta13 {
        (norm / theta13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = m.mapv(|z| z / 2f64.powi(s));
    let (u, v) = pade13(&a, &ident);
    let mut r = solve_in_place(&v - &u, &v + &u)?;
    for _ in 0..s {
        r = r.dot(&r);
    }
    check_finite(r)
}

fn check_finite(r: Array2<Complex64>) -> Result<Array2<Complex64>> {
    if r.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(r)
    } else {
        Err(PolaronError::NumericalBreakdown(
            "matrix exponential overflowed".into(),
        ))
    }
}

fn pade_low(
    a: &Array2<Complex64>,
    ident: &Array2<Complex64>,
    deg: usize,
) -> (Array2<Complex64>, Array2<Complex64>) {
    let b = pade_coefficients(deg);
    let a2 = a.dot(a);
    let mut powers = vec![ident.clone(), a2.clone()];
    for _ in 2..=deg / 2 {
        let next = powers.last().unwrap().dot(&a2);
        powers.push(next);
    }
    let n = a.nrows();
    let mut uo = Array2::<Complex64>::zeros((n, n));
    let mut v = Array2::<Complex64>::zeros((n, n));
    for (j, p) in powers.iter().enumerate() {
        uo.scaled_add(Complex64::new(b[2 * j + 1], 0.0), p);
        v.scaled_add(Complex64::new(b[2 * j], 0.0), p);
    }
    (a.dot(&uo), v)
}

fn pade13(a: &Array2<Complex64>, ident: &Array2<Complex64>) -> (Array2<Complex64>, Array2<Complex64>) {
    let b = pade_coefficients(13);
    let c = |x: f64| Complex64::new(x, 0.0);
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);

    let mut inner_u = a6.mapv(|z| z * b[13]);
    inner_u.scaled_add(c(b[11]), &a4);
    inner_u.scaled_add(c(b[9]), &a2);
    let mut u = a6.dot(&inner_u);
    u.scaled_add(c(b[7]), &a6);
    u.scaled_add(c(b[5]), &a4);
    u.scaled_add(c(b[3]), &a2);
    u.scaled_add(c(b[1]), ident);
    let u = a.dot(&u);

    let mut inner_v = a6.mapv(|z| z * b[12]);
    inner_v.scaled_add(c(b[10]), &a4);
    inner_v.scaled_add(c(b[8]), &a2);
    let mut v = a6.dot(&inner_v);
    v.scaled_add(c(b[6]), &a6);
    v.scaled_add(c(b[4]), &a4);
    v.scaled_add(c(b[2]), &a2);
    v.scaled_add(c(b[0]), ident);
    (u, v)
}
