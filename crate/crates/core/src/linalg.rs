//! Dense complex matrix helpers on top of faer.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Scale};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = Mat<C64>;
pub type RMat = Mat<f64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

pub fn zeros(n: usize, m: usize) -> CMat {
    Mat::zeros(n, m)
}

pub fn scale(a: MatRef<'_, C64>, s: C64) -> CMat {
    a * Scale(s)
}

pub fn to_complex(a: MatRef<'_, f64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c(a[(i, j)], 0.0))
}

/// Kronecker product a ⊗ b (a is the slow index).
pub fn kron(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    let (ar, ac) = (a.nrows(), a.ncols());
    let (br, bc) = (b.nrows(), b.ncols());
    let mut out = Mat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == ZERO {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn commutator(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    a * b - b * a
}

pub fn trace(a: MatRef<'_, C64>) -> C64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// Hilbert-Schmidt inner product Tr[a† b].
pub fn hs_inner(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> C64 {
    let mut s = ZERO;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].conj() * b[(i, j)];
        }
    }
    s
}

pub fn max_abs(a: MatRef<'_, C64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn max_abs_diff(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

pub fn frobenius(a: MatRef<'_, C64>) -> f64 {
    hs_inner(a, a).re.sqrt()
}

/// Largest singular value.
pub fn op_norm(a: MatRef<'_, C64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    match a.singular_values() {
        Ok(s) => s.into_iter().fold(0.0, f64::max),
        Err(_) => frobenius(a),
    }
}

fn norm1(a: MatRef<'_, C64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn hermitian_part(a: MatRef<'_, C64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

const PADE13: [f64; 14] = [
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
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by Padé(13) scaling and squaring.
pub fn expm(a: MatRef<'_, C64>) -> CMat {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let nrm = norm1(a);
    let s = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * Scale(c(0.5f64.powi(s), 0.0));
    let b = &PADE13;
    let id = identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let r = |x: f64| Scale(c(x, 0.0));
    let inner_u: CMat = &a6 * r(b[13]) + &a4 * r(b[11]) + &a2 * r(b[9]);
    let u_poly: CMat =
        &a6 * &inner_u + &a6 * r(b[7]) + &a4 * r(b[5]) + &a2 * r(b[3]) + &id * r(b[1]);
    let u = &a * &u_poly;
    let inner_v: CMat = &a6 * r(b[12]) + &a4 * r(b[10]) + &a2 * r(b[8]);
    let v: CMat = &a6 * &inner_v + &a6 * r(b[6]) + &a4 * r(b[4]) + &a2 * r(b[2]) + &id * r(b[0]);
    let p = &v + &u;
    let q = &v - &u;
    let mut x = q.partial_piv_lu().solve(&p);
    for _ in 0..s {
        x = &x * &x;
    }
    x
}

/// exp(-i 2π h t) for Hermitian h (Hz) and time t (s), via eigendecomposition.
pub fn unitary_propagator(h: MatRef<'_, C64>, t: f64) -> CMat {
    let n = h.nrows();
    let e = h
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("hermitian eigensolver failed");
    let u = e.U();
    let s = e.S().column_vector();
    let phased = Mat::from_fn(n, n, |i, j| {
        let ph = -2.0 * std::f64::consts::PI * s[j].re * t;
        u[(i, j)] * C64::from_polar(1.0, ph)
    });
    &phased * u.adjoint()
}

/// a^k by binary powering.
pub fn mat_pow(a: MatRef<'_, C64>, mut k: u64) -> CMat {
    let mut result = identity(a.nrows());
    let mut base = a.to_owned();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}
