//! Spin operators for registers of spin-1/2 nuclei, electron spin-S
//! operators, and rank-1/rank-2 spherical tensors.
//!
//! Basis ordering: spin k of an n-spin register is bit (n-1-k) of the basis
//! index; bit value 0 is m = +1/2.

use crate::linalg::{c, kron, CMat, C64, ONE, ZERO};
use crate::wigner::Su2;
use faer::Mat;

pub type Op2 = [[C64; 2]; 2];

pub const SX: Op2 = [[ZERO, C64 { re: 0.5, im: 0.0 }], [C64 { re: 0.5, im: 0.0 }, ZERO]];
pub const SY: Op2 = [[ZERO, C64 { re: 0.0, im: -0.5 }], [C64 { re: 0.0, im: 0.5 }, ZERO]];
pub const SZ: Op2 = [[C64 { re: 0.5, im: 0.0 }, ZERO], [ZERO, C64 { re: -0.5, im: 0.0 }]];
pub const SP: Op2 = [[ZERO, ONE], [ZERO, ZERO]];
pub const SM: Op2 = [[ZERO, ZERO], [ONE, ZERO]];
pub const ID2: Op2 = [[ONE, ZERO], [ZERO, ONE]];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

fn axis_op(a: Axis) -> Op2 {
    match a {
        Axis::X => SX,
        Axis::Y => SY,
        Axis::Z => SZ,
    }
}

#[inline]
pub fn bit(b: usize, n: usize, k: usize) -> usize {
    (b >> (n - 1 - k)) & 1
}

/// Operator acting as `m` on spin k of an n-spin register.
pub fn site_op(n: usize, k: usize, m: &Op2) -> CMat {
    let dim = 1usize << n;
    let mask = 1usize << (n - 1 - k);
    let mut out = Mat::zeros(dim, dim);
    for b in 0..dim {
        let bk = bit(b, n, k);
        for bp in [b & !mask, b | mask] {
            let v = m[bk][bit(bp, n, k)];
            if v != ZERO {
                out[(b, bp)] = v;
            }
        }
    }
    out
}

pub fn spin_component(n: usize, k: usize, a: Axis) -> CMat {
    site_op(n, k, &axis_op(a))
}

/// Collective component Σ_k I_a^k.
pub fn total(n: usize, a: Axis) -> CMat {
    let dim = 1usize << n;
    let mut out: CMat = Mat::zeros(dim, dim);
    for k in 0..n {
        out += spin_component(n, k, a);
    }
    out
}

/// Diagonal of the collective I_z, i.e. the magnetic quantum number of each
/// basis state.
pub fn total_z_diag(n: usize) -> Vec<f64> {
    (0..1usize << n)
        .map(|b| (0..n).map(|k| 0.5 - bit(b, n, k) as f64).sum())
        .collect()
}

/// The same single-spin rotation applied to every spin of the register.
pub fn register_rotation(u: &Su2, n: usize) -> CMat {
    let one = Mat::from_fn(2, 2, |i, j| u[i][j]);
    let mut out = Mat::from_fn(1, 1, |_, _| ONE);
    for _ in 0..n {
        out = kron(out.as_ref(), one.as_ref());
    }
    out
}

/// Spherical rank-1 tensor T^i_{1q} of spin i: T10 = Iz, T1±1 = ∓ I±/√2.
pub fn rank1(n: usize, i: usize, q: i64) -> CMat {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    match q {
        0 => site_op(n, i, &SZ),
        1 => site_op(n, i, &SP) * faer::Scale(c(-r, 0.0)),
        -1 => site_op(n, i, &SM) * faer::Scale(c(r, 0.0)),
        _ => panic!("rank-1 tensor index {q} out of range"),
    }
}

/// Spherical rank-2 tensor of the pair (i, j), normalized so that
/// T20 = 3 Iz Iz - I·I.
pub fn rank2(n: usize, i: usize, j: usize, q: i64) -> CMat {
    let h = 0.5 * 6f64.sqrt();
    let op = |k: usize, m: &Op2| site_op(n, k, m);
    match q {
        0 => {
            let zz = op(i, &SZ) * op(j, &SZ);
            let xx = op(i, &SX) * op(j, &SX);
            let yy = op(i, &SY) * op(j, &SY);
            &zz * faer::Scale(c(2.0, 0.0)) - xx - yy
        }
        1 | -1 => {
            let pm = if q == 1 { SP } else { SM };
            let s = -(q as f64) * h;
            (op(i, &SZ) * op(j, &pm) + op(i, &pm) * op(j, &SZ)) * faer::Scale(c(s, 0.0))
        }
        2 | -2 => {
            let pm = if q == 2 { SP } else { SM };
            op(i, &pm) * op(j, &pm) * faer::Scale(c(h, 0.0))
        }
        _ => panic!("rank-2 tensor index {q} out of range"),
    }
}

/// Spin-S matrices in the basis m = S, S-1, ..., -S. `two_s` = 2S.
#[derive(Clone, Debug)]
pub struct SpinMatrices {
    pub two_s: u32,
    pub sx: CMat,
    pub sy: CMat,
    pub sz: CMat,
    pub sp: CMat,
    pub sm: CMat,
}

impl SpinMatrices {
    pub fn new(two_s: u32) -> Self {
        let d = two_s as usize + 1;
        let s = two_s as f64 / 2.0;
        let m_of = |k: usize| s - k as f64;
        let sz = Mat::from_fn(d, d, |i, j| if i == j { c(m_of(i), 0.0) } else { ZERO });
        // S+ |m> = sqrt(s(s+1) - m(m+1)) |m+1>
        let sp = Mat::from_fn(d, d, |i, j| {
            if i + 1 == j {
                let m = m_of(j);
                c((s * (s + 1.0) - m * (m + 1.0)).sqrt(), 0.0)
            } else {
                ZERO
            }
        });
        let sm = sp.adjoint().to_owned();
        let sx = (&sp + &sm) * faer::Scale(c(0.5, 0.0));
        let sy = (&sp - &sm) * faer::Scale(c(0.0, -0.5));
        SpinMatrices { two_s, sx, sy, sz, sp, sm }
    }

    pub fn dim(&self) -> usize {
        self.two_s as usize + 1
    }

    /// Magnetic quantum numbers in basis order.
    pub fn m_values(&self) -> Vec<f64> {
        let s = self.two_s as f64 / 2.0;
        (0..self.dim()).map(|k| s - k as f64).collect()
    }
}
