//! Wigner rotation matrices and SU(2) helpers. zyz convention with active
//! rotations R = exp(-i a Jz) exp(-i b Jy) exp(-i g Jz).

use crate::linalg::{c, C64, ONE, ZERO};

/// 2x2 special unitary as nested array, row major.
pub type Su2 = [[C64; 2]; 2];

pub const SU2_ID: Su2 = [[ONE, ZERO], [ZERO, ONE]];

pub fn su2_mul(a: &Su2, b: &Su2) -> Su2 {
    let mut out = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn su2_adjoint(a: &Su2) -> Su2 {
    [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
}

/// exp(-i angle n·σ/2) for a unit axis n.
pub fn su2_rotation(axis: [f64; 3], angle: f64) -> Su2 {
    let (s, co) = (0.5 * angle).sin_cos();
    let [x, y, z] = axis;
    [
        [c(co, -s * z), c(-s * y, -s * x)],
        [c(s * y, -s * x), c(co, s * z)],
    ]
}

/// Rotation angle in [0, 2π] and axis of an SU(2) element. Axis is +z when
/// the angle vanishes.
pub fn su2_axis_angle(u: &Su2) -> (f64, [f64; 3]) {
    // u = cos(θ/2) 1 - i sin(θ/2) n·σ
    let a = 0.5 * (u[0][0] + u[1][1]).re;
    let nx = -0.5 * (u[0][1] + u[1][0]).im;
    let ny = 0.5 * (u[1][0] - u[0][1]).re;
    let nz = -0.5 * (u[0][0] - u[1][1]).im;
    let sn = (nx * nx + ny * ny + nz * nz).sqrt();
    let theta = 2.0 * sn.atan2(a);
    if sn < 1e-300 {
        return (theta, [0.0, 0.0, 1.0]);
    }
    (theta, [nx / sn, ny / sn, nz / sn])
}

pub fn su2_from_euler(alpha: f64, beta: f64, gamma: f64) -> Su2 {
    let (sb, cb) = (0.5 * beta).sin_cos();
    let sum = 0.5 * (alpha + gamma);
    let dif = 0.5 * (alpha - gamma);
    [
        [C64::from_polar(cb, -sum), -C64::from_polar(sb, -dif)],
        [C64::from_polar(sb, dif), C64::from_polar(cb, sum)],
    ]
}

/// zyz Euler angles of an SU(2) element. `hint` supplies (α+γ, α−γ) used when
/// one of them is undefined (β near 0 or π).
pub fn euler_from_su2(u: &Su2, hint: Option<(f64, f64)>) -> [f64; 3] {
    let cb = u[0][0].norm();
    let sb = u[1][0].norm();
    let beta = 2.0 * sb.atan2(cb);
    let tol = 1e-9;
    let (hs, hd) = hint.unwrap_or((0.0, 0.0));
    let sum = if cb > tol { -2.0 * u[0][0].arg() } else { hs };
    let dif = if sb > tol { 2.0 * u[1][0].arg() } else { hd };
    // When only one combination is defined the other comes from the hint,
    // which keeps the angles continuous through gimbal lock.
    [0.5 * (sum + dif), beta, 0.5 * (sum - dif)]
}

/// SO(3) matrix of an SU(2) element: R_ij = ½ Tr[σ_i U σ_j U†].
pub fn su2_to_so3(u: &Su2) -> [[f64; 3]; 3] {
    let sig: [Su2; 3] = [
        [[ZERO, ONE], [ONE, ZERO]],
        [[ZERO, c(0.0, -1.0)], [c(0.0, 1.0), ZERO]],
        [[ONE, ZERO], [ZERO, c(-1.0, 0.0)]],
    ];
    let ud = su2_adjoint(u);
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let m = su2_mul(&su2_mul(&sig[i], u), &su2_mul(&sig[j], &ud));
            r[i][j] = 0.5 * (m[0][0] + m[1][1]).re;
        }
    }
    r
}

/// Distance between two SU(2) elements modulo global sign (operator norm of
/// the closer of a-b and a+b).
pub fn su2_dist_mod_sign(a: &Su2, b: &Su2) -> f64 {
    let d = |s: f64| {
        let m = [
            [a[0][0] - b[0][0] * s, a[0][1] - b[0][1] * s],
            [a[1][0] - b[1][0] * s, a[1][1] - b[1][1] * s],
        ];
        op_norm2(&m)
    };
    d(1.0).min(d(-1.0))
}

pub fn op_norm2(m: &Su2) -> f64 {
    // largest singular value of a 2x2 complex matrix
    let a = m[0][0].norm_sqr() + m[0][1].norm_sqr() + m[1][0].norm_sqr() + m[1][1].norm_sqr();
    let det = (m[0][0] * m[1][1] - m[0][1] * m[1][0]).norm();
    let disc = (a * a - 4.0 * det * det).max(0.0).sqrt();
    (0.5 * (a + disc)).sqrt()
}

fn factorial(n: i64) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Wigner small-d element d^j_{m' m}(β) for integer j.
pub fn small_d(j: i64, mp: i64, m: i64, beta: f64) -> f64 {
    if mp.abs() > j || m.abs() > j {
        return 0.0;
    }
    let pref = (factorial(j + mp) * factorial(j - mp) * factorial(j + m) * factorial(j - m)).sqrt();
    let (s, co) = (0.5 * beta).sin_cos();
    let kmin = 0.max(m - mp);
    let kmax = (j + m).min(j - mp);
    let mut sum = 0.0;
    for k in kmin..=kmax {
        let sign = if (k - m + mp) % 2 == 0 { 1.0 } else { -1.0 };
        let den = factorial(j + m - k) * factorial(k) * factorial(j - k - mp) * factorial(k - m + mp);
        let pc = (2 * j - 2 * k + m - mp) as i32;
        let ps = (2 * k - m + mp) as i32;
        sum += sign * co.powi(pc) * s.powi(ps) / den;
    }
    pref * sum
}

/// D^j_{m' m}(α, β, γ) = e^{-i m' α} d^j_{m' m}(β) e^{-i m γ}.
pub fn big_d(j: i64, mp: i64, m: i64, euler: [f64; 3]) -> C64 {
    let [a, b, g] = euler;
    C64::from_polar(small_d(j, mp, m, b), -(mp as f64) * a - (m as f64) * g)
}

/// Euler angles of the inverse rotation.
pub fn inverse_euler(euler: [f64; 3]) -> [f64; 3] {
    [-euler[2], -euler[1], -euler[0]]
}
