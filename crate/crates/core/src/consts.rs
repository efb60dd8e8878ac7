//! Physical constants (SI) and unit helpers.

use std::f64::consts::PI;

/// mu_0 / 4 pi in T m / A.
pub const MU0_OVER_4PI: f64 = 1.000_000_000_55e-7;
/// Reduced Planck constant in J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// 13C gyromagnetic ratio over 2 pi, Hz/T.
pub const GAMMA_13C_HZ_PER_T: f64 = 10.7084e6;
/// Free-electron gyromagnetic ratio magnitude over 2 pi, Hz/T.
pub const GAMMA_E_HZ_PER_T: f64 = 28_024.951_4e6;
/// Diamond cubic lattice constant, m.
pub const DIAMOND_A0: f64 = 357e-12;
/// Magic angle arccos(1/sqrt 3).
pub const MAGIC_ANGLE: f64 = 0.955_316_618_124_509_3;

pub const ANGSTROM: f64 = 1e-10;
pub const NANOMETER: f64 = 1e-9;

#[inline]
pub fn gamma_13c() -> f64 {
    2.0 * PI * GAMMA_13C_HZ_PER_T
}

#[inline]
pub fn gamma_e() -> f64 {
    2.0 * PI * GAMMA_E_HZ_PER_T
}
