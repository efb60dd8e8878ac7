//! Average Pauli weight of a deviation operator.
//!
//! For a Pauli string with X-mask x and Z-mask z, Tr[P ρ] equals (up to a
//! unit phase) the Walsh-Hadamard transform at z of v_x[b] = ρ[b, b⊕x]. One
//! transform per x gives every coefficient in O(n 4^n).

use crate::error::{invalid, Error, Result};
use crate::linalg::{CMat, C64};

pub const MAX_PAULI_SPINS: usize = 10;

/// Σ_P w(P)|c_P|² / Σ_P |c_P|² over non-identity strings, w = number of
/// non-identity factors.
pub fn pauli_weight(rho: &CMat) -> Result<f64> {
    let d = rho.nrows();
    if d != rho.ncols() || !d.is_power_of_two() || d < 2 {
        return invalid(format!("state must be a 2^n square matrix, got {}x{}", d, rho.ncols()));
    }
    let n = d.trailing_zeros() as usize;
    if n > MAX_PAULI_SPINS {
        return Err(Error::DimensionCap {
            dim: d,
            cap: 1 << MAX_PAULI_SPINS,
            detail: format!("Pauli expansion of {n} spins exceeds the {MAX_PAULI_SPINS}-spin limit"),
        });
    }
    let mut weighted = 0.0;
    let mut total = 0.0;
    let mut v = vec![C64::new(0.0, 0.0); d];
    for x in 0..d {
        for (b, vb) in v.iter_mut().enumerate() {
            *vb = rho[(b, b ^ x)];
        }
        walsh_hadamard(&mut v);
        for (z, coeff) in v.iter().enumerate() {
            if x == 0 && z == 0 {
                continue;
            }
            let p = coeff.norm_sqr();
            weighted += (x | z).count_ones() as f64 * p;
            total += p;
        }
    }
    let scale = rho.nrows() as f64;
    if total <= 1e-24 * scale * scale {
        return Err(Error::Undefined("state has no traceless part".into()));
    }
    Ok(weighted / total)
}

fn walsh_hadamard(v: &mut [C64]) {
    let mut h = 1;
    while h < v.len() {
        for blk in (0..v.len()).step_by(2 * h) {
            for i in blk..blk + h {
                let (a, b) = (v[i], v[i + h]);
                v[i] = a + b;
                v[i + h] = a - b;
            }
        }
        h *= 2;
    }
}
