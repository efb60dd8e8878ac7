//! Electron spin relaxation: Lindblad rate and the population rate matrix.

use crate::error::{invalid, Result};
use crate::spin::SpinMatrices;

/// Lindblad rate γ_L for jump operators S±/√2 and dephasing S_z.
///
/// γ_L = 1/(S T1e), which makes the rate between the two outermost levels
/// equal to 1/T1e (1/T1e for NV, 2/T1e for spin-1/2).
pub fn lindblad_rate(two_s: u32, t1e: f64) -> Result<f64> {
    if two_s == 0 {
        return invalid("electron spin must be at least 1/2");
    }
    if !(t1e > 0.0) || !t1e.is_finite() {
        return invalid("T1e must be positive and finite");
    }
    Ok(2.0 / (two_s as f64 * t1e))
}

/// w[i][j] = rate from level j to level i (s⁻¹), levels ordered m = S..-S.
/// Columns sum to zero.
pub fn rate_matrix(two_s: u32, t1e: f64) -> Result<Vec<Vec<f64>>> {
    let gamma = lindblad_rate(two_s, t1e)?;
    let s = SpinMatrices::new(two_s);
    let d = s.dim();
    let mut w = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            if i != j {
                let up = s.sp[(i, j)].norm_sqr();
                let down = s.sm[(i, j)].norm_sqr();
                w[i][j] = 0.5 * gamma * (up + down);
            }
        }
    }
    for j in 0..d {
        let out: f64 = (0..d).filter(|&i| i != j).map(|i| w[i][j]).sum();
        w[j][j] = -out;
    }
    Ok(w)
}
