//! Single-spin dynamics of the detuned rectangular pulse train: one-cycle
//! rotation, micromotion, Fourier tables and multi-photon resonances.
//!
//! Frequencies are cyclic (Hz). The drive Hamiltonian is
//! 2π(ω₁(t) Ix + δω Iz) with ω₁(t) = ω₁ for 0 ≤ t < τ_p and 0 otherwise, and
//! propagators are exp(-i ∫H dt).

use crate::error::{invalid, Result};
use crate::linalg::C64;
use crate::wigner::{
    big_d, euler_from_su2, inverse_euler, small_d, su2_axis_angle, su2_from_euler, su2_mul, su2_rotation, Su2,
};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveSequence {
    /// τ_p, s
    pub pulse_width: f64,
    /// T, s
    pub period: f64,
    /// ω₁, Hz
    pub rabi: f64,
    /// δω, Hz
    pub detuning: f64,
}

impl DriveSequence {
    pub fn new(pulse_width: f64, period: f64, rabi: f64, detuning: f64) -> Result<Self> {
        let s = DriveSequence { pulse_width, period, rabi, detuning };
        s.validate()?;
        Ok(s)
    }

    /// τ_p = 56 μs, T = 92 μs, ω₁ = 4.46 kHz (flip angle π/2).
    pub fn pulsed_spin_lock(detuning: f64) -> Self {
        DriveSequence { pulse_width: 56e-6, period: 92e-6, rabi: 4460.0, detuning }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pulse_width > 0.0 && self.pulse_width <= self.period) {
            return invalid(format!(
                "need 0 < pulse_width <= period, got {} and {}",
                self.pulse_width, self.period
            ));
        }
        if !(self.rabi > 0.0) || !self.rabi.is_finite() {
            return invalid("rabi frequency must be positive");
        }
        if !self.detuning.is_finite() || !self.period.is_finite() {
            return invalid("detuning and period must be finite");
        }
        Ok(())
    }

    pub fn with_detuning(&self, detuning: f64) -> Self {
        DriveSequence { detuning, ..*self }
    }

    /// ω_d = 1/T in Hz.
    pub fn drive_frequency(&self) -> f64 {
        1.0 / self.period
    }

    /// Nominal flip angle 2π ω₁ τ_p.
    pub fn flip_angle(&self) -> f64 {
        TWO_PI * self.rabi * self.pulse_width
    }

    /// Rotation angle ψ of the pulse about its tilted axis.
    pub fn psi(&self) -> f64 {
        TWO_PI * self.rabi.hypot(self.detuning) * self.pulse_width
    }

    /// Interpulse z rotation γ_ip = 2π δω (T - τ_p).
    pub fn interpulse_phase(&self) -> f64 {
        TWO_PI * self.detuning * (self.period - self.pulse_width)
    }

    /// Polar angle α = atan2(ω₁, δω) of the pulse axis.
    pub fn alpha(&self) -> f64 {
        self.rabi.atan2(self.detuning)
    }

    fn pulse_axis(&self) -> [f64; 3] {
        let w = self.rabi.hypot(self.detuning);
        [self.rabi / w, 0.0, self.detuning / w]
    }

    /// U_drive(t) for t in [0, T].
    pub fn propagator_at(&self, t: f64) -> Su2 {
        let w = self.rabi.hypot(self.detuning);
        if t <= self.pulse_width {
            su2_rotation(self.pulse_axis(), TWO_PI * w * t)
        } else {
            let up = su2_rotation(self.pulse_axis(), TWO_PI * w * self.pulse_width);
            let ud = su2_rotation([0.0, 0.0, 1.0], TWO_PI * self.detuning * (t - self.pulse_width));
            su2_mul(&ud, &up)
        }
    }

    /// One-period propagator: rotation by ψ about the tilted axis followed
    /// by rotation by γ_ip about z.
    pub fn one_cycle(&self) -> Su2 {
        let up = su2_rotation(self.pulse_axis(), self.psi());
        let ud = su2_rotation([0.0, 0.0, 1.0], self.interpulse_phase());
        su2_mul(&ud, &up)
    }

    /// cos of half the (unfolded) one-cycle rotation angle. Smooth in δω.
    pub fn half_angle_cosine(&self) -> f64 {
        let (sg, cg) = (0.5 * self.interpulse_phase()).sin_cos();
        let (sp, cp) = (0.5 * self.psi()).sin_cos();
        cg * cp - sg * sp * self.alpha().cos()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveDrive {
    pub theta_eff: f64,
    pub phi_eff: f64,
    /// ω_eff in Hz, in [0, ω_d/2]
    pub omega_eff: f64,
    pub axis: [f64; 3],
    pub psi: f64,
    pub interpulse_phase: f64,
    pub alpha: f64,
    pub period: f64,
    /// Rotation angle vanishes; axis is a placeholder (+z).
    pub degenerate: bool,
    /// The raw rotation angle exceeded π and was folded (axis reversed).
    pub folded: bool,
    /// |n × n_closed| between the extracted axis and the closed form.
    pub closed_form_residual: f64,
}

impl EffectiveDrive {
    pub fn rotation_angle(&self) -> f64 {
        TWO_PI * self.omega_eff * self.period
    }

    /// Rotation exp(-i 2π ω_eff T n·σ/2).
    pub fn rotation(&self) -> Su2 {
        su2_rotation(self.axis, self.rotation_angle())
    }

    /// Rotation about the effective axis through 2π ω_eff t.
    pub fn rotation_at(&self, t: f64) -> Su2 {
        su2_rotation(self.axis, TWO_PI * self.omega_eff * t)
    }

    /// Identity-frame drive: ϑ_eff = 0 and no rotation. Used for the
    /// undriven limit of the coupling scale factors.
    pub fn trivial(period: f64) -> Self {
        EffectiveDrive {
            theta_eff: 0.0,
            phi_eff: 0.0,
            omega_eff: 0.0,
            axis: [0.0, 0.0, 1.0],
            psi: 0.0,
            interpulse_phase: 0.0,
            alpha: 0.0,
            period,
            degenerate: true,
            folded: false,
            closed_form_residual: 0.0,
        }
    }
}

/// Closed-form effective axis direction (unnormalized) from the quaternion
/// product of the two rotations.
pub fn closed_form_axis(seq: &DriveSequence) -> [f64; 3] {
    let (sg, cg) = (0.5 * seq.interpulse_phase()).sin_cos();
    let (sp, cp) = (0.5 * seq.psi()).sin_cos();
    let (sa, ca) = seq.alpha().sin_cos();
    [cg * sp * sa, sg * sp * sa, cg * sp * ca + cp * sg]
}

/// Closed-form polar angle: cot ϑ = cos(γ/2) cot α + cot(ψ/2) sin(γ/2) / sin α.
pub fn closed_form_theta(seq: &DriveSequence) -> f64 {
    let (sg, cg) = (0.5 * seq.interpulse_phase()).sin_cos();
    let half_psi = 0.5 * seq.psi();
    let a = seq.alpha();
    let cot = cg / a.tan() + sg / (half_psi.tan() * a.sin());
    1.0f64.atan2(cot)
}

pub fn compose_one_cycle(seq: &DriveSequence) -> Result<EffectiveDrive> {
    seq.validate()?;
    let u = seq.one_cycle();
    let (mut theta, mut n) = su2_axis_angle(&u);
    let mut folded = false;
    if theta > PI {
        theta = 2.0 * PI - theta;
        n = [-n[0], -n[1], -n[2]];
        folded = true;
    }
    let degenerate = theta.abs() < 1e-12;
    if degenerate {
        theta = 0.0;
        n = [0.0, 0.0, 1.0];
    }
    let v = closed_form_axis(seq);
    let vn = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let closed_form_residual = if degenerate || vn < 1e-300 {
        0.0
    } else {
        let cx = n[1] * v[2] - n[2] * v[1];
        let cy = n[2] * v[0] - n[0] * v[2];
        let cz = n[0] * v[1] - n[1] * v[0];
        (cx * cx + cy * cy + cz * cz).sqrt() / vn
    };
    if closed_form_residual > 1e-9 {
        log::warn!(
            "effective axis disagrees with closed form by {closed_form_residual:e} at detuning {} Hz",
            seq.detuning
        );
    }
    Ok(EffectiveDrive {
        theta_eff: n[2].clamp(-1.0, 1.0).acos(),
        phi_eff: n[1].atan2(n[0]),
        omega_eff: theta / (TWO_PI * seq.period),
        axis: n,
        psi: seq.psi(),
        interpulse_phase: seq.interpulse_phase(),
        alpha: seq.alpha(),
        period: seq.period,
        degenerate,
        folded,
        closed_form_residual,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MicromotionTrajectory {
    pub times: Vec<f64>,
    /// zyz Euler angles of P(t_k), unwrapped along the grid.
    pub euler: Vec<[f64; 3]>,
    pub period: f64,
    /// Index of the grid point at t = τ_p.
    pub breakpoint: usize,
}

impl MicromotionTrajectory {
    pub fn micromotion_at(&self, k: usize) -> Su2 {
        let [a, b, g] = self.euler[k];
        su2_from_euler(a, b, g)
    }
}

fn even_at_least(x: usize, lo: usize) -> usize {
    let x = x.max(lo);
    x + (x % 2)
}

fn unwrap_near(x: f64, reference: f64) -> f64 {
    x - TWO_PI * ((x - reference) / TWO_PI).round()
}

/// Sample P(t) = U_drive(t) R_n(-2π ω_eff t) over one period. Each segment
/// gets an even number of intervals so that Simpson quadrature applies.
pub fn micromotion(seq: &DriveSequence, eff: &EffectiveDrive, grid_points: usize) -> Result<MicromotionTrajectory> {
    seq.validate()?;
    if grid_points < 64 {
        return invalid("micromotion grid needs at least 64 points");
    }
    let t_p = seq.pulse_width;
    let t = seq.period;
    let delay = t - t_p;
    let mut times = Vec::with_capacity(grid_points + 3);
    let n_p;
    if delay > 0.0 {
        n_p = even_at_least((grid_points as f64 * t_p / t).round() as usize, 2);
        let n_d = even_at_least(grid_points.saturating_sub(n_p), 2);
        times.extend((0..=n_p).map(|k| t_p * k as f64 / n_p as f64));
        times.extend((1..=n_d).map(|k| t_p + delay * k as f64 / n_d as f64));
    } else {
        n_p = even_at_least(grid_points, 2);
        times.extend((0..=n_p).map(|k| t_p * k as f64 / n_p as f64));
    }
    let mut euler: Vec<[f64; 3]> = Vec::with_capacity(times.len());
    let mut hint: Option<(f64, f64)> = None;
    for &tk in &times {
        let p = su2_mul(&seq.propagator_at(tk), &eff.rotation_at(-tk));
        let mut e = euler_from_su2(&p, hint);
        if let Some(prev) = euler.last() {
            e[0] = unwrap_near(e[0], prev[0]);
            e[2] = unwrap_near(e[2], prev[2]);
        }
        hint = Some((e[0] + e[2], e[0] - e[2]));
        euler.push(e);
    }
    Ok(MicromotionTrajectory { times, euler, period: t, breakpoint: n_p })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FourierCoefficientTable {
    pub l: i64,
    pub n_max: i64,
    /// coeffs[m + l][n + n_max]
    pub coeffs: Vec<Vec<C64>>,
    /// Per m: mean |D_m0|² minus the power captured by the table.
    pub tail_energy: Vec<f64>,
}

impl FourierCoefficientTable {
    pub fn get(&self, m: i64, n: i64) -> C64 {
        if m.abs() > self.l || n.abs() > self.n_max {
            return C64::new(0.0, 0.0);
        }
        self.coeffs[(m + self.l) as usize][(n + self.n_max) as usize]
    }

    pub fn max_tail_energy(&self) -> f64 {
        self.tail_energy.iter().cloned().fold(0.0, f64::max)
    }

    /// Identity micromotion: f_mn = δ_m0 δ_n0.
    pub fn trivial(l: i64, n_max: i64) -> Self {
        let coeffs = (-l..=l)
            .map(|m| {
                (-n_max..=n_max)
                    .map(|n| if m == 0 && n == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
                    .collect()
            })
            .collect();
        FourierCoefficientTable { l, n_max, coeffs, tail_energy: vec![0.0; (2 * l + 1) as usize] }
    }
}

/// Composite Simpson weights for one segment of equally spaced points.
fn simpson_weights(n_intervals: usize, h: f64) -> Vec<f64> {
    (0..=n_intervals)
        .map(|k| {
            let w = if k == 0 || k == n_intervals {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

/// Quadrature weights over the trajectory grid (split at the pulse edge).
pub fn quadrature_weights(traj: &MicromotionTrajectory) -> Vec<f64> {
    let nt = traj.times.len();
    let mut w = vec![0.0; nt];
    let segs = if traj.breakpoint + 1 < nt {
        vec![(0, traj.breakpoint), (traj.breakpoint, nt - 1)]
    } else {
        vec![(0, nt - 1)]
    };
    for (a, b) in segs {
        let n = b - a;
        let h = (traj.times[b] - traj.times[a]) / n as f64;
        for (k, wk) in simpson_weights(n, h).into_iter().enumerate() {
            w[a + k] += wk;
        }
    }
    w
}

/// f^l_mn = T⁻¹ ∫ D^l_m0[P(t)†] e^{-i 2π n t / T} dt.
///
/// The frame rotation that takes lab operators into the micromotion frame is
/// P(t)†, so its Wigner matrix is what multiplies the lab-frame tensors.
pub fn fourier_coefficients(traj: &MicromotionTrajectory, l: i64, n_max: i64) -> Result<FourierCoefficientTable> {
    if !(1..=2).contains(&l) {
        return invalid(format!("Fourier table rank must be 1 or 2, got {l}"));
    }
    if n_max < 0 {
        return invalid("n_max must be nonnegative");
    }
    let w = quadrature_weights(traj);
    let period = traj.period;
    let samples: Vec<Vec<C64>> = (-l..=l)
        .map(|m| traj.euler.iter().map(|e| big_d(l, m, 0, inverse_euler(*e))).collect())
        .collect();
    let mut coeffs = Vec::new();
    let mut tail = Vec::new();
    for row in &samples {
        let mut r = Vec::with_capacity((2 * n_max + 1) as usize);
        for n in -n_max..=n_max {
            let mut s = C64::new(0.0, 0.0);
            for (k, &tk) in traj.times.iter().enumerate() {
                s += row[k] * C64::from_polar(w[k], -TWO_PI * n as f64 * tk / period);
            }
            r.push(s / period);
        }
        let power: f64 = row.iter().zip(&w).map(|(d, wk)| d.norm_sqr() * wk).sum::<f64>() / period;
        let captured: f64 = r.iter().map(|f| f.norm_sqr()).sum();
        tail.push((power - captured).max(0.0));
        coeffs.push(r);
    }
    Ok(FourierCoefficientTable { l, n_max, coeffs, tail_energy: tail })
}

/// Effective drive and rank-1/rank-2 Fourier tables of one drive setting.
#[derive(Clone, Debug)]
pub struct DriveTables {
    pub seq: DriveSequence,
    pub eff: EffectiveDrive,
    pub f1: FourierCoefficientTable,
    pub f2: FourierCoefficientTable,
}

pub const DEFAULT_N_MAX: i64 = 10;
pub const DEFAULT_GRID_POINTS: usize = 512;

impl DriveTables {
    pub fn build(seq: &DriveSequence, n_max: i64, grid_points: usize) -> Result<Self> {
        let eff = compose_one_cycle(seq)?;
        let traj = micromotion(seq, &eff, grid_points)?;
        let f1 = fourier_coefficients(&traj, 1, n_max)?;
        let f2 = fourier_coefficients(&traj, 2, n_max)?;
        let tail = f1.max_tail_energy().max(f2.max_tail_energy());
        if tail > 1e-4 {
            log::warn!("Fourier tail energy {tail:e} at n_max = {n_max}");
        }
        Ok(DriveTables { seq: *seq, eff, f1, f2 })
    }

    pub fn table(&self, l: i64) -> &FourierCoefficientTable {
        if l == 1 {
            &self.f1
        } else {
            &self.f2
        }
    }

    /// Coefficient of T_lq e^{i2π(n ω_d + q ω_eff)t} carried by a lab-frame
    /// T_l0 in the tilted frame: Σ_m e^{imφ} d^l_mq(ϑ) f^l_mn.
    pub fn frame_coefficient(&self, l: i64, q: i64, n: i64) -> C64 {
        let f = self.table(l);
        (-l..=l)
            .map(|m| {
                C64::from_polar(small_d(l, m, q, self.eff.theta_eff), m as f64 * self.eff.phi_eff) * f.get(m, n)
            })
            .sum()
    }

    /// Static secular scale factor of a rank-l coupling.
    pub fn scale_factor(&self, l: i64) -> C64 {
        self.frame_coefficient(l, 0, 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Resonance {
    pub k: u32,
    pub detuning: f64,
    pub omega_eff: f64,
}

/// Roots of k ω_eff(δω) = ω_d for δω in `range`, on the principal branch.
///
/// The principal ω_eff has a kink where the rotation angle reaches π, so the
/// search brackets the smooth function cos(θ/2) ∓ cos(π/k) instead.
pub fn find_resonances(template: &DriveSequence, k: u32, range: (f64, f64), n_scan: usize) -> Result<Vec<Resonance>> {
    template.validate()?;
    if k < 2 {
        return invalid("spin-flip order k must be at least 2");
    }
    let (lo, hi) = range;
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return invalid("scan range must be a finite interval with hi > lo");
    }
    let n_scan = n_scan.max(16);
    let target = (PI / k as f64).cos();
    let c = |x: f64| template.with_detuning(x).half_angle_cosine();
    let mut roots: Vec<f64> = Vec::new();
    let mut targets = vec![target];
    if target.abs() > 1e-15 {
        targets.push(-target);
    }
    for &tgt in &targets {
        let f = |x: f64| c(x) - tgt;
        let mut x0 = lo;
        let mut f0 = f(x0);
        for i in 1..=n_scan {
            let x1 = lo + (hi - lo) * i as f64 / n_scan as f64;
            let f1 = f(x1);
            if f0 == 0.0 {
                roots.push(x0);
            } else if f0 * f1 < 0.0 {
                let (mut a, mut b, mut fa) = (x0, x1, f0);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    let fm = f(m);
                    if fm == 0.0 || (b - a) < 1e-10 {
                        a = m;
                        b = m;
                        break;
                    }
                    if fa * fm < 0.0 {
                        b = m;
                    } else {
                        a = m;
                        fa = fm;
                    }
                }
                roots.push(0.5 * (a + b));
            }
            if i == n_scan && f1 == 0.0 {
                roots.push(x1);
            }
            x0 = x1;
            f0 = f1;
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
    roots
        .into_iter()
        .map(|x| {
            let eff = compose_one_cycle(&template.with_detuning(x))?;
            Ok(Resonance { k, detuning: x, omega_eff: eff.omega_eff })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wigner::su2_dist_mod_sign;

    #[test]
    fn quarter_cycle_x_pulse() {
        // ω₁ τ_p = 1/4 cycle, δω = 0
        let seq = DriveSequence::new(25e-6, 100e-6, 1e4, 0.0).unwrap();
        let e = compose_one_cycle(&seq).unwrap();
        assert!((e.theta_eff - PI / 2.0).abs() < 1e-12);
        assert!(e.phi_eff.abs() < 1e-12);
        assert!((e.omega_eff - seq.drive_frequency() / 4.0).abs() < 1e-9);
    }

    #[test]
    fn full_cycle_is_degenerate() {
        let seq = DriveSequence::new(50e-6, 100e-6, 2e4, 0.0).unwrap();
        let e = compose_one_cycle(&seq).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.omega_eff, 0.0);
    }

    #[test]
    fn reconstruction_matches_propagator() {
        for i in 0..50 {
            let seq = DriveSequence::pulsed_spin_lock(-8000.0 + 330.0 * i as f64);
            let e = compose_one_cycle(&seq).unwrap();
            assert!(su2_dist_mod_sign(&e.rotation(), &seq.one_cycle()) < 1e-12);
            assert!(e.omega_eff >= 0.0 && e.omega_eff <= 0.5 * seq.drive_frequency() + 1e-12);
        }
    }

    #[test]
    fn closed_form_theta_agrees_on_unfolded_branch() {
        for i in 0..40 {
            let seq = DriveSequence::pulsed_spin_lock(100.0 * i as f64);
            let e = compose_one_cycle(&seq).unwrap();
            if !e.folded {
                assert!((closed_form_theta(&seq) - e.theta_eff).abs() < 1e-10);
            }
            assert!(e.closed_form_residual < 1e-10);
        }
    }

    #[test]
    fn micromotion_is_periodic() {
        let seq = DriveSequence::pulsed_spin_lock(1300.0);
        let e = compose_one_cycle(&seq).unwrap();
        let tr = micromotion(&seq, &e, 512).unwrap();
        let first = tr.micromotion_at(0);
        let last = tr.micromotion_at(tr.times.len() - 1);
        assert!(su2_dist_mod_sign(&first, &crate::wigner::SU2_ID) < 1e-12);
        assert!(su2_dist_mod_sign(&last, &crate::wigner::SU2_ID) < 1e-10);
        assert!((tr.times[tr.breakpoint] - seq.pulse_width).abs() < 1e-18);
    }

    #[test]
    fn fourier_rows_resum_to_identity_at_zero() {
        let seq = DriveSequence::pulsed_spin_lock(700.0);
        let e = compose_one_cycle(&seq).unwrap();
        let tr = micromotion(&seq, &e, 512).unwrap();
        for l in 1..=2 {
            let f = fourier_coefficients(&tr, l, 40).unwrap();
            for m in -l..=l {
                let s: C64 = (-40..=40).map(|n| f.get(m, n)).sum();
                let want = if m == 0 { 1.0 } else { 0.0 };
                // the series converges slowly at the pulse-edge kink only;
                // t = 0 is a kink of the periodic extension as well
                assert!((s - C64::new(want, 0.0)).norm() < 2e-2, "l={l} m={m} {s}");
            }
        }
    }

    #[test]
    fn resonance_roots_for_standard_train() {
        let seq = DriveSequence::pulsed_spin_lock(0.0);
        let k2 = find_resonances(&seq, 2, (0.0, 6000.0), 2000).unwrap();
        let k3 = find_resonances(&seq, 3, (0.0, 6000.0), 2000).unwrap();
        assert_eq!(k2.len(), 1);
        assert!((k2[0].detuning - 4807.3).abs() < 1.0, "{:?}", k2);
        assert!((k3[0].detuning - 2442.0).abs() < 1.0, "{:?}", k3);
    }
}
