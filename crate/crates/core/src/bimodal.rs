//! Two-frequency Fourier decomposition of the nuclear interaction in the
//! tilted micromotion frame, effective generators to second order, kick
//! operators and closed-form heating rates.
//!
//! Components are nuclear-space operators H^(n,q) in Hz such that the
//! tilted-frame interaction is Σ H^(n,q) e^{i2π(n ω_d + q ω_eff)t}.

use crate::drive::{find_resonances, DriveSequence, DriveTables};
use crate::electron::rate_matrix;
use crate::error::{invalid, Error, Result};
use crate::lattice::{ElectronSpecies, SpinClusterGeometry};
use crate::linalg::{c, commutator, expm, hermitian_part, max_abs, op_norm, scale, trace, CMat, C64, ZERO};
use crate::spin::{rank1, rank2, total, total_z_diag, Axis, SpinMatrices};
use faer::Mat;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

const TWO_PI: f64 = 2.0 * PI;

/// Largest nuclear register the dense decomposition accepts.
pub const MAX_SPINS: usize = 8;
pub const DEFAULT_EPS_RES: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct BimodalComponents {
    pub n_spins: usize,
    /// ω_d, Hz
    pub drive_frequency: f64,
    /// ω_eff, Hz
    pub omega_eff: f64,
    pub n_max: i64,
    pub components: BTreeMap<(i64, i64), CMat>,
    pub tail_energy: f64,
}

impl BimodalComponents {
    /// n ω_d + q ω_eff in Hz.
    pub fn frequency(&self, key: (i64, i64)) -> f64 {
        key.0 as f64 * self.drive_frequency + key.1 as f64 * self.omega_eff
    }

    pub fn dim(&self) -> usize {
        1 << self.n_spins
    }

    pub fn is_resonant(&self, key: (i64, i64), eps_res: f64) -> bool {
        self.frequency(key).abs() < eps_res * self.drive_frequency
    }

    /// Σ H^(n,q) e^{i2π(n ω_d + q ω_eff)t}.
    pub fn resum(&self, t: f64) -> CMat {
        let mut out = Mat::zeros(self.dim(), self.dim());
        for (&k, h) in &self.components {
            out += scale(h.as_ref(), C64::from_polar(1.0, TWO_PI * self.frequency(k) * t));
        }
        out
    }
}

/// Hyperfine shift of each nucleus for the given electron projections.
pub fn hyperfine_shifts(geometry: &SpinClusterGeometry, m_s: &[f64]) -> Result<Vec<f64>> {
    if m_s.len() != geometry.n_electrons() {
        return invalid(format!(
            "{} electron projections given for {} electrons",
            m_s.len(),
            geometry.n_electrons()
        ));
    }
    Ok(geometry.hyperfine.iter().map(|row| row.iter().zip(m_s).map(|(h, m)| h * m).sum()).collect())
}

/// Collective rank-2 dipolar tensor Σ_{i<j} d_ij T^ij_2q.
pub fn dipolar_tensor(geometry: &SpinClusterGeometry, q: i64) -> CMat {
    let n = geometry.n_nuclei();
    let mut out = Mat::zeros(1 << n, 1 << n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = geometry.dipolar[i][j];
            if d != 0.0 {
                out += scale(rank2(n, i, j, q).as_ref(), c(d, 0.0));
            }
        }
    }
    out
}

/// Collective rank-1 tensor Σ_i h_i T^i_1q.
pub fn hyperfine_tensor(n: usize, shifts: &[f64], q: i64) -> CMat {
    let mut out = Mat::zeros(1 << n, 1 << n);
    for (i, &h) in shifts.iter().enumerate() {
        if h != 0.0 {
            out += scale(rank1(n, i, q).as_ref(), c(h, 0.0));
        }
    }
    out
}

fn check_size(n: usize) -> Result<()> {
    if n > MAX_SPINS {
        return Err(Error::DimensionCap {
            dim: 1 << n,
            cap: 1 << MAX_SPINS,
            detail: format!("{n} nuclei in the bimodal decomposition"),
        });
    }
    Ok(())
}

/// Decompose the dipolar and m_s-dependent hyperfine interaction.
pub fn decompose(geometry: &SpinClusterGeometry, tables: &DriveTables, m_s: &[f64]) -> Result<BimodalComponents> {
    let n = geometry.n_nuclei();
    check_size(n)?;
    if tables.f1.l != 1 || tables.f2.l != 2 || tables.f1.n_max != tables.f2.n_max {
        return invalid("Fourier tables must be rank 1 and rank 2 with the same n_max");
    }
    let shifts = hyperfine_shifts(geometry, m_s)?;
    let n_max = tables.f2.n_max;
    let dq: Vec<CMat> = (-2..=2).map(|q| dipolar_tensor(geometry, q)).collect();
    let hq: Vec<CMat> = (-1..=1).map(|q| hyperfine_tensor(n, &shifts, q)).collect();
    let has_dip = dq.iter().any(|m| max_abs(m.as_ref()) > 0.0);
    let has_hf = hq.iter().any(|m| max_abs(m.as_ref()) > 0.0);
    let coupling_scale = geometry
        .dipolar
        .iter()
        .flatten()
        .chain(&shifts)
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let mut components = BTreeMap::new();
    for nn in -n_max..=n_max {
        for q in -2i64..=2 {
            let mut h: CMat = Mat::zeros(1 << n, 1 << n);
            if has_dip {
                h += scale(dq[(q + 2) as usize].as_ref(), tables.frame_coefficient(2, q, nn));
            }
            if has_hf && q.abs() <= 1 {
                h += scale(hq[(q + 1) as usize].as_ref(), tables.frame_coefficient(1, q, nn));
            }
            if max_abs(h.as_ref()) > 1e-14 * coupling_scale {
                components.insert((nn, q), h);
            }
        }
    }
    let tail_energy = tables.f1.max_tail_energy().max(tables.f2.max_tail_energy());
    Ok(BimodalComponents {
        n_spins: n,
        drive_frequency: tables.seq.drive_frequency(),
        omega_eff: tables.eff.omega_eff,
        n_max,
        components,
        tail_energy,
    })
}

#[derive(Clone, Debug)]
pub struct EffectiveGenerator {
    pub eps_res: f64,
    /// First-order components kept (resonant).
    pub resonant_set: Vec<(i64, i64)>,
    pub first_order: CMat,
    /// Hermitized sum of the second-order targets.
    pub second_order: CMat,
    /// Second-order contribution of each resonant target (n₀, q₀).
    pub second_order_targets: BTreeMap<(i64, i64), CMat>,
}

impl EffectiveGenerator {
    pub fn total(&self) -> CMat {
        &self.first_order + &self.second_order
    }
}

/// Resonant targets (n₀, q₀), |q₀| ≤ 4, of the second-order sum.
fn resonant_targets(c: &BimodalComponents, eps_res: f64) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for n0 in -3i64..=3 {
        for q0 in -4i64..=4 {
            if c.is_resonant((n0, q0), eps_res) {
                out.push((n0, q0));
            }
        }
    }
    out
}

/// H̄ = Σ_res H^(n,q) - ½ Σ_t Σ_b [H_{t-b}, H_b] / (n_b ω_d + q_b ω_eff),
/// with t over resonant targets and b over non-resonant components.
pub fn effective_generator(cm: &BimodalComponents, eps_res: f64) -> Result<EffectiveGenerator> {
    if !(eps_res > 0.0) {
        return invalid("eps_res must be positive");
    }
    let dim = cm.dim();
    let resonant_set: Vec<(i64, i64)> =
        cm.components.keys().cloned().filter(|&k| cm.is_resonant(k, eps_res)).collect();
    let mut first = Mat::zeros(dim, dim);
    for k in &resonant_set {
        first += &cm.components[k];
    }
    let mut near = 0usize;
    let mut targets = BTreeMap::new();
    let mut second = Mat::zeros(dim, dim);
    for t in resonant_targets(cm, eps_res) {
        let mut acc: CMat = Mat::zeros(dim, dim);
        for (&b, hb) in &cm.components {
            let fb = cm.frequency(b);
            if cm.is_resonant(b, eps_res) {
                if fb.abs() > 1e-9 * cm.drive_frequency {
                    near += 1;
                }
                continue;
            }
            let Some(ha) = cm.components.get(&(t.0 - b.0, t.1 - b.1)) else { continue };
            acc += scale(commutator(ha.as_ref(), hb.as_ref()).as_ref(), c(-0.5 / fb, 0.0));
        }
        second += &acc;
        targets.insert(t, acc);
    }
    if near > 0 {
        log::warn!("{near} near-resonant denominators excluded from the second-order sum");
    }
    Ok(EffectiveGenerator {
        eps_res,
        resonant_set,
        first_order: hermitian_part(first.as_ref()),
        second_order: hermitian_part(second.as_ref()),
        second_order_targets: targets,
    })
}

/// Entries of `op` that change the collective I_z by exactly ±k.
pub fn resonant_block(op: &CMat, n_spins: usize, k: u32) -> CMat {
    let m = total_z_diag(n_spins);
    Mat::from_fn(op.nrows(), op.ncols(), |a, b| {
        if ((m[a] - m[b]).abs() - k as f64).abs() < 1e-9 {
            op[(a, b)]
        } else {
            ZERO
        }
    })
}

/// Operator norm (Hz) of the k-spin-flip part of the effective generator.
pub fn resonant_block_norm(g: &EffectiveGenerator, n_spins: usize, k: u32) -> f64 {
    op_norm(resonant_block(&g.total(), n_spins, k).as_ref())
}

/// Dimensionless kick generator G(t) = Σ_b H_b e^{i2π f_b t} / (i f_b) over
/// non-resonant components; the kick is exp(-i G).
pub fn kick_generator(cm: &BimodalComponents, eps_res: f64, t: f64) -> CMat {
    let mut g = Mat::zeros(cm.dim(), cm.dim());
    for (&b, hb) in &cm.components {
        if cm.is_resonant(b, eps_res) {
            continue;
        }
        let fb = cm.frequency(b);
        g += scale(hb.as_ref(), C64::from_polar(1.0, TWO_PI * fb * t) / c(0.0, fb));
    }
    hermitian_part(g.as_ref())
}

/// Frame change V_to† V_from applied when the electron jumps, at t = 0.
pub fn kick_rotation(from: &BimodalComponents, to: &BimodalComponents, eps_res: f64) -> Result<CMat> {
    if from.n_spins != to.n_spins {
        return invalid("kick manifolds must share the nuclear register");
    }
    let v = |cmp: &BimodalComponents| expm(scale(kick_generator(cmp, eps_res, 0.0).as_ref(), c(0.0, -1.0)).as_ref());
    Ok(v(to).adjoint() * v(from))
}

/// ε with cos ε = ⟨I_z, X I_z X†⟩ / ⟨I_z, I_z⟩ for the jump kick X.
pub fn kick_angle(from: &BimodalComponents, to: &BimodalComponents, eps_res: f64) -> Result<f64> {
    let x = kick_rotation(from, to, eps_res)?;
    let iz = total(from.n_spins, Axis::Z);
    let rotated = &x * &iz * x.adjoint();
    let num = trace((&iz * &rotated).as_ref()).re;
    let den = trace((&iz * &iz).as_ref()).re;
    Ok((num / den).clamp(-1.0, 1.0).acos())
}

/// R_kick = -ln(cos ε) / T1e in s⁻¹.
pub fn rate_kick(eps: f64, t1e: f64) -> Result<f64> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return invalid("kick angle must be finite and nonnegative");
    }
    if !(t1e > 0.0) || !t1e.is_finite() {
        return invalid("T1e must be positive and finite");
    }
    if eps >= 0.5 * PI {
        return Err(Error::InfiniteRate(eps));
    }
    // 0 - x keeps R(0) at +0
    Ok((0.0 - eps.cos().ln()) / t1e)
}

/// Kick rate of a multi-level electron: -Σ_j π_j Σ_{i≠j} w_ij ln cos ε_ij with
/// uniform π. `manifolds` are ordered like the rate matrix (m = S..-S).
pub fn manifold_kick_rate(manifolds: &[BimodalComponents], w: &[Vec<f64>], eps_res: f64) -> Result<f64> {
    let d = manifolds.len();
    if w.len() != d || w.iter().any(|r| r.len() != d) {
        return invalid("rate matrix and manifold count differ");
    }
    let mut r = 0.0;
    for j in 0..d {
        for i in 0..d {
            if i == j || w[i][j] == 0.0 {
                continue;
            }
            let eps = kick_angle(&manifolds[j], &manifolds[i], eps_res)?;
            if eps >= 0.5 * PI {
                return Err(Error::InfiniteRate(eps));
            }
            r -= w[i][j] * eps.cos().ln() / d as f64;
        }
    }
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorentzianLine {
    pub k: u32,
    pub m_s: f64,
    /// Hz
    pub center: f64,
    /// (rad/s)²
    pub amplitude: f64,
}

/// A (1/T1e) / ((3/T1e)² + (2·2π(δω - center))²) in s⁻¹.
pub fn lorentzian_rate(line: &LorentzianLine, detuning: f64, t1e: f64) -> f64 {
    let g = 1.0 / t1e;
    let off = 2.0 * TWO_PI * (detuning - line.center);
    line.amplitude * g / (9.0 * g * g + off * off)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiflipRate {
    pub detuning: f64,
    pub r_kick: f64,
    pub r_2sf: f64,
    pub r_3sf: f64,
    pub total: f64,
}

pub fn rate_multiflip(detuning: f64, lines: &[LorentzianLine], t1e: f64, r_kick: f64) -> MultiflipRate {
    let mut r2 = 0.0;
    let mut r3 = 0.0;
    for l in lines {
        let r = lorentzian_rate(l, detuning, t1e);
        if l.k == 2 {
            r2 += r;
        } else {
            r3 += r;
        }
    }
    MultiflipRate { detuning, r_kick, r_2sf: r2, r_3sf: r3, total: r_kick + r2 + r3 }
}

/// Closed-form rates of a cluster coupled to one electron.
#[derive(Clone, Debug)]
pub struct AnalyticRateModel {
    pub geometry: SpinClusterGeometry,
    pub template: DriveSequence,
    pub t1e: f64,
    pub n_max: i64,
    pub grid_points: usize,
    pub eps_res: f64,
}

impl AnalyticRateModel {
    pub fn new(geometry: SpinClusterGeometry, template: DriveSequence, t1e: f64) -> Result<Self> {
        if geometry.n_electrons() != 1 {
            return invalid("analytic rates need exactly one electron");
        }
        check_size(geometry.n_nuclei())?;
        template.validate()?;
        if !(t1e > 0.0) {
            return invalid("T1e must be positive");
        }
        Ok(AnalyticRateModel {
            geometry,
            template,
            t1e,
            n_max: crate::drive::DEFAULT_N_MAX,
            grid_points: crate::drive::DEFAULT_GRID_POINTS,
            eps_res: DEFAULT_EPS_RES,
        })
    }

    pub fn species(&self) -> ElectronSpecies {
        self.geometry.electron_species[0]
    }

    /// m_s values ordered S..-S.
    pub fn manifolds(&self) -> Vec<f64> {
        SpinMatrices::new(self.species().two_s()).m_values()
    }

    pub fn mean_hyperfine(&self) -> f64 {
        let n = self.geometry.n_nuclei();
        if n == 0 {
            return 0.0;
        }
        self.geometry.hyperfine.iter().map(|r| r[0]).sum::<f64>() / n as f64
    }

    pub fn tables(&self, detuning: f64) -> Result<DriveTables> {
        DriveTables::build(&self.template.with_detuning(detuning), self.n_max, self.grid_points)
    }

    pub fn components(&self, tables: &DriveTables) -> Result<Vec<BimodalComponents>> {
        self.manifolds().iter().map(|&m| decompose(&self.geometry, tables, &[m])).collect()
    }

    pub fn kick_rate(&self, detuning: f64) -> Result<f64> {
        let comps = self.components(&self.tables(detuning)?)?;
        let w = rate_matrix(self.species().two_s(), self.t1e)?;
        manifold_kick_rate(&comps, &w, self.eps_res)
    }

    /// One line per (k, m_s): centers shifted by -m_s⟨h⟩, amplitudes
    /// (2π‖k-flip block‖)² evaluated at the unshifted resonance.
    pub fn lines(&self, ks: &[u32], range: (f64, f64)) -> Result<Vec<LorentzianLine>> {
        let hbar = self.mean_hyperfine();
        let mut out = Vec::new();
        for &k in ks {
            for res in find_resonances(&self.template, k, range, 400)? {
                let tables = self.tables(res.detuning)?;
                for (m, comp) in self.manifolds().into_iter().zip(self.components(&tables)?) {
                    let g = effective_generator(&comp, self.eps_res)?;
                    let norm = resonant_block_norm(&g, comp.n_spins, k);
                    out.push(LorentzianLine {
                        k,
                        m_s: m,
                        center: res.detuning - m * hbar,
                        amplitude: (TWO_PI * norm).powi(2),
                    });
                }
            }
        }
        Ok(out)
    }

    pub fn rate(&self, detuning: f64, lines: &[LorentzianLine]) -> Result<MultiflipRate> {
        Ok(rate_multiflip(detuning, lines, self.t1e, self.kick_rate(detuning)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consts::DIAMOND_A0;
    use crate::linalg::max_abs_diff;
    use crate::spin::register_rotation;
    use crate::wigner::{big_d, euler_from_su2, inverse_euler, small_d, su2_from_euler, su2_mul};

    fn three_spin_geometry(with_electron: bool) -> SpinClusterGeometry {
        let a = DIAMOND_A0 / 4.0;
        let nuclei = vec![[a, a, -3.0 * a], [4.0 * a, 2.0 * a, 2.0 * a], [-2.0 * a, -4.0 * a, 2.0 * a]];
        let (e, s) = if with_electron {
            (vec![[0.2 * 4.0 * a, -0.2 * 4.0 * a, 20.25 * 4.0 * a]], vec![ElectronSpecies::Nv])
        } else {
            (vec![], vec![])
        };
        SpinClusterGeometry::from_positions(nuclei, e, s, [0.0, 0.0, 1.0]).unwrap()
    }

    fn tables(detuning: f64, n_max: i64) -> DriveTables {
        DriveTables::build(&DriveSequence::pulsed_spin_lock(detuning), n_max, 2048).unwrap()
    }

    fn lab_interaction(g: &SpinClusterGeometry, m_s: f64) -> CMat {
        let n = g.n_nuclei();
        let shifts = hyperfine_shifts(g, &vec![m_s; g.n_electrons()]).unwrap();
        dipolar_tensor(g, 0) + hyperfine_tensor(n, &shifts, 0)
    }

    /// W(t)† H W(t) with W = U_drive(t) Q.
    fn conjugated(g: &SpinClusterGeometry, t: &DriveTables, time: f64, m_s: f64) -> CMat {
        let q = su2_from_euler(t.eff.phi_eff, t.eff.theta_eff, 0.0);
        let w = register_rotation(&su2_mul(&t.seq.propagator_at(time), &q), g.n_nuclei());
        w.adjoint() * lab_interaction(g, m_s) * &w
    }

    #[test]
    fn static_hyperfine_vanishes_on_resonance() {
        let g = SpinClusterGeometry::from_positions(
            vec![[0.0; 3]],
            vec![[1e-9, 0.0, 5e-9]],
            vec![ElectronSpecies::P1],
            [0.0, 0.0, 1.0],
        )
        .unwrap();
        let t = tables(0.0, 10);
        let comp = decompose(&g, &t, &[0.5]).unwrap();
        let h = g.hyperfine[0][0].abs();
        let stat = comp.components.get(&(0, 0)).map(|m| max_abs(m.as_ref())).unwrap_or(0.0);
        assert!(stat < 1e-6 * h, "{stat} vs {h}");
        assert!(comp.components.len() > 2);
    }

    #[test]
    fn lone_nucleus_has_no_components() {
        let g = SpinClusterGeometry::from_positions(vec![[0.0; 3]], vec![], vec![], [0.0, 0.0, 1.0]).unwrap();
        let comp = decompose(&g, &tables(1000.0, 5), &[]).unwrap();
        assert!(comp.components.is_empty());
    }

    #[test]
    fn hermiticity_pairing() {
        let g = three_spin_geometry(true);
        let comp = decompose(&g, &tables(1500.0, 6), &[1.0]).unwrap();
        for (&(n, q), h) in &comp.components {
            let partner = &comp.components[&(-n, -q)];
            assert!(max_abs_diff(h.adjoint().to_owned().as_ref(), partner.as_ref()) < 1e-12 * max_abs(h.as_ref()).max(1.0));
        }
    }

    #[test]
    fn frame_algebra_matches_conjugation() {
        // exact Wigner functions of P(t)† instead of the truncated series
        let g = three_spin_geometry(true);
        let t = tables(1800.0, 2);
        let shifts = hyperfine_shifts(&g, &[-1.0]).unwrap();
        for &time in &[0.0, 13e-6, 56e-6, 71.3e-6] {
            let p = su2_mul(&t.seq.propagator_at(time), &t.eff.rotation_at(-time));
            let pinv = inverse_euler(euler_from_su2(&p, None));
            let mut sum: CMat = Mat::zeros(8, 8);
            for (l, ops) in [
                (2i64, (-2..=2).map(|q| dipolar_tensor(&g, q)).collect::<Vec<_>>()),
                (1i64, (-1..=1).map(|q| hyperfine_tensor(3, &shifts, q)).collect()),
            ] {
                for q in -l..=l {
                    let mut coef = C64::new(0.0, 0.0);
                    for m in -l..=l {
                        coef += C64::from_polar(small_d(l, m, q, t.eff.theta_eff), m as f64 * t.eff.phi_eff)
                            * big_d(l, m, 0, pinv);
                    }
                    coef *= C64::from_polar(1.0, TWO_PI * q as f64 * t.eff.omega_eff * time);
                    sum += scale(ops[(q + l) as usize].as_ref(), coef);
                }
            }
            let want = conjugated(&g, &t, time, -1.0);
            assert!(max_abs_diff(sum.as_ref(), want.as_ref()) < 1e-9 * max_abs(want.as_ref()), "t = {time}");
        }
    }

    #[test]
    fn resummed_components_reproduce_frame() {
        let g = three_spin_geometry(false);
        let t = tables(2200.0, 40);
        let comp = decompose(&g, &t, &[]).unwrap();
        for &time in &[17e-6, 40e-6, 80e-6] {
            let want = conjugated(&g, &t, time, 0.0);
            let err = max_abs_diff(comp.resum(time).as_ref(), want.as_ref()) / max_abs(want.as_ref());
            assert!(err < 1e-2, "t = {time}: relative error {err}");
        }
    }

    #[test]
    fn far_detuned_generator_conserves_zeeman() {
        let g = three_spin_geometry(true);
        let t = tables(1000.0, 10);
        let comp = decompose(&g, &t, &[1.0]).unwrap();
        let ratio = comp.omega_eff / comp.drive_frequency;
        for k in 1..=4 {
            let x = k as f64 * ratio;
            assert!((x - x.round()).abs() > 1e-2, "test point sits near a k = {k} resonance");
        }
        let gen = effective_generator(&comp, DEFAULT_EPS_RES).unwrap();
        let iz = total(3, Axis::Z);
        let h = gen.total();
        let comm = max_abs(commutator(h.as_ref(), iz.as_ref()).as_ref());
        assert!(comm < 1e-10 * max_abs(h.as_ref()), "{comm}");
        assert_eq!(gen.resonant_set, vec![(0, 0)]);
    }

    fn k3_center() -> f64 {
        let r = find_resonances(&DriveSequence::pulsed_spin_lock(0.0), 3, (0.0, 4000.0), 400).unwrap();
        r[0].detuning
    }

    #[test]
    fn three_flip_appears_only_at_second_order() {
        let g = three_spin_geometry(false);
        let comp = decompose(&g, &tables(k3_center(), 10), &[]).unwrap();
        let gen = effective_generator(&comp, DEFAULT_EPS_RES).unwrap();
        // |↑↑↑⟩ = 0, |↓↓↓⟩ = 7
        assert_eq!(gen.first_order[(0, 7)], ZERO);
        assert_eq!(gen.first_order[(7, 0)], ZERO);
        let el = gen.second_order[(7, 0)];
        assert!(el.norm() > 1e-3, "{el}");

        // explicit element of -½ Σ_b [H_{t-b}, H_b]/f_b for t = (1, -3), i.e.
        // the component lowering three spins, via intermediate-state sums
        let mut want = C64::new(0.0, 0.0);
        for (&b, hb) in &comp.components {
            if comp.is_resonant(b, DEFAULT_EPS_RES) {
                continue;
            }
            let Some(ha) = comp.components.get(&(1 - b.0, -3 - b.1)) else { continue };
            let fb = comp.frequency(b);
            for m in 0..8 {
                want += (ha[(7, m)] * hb[(m, 0)] - hb[(7, m)] * ha[(m, 0)]) * (-0.5 / fb);
            }
        }
        // hermitization averages (7,0) of target (1,-3) with the conjugate of
        // (0,7) from target (-1,3)
        let partner = gen.second_order_targets[&(-1, 3)][(0, 7)].conj();
        let herm = 0.5 * (want + partner);
        assert!((el - herm).norm() < 1e-10 * el.norm().max(1e-12));
        assert!((want - partner).norm() < 1e-2 * want.norm());
    }

    fn scaled_drive(s: f64, detuning: f64) -> DriveSequence {
        DriveSequence { pulse_width: 56e-6 / s, period: 92e-6 / s, rabi: 4460.0 * s, detuning: detuning * s }
    }

    #[test]
    fn doubling_drive_frequency_halves_second_order_block() {
        let g = three_spin_geometry(false);
        let d0 = k3_center();
        let norm_at = |s: f64| {
            let t = DriveTables::build(&scaled_drive(s, d0), 10, 2048).unwrap();
            let comp = decompose(&g, &t, &[]).unwrap();
            resonant_block_norm(&effective_generator(&comp, DEFAULT_EPS_RES).unwrap(), 3, 3)
        };
        let ratio = norm_at(2.0) / norm_at(1.0);
        assert!((ratio - 0.5).abs() < 1e-6, "{ratio}");
    }

    #[test]
    fn identical_manifolds_give_no_kick() {
        let g = three_spin_geometry(true);
        let comp = decompose(&g, &tables(1500.0, 10), &[1.0]).unwrap();
        assert!(kick_angle(&comp, &comp, DEFAULT_EPS_RES).unwrap() < 1e-7);
    }

    #[test]
    fn kick_angle_is_linear_in_hyperfine_strength() {
        let mut g = three_spin_geometry(true);
        for row in g.dipolar.iter_mut() {
            for d in row.iter_mut() {
                *d = 0.0;
            }
        }
        let t = tables(1500.0, 10);
        let eps_at = |lam: f64| {
            let mut gl = g.clone();
            for row in gl.hyperfine.iter_mut() {
                row[0] *= lam;
            }
            let a = decompose(&gl, &t, &[1.0]).unwrap();
            let b = decompose(&gl, &t, &[0.0]).unwrap();
            kick_angle(&a, &b, DEFAULT_EPS_RES).unwrap()
        };
        let e1 = eps_at(0.01) / 0.01;
        let e2 = eps_at(0.02) / 0.02;
        assert!(e1 > 0.0);
        assert!((e1 / e2 - 1.0).abs() < 1e-2, "{e1} {e2}");
    }

    #[test]
    fn kick_generator_from_tensors_directly() {
        let g = three_spin_geometry(true);
        let t = tables(3100.0, 8);
        let comp = decompose(&g, &t, &[0.5]).unwrap();
        let gen = kick_generator(&comp, DEFAULT_EPS_RES, 0.0);
        let shifts = hyperfine_shifts(&g, &[0.5]).unwrap();
        let mut want: CMat = Mat::zeros(8, 8);
        for n in -8i64..=8 {
            for q in -2i64..=2 {
                let f = n as f64 * t.seq.drive_frequency() + q as f64 * t.eff.omega_eff;
                if f.abs() < DEFAULT_EPS_RES * t.seq.drive_frequency() {
                    continue;
                }
                let mut h = scale(dipolar_tensor(&g, q).as_ref(), t.frame_coefficient(2, q, n));
                if q.abs() <= 1 {
                    h += scale(hyperfine_tensor(3, &shifts, q).as_ref(), t.frame_coefficient(1, q, n));
                }
                want += scale(h.as_ref(), c(0.0, -1.0 / f));
            }
        }
        assert!(max_abs_diff(gen.as_ref(), want.as_ref()) < 1e-12 * max_abs(want.as_ref()));
    }

    #[test]
    fn kick_rate_values() {
        assert_eq!(rate_kick(0.0, 0.05).unwrap(), 0.0);
        let r = rate_kick(PI / 3.0, 0.05).unwrap();
        assert!((r - 20.0 * 2f64.ln()).abs() < 1e-12);
        let e: f64 = 0.05;
        let r = rate_kick(e, 0.05).unwrap();
        assert!((r / (e * e / 0.1) - 1.0).abs() < 1e-2);
        assert!(matches!(rate_kick(PI / 2.0, 0.05), Err(Error::InfiniteRate(_))));
        assert!(rate_kick(-0.1, 0.05).is_err());
    }

    #[test]
    fn spin_half_kick_rate_reduces_to_single_angle() {
        let mut g = three_spin_geometry(true);
        g.electron_species = vec![ElectronSpecies::P1];
        let t = tables(1500.0, 10);
        let up = decompose(&g, &t, &[0.5]).unwrap();
        let dn = decompose(&g, &t, &[-0.5]).unwrap();
        let w = rate_matrix(1, 0.05).unwrap();
        let r = manifold_kick_rate(&[up.clone(), dn.clone()], &w, DEFAULT_EPS_RES).unwrap();
        let eps = kick_angle(&up, &dn, DEFAULT_EPS_RES).unwrap();
        assert!((r - rate_kick(eps, 0.05).unwrap()).abs() < 1e-12 * r.max(1e-30));
    }

    #[test]
    fn lorentzian_peak_and_tails() {
        let line = LorentzianLine { k: 3, m_s: 0.0, center: 2442.0, amplitude: 1.0 };
        let t1e = 0.05;
        assert!((lorentzian_rate(&line, 2442.0, t1e) - t1e / 9.0).abs() < 1e-15);
        let far = rate_multiflip(9000.0, &[line], t1e, 0.3);
        assert!((far.total - 0.3).abs() < 1e-6);
        let none = rate_multiflip(2442.0, &[LorentzianLine { amplitude: 0.0, ..line }], t1e, 0.3);
        assert_eq!(none.total, 0.3);
    }
}
