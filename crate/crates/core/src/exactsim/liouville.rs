//! Liouville-space toy model: driven dipolar nuclei, one electron with
//! secular hyperfine coupling, and Lindblad relaxation of the electron.
//!
//! Vectorization is column stacking, vec(A X B) = (Bᵀ ⊗ A) vec(X). The full
//! Hilbert space is electron ⊗ nuclei.

use crate::analysis::{fit_product_decay, DecayFit};
use crate::drive::{compose_one_cycle, DriveSequence};
use crate::electron::{lindblad_rate, rate_matrix};
use crate::error::{invalid, Error, Result};
use crate::lattice::SpinClusterGeometry;
use crate::linalg::{c, expm, identity, kron, scale, trace, CMat, C64, ZERO};
use crate::spin::{site_op, total, Axis, SpinMatrices, SZ};
use faer::Mat;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const TWO_PI: f64 = 2.0 * PI;

pub const DEFAULT_DIM_CAP: usize = 64;
pub const DEFAULT_SAMPLES: usize = 200;
/// Samples before this time are treated as the prethermalization transient.
pub const DEFAULT_TRANSIENT: f64 = 20e-3;
/// Adaptive horizon stops once the signal has fallen by this many e-folds.
pub const TARGET_EFOLDS: f64 = 4.0;
pub const MAX_PERIODS_LOG2: u32 = 27;

#[derive(Clone, Debug)]
pub struct ToyModelSpec {
    /// Nuclei plus exactly one electron.
    pub geometry: SpinClusterGeometry,
    pub drive: DriveSequence,
    /// s
    pub t1e: f64,
    /// γ_L in s⁻¹; `None` derives it from T1e.
    pub lindblad_rate: Option<f64>,
    pub dim_cap: usize,
    /// Fixed total time in s; `None` picks it adaptively.
    pub t_max: Option<f64>,
    pub samples: usize,
    /// s
    pub transient: f64,
}

impl ToyModelSpec {
    pub fn new(geometry: SpinClusterGeometry, drive: DriveSequence, t1e: f64) -> Result<Self> {
        let s = ToyModelSpec {
            geometry,
            drive,
            t1e,
            lindblad_rate: None,
            dim_cap: DEFAULT_DIM_CAP,
            t_max: None,
            samples: DEFAULT_SAMPLES,
            transient: DEFAULT_TRANSIENT,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.geometry.n_electrons() != 1 {
            return invalid(format!("toy model needs exactly one electron, got {}", self.geometry.n_electrons()));
        }
        if self.geometry.n_nuclei() == 0 {
            return Err(Error::EmptyConfiguration);
        }
        self.drive.validate()?;
        if !(self.t1e > 0.0) || !self.t1e.is_finite() {
            return invalid("T1e must be positive and finite");
        }
        if let Some(g) = self.lindblad_rate {
            if !(g >= 0.0) || !g.is_finite() {
                return invalid("Lindblad rate must be finite and nonnegative");
            }
        }
        if self.samples < 8 {
            return invalid("need at least 8 stroboscopic samples");
        }
        if !(self.transient >= 0.0) {
            return invalid("transient must be nonnegative");
        }
        let dim = self.hilbert_dim();
        if dim > self.dim_cap {
            return Err(Error::DimensionCap {
                dim,
                cap: self.dim_cap,
                detail: format!(
                    "{} nuclei x electron spin {}/2 ({} Liouville entries per m_s block)",
                    self.geometry.n_nuclei(),
                    self.two_s(),
                    self.nuclear_dim().pow(2)
                ),
            });
        }
        Ok(())
    }

    pub fn two_s(&self) -> u32 {
        self.geometry.electron_species[0].two_s()
    }

    pub fn levels(&self) -> usize {
        self.two_s() as usize + 1
    }

    pub fn nuclear_dim(&self) -> usize {
        1 << self.geometry.n_nuclei()
    }

    pub fn hilbert_dim(&self) -> usize {
        self.levels() * self.nuclear_dim()
    }

    pub fn gamma(&self) -> Result<f64> {
        match self.lindblad_rate {
            Some(g) => Ok(g),
            None => lindblad_rate(self.two_s(), self.t1e),
        }
    }

    /// Electron population rate matrix implied by γ_L.
    pub fn rate_matrix(&self) -> Result<Vec<Vec<f64>>> {
        let g = self.gamma()?;
        let unit = rate_matrix(self.two_s(), 1.0)?;
        let unit_gamma = lindblad_rate(self.two_s(), 1.0)?;
        Ok(unit.iter().map(|r| r.iter().map(|w| w * g / unit_gamma).collect()).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    Pulse,
    Delay,
}

impl Segment {
    pub fn duration(self, d: &DriveSequence) -> f64 {
        match self {
            Segment::Pulse => d.pulse_width,
            Segment::Delay => d.period - d.pulse_width,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SuperOperator {
    pub hilbert_dim: usize,
    /// Electron-population-resolved form: one nuclear Liouville block per m_s.
    pub resolved: bool,
    pub levels: usize,
    /// s⁻¹
    pub matrix: CMat,
}

/// Nuclear Hamiltonian (Hz) for one segment and electron projection m_s.
pub fn nuclear_hamiltonian(geometry: &SpinClusterGeometry, drive: &DriveSequence, seg: Segment, m_s: f64) -> CMat {
    let n = geometry.n_nuclei();
    let mut h = total(n, Axis::Z) * faer::Scale(c(drive.detuning, 0.0));
    if seg == Segment::Pulse {
        h += total(n, Axis::X) * faer::Scale(c(drive.rabi, 0.0));
    }
    h += crate::bimodal::dipolar_tensor(geometry, 0);
    if m_s != 0.0 {
        h += hyperfine_z(geometry) * faer::Scale(c(m_s, 0.0));
    }
    h
}

/// Σ_i h_i I_z^i for the first electron.
fn hyperfine_z(geometry: &SpinClusterGeometry) -> CMat {
    let n = geometry.n_nuclei();
    let mut out = Mat::zeros(1 << n, 1 << n);
    for i in 0..n {
        let h = geometry.hyperfine[i].first().copied().unwrap_or(0.0);
        out += site_op(n, i, &SZ) * faer::Scale(c(h, 0.0));
    }
    out
}

/// -i 2π (1 ⊗ H - Hᵀ ⊗ 1) for H in Hz.
pub fn commutator_superop(h: &CMat) -> CMat {
    let d = h.nrows();
    let id = identity(d);
    let ht = h.transpose().to_owned();
    let l = kron(id.as_ref(), h.as_ref()) - kron(ht.as_ref(), id.as_ref());
    scale(l.as_ref(), c(0.0, -TWO_PI))
}

/// γ (L̄ ⊗ L - ½ 1 ⊗ L†L - ½ (L†L)ᵀ ⊗ 1).
pub fn dissipator_superop(l: &CMat, gamma: f64) -> CMat {
    let d = l.nrows();
    let id = identity(d);
    let lbar = Mat::from_fn(d, d, |i, j| l[(i, j)].conj());
    let ldl = l.adjoint() * l;
    let ldl_t = ldl.transpose().to_owned();
    let out = kron(lbar.as_ref(), l.as_ref())
        - kron(id.as_ref(), ldl.as_ref()) * faer::Scale(c(0.5, 0.0))
        - kron(ldl_t.as_ref(), id.as_ref()) * faer::Scale(c(0.5, 0.0));
    scale(out.as_ref(), c(gamma, 0.0))
}

pub fn vectorize(x: &CMat) -> Vec<C64> {
    let (r, k) = (x.nrows(), x.ncols());
    (0..r * k).map(|idx| x[(idx % r, idx / r)]).collect()
}

pub fn unvectorize(v: &[C64], d: usize) -> CMat {
    Mat::from_fn(d, d, |i, j| v[j * d + i])
}

pub fn build_liouvillian(spec: &ToyModelSpec, seg: Segment, resolved: bool) -> Result<SuperOperator> {
    spec.validate()?;
    let gamma = spec.gamma()?;
    let levels = spec.levels();
    let nd = spec.nuclear_dim();
    let sm = SpinMatrices::new(spec.two_s());
    let m_values = sm.m_values();
    if resolved {
        let block = nd * nd;
        let w = spec.rate_matrix()?;
        let mut out: CMat = Mat::zeros(levels * block, levels * block);
        for (a, &m) in m_values.iter().enumerate() {
            let l = commutator_superop(&nuclear_hamiltonian(&spec.geometry, &spec.drive, seg, m));
            out.submatrix_mut(a * block, a * block, block, block).copy_from(&l);
        }
        for a in 0..levels {
            for b in 0..levels {
                if w[a][b] != 0.0 {
                    for k in 0..block {
                        out[(a * block + k, b * block + k)] += c(w[a][b], 0.0);
                    }
                }
            }
        }
        return Ok(SuperOperator { hilbert_dim: levels * nd, resolved, levels, matrix: out });
    }
    let h0 = nuclear_hamiltonian(&spec.geometry, &spec.drive, seg, 0.0);
    let id_e = identity(levels);
    let id_n = identity(nd);
    let h = kron(id_e.as_ref(), h0.as_ref()) + kron(sm.sz.as_ref(), hyperfine_z(&spec.geometry).as_ref());
    let mut out = commutator_superop(&h);
    if gamma > 0.0 {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let ops = [sm.sz.clone(), scale(sm.sp.as_ref(), c(r, 0.0)), scale(sm.sm.as_ref(), c(r, 0.0))];
        for op in &ops {
            out += dissipator_superop(&kron(op.as_ref(), id_n.as_ref()), gamma);
        }
    }
    Ok(SuperOperator { hilbert_dim: levels * nd, resolved, levels, matrix: out })
}

/// exp(L_delay (T - τ_p)) exp(L_pulse τ_p).
pub fn one_period_channel(spec: &ToyModelSpec, resolved: bool) -> Result<CMat> {
    let mut prop = None;
    for seg in [Segment::Pulse, Segment::Delay] {
        let dt = seg.duration(&spec.drive);
        if dt <= 0.0 {
            continue;
        }
        let l = build_liouvillian(spec, seg, resolved)?;
        let e = expm(scale(l.matrix.as_ref(), c(dt, 0.0)).as_ref());
        prop = Some(match prop {
            None => e,
            Some(p) => &e * &p,
        });
    }
    let p = prop.ok_or_else(|| Error::Numerical("empty drive period".into()))?;
    check_finite(&p, "one-period channel")?;
    Ok(p)
}

fn check_finite(m: &CMat, what: &str) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::Numerical(format!("{what} has a non-finite entry at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Projection of the full generator onto electron populations:
/// w_ij = Tr[(|i⟩⟨i| ⊗ 1) L(|j⟩⟨j| ⊗ 1/D)].
pub fn population_rate_matrix(spec: &ToyModelSpec) -> Result<Vec<Vec<f64>>> {
    let l = build_liouvillian(spec, Segment::Delay, false)?;
    let levels = spec.levels();
    let nd = spec.nuclear_dim();
    let dim = levels * nd;
    let mut w = vec![vec![0.0; levels]; levels];
    for j in 0..levels {
        let rho = Mat::from_fn(dim, dim, |a, b| {
            if a == b && a / nd == j {
                c(1.0 / nd as f64, 0.0)
            } else {
                ZERO
            }
        });
        let out = apply(&l.matrix, &vectorize(&rho));
        let out = unvectorize(&out, dim);
        for (i, wi) in w.iter_mut().enumerate() {
            wi[j] = (0..nd).map(|k| out[(i * nd + k, i * nd + k)].re).sum();
        }
    }
    Ok(w)
}

pub fn apply(m: &CMat, v: &[C64]) -> Vec<C64> {
    let n = m.nrows();
    let mut out = vec![ZERO; n];
    for j in 0..m.ncols() {
        let x = v[j];
        if x == ZERO {
            continue;
        }
        let col = m.col(j);
        for i in 0..n {
            out[i] += col[i] * x;
        }
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MagnetizationTrace {
    /// s
    pub times: Vec<f64>,
    pub periods: Vec<u64>,
    pub ix: Vec<f64>,
    pub iy: Vec<f64>,
    pub iz: Vec<f64>,
    /// ⟨n̂_eff · I⟩
    pub n_eff: Vec<f64>,
    pub m_pre: Vec<f64>,
    pub axis: [f64; 3],
    /// The adaptive horizon hit its cap before the signal decayed.
    pub horizon_capped: bool,
}

/// Readout functionals of the resolved state vector, normalized by Tr[Ix²].
struct Readout {
    ops: [Vec<C64>; 3],
    norm: f64,
    levels: usize,
    block: usize,
}

impl Readout {
    fn new(n: usize, levels: usize) -> Self {
        let d = 1usize << n;
        let mk = |a: Axis| vectorize(&total(n, a).transpose().to_owned());
        let ix = total(n, Axis::X);
        let norm = trace((&ix * &ix).as_ref()).re;
        Readout { ops: [mk(Axis::X), mk(Axis::Y), mk(Axis::Z)], norm, levels, block: d * d }
    }

    fn read(&self, v: &[C64]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (k, op) in self.ops.iter().enumerate() {
            let mut s = ZERO;
            for a in 0..self.levels {
                let blk = &v[a * self.block..(a + 1) * self.block];
                for (x, y) in op.iter().zip(blk) {
                    s += x * y;
                }
            }
            out[k] = s.re / self.norm;
        }
        out
    }
}

/// I_x on the nuclei with the electron maximally mixed.
fn initial_state(n: usize, levels: usize) -> Vec<C64> {
    let ix = vectorize(&total(n, Axis::X));
    let mut v = Vec::with_capacity(levels * ix.len());
    for _ in 0..levels {
        v.extend(ix.iter().map(|z| z / levels as f64));
    }
    v
}

/// Powers Φ^(2^j), grown on demand.
struct PowerCache {
    squares: Vec<CMat>,
}

impl PowerCache {
    fn new(phi: CMat) -> Self {
        PowerCache { squares: vec![phi] }
    }

    fn square(&mut self, j: usize) -> &CMat {
        while self.squares.len() <= j {
            let last = self.squares.last().unwrap();
            let next = last * last;
            self.squares.push(next);
        }
        &self.squares[j]
    }

    fn advance(&mut self, v: &[C64], mut k: u64) -> Vec<C64> {
        let mut out = v.to_vec();
        let mut j = 0;
        while k > 0 {
            if k & 1 == 1 {
                out = apply(self.square(j), &out);
            }
            k >>= 1;
            j += 1;
        }
        out
    }
}

pub fn propagate_stroboscopic(spec: &ToyModelSpec) -> Result<MagnetizationTrace> {
    spec.validate()?;
    let n = spec.geometry.n_nuclei();
    let levels = spec.levels();
    let period = spec.drive.period;
    let axis = compose_one_cycle(&spec.drive)?.axis;
    let phi = one_period_channel(spec, true)?;
    let readout = Readout::new(n, levels);
    let signal = |r: [f64; 3]| axis[0] * r[0] + axis[1] * r[1] + axis[2] * r[2];
    let mut cache = PowerCache::new(phi);
    let v0 = initial_state(n, levels);

    let k_early = (spec.transient / period).ceil() as u64;
    let mut horizon_capped = false;
    let k_end = match spec.t_max {
        Some(t) => {
            if !(t > 0.0) {
                return invalid("t_max must be positive");
            }
            ((t / period).round() as u64).max(k_early + spec.samples as u64)
        }
        None => {
            let v_early = cache.advance(&v0, k_early);
            let s0 = signal(readout.read(&v_early)).abs();
            let floor = s0 * (-TARGET_EFOLDS).exp();
            let mut j = 64 - (k_early.max(1)).leading_zeros();
            loop {
                let v = apply(cache.square(j as usize), &v0);
                if signal(readout.read(&v)).abs() <= floor {
                    break 1u64 << j;
                }
                if j >= MAX_PERIODS_LOG2 {
                    horizon_capped = true;
                    break 1u64 << j;
                }
                j += 1;
            }
        }
    };

    let mut periods: Vec<u64> = (0..=k_early).collect();
    let stride = ((k_end.saturating_sub(k_early)) / spec.samples as u64).max(1);
    let mut k = k_early + stride;
    while k <= k_end {
        periods.push(k);
        k += stride;
    }

    let mut trace = MagnetizationTrace {
        times: Vec::with_capacity(periods.len()),
        periods: Vec::with_capacity(periods.len()),
        ix: vec![],
        iy: vec![],
        iz: vec![],
        n_eff: vec![],
        m_pre: vec![],
        axis,
        horizon_capped,
    };
    let mut v = v0;
    let mut at = 0u64;
    for &p in &periods {
        v = cache.advance(&v, p - at);
        at = p;
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical(format!("state became non-finite after {p} periods")));
        }
        let r = readout.read(&v);
        trace.times.push(p as f64 * period);
        trace.periods.push(p);
        trace.ix.push(r[0]);
        trace.iy.push(r[1]);
        trace.iz.push(r[2]);
        trace.n_eff.push(signal(r));
        trace.m_pre.push(r[0].hypot(r[1]));
    }
    Ok(trace)
}

/// Product-law fit of ⟨n̂_eff·I⟩ after the transient, normalized to its mean
/// over the second half of the transient window.
pub fn extract_heating_rate(trace: &MagnetizationTrace, transient: f64) -> Result<DecayFit> {
    let window: Vec<f64> = trace
        .times
        .iter()
        .zip(&trace.n_eff)
        .filter(|(t, _)| **t >= 0.5 * transient && **t <= transient)
        .map(|(_, v)| *v)
        .collect();
    let first_after = trace.times.iter().position(|t| *t >= transient);
    let plateau = if window.is_empty() {
        first_after.map(|i| trace.n_eff[i]).unwrap_or(0.0)
    } else {
        window.iter().sum::<f64>() / window.len() as f64
    };
    if !(plateau.abs() > 1e-12) {
        return Err(Error::Undefined("prethermal plateau vanishes; no decay to fit".into()));
    }
    let (t, y): (Vec<f64>, Vec<f64>) = trace
        .times
        .iter()
        .zip(&trace.n_eff)
        .filter(|(t, _)| **t >= transient)
        .map(|(t, v)| (*t, v / plateau))
        .unzip();
    let mut fit = fit_product_decay(&t, &y)?;
    if trace.horizon_capped {
        fit.insufficient_span = true;
    }
    Ok(fit)
}
