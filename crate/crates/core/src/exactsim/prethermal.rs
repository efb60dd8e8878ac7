//! Diagonal ensemble of the one-cycle Floquet unitary for a driven dipolar
//! cluster, starting from ρ(0) ∝ I_x.
//!
//! The Hamiltonians are real in the computational basis, so the symmetrized
//! one-cycle unitary U = V U_p V (V the half-delay propagator) is complex
//! symmetric. Its real and imaginary parts commute and share a real
//! orthonormal eigenbasis, which a single real symmetric eigensolve of
//! cos χ Re U - sin χ Im U finds. Accidentally or genuinely degenerate
//! clusters are refined with a small complex eigensolve.

use crate::drive::{compose_one_cycle, DriveSequence};
use crate::error::{invalid, Error, Result};
use crate::lattice::SpinClusterGeometry;
use crate::linalg::{c, CMat, RMat, C64, ZERO};
use faer::Mat;
use std::f64::consts::PI;

pub const MAX_SPINS: usize = 12;
/// The full ρ_pre is only assembled up to this size.
pub const FULL_STATE_SPINS: usize = 8;
const CHI: f64 = 0.739_085_133_2;
const CLUSTER_GAP: f64 = 1e-7;
const PHASE_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct PrethermalState {
    pub n_spins: usize,
    /// Diagonal-ensemble expectations normalized by Tr[I_x²].
    pub ix: f64,
    pub iy: f64,
    pub iz: f64,
    pub n_eff: f64,
    pub m_pre: f64,
    /// ρ_pre in the computational basis, same normalization as ρ(0) = I_x.
    pub rho: Option<CMat>,
    /// Number of Floquet eigenspaces with dimension > 1.
    pub degenerate_blocks: usize,
    pub largest_block: usize,
}

/// Basis permutation grouping states by number of down spins.
struct Sectors {
    n: usize,
    /// permuted index -> computational index
    perm: Vec<usize>,
    /// sector k spans starts[k]..starts[k+1]
    starts: Vec<usize>,
}

impl Sectors {
    fn new(n: usize) -> Self {
        let mut perm: Vec<usize> = (0..1usize << n).collect();
        perm.sort_by_key(|&b| (b.count_ones(), b));
        let mut starts = vec![0usize; n + 2];
        for &b in &perm {
            starts[b.count_ones() as usize + 1] += 1;
        }
        for k in 1..starts.len() {
            starts[k] += starts[k - 1];
        }
        Sectors { n, perm, starts }
    }

    fn dim(&self) -> usize {
        self.perm.len()
    }

    fn blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..=self.n).map(|k| (self.starts[k], self.starts[k + 1] - self.starts[k]))
    }

    fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.dim()];
        for (p, &b) in self.perm.iter().enumerate() {
            inv[b] = p;
        }
        inv
    }
}

/// Real operators in the permuted basis.
struct RealOps {
    /// δω I_z + Σ d_ij T20_ij, Hz
    delay: RMat,
    /// I_x
    ix: RMat,
    /// I_y = -i K
    k: RMat,
    /// diagonal of I_z
    iz: Vec<f64>,
}

fn real_ops(geometry: &SpinClusterGeometry, detuning: f64, sec: &Sectors) -> RealOps {
    let n = sec.n;
    let d = sec.dim();
    let inv = sec.inverse();
    let m = |b: usize, k: usize| if (b >> (n - 1 - k)) & 1 == 0 { 0.5 } else { -0.5 };
    let mut delay = Mat::zeros(d, d);
    let mut ix = Mat::zeros(d, d);
    let mut kk = Mat::zeros(d, d);
    let mut iz = vec![0.0; d];
    for (p, &b) in sec.perm.iter().enumerate() {
        let mz: f64 = (0..n).map(|k| m(b, k)).sum();
        iz[p] = mz;
        let mut diag = detuning * mz;
        for i in 0..n {
            for j in (i + 1)..n {
                let dij = geometry.dipolar[i][j];
                if dij == 0.0 {
                    continue;
                }
                diag += 2.0 * dij * m(b, i) * m(b, j);
                if m(b, i) != m(b, j) {
                    let bp = b ^ (1 << (n - 1 - i)) ^ (1 << (n - 1 - j));
                    delay[(inv[bp], p)] = -0.5 * dij;
                }
            }
        }
        delay[(p, p)] = diag;
        for k in 0..n {
            let mask = 1 << (n - 1 - k);
            let q = inv[b ^ mask];
            ix[(q, p)] = 0.5;
            // I+ raises a down spin: K = (I+ - I-)/2
            kk[(q, p)] = if b & mask != 0 { 0.5 } else { -0.5 };
        }
    }
    RealOps { delay, ix, k: kk, iz }
}

fn real_eigh(a: &RMat) -> Result<(Vec<f64>, RMat)> {
    let e = a
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Numerical(format!("symmetric eigensolver failed: {e:?}")))?;
    Ok((e.S().column_vector().iter().copied().collect(), e.U().to_owned()))
}

/// Block-diagonal complex matrix aligned with the sectors.
struct BlockDiag {
    blocks: Vec<(usize, CMat)>,
    dim: usize,
}

impl BlockDiag {
    /// self · x
    fn left(&self, x: &CMat) -> CMat {
        let mut out = Mat::zeros(self.dim, x.ncols());
        for (s, b) in &self.blocks {
            let m = b.nrows();
            let prod = b * x.submatrix(*s, 0, m, x.ncols());
            out.submatrix_mut(*s, 0, m, x.ncols()).copy_from(&prod);
        }
        out
    }

    /// x · self
    fn right(&self, x: &CMat) -> CMat {
        let mut out = Mat::zeros(x.nrows(), self.dim);
        for (s, b) in &self.blocks {
            let m = b.nrows();
            let prod = x.submatrix(0, *s, x.nrows(), m) * b;
            out.submatrix_mut(0, *s, x.nrows(), m).copy_from(&prod);
        }
        out
    }

    fn adjoint(&self) -> BlockDiag {
        BlockDiag { blocks: self.blocks.iter().map(|(s, b)| (*s, b.adjoint().to_owned())).collect(), dim: self.dim }
    }
}

/// exp(-i 2π h t) for real symmetric h as Q diag(e^{-i2π e t}) Qᵀ.
fn real_propagator(evals: &[f64], q: &RMat, t: f64) -> CMat {
    let d = q.nrows();
    let (cs, sn): (Vec<f64>, Vec<f64>) = evals
        .iter()
        .map(|e| {
            let (s, c) = (2.0 * PI * e * t).sin_cos();
            (c, -s)
        })
        .unzip();
    let qc = Mat::from_fn(d, d, |i, j| q[(i, j)] * cs[j]);
    let qs = Mat::from_fn(d, d, |i, j| q[(i, j)] * sn[j]);
    let re = &qc * q.transpose();
    let im = &qs * q.transpose();
    Mat::from_fn(d, d, |i, j| c(re[(i, j)], im[(i, j)]))
}

fn complexify(a: &RMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c(a[(i, j)], 0.0))
}

/// Orthonormalize columns by modified Gram-Schmidt.
fn orthonormalize(mut a: CMat) -> Result<CMat> {
    for j in 0..a.ncols() {
        for k in 0..j {
            let mut ip = ZERO;
            for i in 0..a.nrows() {
                ip += a[(i, k)].conj() * a[(i, j)];
            }
            for i in 0..a.nrows() {
                let v = a[(i, k)];
                a[(i, j)] -= ip * v;
            }
        }
        let nrm = (0..a.nrows()).map(|i| a[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if nrm < 1e-10 {
            return Err(Error::Numerical("degenerate Floquet eigenvectors are linearly dependent".into()));
        }
        for i in 0..a.nrows() {
            a[(i, j)] /= nrm;
        }
    }
    Ok(a)
}

/// Group eigenvalues on the unit circle whose chord distance is below tol.
fn group_phases(vals: &[C64], tol: f64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[a].arg().partial_cmp(&vals[b].arg()).unwrap());
    let mut groups: Vec<Vec<usize>> = vec![];
    for &k in &idx {
        match groups.last_mut() {
            Some(g) if (vals[*g.last().unwrap()] - vals[k]).norm() < tol => g.push(k),
            _ => groups.push(vec![k]),
        }
    }
    // the arg cut at ±π may split a group
    if groups.len() > 1 {
        let first = groups[0][0];
        let last = *groups.last().unwrap().last().unwrap();
        if (vals[first] - vals[last]).norm() < tol {
            let tail = groups.pop().unwrap();
            groups[0].extend(tail);
        }
    }
    groups
}

/// Columns of a complex eigenbasis within one near-degenerate cluster.
fn refine_cluster(u_sym: &CMat, o_g: &CMat) -> Result<Vec<CMat>> {
    let small = o_g.transpose() * (u_sym * o_g);
    let e = small
        .eigen()
        .map_err(|e| Error::Numerical(format!("cluster eigensolver failed: {e:?}")))?;
    let vals: Vec<C64> = e.S().column_vector().iter().copied().collect();
    let vecs = e.U();
    let mut out = vec![];
    for g in group_phases(&vals, PHASE_TOL) {
        let r = Mat::from_fn(small.nrows(), g.len(), |i, j| vecs[(i, g[j])]);
        out.push(o_g * orthonormalize(r)?);
    }
    Ok(out)
}

pub fn prethermal_state(geometry: &SpinClusterGeometry, drive: &DriveSequence) -> Result<PrethermalState> {
    drive.validate()?;
    let n = geometry.n_nuclei();
    if n == 0 {
        return Err(Error::EmptyConfiguration);
    }
    if geometry.n_electrons() != 0 {
        return invalid("the prethermal cluster simulator takes an electron-free geometry");
    }
    if n > MAX_SPINS {
        return Err(Error::DimensionCap {
            dim: 1 << n,
            cap: 1 << MAX_SPINS,
            detail: format!("{n} spins exceed the {MAX_SPINS}-spin diagonal-ensemble limit"),
        });
    }
    let sec = Sectors::new(n);
    let d = sec.dim();
    let ops = real_ops(geometry, drive.detuning, &sec);
    let tau = drive.pulse_width;
    let half_delay = 0.5 * (drive.period - drive.pulse_width);

    let mut v_blocks = vec![];
    for (s, m) in sec.blocks() {
        let blk = ops.delay.submatrix(s, s, m, m).to_owned();
        let (e, q) = real_eigh(&blk)?;
        v_blocks.push((s, real_propagator(&e, &q, half_delay)));
    }
    let v = BlockDiag { blocks: v_blocks, dim: d };

    let pulse = &ops.delay + &ops.ix * faer::Scale(drive.rabi);
    let (ep, qp) = real_eigh(&pulse)?;
    let u_p = real_propagator(&ep, &qp, tau);
    let u_sym = v.right(&v.left(&u_p));

    let (cx, sx) = (CHI.cos(), CHI.sin());
    let s_mat = Mat::from_fn(d, d, |i, j| {
        let a = 0.5 * (u_sym[(i, j)] + u_sym[(j, i)]);
        cx * a.re - sx * a.im
    });
    let (s_vals, o) = real_eigh(&s_mat)?;

    // clusters of (near-)equal S eigenvalues
    let mut clusters: Vec<(usize, usize)> = vec![];
    let mut start = 0;
    for k in 1..=d {
        if k == d || s_vals[k] - s_vals[k - 1] >= CLUSTER_GAP {
            clusters.push((start, k - start));
            start = k;
        }
    }

    let vd = v.adjoint();
    let y_of = |a: &CMat| vd.left(&v.right(a));
    let y_ix = y_of(&complexify(&ops.ix));
    let y_iy = y_of(&Mat::from_fn(d, d, |i, j| c(0.0, -ops.k[(i, j)])));
    let re = |y: &CMat| Mat::from_fn(d, d, |i, j| y[(i, j)].re);
    let t_ix: RMat = re(&y_ix) * &o;
    let t_iy: RMat = re(&y_iy) * &o;
    let diag_of = |t: &RMat, k: usize| (0..d).map(|i| o[(i, k)] * t[(i, k)]).sum::<f64>();

    let norm = d as f64 * n as f64 / 4.0;
    let keep_state = n <= FULL_STATE_SPINS;
    let mut rho_frame: Option<CMat> = if keep_state { Some(Mat::zeros(d, d)) } else { None };
    let (mut sx_acc, mut sy_acc, mut sz_acc) = (0.0, 0.0, 0.0);
    let mut degenerate_blocks = 0;
    let mut largest_block = 1;
    for &(s, m) in &clusters {
        if m == 1 {
            let px = diag_of(&t_ix, s);
            let py = diag_of(&t_iy, s);
            let pz: f64 = (0..d).map(|i| o[(i, s)] * o[(i, s)] * ops.iz[i]).sum();
            sx_acc += px * px;
            sy_acc += py * px;
            sz_acc += pz * px;
            if let Some(r) = rho_frame.as_mut() {
                for i in 0..d {
                    let oi = o[(i, s)] * px;
                    for j in 0..d {
                        r[(i, j)] += c(oi * o[(j, s)], 0.0);
                    }
                }
            }
            continue;
        }
        let o_g = complexify(&o.submatrix(0, s, d, m).to_owned());
        for w in refine_cluster(&u_sym, &o_g)? {
            let r = w.ncols();
            if r > 1 {
                degenerate_blocks += 1;
                largest_block = largest_block.max(r);
            }
            let wa = w.adjoint();
            let mx = &wa * (&y_ix * &w);
            let my = &wa * (&y_iy * &w);
            let mz = &wa * Mat::from_fn(d, r, |i, j| w[(i, j)] * ops.iz[i]);
            let tr = |a: &CMat| (0..r).map(|k| (0..r).map(|l| a[(k, l)] * mx[(l, k)]).sum::<C64>()).sum::<C64>().re;
            sx_acc += tr(&mx);
            sy_acc += tr(&my);
            sz_acc += tr(&mz);
            if let Some(rf) = rho_frame.as_mut() {
                *rf += &w * (&mx * &wa);
            }
        }
    }
    let (ix, iy, iz) = (sx_acc / norm, sy_acc / norm, sz_acc / norm);
    let axis = compose_one_cycle(drive)?.axis;
    let rho = rho_frame.map(|rf| {
        let full = v.left(&v.adjoint().right(&rf));
        let inv = sec.inverse();
        Mat::from_fn(d, d, |i, j| full[(inv[i], inv[j])])
    });
    Ok(PrethermalState {
        n_spins: n,
        ix,
        iy,
        iz,
        n_eff: axis[0] * ix + axis[1] * iy + axis[2] * iz,
        m_pre: ix.hypot(iy),
        rho,
        degenerate_blocks,
        largest_block,
    })
}
