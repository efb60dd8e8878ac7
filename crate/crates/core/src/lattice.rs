//! Diamond-lattice spin configurations and dipolar/hyperfine couplings.
//!
//! Lengths are metres internally, couplings are cyclic frequencies (Hz).
//! The JSON export uses Å for positions.

use crate::consts::{gamma_13c, gamma_e, ANGSTROM, DIAMOND_A0, HBAR, MU0_OVER_4PI};
use crate::error::{invalid, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Fractional coordinates of the eight diamond-cubic sites in a conventional cell.
pub const DIAMOND_BASIS: [[f64; 3]; 8] = [
    [0.0, 0.0, 0.0],
    [0.0, 0.5, 0.5],
    [0.5, 0.0, 0.5],
    [0.5, 0.5, 0.0],
    [0.25, 0.25, 0.25],
    [0.25, 0.75, 0.75],
    [0.75, 0.25, 0.75],
    [0.75, 0.75, 0.25],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ElectronSpecies {
    /// Spin-1 NV centre.
    Nv,
    /// Spin-1/2 substitutional nitrogen.
    #[default]
    P1,
}

impl ElectronSpecies {
    pub fn two_s(self) -> u32 {
        match self {
            ElectronSpecies::Nv => 2,
            ElectronSpecies::P1 => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    /// m
    pub lattice_constant: f64,
    /// m; sites with every coordinate in [-h, h) are enumerated.
    pub box_halfwidth: f64,
    pub carbon_occupancy: f64,
    /// electrons per lattice site, in ppm
    pub electron_density_ppm: f64,
    /// m
    pub barrier_radius: f64,
    pub seed: u64,
    #[serde(default)]
    pub electron_species: ElectronSpecies,
    #[serde(default = "default_field_axis")]
    pub field_axis: [f64; 3],
}

fn default_field_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig {
            lattice_constant: DIAMOND_A0,
            box_halfwidth: 5e-9,
            carbon_occupancy: 0.011,
            electron_density_ppm: 0.0,
            barrier_radius: 16.0 * ANGSTROM,
            seed: 0,
            electron_species: ElectronSpecies::P1,
            field_axis: default_field_axis(),
        }
    }
}

impl LatticeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.carbon_occupancy) {
            return invalid(format!("carbon_occupancy {} outside [0, 1]", self.carbon_occupancy));
        }
        if !(self.electron_density_ppm >= 0.0) {
            return invalid("electron_density_ppm must be >= 0");
        }
        if !(self.barrier_radius >= 0.0) {
            return invalid("barrier_radius must be >= 0");
        }
        if !(self.lattice_constant > 0.0) {
            return invalid("lattice_constant must be > 0");
        }
        if !(self.box_halfwidth > self.lattice_constant) {
            return invalid("box_halfwidth must exceed the lattice constant");
        }
        normalize(self.field_axis)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinClusterGeometry {
    pub nuclear_positions: Vec<[f64; 3]>,
    pub electron_positions: Vec<[f64; 3]>,
    pub electron_species: Vec<ElectronSpecies>,
    pub field_axis: [f64; 3],
    /// d_ij in Hz, n x n, zero diagonal.
    pub dipolar: Vec<Vec<f64>>,
    /// h_iμ in Hz, n_nuclei x n_electrons.
    pub hyperfine: Vec<Vec<f64>>,
}

fn normalize(v: [f64; 3]) -> Result<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return invalid("field axis must be a nonzero finite vector");
    }
    Ok([v[0] / n, v[1] / n, v[2] / n])
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Angular factor and distance shared by both coupling types.
fn geometry_factor(ri: [f64; 3], rj: [f64; 3], axis: [f64; 3]) -> Option<(f64, f64)> {
    let d = sub(ri, rj);
    let r = norm(d);
    if !(r > 0.0) {
        return None;
    }
    let cos = dot(d, axis) / r;
    Some((3.0 * cos * cos - 1.0, r))
}

/// d_ij = -(μ0/4π) ħ γn² (3cos²ϑ - 1) / r³, in Hz.
pub fn dipolar_coupling(ri: [f64; 3], rj: [f64; 3], field_axis: [f64; 3]) -> Result<f64> {
    let axis = normalize(field_axis)?;
    let (ang, r) = geometry_factor(ri, rj, axis).ok_or(Error::CoincidentPositions(0, 1))?;
    let g = gamma_13c();
    Ok(-MU0_OVER_4PI * HBAR * g * g * ang / (r * r * r) / (2.0 * PI))
}

/// h_iμ = -(μ0/4π) ħ γe γn (3cos²ϑ - 1) / r³, in Hz.
pub fn hyperfine_coupling(ri: [f64; 3], rmu: [f64; 3], field_axis: [f64; 3]) -> Result<f64> {
    let axis = normalize(field_axis)?;
    let (ang, r) = geometry_factor(ri, rmu, axis).ok_or(Error::CoincidentPositions(0, 1))?;
    Ok(-MU0_OVER_4PI * HBAR * gamma_e() * gamma_13c() * ang / (r * r * r) / (2.0 * PI))
}

impl SpinClusterGeometry {
    /// Build a geometry and its couplings from explicit positions (m).
    pub fn from_positions(
        nuclei: Vec<[f64; 3]>,
        electrons: Vec<[f64; 3]>,
        species: Vec<ElectronSpecies>,
        field_axis: [f64; 3],
    ) -> Result<Self> {
        if species.len() != electrons.len() {
            return invalid("one species label per electron required");
        }
        let axis = normalize(field_axis)?;
        let n = nuclei.len();
        let mut dipolar = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = dipolar_coupling(nuclei[i], nuclei[j], axis)
                    .map_err(|_| Error::CoincidentPositions(i, j))?;
                dipolar[i][j] = d;
                dipolar[j][i] = d;
            }
        }
        let mut hyperfine = vec![vec![0.0; electrons.len()]; n];
        for i in 0..n {
            for (mu, &re) in electrons.iter().enumerate() {
                hyperfine[i][mu] = hyperfine_coupling(nuclei[i], re, axis)
                    .map_err(|_| Error::CoincidentPositions(i, n + mu))?;
            }
        }
        Ok(SpinClusterGeometry {
            nuclear_positions: nuclei,
            electron_positions: electrons,
            electron_species: species,
            field_axis: axis,
            dipolar,
            hyperfine,
        })
    }

    pub fn n_nuclei(&self) -> usize {
        self.nuclear_positions.len()
    }

    pub fn n_electrons(&self) -> usize {
        self.electron_positions.len()
    }

    /// Copy with all electrons dropped.
    pub fn without_electrons(&self) -> Self {
        SpinClusterGeometry {
            electron_positions: vec![],
            electron_species: vec![],
            hyperfine: vec![vec![]; self.n_nuclei()],
            ..self.clone()
        }
    }

    /// Largest |d_ij| per nucleus (its strongest partner).
    pub fn nearest_neighbor_couplings(&self) -> Vec<f64> {
        self.dipolar
            .iter()
            .map(|row| row.iter().fold(0.0f64, |m, d| m.max(d.abs())))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = GeometryDoc {
            nuclear_positions_angstrom: self.nuclear_positions.iter().map(|p| scale3(*p, 1.0 / ANGSTROM)).collect(),
            electron_positions_angstrom: self.electron_positions.iter().map(|p| scale3(*p, 1.0 / ANGSTROM)).collect(),
            electron_species: self.electron_species.clone(),
            field_axis: self.field_axis,
            dipolar_hz: self.dipolar.clone(),
            hyperfine_hz: self.hyperfine.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Parse a geometry document. Couplings are recomputed from positions and
    /// must agree with any stored values.
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: GeometryDoc = serde_json::from_str(s)?;
        let g = Self::from_positions(
            doc.nuclear_positions_angstrom.iter().map(|p| scale3(*p, ANGSTROM)).collect(),
            doc.electron_positions_angstrom.iter().map(|p| scale3(*p, ANGSTROM)).collect(),
            doc.electron_species,
            doc.field_axis,
        )?;
        let check = |a: &[Vec<f64>], b: &[Vec<f64>], what: &str| -> Result<()> {
            if a.is_empty() {
                return Ok(());
            }
            let same = a.len() == b.len()
                && a.iter().zip(b).all(|(x, y)| {
                    x.len() == y.len() && x.iter().zip(y).all(|(u, v)| (u - v).abs() <= 1e-6 * v.abs().max(1e-3))
                });
            if same {
                Ok(())
            } else {
                invalid(format!("stored {what} couplings disagree with positions"))
            }
        };
        check(&doc.dipolar_hz, &g.dipolar, "dipolar")?;
        if doc.hyperfine_hz.iter().any(|r| !r.is_empty()) {
            check(&doc.hyperfine_hz, &g.hyperfine, "hyperfine")?;
        }
        Ok(g)
    }
}

fn scale3(p: [f64; 3], s: f64) -> [f64; 3] {
    [p[0] * s, p[1] * s, p[2] * s]
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryDoc {
    nuclear_positions_angstrom: Vec<[f64; 3]>,
    electron_positions_angstrom: Vec<[f64; 3]>,
    #[serde(default)]
    electron_species: Vec<ElectronSpecies>,
    #[serde(default = "default_field_axis")]
    field_axis: [f64; 3],
    #[serde(default)]
    dipolar_hz: Vec<Vec<f64>>,
    #[serde(default)]
    hyperfine_hz: Vec<Vec<f64>>,
}

/// All diamond-cubic sites with every coordinate in [-h, h), in a fixed order.
pub fn lattice_sites(a0: f64, h: f64) -> Vec<[f64; 3]> {
    let cmin = (-h / a0).floor() as i64 - 1;
    let cmax = (h / a0).ceil() as i64 + 1;
    let mut out = Vec::new();
    for i in cmin..=cmax {
        for j in cmin..=cmax {
            for k in cmin..=cmax {
                for b in DIAMOND_BASIS {
                    let p = [(i as f64 + b[0]) * a0, (j as f64 + b[1]) * a0, (k as f64 + b[2]) * a0];
                    // small slack keeps sites on the lower face despite rounding
                    let eps = 1e-9 * a0;
                    if p.iter().all(|&x| x >= -h - eps && x < h - eps) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

/// Sample a configuration: each site hosts an electron with probability
/// ppm·1e-6, otherwise a 13C with probability p. Nuclei inside the barrier
/// radius of any electron are dropped.
pub fn sample_configuration(cfg: &LatticeConfig) -> Result<SpinClusterGeometry> {
    let (nuclei, electrons) = sample_sites(cfg)?;
    if nuclei.is_empty() {
        return Err(Error::EmptyConfiguration);
    }
    let species = vec![cfg.electron_species; electrons.len()];
    SpinClusterGeometry::from_positions(nuclei, electrons, species, cfg.field_axis)
}

/// Positions only (nuclei after barrier exclusion, electrons); no couplings.
pub fn sample_sites(cfg: &LatticeConfig) -> Result<(Vec<[f64; 3]>, Vec<[f64; 3]>)> {
    cfg.validate()?;
    let sites = lattice_sites(cfg.lattice_constant, cfg.box_halfwidth);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pe = cfg.electron_density_ppm * 1e-6;
    let mut nuclei = Vec::new();
    let mut electrons = Vec::new();
    for s in sites {
        // two draws per site so that changing one probability does not shift
        // the stream for the other
        let ue: f64 = rng.random();
        let un: f64 = rng.random();
        if ue < pe {
            electrons.push(s);
        } else if un < cfg.carbon_occupancy {
            nuclei.push(s);
        }
    }
    let r2 = cfg.barrier_radius * cfg.barrier_radius;
    nuclei.retain(|n| electrons.iter().all(|e| {
        let d = sub(*n, *e);
        dot(d, d) >= r2
    }));
    Ok((nuclei, electrons))
}

/// The `n_spins` nuclei closest to a random focus point inside the central
/// unit cell of a sampled electron-free configuration at occupancy `p`. The
/// random focus makes full-occupancy clusters differ between seeds. The box
/// grows until enough nuclei exist.
pub fn sample_cluster(p: f64, n_spins: usize, seed: u64, a0: f64) -> Result<SpinClusterGeometry> {
    if !(p > 0.0 && p <= 1.0) {
        return invalid("cluster sampling needs occupancy in (0, 1]");
    }
    // expected count 8 p (2h/a0)^3 should cover several times n_spins
    let mut focus_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_F0C5);
    let focus: [f64; 3] = std::array::from_fn(|_| a0 * (focus_rng.random::<f64>() - 0.5));
    let mut h = a0 * (0.5 * ((4.0 * n_spins as f64) / (8.0 * p)).cbrt() + 0.5).max(1.01);
    for attempt in 0..8u64 {
        let cfg = LatticeConfig {
            lattice_constant: a0,
            box_halfwidth: h,
            carbon_occupancy: p,
            electron_density_ppm: 0.0,
            barrier_radius: 0.0,
            seed: seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            ..LatticeConfig::default()
        };
        match sample_configuration(&cfg) {
            Ok(g) if g.n_nuclei() >= n_spins => {
                let mut pos = g.nuclear_positions.clone();
                let r2 = |x: &[f64; 3]| {
                    let d = sub(*x, focus);
                    dot(d, d)
                };
                pos.sort_by(|a, b| r2(a).partial_cmp(&r2(b)).unwrap());
                pos.truncate(n_spins);
                return SpinClusterGeometry::from_positions(pos, vec![], vec![], g.field_axis);
            }
            _ => h *= 1.5,
        }
    }
    Err(Error::EmptyConfiguration)
}
