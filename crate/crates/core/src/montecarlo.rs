//! Semiclassical polarization transport: on-site relaxation from electron
//! hyperfine fields plus dipolar flip-flop hopping, with couplings rescaled
//! by the secular part of the drive frame.

use crate::analysis::{fit_product_decay, DecayFit};
use crate::drive::{DriveSequence, DriveTables, DEFAULT_GRID_POINTS, DEFAULT_N_MAX};
use crate::error::{invalid, Error, Result};
use crate::lattice::{sample_configuration, LatticeConfig, SpinClusterGeometry};
use crate::linalg::{c, expm, RMat};
use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Imaginary part of a scale factor above this signals a frame convention bug.
pub const IMAG_TOL: f64 = 1e-8;
const MAX_DRAWS_PER_CONFIG: usize = 50;

/// Which hyperfine power drives on-site relaxation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelaxationChannel {
    /// h²(1 - s₁²): the part of the hyperfine field modulated by the drive.
    #[default]
    NonSecular,
    /// (s₁ h)²: the rescaled secular coupling inserted as is.
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub lattice: LatticeConfig,
    /// s⁻¹ Hz⁻²
    pub eta: f64,
    /// s⁻¹ Hz⁻²
    pub kappa2_j0: f64,
    pub n_configs: usize,
    /// s
    pub time_grid: Vec<f64>,
    /// Template; the detuning is replaced per sweep point.
    pub drive: DriveSequence,
    #[serde(default)]
    pub channel: RelaxationChannel,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            lattice: LatticeConfig {
                box_halfwidth: 3e-9,
                electron_density_ppm: 30.0,
                ..LatticeConfig::default()
            },
            eta: 2e-3,
            kappa2_j0: 7e-2,
            n_configs: 20,
            time_grid: (0..=100).map(|k| 2e-3 * k as f64).collect(),
            drive: DriveSequence::pulsed_spin_lock(0.0),
            channel: RelaxationChannel::NonSecular,
        }
    }
}

impl MonteCarloConfig {
    pub fn validate(&self) -> Result<()> {
        self.lattice.validate()?;
        self.drive.validate()?;
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return invalid("eta must be finite and >= 0");
        }
        if !(self.kappa2_j0 >= 0.0) || !self.kappa2_j0.is_finite() {
            return invalid("kappa2_j0 must be finite and >= 0");
        }
        if self.n_configs == 0 {
            return invalid("n_configs must be >= 1");
        }
        if self.time_grid.len() < 3 {
            return invalid("time grid needs at least 3 points");
        }
        if self.time_grid.windows(2).any(|w| !(w[1] > w[0])) || self.time_grid[0] < 0.0 {
            return invalid("time grid must be nonnegative and strictly increasing");
        }
        Ok(())
    }

    /// Seed of configuration k, decorrelated from neighbouring k.
    pub fn config_seed(&self, k: usize) -> u64 {
        let mut z = self.lattice.seed.wrapping_add((k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// Secular scale factors of the rank-1 and rank-2 couplings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactors {
    pub hyperfine: f64,
    pub dipolar: f64,
    pub imag_residue: f64,
}

pub fn scale_factors(tables: &DriveTables) -> Result<ScaleFactors> {
    let s1 = tables.scale_factor(1);
    let s2 = tables.scale_factor(2);
    let imag = s1.im.abs().max(s2.im.abs());
    if imag > IMAG_TOL {
        return Err(Error::Numerical(format!(
            "scale factors have imaginary residue {imag:e} at detuning {} Hz",
            tables.seq.detuning
        )));
    }
    Ok(ScaleFactors { hyperfine: s1.re, dipolar: s2.re, imag_residue: imag })
}

#[derive(Clone, Debug)]
pub struct RescaledCouplings {
    pub factors: ScaleFactors,
    /// Hz
    pub dipolar: Vec<Vec<f64>>,
    /// Hz
    pub hyperfine: Vec<Vec<f64>>,
}

pub fn rescale_couplings(geometry: &SpinClusterGeometry, tables: &DriveTables) -> Result<RescaledCouplings> {
    let f = scale_factors(tables)?;
    Ok(RescaledCouplings {
        factors: f,
        dipolar: geometry.dipolar.iter().map(|r| r.iter().map(|d| d * f.dipolar).collect()).collect(),
        hyperfine: geometry.hyperfine.iter().map(|r| r.iter().map(|h| h * f.hyperfine).collect()).collect(),
    })
}

#[derive(Clone, Debug)]
pub struct TransportModel {
    /// Diagonal of R, s⁻¹, nonpositive.
    pub relaxation: Vec<f64>,
    /// s⁻¹, symmetric with zero column sums.
    pub transport: RMat,
}

impl TransportModel {
    pub fn n(&self) -> usize {
        self.relaxation.len()
    }

    pub fn generator(&self) -> RMat {
        let mut g = self.transport.clone();
        for (i, r) in self.relaxation.iter().enumerate() {
            g[(i, i)] += r;
        }
        g
    }
}

pub fn build_transport(
    geometry: &SpinClusterGeometry,
    factors: &ScaleFactors,
    eta: f64,
    kappa2_j0: f64,
    channel: RelaxationChannel,
) -> Result<TransportModel> {
    if !(eta >= 0.0) || !(kappa2_j0 >= 0.0) {
        return invalid("eta and kappa2_j0 must be >= 0");
    }
    let n = geometry.n_nuclei();
    let weight = match channel {
        RelaxationChannel::NonSecular => (1.0 - factors.hyperfine * factors.hyperfine).max(0.0),
        RelaxationChannel::Literal => factors.hyperfine * factors.hyperfine,
    };
    let relaxation = geometry
        .hyperfine
        .iter()
        .map(|row| -eta * weight * row.iter().map(|h| h * h).sum::<f64>())
        .collect();
    let s2 = factors.dipolar * factors.dipolar;
    let mut w = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = geometry.dipolar[i][j];
                w[(i, j)] = kappa2_j0 * s2 * d * d;
            }
        }
    }
    for j in 0..n {
        let s: f64 = (0..n).filter(|&i| i != j).map(|i| w[(i, j)]).sum();
        w[(j, j)] = -s;
    }
    Ok(TransportModel { relaxation, transport: w })
}

/// Spectral form of ṗ = (R + W) p.
pub struct Propagator {
    evals: Vec<f64>,
    evecs: RMat,
}

impl Propagator {
    pub fn new(model: &TransportModel) -> Result<Self> {
        let g = model.generator();
        let e = g
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| Error::Numerical(format!("transport eigensolver failed: {e:?}")))?;
        Ok(Propagator { evals: e.S().column_vector().iter().copied().collect(), evecs: e.U().to_owned() })
    }

    /// p(t) at every time of the grid, one row per time.
    pub fn sites(&self, p0: &[f64], times: &[f64]) -> Vec<Vec<f64>> {
        let n = self.evals.len();
        let coef: Vec<f64> = (0..n).map(|k| (0..n).map(|i| self.evecs[(i, k)] * p0[i]).sum()).collect();
        times
            .iter()
            .map(|&t| {
                let a: Vec<f64> = (0..n).map(|k| coef[k] * (self.evals[k] * t).exp()).collect();
                (0..n).map(|i| (0..n).map(|k| self.evecs[(i, k)] * a[k]).sum()).collect()
            })
            .collect()
    }

    /// Site-averaged polarization at each time.
    pub fn mean(&self, p0: &[f64], times: &[f64]) -> Vec<f64> {
        let n = self.evals.len();
        let coef: Vec<f64> = (0..n)
            .map(|k| {
                let proj: f64 = (0..n).map(|i| self.evecs[(i, k)] * p0[i]).sum();
                let col: f64 = (0..n).map(|i| self.evecs[(i, k)]).sum();
                proj * col / n as f64
            })
            .collect();
        times.iter().map(|&t| (0..n).map(|k| coef[k] * (self.evals[k] * t).exp()).sum()).collect()
    }
}

/// p(t) for each time, by symmetric eigendecomposition with a matrix
/// exponential fallback.
pub fn propagate_polarization(model: &TransportModel, p0: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = model.n();
    if p0.len() != n {
        return invalid(format!("initial polarization has {} entries for {n} spins", p0.len()));
    }
    if p0.iter().any(|x| !x.is_finite()) {
        return invalid("initial polarization must be finite");
    }
    match Propagator::new(model) {
        Ok(p) => Ok(p.sites(p0, times)),
        Err(e) => {
            log::warn!("{e}; falling back to matrix exponentials");
            let g = model.generator();
            times
                .iter()
                .map(|&t| {
                    let a = Mat::from_fn(n, n, |i, j| c(g[(i, j)] * t, 0.0));
                    let u = expm(a.as_ref());
                    Ok((0..n).map(|i| (0..n).map(|j| u[(i, j)].re * p0[j]).sum()).collect())
                })
                .collect()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Hz
    pub detuning: f64,
    pub factors: ScaleFactors,
    /// Configuration-averaged mean polarization on the time grid.
    pub mean_polarization: Vec<f64>,
    pub fit: Option<DecayFit>,
    /// The fit failed or did not converge.
    pub flagged: bool,
    pub n_spins_mean: f64,
}

/// Pairwise sum of equal-length vectors in a fixed order.
fn pairwise_sum(v: &[Vec<f64>]) -> Vec<f64> {
    match v.len() {
        0 => vec![],
        1 => v[0].clone(),
        n => {
            let (a, b) = v.split_at(n / 2);
            let (a, b) = (pairwise_sum(a), pairwise_sum(b));
            a.iter().zip(&b).map(|(x, y)| x + y).collect()
        }
    }
}

pub fn ensemble_sweep(cfg: &MonteCarloConfig, detunings: &[f64]) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    let configs = sample_ensemble(cfg)?;
    let n_spins_mean = configs.iter().map(|g| g.n_nuclei() as f64).sum::<f64>() / configs.len() as f64;
    let mut out = Vec::with_capacity(detunings.len());
    for &det in detunings {
        let tables = DriveTables::build(&cfg.drive.with_detuning(det), DEFAULT_N_MAX, DEFAULT_GRID_POINTS)?;
        let factors = scale_factors(&tables)?;
        let traces = configs
            .par_iter()
            .map(|g| {
                let model = build_transport(g, &factors, cfg.eta, cfg.kappa2_j0, cfg.channel)?;
                let p0 = vec![1.0; g.n_nuclei()];
                match Propagator::new(&model) {
                    Ok(p) => Ok(p.mean(&p0, &cfg.time_grid)),
                    Err(_) => Ok(mean_of(&propagate_polarization(&model, &p0, &cfg.time_grid)?)),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let sum = pairwise_sum(&traces);
        let mean: Vec<f64> = sum.iter().map(|x| x / traces.len() as f64).collect();
        let fit = fit_product_decay(&cfg.time_grid, &mean);
        let (fit, flagged) = match fit {
            Ok(f) => {
                let bad = !f.converged;
                (Some(f), bad)
            }
            Err(e) => {
                log::warn!("fit failed at detuning {det} Hz: {e}");
                (None, true)
            }
        };
        out.push(SweepPoint { detuning: det, factors, mean_polarization: mean, fit, flagged, n_spins_mean });
    }
    Ok(out)
}

/// Draws configurations in seed order until `n_configs` usable ones exist.
/// With a nonzero electron density, electron-free draws are skipped: in a
/// finite box they carry no relaxation sink and would add a non-decaying
/// floor to the ensemble mean that bulk material does not have.
fn sample_ensemble(cfg: &MonteCarloConfig) -> Result<Vec<SpinClusterGeometry>> {
    let need_electron = cfg.lattice.electron_density_ppm > 0.0;
    let max_draws = MAX_DRAWS_PER_CONFIG * cfg.n_configs;
    let mut configs = Vec::with_capacity(cfg.n_configs);
    let mut skipped = 0usize;
    let mut next = 0usize;
    while configs.len() < cfg.n_configs && next < max_draws {
        let batch = (cfg.n_configs - configs.len()).max(rayon::current_num_threads()).min(max_draws - next);
        let drawn = (next..next + batch)
            .into_par_iter()
            .map(|k| {
                let lc = LatticeConfig { seed: cfg.config_seed(k), ..cfg.lattice.clone() };
                match sample_configuration(&lc) {
                    Ok(g) => Ok(Some(g)),
                    Err(Error::EmptyConfiguration) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        next += batch;
        for g in drawn.into_iter().flatten() {
            if configs.len() == cfg.n_configs {
                break;
            }
            if need_electron && g.n_electrons() == 0 {
                skipped += 1;
                continue;
            }
            configs.push(g);
        }
    }
    if configs.is_empty() {
        return Err(Error::EmptyConfiguration);
    }
    if skipped > 0 {
        log::debug!("skipped {skipped} electron-free configurations");
    }
    if configs.len() < cfg.n_configs {
        log::warn!("only {} of {} configurations were usable", configs.len(), cfg.n_configs);
    }
    Ok(configs)
}

fn mean_of(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter().map(|r| r.iter().sum::<f64>() / r.len().max(1) as f64).collect()
}
