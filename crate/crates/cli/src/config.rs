//! TOML run configurations, one schema per subcommand. Every table rejects
//! unknown keys and every field has a default, so an empty file is valid.

use std::path::{Path, PathBuf};

use bifloq::montecarlo::RelaxationChannel;
use bifloq::{DecayWeighting, DriveSequence, LatticeConfig, MonteCarloConfig, SpinClusterGeometry};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Relative paths inside a config file resolve against the file's directory.
pub fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
    match base.and_then(Path::parent) {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Drive {
    pub pulse_width_us: f64,
    pub period_us: f64,
    pub rabi_hz: f64,
}

impl Default for Drive {
    fn default() -> Self {
        let d = DriveSequence::pulsed_spin_lock(0.0);
        Drive { pulse_width_us: d.pulse_width * 1e6, period_us: d.period * 1e6, rabi_hz: d.rabi }
    }
}

impl Drive {
    pub fn template(&self) -> Result<DriveSequence, CliError> {
        Ok(DriveSequence::new(self.pulse_width_us * 1e-6, self.period_us * 1e-6, self.rabi_hz, 0.0)?)
    }
}

/// Detuning grid: `points` evenly spaced values on [start_hz, stop_hz], or an
/// explicit `values_hz` list which takes precedence.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sweep {
    pub start_hz: f64,
    pub stop_hz: f64,
    pub points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values_hz: Option<Vec<f64>>,
}

impl Sweep {
    pub fn linear(start_hz: f64, stop_hz: f64, points: usize) -> Self {
        Sweep { start_hz, stop_hz, points, values_hz: None }
    }

    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        let v = match &self.values_hz {
            Some(v) => v.clone(),
            None => {
                if !(self.stop_hz >= self.start_hz) {
                    return Err(CliError::Config("sweep: stop_hz must be >= start_hz".into()));
                }
                match self.points {
                    0 => Vec::new(),
                    1 => vec![self.start_hz],
                    n => (0..n).map(|i| self.start_hz + (self.stop_hz - self.start_hz) * i as f64 / (n - 1) as f64).collect(),
                }
            }
        };
        if v.is_empty() {
            return Err(CliError::Config("sweep: detuning grid is empty".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(CliError::Config("sweep: detunings must be finite".into()));
        }
        Ok(v)
    }
}

impl Default for Sweep {
    fn default() -> Self {
        Sweep::linear(0.0, 6000.0, 61)
    }
}

/// `"toy"` selects the built-in three-nucleus NV cluster; anything else is a
/// path to a geometry JSON file.
pub fn load_geometry(spec: &str, base: Option<&Path>) -> Result<SpinClusterGeometry, CliError> {
    if spec == "toy" {
        return Ok(bifloq::reference_toy_geometry());
    }
    let path = resolve(base, Path::new(spec));
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("cannot read geometry {}: {e}", path.display())))?;
    Ok(SpinClusterGeometry::from_json(&text)?)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Resonances {
    pub orders: Vec<u32>,
    pub range_hz: [f64; 2],
    pub n_scan: usize,
    pub drive: Drive,
}

impl Default for Resonances {
    fn default() -> Self {
        Resonances { orders: vec![2, 3], range_hz: [0.0, 10_000.0], n_scan: 400, drive: Drive::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatesAnalytic {
    pub geometry: String,
    pub t1e_s: f64,
    pub orders: Vec<u32>,
    /// search window for resonance centres
    pub range_hz: [f64; 2],
    pub eps_res: f64,
    pub drive: Drive,
    pub sweep: Sweep,
}

impl Default for RatesAnalytic {
    fn default() -> Self {
        RatesAnalytic {
            geometry: "toy".into(),
            t1e_s: 50e-3,
            orders: vec![2, 3],
            range_hz: [0.0, 10_000.0],
            eps_res: bifloq::bimodal::DEFAULT_EPS_RES,
            drive: Drive::default(),
            sweep: Sweep::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepExact {
    pub geometry: String,
    pub t1e_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lindblad_rate_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max_s: Option<f64>,
    pub samples: usize,
    pub transient_s: f64,
    pub dim_cap: usize,
    pub drive: Drive,
    pub sweep: Sweep,
}

impl Default for SweepExact {
    fn default() -> Self {
        use bifloq::exactsim::liouville::{DEFAULT_DIM_CAP, DEFAULT_SAMPLES, DEFAULT_TRANSIENT};
        SweepExact {
            geometry: "toy".into(),
            t1e_s: 50e-3,
            lindblad_rate_hz: None,
            t_max_s: None,
            samples: DEFAULT_SAMPLES,
            transient_s: DEFAULT_TRANSIENT,
            dim_cap: DEFAULT_DIM_CAP,
            drive: Drive::default(),
            sweep: Sweep::linear(1500.0, 3500.0, 41),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepMc {
    pub occupancy: f64,
    pub electron_ppm: f64,
    /// half-width of the sampling box
    pub box_nm: f64,
    pub barrier_nm: f64,
    pub eta: f64,
    #[serde(rename = "kappa2J0")]
    pub kappa2_j0: f64,
    pub n_configs: usize,
    pub seed: u64,
    pub t_max_s: f64,
    pub n_times: usize,
    pub channel: RelaxationChannel,
    pub drive: Drive,
    pub sweep: Sweep,
}

impl Default for SweepMc {
    fn default() -> Self {
        let mc = MonteCarloConfig::default();
        SweepMc {
            occupancy: mc.lattice.carbon_occupancy,
            electron_ppm: mc.lattice.electron_density_ppm,
            box_nm: mc.lattice.box_halfwidth * 1e9,
            barrier_nm: mc.lattice.barrier_radius * 1e9,
            eta: mc.eta,
            kappa2_j0: mc.kappa2_j0,
            n_configs: mc.n_configs,
            seed: mc.lattice.seed,
            t_max_s: *mc.time_grid.last().unwrap(),
            n_times: mc.time_grid.len(),
            channel: mc.channel,
            drive: Drive::default(),
            sweep: Sweep::linear(0.0, 6000.0, 25),
        }
    }
}

impl SweepMc {
    pub fn to_model(&self) -> Result<MonteCarloConfig, CliError> {
        if self.n_times < 8 || !(self.t_max_s > 0.0) {
            return Err(CliError::Config("sweep-mc: need n_times >= 8 and t_max_s > 0".into()));
        }
        if self.n_configs == 0 {
            return Err(CliError::Config("sweep-mc: n_configs must be at least 1".into()));
        }
        let n = self.n_times;
        Ok(MonteCarloConfig {
            lattice: LatticeConfig {
                box_halfwidth: self.box_nm * 1e-9,
                carbon_occupancy: self.occupancy,
                electron_density_ppm: self.electron_ppm,
                barrier_radius: self.barrier_nm * 1e-9,
                seed: self.seed,
                ..LatticeConfig::default()
            },
            eta: self.eta,
            kappa2_j0: self.kappa2_j0,
            n_configs: self.n_configs,
            time_grid: (0..n).map(|k| self.t_max_s * k as f64 / (n - 1) as f64).collect(),
            drive: self.drive.template()?,
            channel: self.channel,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Prethermal {
    pub occupancy: f64,
    pub n_spins: usize,
    pub n_clusters: usize,
    pub seed: u64,
    /// also report the mean Pauli weight (needs n_spins <= 8)
    pub pauli: bool,
    pub drive: Drive,
    pub sweep: Sweep,
}

impl Default for Prethermal {
    fn default() -> Self {
        Prethermal {
            occupancy: 0.011,
            n_spins: 8,
            n_clusters: 20,
            seed: 0,
            pauli: false,
            drive: Drive::default(),
            sweep: Sweep::linear(0.0, 6000.0, 61),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitKind {
    /// product decay law on a time trace
    #[default]
    Decay,
    /// Lorentzian plus linear background on a detuning sweep
    Sweep,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fit {
    pub input: PathBuf,
    pub kind: FitKind,
    pub x_column: String,
    pub y_column: String,
    /// sweep fits: one window per centre; empty fits the whole grid
    pub centers_hz: Vec<f64>,
    pub half_window_hz: f64,
    /// decay fits: "uniform", or "variance-model" for noise proportional to the signal
    pub weighting: DecayWeighting,
}

impl Default for Fit {
    fn default() -> Self {
        Fit {
            input: PathBuf::new(),
            kind: FitKind::Decay,
            x_column: "t_s".into(),
            y_column: "value".into(),
            centers_hz: Vec::new(),
            half_window_hz: 900.0,
            weighting: DecayWeighting::Uniform,
        }
    }
}
