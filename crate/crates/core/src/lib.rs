//! Two-frequency Floquet heating of dipolar nuclear spin networks.
//!
//! Modules, bottom-up: [`lattice`] geometry and couplings, [`drive`] single
//! spin effective rotation and micromotion, [`bimodal`] two-frequency
//! effective generators and rate formulas, [`exactsim`] exact unitary and
//! dissipative reference dynamics, [`montecarlo`] semiclassical polarization
//! transport, [`analysis`] fits.

pub mod analysis;
pub mod bimodal;
pub mod consts;
pub mod drive;
pub mod electron;
pub mod error;
pub mod exactsim;
pub mod lattice;
pub mod linalg;
pub mod montecarlo;
pub mod spin;
pub mod wigner;

pub use drive::{
    compose_one_cycle, find_resonances, fourier_coefficients, micromotion, DriveSequence, EffectiveDrive,
    FourierCoefficientTable, MicromotionTrajectory, Resonance,
};
pub use error::{Error, Result};
pub use lattice::{sample_configuration, ElectronSpecies, LatticeConfig, SpinClusterGeometry};
pub use analysis::{fit_lorentzian_sweep, fit_lorentzian_windows, fit_product_decay, fit_product_decay_weighted, scaling_check, DecayFit, DecayWeighting, ResonanceFit, ScalingFit};
pub use bimodal::{AnalyticRateModel, LorentzianLine, MultiflipRate};
pub use drive::DriveTables;
pub use exactsim::{pauli_weight, prethermal_state, reference_toy_geometry, MagnetizationTrace, PrethermalState, ToyModelSpec};
pub use montecarlo::{ensemble_sweep, MonteCarloConfig, RelaxationChannel, SweepPoint};
