//! Exact reference dynamics: the dissipative nuclei + electron toy model and
//! the unitary diagonal-ensemble cluster simulator.

pub mod liouville;
pub mod pauli;
pub mod prethermal;

pub use liouville::{
    build_liouvillian, extract_heating_rate, one_period_channel, population_rate_matrix, propagate_stroboscopic,
    MagnetizationTrace, Segment, SuperOperator, ToyModelSpec,
};
pub use pauli::pauli_weight;
pub use prethermal::{prethermal_state, PrethermalState};

use crate::consts::DIAMOND_A0;
use crate::lattice::{ElectronSpecies, SpinClusterGeometry};

/// Three 13C nuclei near an NV center, field along z.
pub fn reference_toy_geometry() -> SpinClusterGeometry {
    let a = DIAMOND_A0;
    let p = |x: f64, y: f64, z: f64| [a * x, a * y, a * z];
    SpinClusterGeometry::from_positions(
        vec![p(0.25, 0.25, -0.75), p(1.0, 0.5, 0.5), p(-0.5, -1.0, 0.5)],
        vec![p(0.2, -0.2, 20.25)],
        vec![ElectronSpecies::Nv],
        [0.0, 0.0, 1.0],
    )
    .expect("reference positions are distinct")
}
