//! Fixtures shared by the criterion benches.

use bifloq::{DriveSequence, SpinClusterGeometry};

/// Three-nucleus cluster with an NV centre far above it, used for the toy model.
pub fn toy_geometry() -> SpinClusterGeometry {
    bifloq::exactsim::reference_toy_geometry()
}

pub fn standard_drive(detuning: f64) -> DriveSequence {
    DriveSequence::pulsed_spin_lock(detuning)
}
