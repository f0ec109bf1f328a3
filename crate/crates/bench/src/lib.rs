//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use rotmaster::angmom::{coherent_state, PureState};
use rotmaster::coupling::{CouplingSet, FieldConfig};
use rotmaster::lindblad::DensityMatrix;
use rotmaster::model::Model;

/// Kerr geometry with the `j = 2` coherent state along `y`, as in the default preset.
pub struct KerrFixture {
    pub model: Model,
    pub psi0: PureState,
    pub rho0: DensityMatrix,
}

pub fn kerr(j_max: u32, omega_r: f64, gamma_over_delta: f64) -> KerrFixture {
    let coupling = Arc::new(CouplingSet::new(j_max));
    let field = FieldConfig::kerr(omega_r, gamma_over_delta);
    let psi0 = coherent_state(coupling.ground().clone(), 2, std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2).expect("j = 2 fits");
    let model = Model::for_state(coupling, &field, &psi0);
    let rho0 = DensityMatrix::pure(&psi0);
    KerrFixture { model, psi0, rho0 }
}
