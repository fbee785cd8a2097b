//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use gradflow_core::{
    BoundaryKind, ButcherTableau, DgSpace, InitialCondition, Mesh, PcConfig, Potential, Result, StepState, Stepper,
    StepperOptions,
};

/// Periodic `n x n` square of side 100 with the given degree.
pub fn square(cells: usize, degree: usize) -> Arc<DgSpace> {
    let mesh = Mesh::rectangle((0.0, 100.0), (0.0, 100.0), cells, cells, BoundaryKind::Periodic)
        .expect("valid mesh");
    DgSpace::new(mesh, degree)
}

/// Swift-Hohenberg rolls setup with random initial data.
pub fn rolls(cells: usize, degree: usize, tableau: &str) -> Result<(Stepper, StepState)> {
    let space = square(cells, degree);
    let options = StepperOptions {
        solver: Default::default(),
        pc: PcConfig::default(),
        allow_uncertified: false,
    };
    let stepper = Stepper::new(
        Arc::clone(&space),
        Potential::swift_hohenberg(0.3, 0.0),
        ButcherTableau::builtin(tableau)?,
        options,
    )?;
    let (nodal, u) = InitialCondition::RandomCellMeans { seed: 7, amplitude: 0.1 }.realize(&space)?;
    let state = stepper.initial_state(0.0, &nodal, u)?;
    Ok((stepper, state))
}
