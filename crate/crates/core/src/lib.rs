//! Discontinuous Galerkin discretization of fourth-order gradient flows
//! `u_t = -L^2 u - Phi'(u)` with `L = -(Laplacian + a)`, integrated in time by
//! linearly implicit energy-quadratized Runge-Kutta schemes.

pub mod dg;
pub mod diagnostics;
pub mod error;
pub mod init;
pub mod mesh;
pub mod operators;
pub mod potential;
pub mod rk;
pub mod stepper;

pub use dg::{DgField, DgSpace, FaceTrace, QuadField, QuadRule};
pub use error::{Error, Result};
pub use mesh::{Axis, BoundaryKind, Mesh};
pub use operators::{assemble_g, apply_lh, SolverKind, SolverOptions, SparseOperator, StageSolver, StageSystem};
pub use potential::{ManufacturedSolution, Potential, PotentialShape, SwiftHohenberg, ZeroPotential};
pub use rk::{ButcherTableau, Certification};
pub use diagnostics::{discrete_energy, EnergyRecord, EocTable};
pub use init::InitialCondition;
pub use stepper::{Forcing, History, PcConfig, PointSource, SourceTerm, StepOutcome, StepReport, StepState, Stepper, StepperOptions};
