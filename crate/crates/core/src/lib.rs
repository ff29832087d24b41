//! Finite-volume solver for a chemotaxis-(Navier-)Stokes model of coral
//! broadcast spawning: sperm density `n`, egg density `m`, chemoattractant
//! `c` and an incompressible fluid `u` on a closed rectangular box.
//!
//! The scheme is built so that the structural properties of the continuous
//! model hold exactly at the discrete level: `∫n` is nonincreasing, `∫(n - m)`
//! is conserved, `m` and `c` obey maximum principles, all densities stay
//! nonnegative and `u` stays discretely divergence free. [`diagnostics`]
//! turns each of these into a per-step check.
//!
//! ```no_run
//! use cksf_core::{parse_config, run};
//!
//! let cfg = parse_config("nx = 32\nny = 32\nt_end = 0.5").unwrap();
//! let summary = run(&cfg).unwrap();
//! assert!(summary.success());
//! ```

pub mod config;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod fluid;
pub mod grid;
pub mod linsolve;
pub mod operators;
pub mod snapshot;
pub mod stepper;

pub use config::{parse_config, RunConfig, SweepSpec};
pub use diagnostics::{
    assert_invariants, compute_record, DiagnosticsRecord, InvariantTolerances, Violation,
    CSV_HEADER,
};
pub use driver::{in_proven_regime, run, sweep, RegimeRow, RunSummary};
pub use error::{Error, Result};
pub use fluid::{fluid_step, project, PoissonWorkspace};
pub use grid::{
    integrate_cellwise, make_initial_state, make_initial_state_perturbed, DtPolicy, FaceField,
    FaceFluxField, Grid2D, InitialPreset, MacVelocity, Perturbation, ScalarField, SimParams,
    SimState, TwoBlobs,
};
pub use snapshot::Snapshot;
pub use stepper::{choose_dt, step, step_with_dt, DtReport, LimitingConstraint};
