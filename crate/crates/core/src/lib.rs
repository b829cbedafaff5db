//! Finite-element simulator for the non-isothermal Poisson-Nernst-Planck
//! system in log-density variables, with edge-averaged (exponentially
//! fitted) discretizations of the species and temperature equations.
//!
//! The usual entry point is [`config::parse_config`] followed by
//! [`config::ProblemConfig::to_problem`] and [`solver::run_simulation`].

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod diagnostics;
pub mod eafe;
pub mod error;
pub mod fem;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod solver;

pub use config::{apply_overrides, parse_config, voltage_sweep, ProblemConfig, SweepPoint};
pub use diagnostics::DiagRecord;
pub use error::{Error, Result};
pub use fem::{ElemField, Field};
pub use linalg::{CsrMatrix, SolveReport};
pub use mesh::{
    build_rect_mesh, tag_boundary, BoundaryTag, Mesh, Point, PotentialBc, Side, SpeciesBc,
    TemperatureBc,
};
pub use solver::{
    initial_state, run_from, run_simulation, time_step, Coupling, PhysConstants, Problem, SimState,
    SolverControls, SpeciesParams, StepEvent, StepOutcome, Trajectory,
};
