//! Fixtures shared by the benchmarks.

use heatpnp_core::mesh::{BoundaryTag, PotentialBc, SpeciesBc, TemperatureBc};
use heatpnp_core::{
    build_rect_mesh, initial_state, tag_boundary, time_step, PhysConstants, Point, Problem,
    SimState, SolverControls, SpeciesParams,
};

/// The 10 x 1 sodium chloride channel with `nx x ny` cells and voltage `v`.
pub fn channel(nx: usize, ny: usize, v: f64) -> Problem {
    let mesh = build_rect_mesh(10.0, 1.0, nx, ny).expect("mesh");
    let electrode = |phi| {
        BoundaryTag::new(
            PotentialBc::Dirichlet(phi),
            TemperatureBc::Dirichlet(1.0),
            SpeciesBc::Dirichlet,
        )
    };
    let wall = BoundaryTag::new(
        PotentialBc::Neumann(0.0),
        TemperatureBc::Insulated,
        SpeciesBc::NoFlux,
    );
    let mesh = tag_boundary(
        mesh,
        &[
            (&|p: Point| p[0] == 0.0, electrode(0.0)),
            (&|p: Point| p[0] == 10.0, electrode(v)),
            (&|_| true, wall),
        ],
    )
    .expect("tags");
    let species = vec![
        SpeciesParams {
            name: "na".into(),
            z: 1.0,
            nu: 1.0 / 1.334,
            heat_capacity: 3.0,
            rho0: 0.06,
        },
        SpeciesParams {
            name: "cl".into(),
            z: -1.0,
            nu: 1.0 / 2.032,
            heat_capacity: 3.0,
            rho0: 0.06,
        },
    ];
    let constants = PhysConstants {
        k: 100.0,
        ..Default::default()
    };
    Problem::new(mesh, species, constants, SolverControls::default(), 1.0).expect("problem")
}

/// State after `steps` steps of size `dt`, so the fields are no longer uniform.
pub fn developed_state(problem: &Problem, steps: usize, dt: f64) -> SimState {
    let mut s = initial_state(problem).expect("initial state");
    for _ in 0..steps {
        s = time_step(problem, &s, dt).expect("step").state;
    }
    s
}
