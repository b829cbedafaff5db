use heatpnp_core::diagnostics::{current, total_mass};
use heatpnp_core::{
    apply_overrides, initial_state, parse_config, run_simulation, time_step, ProblemConfig,
};

fn channel(overrides: &[(&str, &str)]) -> ProblemConfig {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/channel_na_cl.cfg");
    let text = std::fs::read_to_string(path).unwrap();
    let pairs: Vec<(String, String)> = overrides
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    parse_config(&apply_overrides(&text, &pairs)).unwrap()
}

#[test]
fn steady_current_does_not_depend_on_the_cut() {
    let cfg = channel(&[
        ("mesh.nx", "40"),
        ("mesh.ny", "4"),
        ("solver.steady_tol", "1e-8"),
    ]);
    let problem = cfg.to_problem().unwrap();
    let traj = run_simulation(&problem).unwrap();
    assert!(traj.reached_steady);
    let s = &traj.final_state;
    let densities = s.densities();
    let cuts: Vec<f64> = [0.5, 2.0, 3.3, 5.0, 7.1, 9.5]
        .iter()
        .map(|&x| current(&problem.mesh, &problem.species, 1.0, &densities, &s.u, x).unwrap())
        .collect();
    let mean = cuts.iter().sum::<f64>() / cuts.len() as f64;
    assert!(mean < 0.0);
    for c in &cuts {
        assert!(((c - mean) / mean).abs() < 5e-3, "{cuts:?}");
    }
    let t = s.temperature();
    assert!(t.iter().all(|&x| x >= 1.0 - 1e-10));
    assert!(t.iter().any(|&x| x > 1.1));
}

#[test]
fn driven_closed_channel_keeps_its_ions() {
    let cfg = channel(&[("boundary.species_bc", "noflux"), ("solver.dt", "0.001")]);
    let problem = cfg.to_problem().unwrap();
    let mut state = initial_state(&problem).unwrap();
    for _ in 0..3 {
        let out = time_step(&problem, &state, 1e-3).unwrap();
        assert!(out.picard_iters <= problem.controls.picard_max_iter);
        state = out.state;
    }
    for i in 0..2 {
        let m = total_mass(&problem.mesh, &state.density(i));
        assert!(((m - 0.6) / 0.6).abs() <= 1e-10, "{m}");
    }
}
