//! Backward-Euler time stepping with a Picard sweep per step.
//!
//! The unknowns are the log-density `eta_i = log rho_i` of every species, the
//! log-temperature `xi = log T` and the potential `phi`. Each sweep solves,
//! in order, the species equations with the previous temperature and
//! potential, the Poisson equation with the new densities, the element
//! velocities, and the linearized temperature equation in divergence form.
//! Species and temperature systems are EAFE discretizations, so their solved
//! values are positive and the logarithms are well defined.

use crate::diagnostics::{self, DiagRecord};
use crate::eafe::{assemble_eafe, edge_potentials, EdgeAverage};
use crate::error::{Error, Result};
use crate::fem::{
    apply_dirichlet, assemble_robin, assemble_stiffness, element_load, element_means,
    element_to_nodal, gradient, lumped_mass, neumann_load, ElemField, Field,
};
use crate::linalg::{is_m_matrix, solve, CsrMatrix, SolveReport};
use crate::mesh::{Mesh, PotentialBc, SpeciesBc, TemperatureBc};

#[derive(Clone, Debug, PartialEq)]
pub struct SpeciesParams {
    pub name: String,
    /// Valence.
    pub z: f64,
    /// Friction coefficient.
    pub nu: f64,
    /// Heat-capacity coefficient.
    pub heat_capacity: f64,
    /// Initial (and Dirichlet reference) density.
    pub rho0: f64,
}

impl SpeciesParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::InvalidArgument(format!(
                "species {}: {what} must be positive, got {v}",
                self.name
            )))
        };
        if !(self.nu > 0.0) {
            return bad("nu", self.nu);
        }
        if !(self.heat_capacity > 0.0) {
            return bad("C", self.heat_capacity);
        }
        if !(self.rho0 > 0.0) {
            return bad("rho0", self.rho0);
        }
        if !self.z.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "species {}: z is not finite",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhysConstants {
    pub k_b: f64,
    pub e: f64,
    pub epsilon: f64,
    /// Heat conductance.
    pub k: f64,
    pub q_src: f64,
    /// Uniform fixed background charge.
    pub rho_f: f64,
    /// Recorded only.
    pub l_b: Option<f64>,
    /// Recorded only.
    pub c0_rho0: Option<f64>,
}

impl Default for PhysConstants {
    fn default() -> Self {
        Self {
            k_b: 1.0,
            e: 1.0,
            epsilon: 1.0,
            k: 1.0,
            q_src: 0.0,
            rho_f: 0.0,
            l_b: None,
            c0_rho0: None,
        }
    }
}

impl PhysConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k_B", self.k_b),
            ("e", self.e),
            ("epsilon", self.epsilon),
            ("k", self.k),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !self.q_src.is_finite() || !self.rho_f.is_finite() {
            return Err(Error::InvalidArgument(
                "q_src and rho_f must be finite".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverControls {
    pub dt: f64,
    pub dt_min: f64,
    pub t_end: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub linear_tol: f64,
    pub linear_max_iter: usize,
    /// Weight of the freshly solved values in each Picard update.
    pub relaxation: f64,
    /// Stop once `||state^j - state^{j-1}|| / dt` drops below this.
    pub steady_tol: Option<f64>,
    pub edge_average: EdgeAverage,
    /// Run `is_m_matrix` on every species and temperature system.
    pub check_m_matrix: bool,
}

impl Default for SolverControls {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            dt_min: 1e-9,
            t_end: 1.0,
            picard_tol: 1e-8,
            picard_max_iter: 100,
            linear_tol: crate::linalg::DEFAULT_LINEAR_TOL,
            linear_max_iter: 1000,
            relaxation: 1.0,
            steady_tol: None,
            edge_average: EdgeAverage::Arithmetic,
            check_m_matrix: false,
        }
    }
}

impl SolverControls {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("dt_min", self.dt_min),
            ("picard_tol", self.picard_tol),
            ("linear_tol", self.linear_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.dt_min > self.dt {
            return Err(Error::InvalidArgument(format!(
                "dt_min {} exceeds dt {}",
                self.dt_min, self.dt
            )));
        }
        if !(self.t_end >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "t_end must be nonnegative, got {}",
                self.t_end
            )));
        }
        if self.picard_max_iter == 0 || self.linear_max_iter == 0 {
            return Err(Error::InvalidArgument(
                "iteration limits must be at least 1".into(),
            ));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "relaxation must lie in (0, 1], got {}",
                self.relaxation
            )));
        }
        if let Some(s) = self.steady_tol {
            if !(s > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "steady_tol must be positive, got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// Which parts of the coupled system are updated; frozen parts keep the
/// values of the initial state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Coupling {
    pub species: bool,
    pub poisson: bool,
    pub velocity: bool,
    pub temperature: bool,
}

impl Default for Coupling {
    fn default() -> Self {
        Self {
            species: true,
            poisson: true,
            velocity: true,
            temperature: true,
        }
    }
}

/// A tagged mesh with everything needed to step the coupled system.
#[derive(Clone, Debug)]
pub struct Problem {
    pub mesh: Mesh,
    pub species: Vec<SpeciesParams>,
    pub constants: PhysConstants,
    pub controls: SolverControls,
    /// Initial interior temperature.
    pub initial_temperature: f64,
    pub coupling: Coupling,
    /// Abscissa of the cross-section used for the channel current.
    pub current_x: f64,
    /// Per-vertex Dirichlet temperatures replacing the values of the tags.
    temperature_data: Option<Vec<(usize, f64)>>,
}

impl Problem {
    pub fn new(
        mesh: Mesh,
        species: Vec<SpeciesParams>,
        constants: PhysConstants,
        controls: SolverControls,
        initial_temperature: f64,
    ) -> Result<Problem> {
        let current_x = {
            let (lo, hi) = x_range(&mesh);
            0.5 * (lo + hi)
        };
        let p = Problem {
            mesh,
            species,
            constants,
            controls,
            initial_temperature,
            coupling: Coupling::default(),
            current_x,
            temperature_data: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.species.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one species is required".into(),
            ));
        }
        for s in &self.species {
            s.validate()?;
        }
        self.constants.validate()?;
        self.controls.validate()?;
        if !(self.initial_temperature > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "initial temperature must be positive, got {}",
                self.initial_temperature
            )));
        }
        if !self.mesh.is_tagged() {
            return Err(Error::Config("every boundary edge needs a tag".into()));
        }
        let mut anchored = false;
        for (_, tag) in self.mesh.boundary_tags() {
            let tag = tag.expect("tagged");
            match tag.potential {
                PotentialBc::Dirichlet(_) => anchored = true,
                PotentialBc::Robin { kappa, .. } if kappa > 0.0 => anchored = true,
                PotentialBc::Robin { kappa, .. } if kappa < 0.0 => {
                    return Err(Error::Config(format!(
                        "Robin kappa must be nonnegative, got {kappa}"
                    )))
                }
                _ => {}
            }
            if let TemperatureBc::Dirichlet(t) = tag.temperature {
                if !(t > 0.0) {
                    return Err(Error::Config(format!(
                        "Dirichlet temperature must be positive, got {t}"
                    )));
                }
            }
        }
        if self.coupling.poisson && !anchored {
            return Err(Error::Config(
                "the potential needs a Dirichlet or Robin boundary part to be well posed".into(),
            ));
        }
        Ok(())
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    /// Prescribes vertex-wise Dirichlet temperatures. The vertices must be
    /// exactly those of the Dirichlet-tagged temperature boundary.
    pub fn set_temperature_data(&mut self, data: Vec<(usize, f64)>) -> Result<()> {
        let mut expected: Vec<usize> = self
            .tagged_temperature()?
            .into_iter()
            .map(|(v, _)| v)
            .collect();
        let mut given: Vec<usize> = data.iter().map(|&(v, _)| v).collect();
        expected.sort_unstable();
        given.sort_unstable();
        if expected != given {
            return Err(Error::Config(format!(
                "temperature data covers {} vertices, the Dirichlet boundary has {}",
                given.len(),
                expected.len()
            )));
        }
        if let Some(&(v, t)) = data.iter().find(|&&(_, t)| !(t > 0.0) || !t.is_finite()) {
            return Err(Error::Config(format!(
                "Dirichlet temperature {t} at vertex {v} is not positive"
            )));
        }
        self.temperature_data = Some(data);
        Ok(())
    }

    pub fn temperature_dirichlet(&self) -> Result<Vec<(usize, f64)>> {
        match &self.temperature_data {
            Some(d) => Ok(d.clone()),
            None => self.tagged_temperature(),
        }
    }

    fn tagged_temperature(&self) -> Result<Vec<(usize, f64)>> {
        self.mesh.boundary_vertex_values(|t| match t.temperature {
            TemperatureBc::Dirichlet(v) => Some(v),
            TemperatureBc::Insulated => None,
        })
    }

    pub fn potential_dirichlet(&self) -> Result<Vec<(usize, f64)>> {
        self.mesh.boundary_vertex_values(|t| match t.potential {
            PotentialBc::Dirichlet(v) => Some(v),
            _ => None,
        })
    }

    pub fn species_dirichlet(&self, i: usize) -> Result<Vec<(usize, f64)>> {
        let rho0 = self.species[i].rho0;
        self.mesh
            .boundary_vertex_values(|t| (t.species == SpeciesBc::Dirichlet).then_some(rho0))
    }

    /// Whether any boundary edge pins the densities.
    pub fn has_density_dirichlet(&self) -> bool {
        self.mesh
            .boundary_tags()
            .any(|(_, t)| t.is_some_and(|t| t.species == SpeciesBc::Dirichlet))
    }
}

pub(crate) fn x_range(mesh: &Mesh) -> (f64, f64) {
    mesh.vertices()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p[0]), hi.max(p[0]))
        })
}

/// Unknowns at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub time: f64,
    pub phi: Field,
    /// Log-density per species.
    pub eta: Vec<Field>,
    /// Log-temperature.
    pub xi: Field,
    /// Element velocity per species.
    pub u: Vec<ElemField>,
    pub picard_iters_last: usize,
    pub dt_last: f64,
}

impl SimState {
    pub fn density(&self, i: usize) -> Field {
        self.eta[i].iter().map(|e| e.exp()).collect()
    }

    pub fn densities(&self) -> Vec<Field> {
        (0..self.eta.len()).map(|i| self.density(i)).collect()
    }

    pub fn temperature(&self) -> Field {
        self.xi.iter().map(|x| x.exp()).collect()
    }

    /// Replaces the log-temperature by the logarithm of `t`.
    pub fn set_temperature(&mut self, t: &[f64]) -> Result<()> {
        self.xi = checked_log("temperature", t, "")?;
        Ok(())
    }

    pub fn set_density(&mut self, i: usize, rho: &[f64]) -> Result<()> {
        self.eta[i] = checked_log("density", rho, "")?;
        Ok(())
    }
}

fn checked_log(quantity: &'static str, values: &[f64], detail: &str) -> Result<Field> {
    values
        .iter()
        .enumerate()
        .map(|(v, &x)| {
            if x > 0.0 && x.is_finite() {
                Ok(x.ln())
            } else {
                Err(Error::NonPositive {
                    quantity,
                    vertex: v,
                    value: x,
                    detail: detail.to_string(),
                })
            }
        })
        .collect()
}

/// Initial state: uniform densities and temperature (Dirichlet values on the
/// boundary), potential from the Poisson equation, matching velocities.
pub fn initial_state(problem: &Problem) -> Result<SimState> {
    let n = problem.mesh.n_vertices();
    let mut t = vec![problem.initial_temperature; n];
    for (v, value) in problem.temperature_dirichlet()? {
        t[v] = value;
    }
    let densities: Vec<Field> = problem.species.iter().map(|s| vec![s.rho0; n]).collect();
    let phi = if problem.coupling.poisson {
        solve_poisson(problem, &densities)?
    } else {
        vec![0.0; n]
    };
    let mut state = SimState {
        time: 0.0,
        phi,
        eta: densities
            .iter()
            .map(|d| d.iter().map(|x| x.ln()).collect())
            .collect(),
        xi: t.iter().map(|x| x.ln()).collect(),
        u: vec![vec![[0.0; 2]; problem.mesh.n_elements()]; problem.n_species()],
        picard_iters_last: 0,
        dt_last: 0.0,
    };
    if problem.coupling.velocity {
        refresh_velocities(problem, &mut state)?;
    }
    Ok(state)
}

/// Recomputes every species velocity from the state's own fields.
pub fn refresh_velocities(problem: &Problem, state: &mut SimState) -> Result<()> {
    let t = state.temperature();
    for i in 0..problem.n_species() {
        state.u[i] = compute_velocity(problem, i, &state.density(i), &t, &state.phi)?;
    }
    Ok(())
}

/// One assembled and solved linear system.
#[derive(Clone, Debug)]
pub struct SystemInfo {
    pub report: SolveReport,
    /// Result of `is_m_matrix` when the check is enabled.
    pub m_matrix: Option<bool>,
}

fn solve_system(
    problem: &Problem,
    context: &str,
    a: &CsrMatrix,
    b: &[f64],
    check: bool,
) -> Result<(Vec<f64>, SystemInfo)> {
    let m_matrix = check.then(|| is_m_matrix(a, 1e-12));
    let c = &problem.controls;
    match solve(a, b, c.linear_tol, c.linear_max_iter) {
        Ok((x, report)) => Ok((x, SystemInfo { report, m_matrix })),
        Err(Error::Solve { report, .. }) => Err(Error::Solve {
            context: context.to_string(),
            report,
        }),
        Err(e) => Err(e),
    }
}

/// Potential for the given densities.
pub fn solve_poisson(problem: &Problem, densities: &[Field]) -> Result<Field> {
    let mesh = &problem.mesh;
    let pc = &problem.constants;
    let n = mesh.n_vertices();
    let k = assemble_stiffness(mesh, &vec![pc.epsilon; mesh.n_elements()])?;
    let (robin, robin_load) = assemble_robin(mesh);
    let a = k.add(&robin)?;
    let mut charge = vec![pc.rho_f; n];
    for (s, rho) in problem.species.iter().zip(densities) {
        for (q, r) in charge.iter_mut().zip(rho) {
            *q += s.z * pc.e * r;
        }
    }
    let neumann = neumann_load(mesh);
    let b: Vec<f64> = lumped_mass(mesh, &charge)
        .iter()
        .zip(&robin_load)
        .zip(&neumann)
        .map(|((q, r), s)| q + r + s)
        .collect();
    let (a, b) = apply_dirichlet(&a, &b, &problem.potential_dirichlet()?)?;
    let (phi, _) = solve_system(problem, "poisson", &a, &b, false)?;
    Ok(phi)
}

/// New density of species `i` from the previous-step density `rho_prev`,
/// with temperature and potential lagged from the previous Picard iterate.
pub fn solve_species(
    problem: &Problem,
    i: usize,
    rho_prev: &[f64],
    xi: &[f64],
    phi: &[f64],
    dt: f64,
) -> Result<(Field, SystemInfo)> {
    let mesh = &problem.mesh;
    let pc = &problem.constants;
    let s = &problem.species[i];
    let t: Vec<f64> = xi.iter().map(|x| x.exp()).collect();
    let a: Vec<f64> = element_means(mesh, &t)
        .iter()
        .map(|tm| pc.k_b * tm / s.nu)
        .collect();
    let ze = s.z * pc.e;
    let psi: Vec<f64> = mesh
        .edges()
        .iter()
        .map(|edge| {
            let [p, q] = edge.vertices;
            let t_e = 0.5 * (t[p] + t[q]);
            (xi[q] - xi[p]) + ze * (phi[q] - phi[p]) / (pc.k_b * t_e)
        })
        .collect();
    let inv_dt = vec![1.0 / dt; mesh.n_vertices()];
    let a_mat = assemble_eafe(mesh, &a, &psi, Some(&inv_dt))?;
    let b: Vec<f64> = lumped_mass(mesh, rho_prev).iter().map(|m| m / dt).collect();
    let (a_mat, b) = apply_dirichlet(&a_mat, &b, &problem.species_dirichlet(i)?)?;
    let context = format!("species {}", s.name);
    let (rho, info) = solve_system(
        problem,
        &context,
        &a_mat,
        &b,
        problem.controls.check_m_matrix,
    )?;
    if let Some(v) = rho.iter().position(|&r| !(r > 0.0) || !r.is_finite()) {
        return Err(Error::NonPositive {
            quantity: "density",
            vertex: v,
            value: rho[v],
            detail: format!(
                "species {} at ({}, {}); system M-matrix check: {:?}",
                s.name,
                mesh.vertex(v)[0],
                mesh.vertex(v)[1],
                info.m_matrix
            ),
        });
    }
    Ok((rho, info))
}

/// Element velocities `u = -(k_B grad(rho T) + z e rho grad(phi)) / (nu rho)`.
pub fn compute_velocity(
    problem: &Problem,
    i: usize,
    rho: &[f64],
    t: &[f64],
    phi: &[f64],
) -> Result<ElemField> {
    let mesh = &problem.mesh;
    let pc = &problem.constants;
    let s = &problem.species[i];
    let rho_t: Vec<f64> = rho.iter().zip(t).map(|(r, t)| r * t).collect();
    let means = element_means(mesh, rho);
    (0..mesh.n_elements())
        .map(|e| {
            let rbar = means[e];
            if !(rbar >= 1e-300) {
                return Err(Error::Underflow {
                    element: e,
                    value: rbar,
                });
            }
            let g = gradient(mesh, e, &rho_t);
            let gp = gradient(mesh, e, phi);
            let ze = s.z * pc.e;
            let scale = -1.0 / (s.nu * rbar);
            Ok([
                scale * (pc.k_b * g[0] + ze * rbar * gp[0]),
                scale * (pc.k_b * g[1] + ze * rbar * gp[1]),
            ])
        })
        .collect()
}

/// Nodal reaction coefficient of the temperature equation,
/// `k_B sum_i C_i rho_i / dt - sum_i grad(rho_i) . u_i`.
pub fn temperature_reaction(
    problem: &Problem,
    densities: &[Field],
    u: &[ElemField],
    dt: f64,
) -> Vec<f64> {
    let mesh = &problem.mesh;
    let mut transport = vec![0.0; mesh.n_elements()];
    for (rho, ui) in densities.iter().zip(u) {
        for (e, tr) in transport.iter_mut().enumerate() {
            let g = gradient(mesh, e, rho);
            *tr += g[0] * ui[e][0] + g[1] * ui[e][1];
        }
    }
    let transport = element_to_nodal(mesh, &transport);
    (0..mesh.n_vertices())
        .map(|v| {
            let capacity: f64 = problem
                .species
                .iter()
                .zip(densities)
                .map(|(s, rho)| s.heat_capacity * rho[v])
                .sum();
            problem.constants.k_b * capacity / dt - transport[v]
        })
        .collect()
}

/// Joule heating `sum_i nu_i rho_i |u_i|^2` per element, with element-mean densities.
pub fn joule_heating(problem: &Problem, densities: &[Field], u: &[ElemField]) -> Vec<f64> {
    let mesh = &problem.mesh;
    let mut heat = vec![0.0; mesh.n_elements()];
    for ((s, rho), ui) in problem.species.iter().zip(densities).zip(u) {
        let means = element_means(mesh, rho);
        for (e, h) in heat.iter_mut().enumerate() {
            *h += s.nu * means[e] * (ui[e][0] * ui[e][0] + ui[e][1] * ui[e][1]);
        }
    }
    heat
}

/// New temperature from current densities and velocities; `t_prev` is the
/// temperature at the previous time level.
pub fn solve_temperature(
    problem: &Problem,
    densities: &[Field],
    u: &[ElemField],
    t_prev: &[f64],
    dt: f64,
) -> Result<(Field, SystemInfo)> {
    let mesh = &problem.mesh;
    let pc = &problem.constants;
    let ne = mesh.n_elements();
    let a = vec![pc.k; ne];
    let mut beta = vec![[0.0; 2]; ne];
    for ((s, rho), ui) in problem.species.iter().zip(densities).zip(u) {
        let means = element_means(mesh, rho);
        for e in 0..ne {
            let w = -pc.k_b * s.heat_capacity * means[e];
            beta[e][0] += w * ui[e][0];
            beta[e][1] += w * ui[e][1];
        }
    }
    let psi = edge_potentials(mesh, &a, Some(&beta), None, problem.controls.edge_average)?;
    let c = temperature_reaction(problem, densities, u, dt);
    let a_mat = assemble_eafe(mesh, &a, &psi, Some(&c))?;
    let joule = element_load(mesh, &joule_heating(problem, densities, u));
    let n = mesh.n_vertices();
    let mut rhs_nodal = vec![pc.q_src; n];
    for (v, r) in rhs_nodal.iter_mut().enumerate() {
        let capacity: f64 = problem
            .species
            .iter()
            .zip(densities)
            .map(|(s, rho)| s.heat_capacity * rho[v])
            .sum();
        *r += pc.k_b * capacity * t_prev[v] / dt;
    }
    let b: Vec<f64> = lumped_mass(mesh, &rhs_nodal)
        .iter()
        .zip(&joule)
        .map(|(m, j)| m + j)
        .collect();
    let (a_mat, b) = apply_dirichlet(&a_mat, &b, &problem.temperature_dirichlet()?)?;
    let (t, info) = solve_system(
        problem,
        "temperature",
        &a_mat,
        &b,
        problem.controls.check_m_matrix,
    )?;
    if let Some(v) = t.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::NonPositive {
            quantity: "temperature",
            vertex: v,
            value: t[v],
            detail: format!("system M-matrix check: {:?}", info.m_matrix),
        });
    }
    Ok((t, info))
}

/// Outcome of one Picard sweep.
#[derive(Clone, Debug)]
pub struct SweepReport {
    /// Lumped-weighted L2 change of each log-density.
    pub eta_change: Vec<f64>,
    /// Lumped-weighted L2 change of the log-temperature.
    pub xi_change: f64,
    /// Smallest nodal temperature of the new iterate.
    pub t_min: f64,
    pub systems: Vec<SystemInfo>,
}

impl SweepReport {
    pub fn max_change(&self) -> f64 {
        self.eta_change
            .iter()
            .fold(self.xi_change, |m, &c| m.max(c))
    }
}

pub(crate) fn weighted_l2(mesh: &Mesh, a: &[f64], b: &[f64]) -> f64 {
    mesh.vertex_weights()
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn relax(omega: f64, new: &[f64], old: &[f64]) -> Vec<f64> {
    if omega == 1.0 {
        return new.to_vec();
    }
    new.iter()
        .zip(old)
        .map(|(n, o)| omega * n + (1.0 - omega) * o)
        .collect()
}

/// One Picard sweep from `iterate` towards the step that starts at `prev`.
/// Returns the new iterate and whether both convergence criteria hold.
pub fn picard_step(
    problem: &Problem,
    prev: &SimState,
    iterate: &SimState,
    dt: f64,
) -> Result<(SimState, bool, SweepReport)> {
    let mesh = &problem.mesh;
    let omega = problem.controls.relaxation;
    let coupling = problem.coupling;
    let mut next = iterate.clone();
    let mut systems = Vec::new();

    let old_densities = iterate.densities();
    let mut densities = old_densities.clone();
    if coupling.species {
        for i in 0..problem.n_species() {
            let (rho, info) =
                solve_species(problem, i, &prev.density(i), &iterate.xi, &iterate.phi, dt)?;
            systems.push(info);
            densities[i] = relax(omega, &rho, &old_densities[i]);
            next.eta[i] = checked_log("density", &densities[i], "after relaxation")?;
        }
    }

    if coupling.poisson {
        next.phi = solve_poisson(problem, &densities)?;
    }

    let t_old = iterate.temperature();
    if coupling.velocity {
        for i in 0..problem.n_species() {
            next.u[i] = compute_velocity(problem, i, &densities[i], &t_old, &next.phi)?;
        }
    }

    let mut t_new = t_old.clone();
    if coupling.temperature {
        let (t, info) = solve_temperature(problem, &densities, &next.u, &prev.temperature(), dt)?;
        systems.push(info);
        t_new = relax(omega, &t, &t_old);
        next.xi = checked_log("temperature", &t_new, "after relaxation")?;
    }

    let eta_change: Vec<f64> = (0..problem.n_species())
        .map(|i| weighted_l2(mesh, &next.eta[i], &iterate.eta[i]))
        .collect();
    let xi_change = weighted_l2(mesh, &next.xi, &iterate.xi);
    let tol = problem.controls.picard_tol;
    let converged = xi_change <= tol && eta_change.iter().all(|&c| c <= tol);
    let t_min = t_new.iter().copied().fold(f64::INFINITY, f64::min);
    let report = SweepReport {
        eta_change,
        xi_change,
        t_min,
        systems,
    };
    if !report.max_change().is_finite() {
        return Err(Error::PicardDiverged {
            iterations: 1,
            change: report.max_change(),
        });
    }
    Ok((next, converged, report))
}

/// An accepted time step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: SimState,
    pub dt: f64,
    pub picard_iters: usize,
    /// Number of halvings before acceptance.
    pub retries: usize,
    pub sweeps: Vec<SweepReport>,
}

fn attempt_step(problem: &Problem, state: &SimState, dt: f64) -> Result<StepOutcome> {
    let mut iterate = state.clone();
    let mut sweeps = Vec::new();
    let max_iter = problem.controls.picard_max_iter;
    for k in 1..=max_iter {
        let (next, converged, report) = picard_step(problem, state, &iterate, dt)?;
        let change = report.max_change();
        sweeps.push(report);
        iterate = next;
        if converged {
            iterate.time = state.time + dt;
            iterate.picard_iters_last = k;
            iterate.dt_last = dt;
            if problem.coupling.velocity {
                refresh_velocities(problem, &mut iterate)?;
            }
            return Ok(StepOutcome {
                state: iterate,
                dt,
                picard_iters: k,
                retries: 0,
                sweeps,
            });
        }
        if k == max_iter {
            return Err(Error::PicardDiverged {
                iterations: k,
                change,
            });
        }
    }
    unreachable!("picard_max_iter is at least 1")
}

/// Advances by `dt`, halving it on recoverable failures.
pub fn time_step(problem: &Problem, state: &SimState, dt: f64) -> Result<StepOutcome> {
    let mut dt_try = dt;
    let mut retries = 0;
    loop {
        match attempt_step(problem, state, dt_try) {
            Ok(mut out) => {
                out.retries = retries;
                return Ok(out);
            }
            Err(e) if e.is_step_recoverable() => {
                dt_try *= 0.5;
                retries += 1;
                if dt_try < problem.controls.dt_min {
                    return Err(Error::StepUnderflow {
                        time: state.time,
                        dt: dt_try,
                        dt_min: problem.controls.dt_min,
                        cause: Box::new(e),
                    });
                }
            }
            Err(e) => return Err(e),
        }
    }
}

/// Lumped-weighted change between two states over all log variables.
pub fn state_change(problem: &Problem, a: &SimState, b: &SimState) -> f64 {
    let mesh = &problem.mesh;
    let mut sq = weighted_l2(mesh, &a.xi, &b.xi).powi(2);
    for (x, y) in a.eta.iter().zip(&b.eta) {
        sq += weighted_l2(mesh, x, y).powi(2);
    }
    sq.sqrt()
}

/// Passed to the observer after the initial state and every accepted step.
pub struct StepEvent<'a> {
    /// 0 for the initial state.
    pub step: usize,
    pub state: &'a SimState,
    pub record: &'a DiagRecord,
    pub outcome: Option<&'a StepOutcome>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub records: Vec<DiagRecord>,
    pub final_state: SimState,
    pub steps: usize,
    /// Whether the steady-state criterion stopped the run early.
    pub reached_steady: bool,
}

/// Runs from the initial state to `t_end`.
pub fn run_simulation(problem: &Problem) -> Result<Trajectory> {
    let state = initial_state(problem)?;
    run_from(problem, state, |_| Ok(()))
}

/// Runs from `state` to `t_end`, calling `observer` on every record.
pub fn run_from(
    problem: &Problem,
    mut state: SimState,
    mut observer: impl FnMut(&StepEvent) -> Result<()>,
) -> Result<Trajectory> {
    let controls = &problem.controls;
    let mut records = Vec::new();
    let first = diagnostics::record(problem, &state)?;
    observer(&StepEvent {
        step: 0,
        state: &state,
        record: &first,
        outcome: None,
    })?;
    records.push(first);
    let mut dt = controls.dt;
    let mut steps = 0;
    let mut reached_steady = false;
    let t_end = controls.t_end;
    while t_end - state.time > 1e-12 * controls.dt {
        let dt_try = dt.min(t_end - state.time);
        let out = time_step(problem, &state, dt_try)?;
        steps += 1;
        let change = state_change(problem, &out.state, &state) / out.dt;
        // Regrow after halvings, never beyond the configured step.
        dt = if out.retries > 0 {
            out.dt
        } else {
            (2.0 * dt).min(controls.dt)
        };
        let rec = diagnostics::record(problem, &out.state)?;
        observer(&StepEvent {
            step: steps,
            state: &out.state,
            record: &rec,
            outcome: Some(&out),
        })?;
        records.push(rec);
        state = out.state;
        if let Some(tol) = controls.steady_tol {
            if change <= tol {
                reached_steady = true;
                break;
            }
        }
    }
    Ok(Trajectory {
        records,
        final_state: state,
        steps,
        reached_steady,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_rect_mesh, tag_boundary, BoundaryTag, Point};

    fn channel(phi_right: f64, species_bc: SpeciesBc) -> Mesh {
        let m = build_rect_mesh(10.0, 1.0, 20, 4).unwrap();
        let left = BoundaryTag::new(
            PotentialBc::Dirichlet(0.0),
            TemperatureBc::Dirichlet(1.0),
            species_bc,
        );
        let right = BoundaryTag::new(
            PotentialBc::Dirichlet(phi_right),
            TemperatureBc::Dirichlet(1.0),
            species_bc,
        );
        let wall = BoundaryTag::new(
            PotentialBc::Neumann(0.0),
            TemperatureBc::Dirichlet(1.0),
            SpeciesBc::NoFlux,
        );
        tag_boundary(
            m,
            &[
                (&|p: Point| p[0] == 0.0, left),
                (&|p: Point| p[0] == 10.0, right),
                (&|_| true, wall),
            ],
        )
        .unwrap()
    }

    fn pair() -> Vec<SpeciesParams> {
        vec![
            SpeciesParams {
                name: "plus".into(),
                z: 1.0,
                nu: 1.0,
                heat_capacity: 1.0,
                rho0: 0.06,
            },
            SpeciesParams {
                name: "minus".into(),
                z: -1.0,
                nu: 1.0,
                heat_capacity: 1.0,
                rho0: 0.06,
            },
        ]
    }

    fn problem(phi_right: f64) -> Problem {
        Problem::new(
            channel(phi_right, SpeciesBc::NoFlux),
            pair(),
            PhysConstants::default(),
            SolverControls::default(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn poisson_linear_profile() {
        let p = problem(100.0);
        let zero = vec![vec![0.0; p.mesh.n_vertices()]; 2];
        let phi = solve_poisson(&p, &zero).unwrap();
        for (v, q) in p.mesh.vertices().iter().enumerate() {
            assert!((phi[v] - 10.0 * q[0]).abs() < 1e-9);
        }
        // Opposite charges with identical densities cancel.
        let same = vec![vec![0.3; p.mesh.n_vertices()]; 2];
        let phi2 = solve_poisson(&p, &same).unwrap();
        for (a, b) in phi.iter().zip(&phi2) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn poisson_requires_anchor() {
        let m = tag_boundary(
            build_rect_mesh(1.0, 1.0, 2, 2).unwrap(),
            &[(
                &|_| true,
                BoundaryTag::new(
                    PotentialBc::Neumann(0.0),
                    TemperatureBc::Dirichlet(1.0),
                    SpeciesBc::NoFlux,
                ),
            )],
        )
        .unwrap();
        let err = Problem::new(
            m,
            pair(),
            PhysConstants::default(),
            SolverControls::default(),
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn uniform_species_is_steady() {
        let p = problem(0.0);
        let n = p.mesh.n_vertices();
        let rho = vec![0.06; n];
        let (new, info) = solve_species(&p, 0, &rho, &vec![0.0; n], &vec![0.0; n], 1e-3).unwrap();
        assert!(info.report.converged);
        assert!(new.iter().all(|r| (r - 0.06).abs() < 1e-14));
    }

    #[test]
    fn species_conserves_mass() {
        let p = problem(50.0);
        let rho: Vec<f64> = p
            .mesh
            .vertices()
            .iter()
            .map(|q| 0.05 + 0.01 * (q[0] * q[1]).sin())
            .collect();
        let xi: Vec<f64> = p
            .mesh
            .vertices()
            .iter()
            .map(|q| 0.1 * q[0] / 10.0)
            .collect();
        let phi: Vec<f64> = p.mesh.vertices().iter().map(|q| 5.0 * q[0]).collect();
        let (new, _) = solve_species(&p, 1, &rho, &xi, &phi, 1e-2).unwrap();
        let m0 = crate::fem::integrate(&p.mesh, &rho);
        let m1 = crate::fem::integrate(&p.mesh, &new);
        assert!(((m1 - m0) / m0).abs() < 1e-10);
    }

    #[test]
    fn velocity_examples() {
        let p = problem(100.0);
        let n = p.mesh.n_vertices();
        let ones = vec![1.0; n];
        let u = compute_velocity(&p, 0, &vec![0.3; n], &ones, &vec![2.0; n]).unwrap();
        assert!(u.iter().all(|v| v[0].abs() < 1e-14 && v[1].abs() < 1e-14));

        let phi: Vec<f64> = p.mesh.vertices().iter().map(|q| 10.0 * q[0]).collect();
        let u = compute_velocity(&p, 0, &vec![0.06; n], &ones, &phi).unwrap();
        assert!(u
            .iter()
            .all(|v| (v[0] + 10.0).abs() < 1e-10 && v[1].abs() < 1e-10));

        let rho: Vec<f64> = p.mesh.vertices().iter().map(|q| 1.0 + q[0]).collect();
        let u = compute_velocity(&p, 0, &rho, &ones, &vec![0.0; n]).unwrap();
        for (e, v) in u.iter().enumerate() {
            let xc = p.mesh.centroid(e)[0];
            assert!((v[0] + 1.0 / (1.0 + xc)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_temperature_is_preserved() {
        let p = problem(0.0);
        let n = p.mesh.n_vertices();
        let dens = vec![vec![0.06; n]; 2];
        let u = vec![vec![[0.0; 2]; p.mesh.n_elements()]; 2];
        let (t, _) = solve_temperature(&p, &dens, &u, &vec![1.0; n], 1e-3).unwrap();
        assert!(t.iter().all(|x| (x - 1.0).abs() < 1e-13));
    }

    #[test]
    fn vertex_temperature_data() {
        let mut p = problem(0.0);
        let mut data = p.temperature_dirichlet().unwrap();
        for (v, t) in data.iter_mut() {
            *t = 1.0 + p.mesh.vertex(*v)[0];
        }
        assert!(p.set_temperature_data(data[1..].to_vec()).is_err());
        let mut bad = data.clone();
        bad[0].1 = -1.0;
        assert!(p.set_temperature_data(bad).is_err());
        p.set_temperature_data(data.clone()).unwrap();
        let s = initial_state(&p).unwrap();
        let t = s.temperature();
        for &(v, value) in &data {
            assert!((t[v] - value).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_voltage_converges_immediately() {
        let p = problem(0.0);
        let s = initial_state(&p).unwrap();
        let out = time_step(&p, &s, 1e-3).unwrap();
        assert!(out.picard_iters <= 2);
        assert_eq!(out.retries, 0);
        assert!((out.state.time - 1e-3).abs() < 1e-18);
        assert!(state_change(&p, &s, &out.state) < 1e-12);
    }

    #[test]
    fn driven_steps_conserve_mass() {
        let p = problem(100.0);
        let s0 = initial_state(&p).unwrap();
        let m0: Vec<f64> = (0..2)
            .map(|i| crate::fem::integrate(&p.mesh, &s0.density(i)))
            .collect();
        let mut s = s0;
        for _ in 0..3 {
            s = time_step(&p, &s, 1e-3).unwrap().state;
        }
        for i in 0..2 {
            let m = crate::fem::integrate(&p.mesh, &s.density(i));
            assert!(((m - m0[i]) / m0[i]).abs() < 1e-10);
            assert!((m0[i] - 0.6).abs() < 1e-12);
        }
    }

    #[test]
    fn huge_step_is_halved() {
        let mut p = problem(400.0);
        p.controls.dt = 50.0;
        p.controls.picard_max_iter = 8;
        p.controls.dt_min = 1e-8;
        let s = initial_state(&p).unwrap();
        let out = time_step(&p, &s, 50.0).unwrap();
        assert!(out.retries >= 1, "dt accepted without halving");
        assert!(out.dt < 50.0);
    }

    #[test]
    fn step_underflow_is_reported() {
        let mut p = problem(400.0);
        p.controls.picard_max_iter = 1;
        p.controls.picard_tol = 1e-300;
        p.controls.dt_min = 1e-4;
        let s = initial_state(&p).unwrap();
        let err = time_step(&p, &s, 1e-3).unwrap_err();
        assert!(matches!(err, Error::StepUnderflow { .. }));
    }

    #[test]
    fn zero_end_time_yields_initial_record() {
        let mut p = problem(10.0);
        p.controls.t_end = 0.0;
        let traj = run_simulation(&p).unwrap();
        assert_eq!(traj.records.len(), 1);
        assert_eq!(traj.steps, 0);
    }

    #[test]
    fn run_clamps_last_step() {
        let mut p = problem(10.0);
        p.controls.t_end = 2.5e-3;
        let traj = run_simulation(&p).unwrap();
        assert_eq!(traj.steps, 3);
        assert!((traj.final_state.time - 2.5e-3).abs() < 1e-15);
    }
}
