//! Plain-text problem configuration.
//!
//! One `section.key = value` assignment per line, `#` starts a comment.
//! Species blocks are `species.<name>.<key>` and keep the order in which
//! their names first appear. Unknown and repeated keys are rejected.
//!
//! ```text
//! mesh.Lx = 10
//! mesh.Ly = 1
//! mesh.nx = 100
//! mesh.ny = 10
//! constants.epsilon = 1
//! constants.k = 100
//! species.na.z = 1
//! species.na.nu = 0.7496
//! species.na.C = 3
//! species.na.rho0 = 0.06
//! boundary.phi_left = 0
//! boundary.phi_right = 100
//! boundary.T_dirichlet = 1
//! solver.t_end = 5
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::eafe::EdgeAverage;
use crate::error::{Error, Result};
use crate::mesh::{
    build_rect_mesh, tag_boundary, BoundaryTag, Point, PotentialBc, Side, SpeciesBc, TemperatureBc,
};
use crate::solver::{run_simulation, PhysConstants, Problem, SolverControls, SpeciesParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshConfig {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

/// Potential condition of one side; Neumann and Robin data are shared.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SidePotential {
    Dirichlet(f64),
    Neumann,
    Robin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SideTemperature {
    Dirichlet,
    Insulated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryConfig {
    /// Indexed like [`Side::ALL`]: left, right, bottom, top.
    pub phi: [SidePotential; 4],
    pub phi_neumann_value: f64,
    pub robin_kappa: f64,
    pub robin_c: f64,
    pub t_dirichlet: f64,
    /// Indexed like [`Side::ALL`].
    pub temperature: [SideTemperature; 4],
    /// Applied on sides with a Dirichlet potential; other sides are no-flux.
    pub species_bc: SpeciesBc,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OutputConfig {
    pub csv_path: Option<PathBuf>,
    /// 0 disables snapshots.
    pub vtk_every_n_steps: usize,
    pub snapshot_dir: Option<PathBuf>,
    /// Cross-section of the current diagnostic; defaults to mid-channel.
    pub current_x: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemConfig {
    pub mesh: MeshConfig,
    pub constants: PhysConstants,
    pub species: Vec<SpeciesParams>,
    pub boundary: BoundaryConfig,
    pub initial_temperature: f64,
    pub solver: SolverControls,
    pub output: OutputConfig,
}

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

struct Doc {
    entries: HashMap<String, Entry>,
    species_order: Vec<String>,
}

fn key_error(line: usize, key: &str, message: impl Into<String>) -> Error {
    Error::ConfigKey {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

impl Doc {
    fn parse(text: &str) -> Result<Doc> {
        let mut entries = HashMap::new();
        let mut species_order = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(key_error(line, content, "expected `key = value`"));
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(key_error(line, key, "empty key"));
            }
            if value.is_empty() {
                return Err(key_error(line, key, "empty value"));
            }
            if let Some(rest) = key.strip_prefix("species.") {
                let name = rest.split('.').next().unwrap_or("");
                let valid =
                    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
                if !valid || rest.split('.').count() != 2 {
                    return Err(key_error(
                        line,
                        key,
                        "species keys are species.<name>.<z|nu|C|rho0>",
                    ));
                }
                if !species_order.iter().any(|s| s == name) {
                    species_order.push(name.to_string());
                }
            }
            if let Some(prev) = entries.get(key).map(|e: &Entry| e.line) {
                return Err(key_error(
                    line,
                    key,
                    format!("duplicate key, first set on line {prev}"),
                ));
            }
            entries.insert(
                key.to_string(),
                Entry {
                    line,
                    value: value.to_string(),
                    used: false,
                },
            );
        }
        Ok(Doc {
            entries,
            species_order,
        })
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.line, e.value.clone())
        })
    }

    fn f64_opt(&mut self, key: &str) -> Result<Option<(usize, f64)>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => {
                let x: f64 = v
                    .parse()
                    .map_err(|_| key_error(line, key, format!("expected a number, got `{v}`")))?;
                if !x.is_finite() {
                    return Err(key_error(
                        line,
                        key,
                        format!("value must be finite, got `{v}`"),
                    ));
                }
                Ok(Some((line, x)))
            }
        }
    }

    fn f64_req(&mut self, key: &str) -> Result<(usize, f64)> {
        self.f64_opt(key)?.ok_or_else(|| missing(key))
    }

    fn positive(&mut self, key: &str) -> Result<f64> {
        let (line, x) = self.f64_req(key)?;
        check_positive(line, key, x)
    }

    fn positive_or(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.f64_opt(key)? {
            Some((line, x)) => check_positive(line, key, x),
            None => Ok(default),
        }
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64_opt(key)?.map(|(_, x)| x).unwrap_or(default))
    }

    fn usize_opt(&mut self, key: &str) -> Result<Option<(usize, usize)>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => {
                let x: usize = v.parse().map_err(|_| {
                    key_error(
                        line,
                        key,
                        format!("expected a nonnegative integer, got `{v}`"),
                    )
                })?;
                Ok(Some((line, x)))
            }
        }
    }

    fn count(&mut self, key: &str) -> Result<usize> {
        let (line, n) = self.usize_opt(key)?.ok_or_else(|| missing(key))?;
        if n == 0 {
            return Err(key_error(line, key, "must be at least 1"));
        }
        Ok(n)
    }

    fn finish(self) -> Result<()> {
        let mut unused: Vec<(&String, &Entry)> =
            self.entries.iter().filter(|(_, e)| !e.used).collect();
        unused.sort_by_key(|(_, e)| e.line);
        if let Some((key, e)) = unused.first() {
            return Err(key_error(e.line, key, "unknown key"));
        }
        Ok(())
    }
}

fn missing(key: &str) -> Error {
    Error::Config(format!("missing key {key}"))
}

fn check_positive(line: usize, key: &str, x: f64) -> Result<f64> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(key_error(line, key, format!("must be positive, got {x}")))
    }
}

const SIDE_KEYS: [&str; 4] = ["left", "right", "bottom", "top"];

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ProblemConfig> {
    let mut doc = Doc::parse(text)?;

    let mesh = MeshConfig {
        lx: doc.positive("mesh.Lx")?,
        ly: doc.positive("mesh.Ly")?,
        nx: doc.count("mesh.nx")?,
        ny: doc.count("mesh.ny")?,
    };

    let constants = PhysConstants {
        k_b: doc.positive_or("constants.k_B", 1.0)?,
        e: doc.positive_or("constants.e", 1.0)?,
        epsilon: doc.positive("constants.epsilon")?,
        k: doc.positive("constants.k")?,
        q_src: doc.f64_or("constants.q_src", 0.0)?,
        rho_f: doc.f64_or("constants.rho_f", 0.0)?,
        l_b: doc.f64_opt("constants.l_B")?.map(|(_, x)| x),
        c0_rho0: doc.f64_opt("constants.c0_rho0")?.map(|(_, x)| x),
    };

    let names = doc.species_order.clone();
    if names.is_empty() {
        return Err(missing("species.<name>.z"));
    }
    let mut species = Vec::with_capacity(names.len());
    for name in names {
        let key = |k: &str| format!("species.{name}.{k}");
        species.push(SpeciesParams {
            z: doc.f64_req(&key("z"))?.1,
            nu: doc.positive(&key("nu"))?,
            heat_capacity: doc.positive(&key("C"))?,
            rho0: doc.positive(&key("rho0"))?,
            name,
        });
    }

    let mut phi = [SidePotential::Neumann; 4];
    for (s, side) in SIDE_KEYS.iter().enumerate() {
        let key = format!("boundary.phi_{side}");
        phi[s] = match doc.take(&key) {
            None if s < 2 => return Err(missing(&key)),
            None => SidePotential::Neumann,
            Some((_, v)) if v == "neumann" => SidePotential::Neumann,
            Some((_, v)) if v == "robin" => SidePotential::Robin,
            Some((line, v)) => SidePotential::Dirichlet(
                v.parse()
                    .ok()
                    .filter(|x: &f64| x.is_finite())
                    .ok_or_else(|| {
                        key_error(
                            line,
                            &key,
                            format!("expected a number, `neumann` or `robin`, got `{v}`"),
                        )
                    })?,
            ),
        };
    }
    let robin_kappa = match doc.f64_opt("boundary.robin_kappa")? {
        Some((line, k)) if k < 0.0 => {
            return Err(key_error(
                line,
                "boundary.robin_kappa",
                "must be nonnegative",
            ))
        }
        Some((_, k)) => k,
        None => 0.0,
    };
    let mut temperature = [SideTemperature::Dirichlet; 4];
    for (s, side) in SIDE_KEYS.iter().enumerate() {
        let key = format!("boundary.T_{side}");
        if let Some((line, v)) = doc.take(&key) {
            temperature[s] = match v.as_str() {
                "dirichlet" => SideTemperature::Dirichlet,
                "insulated" => SideTemperature::Insulated,
                _ => {
                    return Err(key_error(
                        line,
                        &key,
                        format!("expected `dirichlet` or `insulated`, got `{v}`"),
                    ))
                }
            };
        }
    }
    let species_bc = match doc.take("boundary.species_bc") {
        None => SpeciesBc::NoFlux,
        Some((_, v)) if v == "noflux" => SpeciesBc::NoFlux,
        Some((_, v)) if v == "dirichlet" => SpeciesBc::Dirichlet,
        Some((line, v)) => {
            return Err(key_error(
                line,
                "boundary.species_bc",
                format!("expected `noflux` or `dirichlet`, got `{v}`"),
            ))
        }
    };
    let boundary = BoundaryConfig {
        phi,
        phi_neumann_value: doc.f64_or("boundary.phi_neumann_value", 0.0)?,
        robin_kappa,
        robin_c: doc.f64_or("boundary.robin_c", 0.0)?,
        t_dirichlet: doc.positive("boundary.T_dirichlet")?,
        temperature,
        species_bc,
    };
    let initial_temperature = doc.positive_or("initial.T0", boundary.t_dirichlet)?;

    let defaults = SolverControls::default();
    let dt = doc.positive_or("solver.dt", defaults.dt)?;
    let dt_min = doc.positive_or("solver.dt_min", defaults.dt_min.min(dt))?;
    let (t_line, t_end) = doc.f64_req("solver.t_end")?;
    if t_end < 0.0 {
        return Err(key_error(t_line, "solver.t_end", "must be nonnegative"));
    }
    let picard_tol = doc.positive_or("solver.picard_tol", defaults.picard_tol)?;
    let picard_max_iter = match doc.usize_opt("solver.picard_max_iter")? {
        Some((line, 0)) => {
            return Err(key_error(
                line,
                "solver.picard_max_iter",
                "must be at least 1",
            ))
        }
        Some((_, n)) => n,
        None => defaults.picard_max_iter,
    };
    let linear_tol = doc.positive_or("solver.linear_tol", defaults.linear_tol)?;
    let linear_max_iter = match doc.usize_opt("solver.linear_max_iter")? {
        Some((line, 0)) => {
            return Err(key_error(
                line,
                "solver.linear_max_iter",
                "must be at least 1",
            ))
        }
        Some((_, n)) => n,
        None => defaults.linear_max_iter,
    };
    let relaxation = match doc.f64_opt("solver.relaxation")? {
        Some((line, w)) if !(w > 0.0 && w <= 1.0) => {
            return Err(key_error(line, "solver.relaxation", "must lie in (0, 1]"))
        }
        Some((_, w)) => w,
        None => 1.0,
    };
    let steady_tol = match doc.f64_opt("solver.steady_tol")? {
        Some((line, x)) => Some(check_positive(line, "solver.steady_tol", x)?),
        None => None,
    };
    let edge_average = match doc.take("solver.edge_average") {
        None => EdgeAverage::Arithmetic,
        Some((line, v)) => EdgeAverage::parse(&v).ok_or_else(|| {
            key_error(
                line,
                "solver.edge_average",
                format!("expected `arithmetic` or `harmonic`, got `{v}`"),
            )
        })?,
    };
    let check_m_matrix = match doc.take("solver.check_m_matrix") {
        None => false,
        Some((_, v)) if v == "true" => true,
        Some((_, v)) if v == "false" => false,
        Some((line, v)) => {
            return Err(key_error(
                line,
                "solver.check_m_matrix",
                format!("expected `true` or `false`, got `{v}`"),
            ))
        }
    };
    let solver = SolverControls {
        dt,
        dt_min,
        t_end,
        picard_tol,
        picard_max_iter,
        linear_tol,
        linear_max_iter,
        relaxation,
        steady_tol,
        edge_average,
        check_m_matrix,
    };
    if dt_min > dt {
        let line = doc
            .entries
            .get("solver.dt_min")
            .map(|e| e.line)
            .unwrap_or(0);
        return Err(key_error(
            line,
            "solver.dt_min",
            format!("exceeds solver.dt = {dt}"),
        ));
    }

    let output = OutputConfig {
        csv_path: doc.take("output.csv_path").map(|(_, v)| PathBuf::from(v)),
        vtk_every_n_steps: doc
            .usize_opt("output.vtk_every_n_steps")?
            .map(|(_, n)| n)
            .unwrap_or(0),
        snapshot_dir: doc
            .take("output.snapshot_dir")
            .map(|(_, v)| PathBuf::from(v)),
        current_x: doc.f64_opt("output.current_x")?.map(|(_, x)| x),
    };
    if output.vtk_every_n_steps > 0 && output.snapshot_dir.is_none() {
        let line = doc.entries["output.vtk_every_n_steps"].line;
        return Err(key_error(
            line,
            "output.vtk_every_n_steps",
            "needs output.snapshot_dir",
        ));
    }

    doc.finish()?;
    let config = ProblemConfig {
        mesh,
        constants,
        species,
        boundary,
        initial_temperature,
        solver,
        output,
    };
    config.check_potential_anchor()?;
    Ok(config)
}

/// Replaces (or appends) `key = value` assignments in a document before
/// parsing; later overrides of the same key win.
pub fn apply_overrides(text: &str, overrides: &[(String, String)]) -> String {
    let mut out: Vec<String> = text.lines().map(str::to_string).collect();
    for (key, value) in overrides {
        out.retain(|line| {
            let content = line.split('#').next().unwrap_or("");
            content
                .split_once('=')
                .map(|(k, _)| k.trim() != key)
                .unwrap_or(true)
        });
        out.push(format!("{key} = {value}"));
    }
    let mut s = out.join("\n");
    s.push('\n');
    s
}

fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

impl ProblemConfig {
    fn check_potential_anchor(&self) -> Result<()> {
        let anchored = self.boundary.phi.iter().any(|p| match p {
            SidePotential::Dirichlet(_) => true,
            SidePotential::Robin => self.boundary.robin_kappa > 0.0,
            SidePotential::Neumann => false,
        });
        if anchored {
            Ok(())
        } else {
            Err(Error::Config(
                "boundary.phi_*: at least one side needs a Dirichlet value or a Robin condition with robin_kappa > 0"
                    .into(),
            ))
        }
    }

    /// Canonical text form; `parse_config(&c.serialize()) == c`.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("mesh.Lx", fmt_f64(self.mesh.lx));
        put("mesh.Ly", fmt_f64(self.mesh.ly));
        put("mesh.nx", self.mesh.nx.to_string());
        put("mesh.ny", self.mesh.ny.to_string());
        let c = &self.constants;
        put("constants.k_B", fmt_f64(c.k_b));
        put("constants.e", fmt_f64(c.e));
        put("constants.epsilon", fmt_f64(c.epsilon));
        put("constants.k", fmt_f64(c.k));
        put("constants.q_src", fmt_f64(c.q_src));
        put("constants.rho_f", fmt_f64(c.rho_f));
        if let Some(x) = c.l_b {
            put("constants.l_B", fmt_f64(x));
        }
        if let Some(x) = c.c0_rho0 {
            put("constants.c0_rho0", fmt_f64(x));
        }
        for sp in &self.species {
            put(&format!("species.{}.z", sp.name), fmt_f64(sp.z));
            put(&format!("species.{}.nu", sp.name), fmt_f64(sp.nu));
            put(&format!("species.{}.C", sp.name), fmt_f64(sp.heat_capacity));
            put(&format!("species.{}.rho0", sp.name), fmt_f64(sp.rho0));
        }
        let b = &self.boundary;
        for (side, p) in SIDE_KEYS.iter().zip(&b.phi) {
            let v = match p {
                SidePotential::Dirichlet(x) => fmt_f64(*x),
                SidePotential::Neumann => "neumann".into(),
                SidePotential::Robin => "robin".into(),
            };
            put(&format!("boundary.phi_{side}"), v);
        }
        put("boundary.phi_neumann_value", fmt_f64(b.phi_neumann_value));
        put("boundary.robin_kappa", fmt_f64(b.robin_kappa));
        put("boundary.robin_c", fmt_f64(b.robin_c));
        put("boundary.T_dirichlet", fmt_f64(b.t_dirichlet));
        for (side, t) in SIDE_KEYS.iter().zip(&b.temperature) {
            let v = match t {
                SideTemperature::Dirichlet => "dirichlet",
                SideTemperature::Insulated => "insulated",
            };
            put(&format!("boundary.T_{side}"), v.into());
        }
        let sbc = match b.species_bc {
            SpeciesBc::NoFlux => "noflux",
            SpeciesBc::Dirichlet => "dirichlet",
        };
        put("boundary.species_bc", sbc.into());
        put("initial.T0", fmt_f64(self.initial_temperature));
        let sv = &self.solver;
        put("solver.dt", fmt_f64(sv.dt));
        put("solver.dt_min", fmt_f64(sv.dt_min));
        put("solver.t_end", fmt_f64(sv.t_end));
        put("solver.picard_tol", fmt_f64(sv.picard_tol));
        put("solver.picard_max_iter", sv.picard_max_iter.to_string());
        put("solver.linear_tol", fmt_f64(sv.linear_tol));
        put("solver.linear_max_iter", sv.linear_max_iter.to_string());
        put("solver.relaxation", fmt_f64(sv.relaxation));
        if let Some(x) = sv.steady_tol {
            put("solver.steady_tol", fmt_f64(x));
        }
        put("solver.edge_average", sv.edge_average.name().into());
        put("solver.check_m_matrix", sv.check_m_matrix.to_string());
        let o = &self.output;
        if let Some(p) = &o.csv_path {
            put("output.csv_path", p.display().to_string());
        }
        put("output.vtk_every_n_steps", o.vtk_every_n_steps.to_string());
        if let Some(p) = &o.snapshot_dir {
            put("output.snapshot_dir", p.display().to_string());
        }
        if let Some(x) = o.current_x {
            put("output.current_x", fmt_f64(x));
        }
        s
    }

    /// Boundary tag of one side.
    pub fn side_tag(&self, side: Side) -> BoundaryTag {
        let idx = Side::ALL.iter().position(|&s| s == side).expect("side");
        let b = &self.boundary;
        let potential = match b.phi[idx] {
            SidePotential::Dirichlet(v) => PotentialBc::Dirichlet(v),
            SidePotential::Neumann => PotentialBc::Neumann(b.phi_neumann_value),
            SidePotential::Robin => PotentialBc::Robin {
                kappa: b.robin_kappa,
                value: b.robin_c,
            },
        };
        let temperature = match b.temperature[idx] {
            SideTemperature::Dirichlet => TemperatureBc::Dirichlet(b.t_dirichlet),
            SideTemperature::Insulated => TemperatureBc::Insulated,
        };
        let species = match b.phi[idx] {
            SidePotential::Dirichlet(_) => b.species_bc,
            _ => SpeciesBc::NoFlux,
        };
        BoundaryTag::new(potential, temperature, species)
    }

    pub fn to_problem(&self) -> Result<Problem> {
        let m = &self.mesh;
        let mesh = build_rect_mesh(m.lx, m.ly, m.nx, m.ny)?;
        let (lx, ly) = (m.lx, m.ly);
        let preds: Vec<Box<dyn Fn(Point) -> bool>> = Side::ALL
            .iter()
            .map(|&s| Box::new(move |p: Point| s.contains(p, lx, ly)) as Box<dyn Fn(Point) -> bool>)
            .collect();
        let rules: Vec<(&dyn Fn(Point) -> bool, BoundaryTag)> = Side::ALL
            .iter()
            .zip(&preds)
            .map(|(&s, p)| (p.as_ref(), self.side_tag(s)))
            .collect();
        let mesh = tag_boundary(mesh, &rules)?;
        let mut problem = Problem::new(
            mesh,
            self.species.clone(),
            self.constants.clone(),
            self.solver.clone(),
            self.initial_temperature,
        )?;
        if let Some(x) = self.output.current_x {
            if !(x >= 0.0 && x <= lx) {
                return Err(Error::Config(format!(
                    "output.current_x = {x} lies outside [0, {lx}]"
                )));
            }
            problem.current_x = x;
        }
        Ok(problem)
    }

    /// Copy with `phi_right - phi_left = voltage`, keeping `phi_left`.
    pub fn with_voltage(&self, voltage: f64) -> Result<ProblemConfig> {
        let SidePotential::Dirichlet(left) = self.boundary.phi[0] else {
            return Err(Error::Config(
                "a voltage sweep needs a Dirichlet boundary.phi_left".into(),
            ));
        };
        if !matches!(self.boundary.phi[1], SidePotential::Dirichlet(_)) {
            return Err(Error::Config(
                "a voltage sweep needs a Dirichlet boundary.phi_right".into(),
            ));
        }
        if !voltage.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "voltage {voltage} is not finite"
            )));
        }
        let mut c = self.clone();
        c.boundary.phi[1] = SidePotential::Dirichlet(left + voltage);
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub voltage: f64,
    /// Channel current of the final state.
    pub current: f64,
    pub final_time: f64,
    pub reached_steady: bool,
}

/// Runs one simulation per voltage, in parallel, and reports final currents
/// in input order.
pub fn voltage_sweep(config: &ProblemConfig, voltages: &[f64]) -> Result<Vec<SweepPoint>> {
    let configs: Vec<ProblemConfig> = voltages
        .iter()
        .map(|&v| config.with_voltage(v))
        .collect::<Result<_>>()?;
    let results: Vec<Result<SweepPoint>> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .zip(voltages)
            .map(|(c, &v)| {
                scope.spawn(move || -> Result<SweepPoint> {
                    let problem = c.to_problem()?;
                    let traj = run_simulation(&problem)?;
                    let last = traj.records.last().expect("initial record");
                    Ok(SweepPoint {
                        voltage: v,
                        current: last.current,
                        final_time: last.time,
                        reached_steady: traj.reached_steady,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
mesh.Lx = 10
mesh.Ly = 1
mesh.nx = 20
mesh.ny = 2
constants.epsilon = 1
constants.k = 100
species.na.z = 1
species.na.nu = 0.75
species.na.C = 3
species.na.rho0 = 0.06
species.cl.z = -1  # anion
species.cl.nu = 0.5
species.cl.C = 3
species.cl.rho0 = 0.06
boundary.phi_left = 0
boundary.phi_right = 100
boundary.T_dirichlet = 1
solver.t_end = 0.01
";

    #[test]
    fn minimal_document() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.species.len(), 2);
        assert_eq!(c.species[0].name, "na");
        assert_eq!(c.species[1].z, -1.0);
        assert_eq!(c.constants.k_b, 1.0);
        assert_eq!(c.solver.picard_tol, 1e-8);
        assert_eq!(c.solver.picard_max_iter, 100);
        assert_eq!(c.solver.dt, 1e-3);
        assert_eq!(c.solver.linear_tol, 1e-12);
        assert_eq!(c.boundary.phi[2], SidePotential::Neumann);
        assert_eq!(c.initial_temperature, 1.0);
        let p = c.to_problem().unwrap();
        assert_eq!(p.mesh.n_vertices(), 21 * 3);
    }

    #[test]
    fn empty_document() {
        let err = parse_config("").unwrap_err();
        assert!(err.to_string().contains("missing key mesh.Lx"), "{err}");
        let err = parse_config("# only a comment\n\n").unwrap_err();
        assert!(err.to_string().contains("missing key mesh.Lx"));
    }

    #[test]
    fn positivity_errors_name_key_and_line() {
        let text = MINIMAL.replace("species.na.nu = 0.75", "species.na.nu = 0");
        match parse_config(&text).unwrap_err() {
            Error::ConfigKey { line, key, .. } => {
                assert_eq!(key, "species.na.nu");
                assert_eq!(line, 8);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        let err = parse_config(&format!("{MINIMAL}solver.foo = 1\n")).unwrap_err();
        assert!(
            matches!(err, Error::ConfigKey { ref key, line: 19, .. } if key == "solver.foo"),
            "{err}"
        );
        let err = parse_config(&format!("{MINIMAL}mesh.Lx = 3\n")).unwrap_err();
        assert!(matches!(err, Error::ConfigKey { ref key, .. } if key == "mesh.Lx"));
        let err = parse_config(&MINIMAL.replace("mesh.nx = 20", "mesh.nx = twenty")).unwrap_err();
        assert!(matches!(err, Error::ConfigKey { ref key, line: 3, .. } if key == "mesh.nx"));
        let err = parse_config(&MINIMAL.replace("mesh.ny = 2", "mesh.ny 2")).unwrap_err();
        assert!(matches!(err, Error::ConfigKey { line: 4, .. }));
        let floating = MINIMAL
            .replace("boundary.phi_left = 0", "boundary.phi_left = neumann")
            .replace("boundary.phi_right = 100", "boundary.phi_right = robin");
        let err = parse_config(&floating).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn serialize_round_trip() {
        let mut c = parse_config(MINIMAL).unwrap();
        c.constants.l_b = Some(0.714);
        c.solver.steady_tol = Some(1e-7);
        c.output.csv_path = Some("out/diag.csv".into());
        c.boundary.temperature[2] = SideTemperature::Insulated;
        c.boundary.phi[3] = SidePotential::Robin;
        c.boundary.robin_kappa = 0.25;
        let text = c.serialize();
        assert_eq!(parse_config(&text).unwrap(), c);
    }

    #[test]
    fn overrides_replace_keys() {
        let text = apply_overrides(
            MINIMAL,
            &[
                ("mesh.nx".into(), "4".into()),
                ("solver.steady_tol".into(), "1e-6".into()),
            ],
        );
        let c = parse_config(&text).unwrap();
        assert_eq!(c.mesh.nx, 4);
        assert_eq!(c.solver.steady_tol, Some(1e-6));
    }

    #[test]
    fn voltage_override() {
        let c = parse_config(MINIMAL).unwrap();
        let v = c.with_voltage(40.0).unwrap();
        assert_eq!(v.boundary.phi[1], SidePotential::Dirichlet(40.0));
    }

    #[test]
    fn side_tags() {
        let mut c = parse_config(MINIMAL).unwrap();
        c.boundary.species_bc = SpeciesBc::Dirichlet;
        assert_eq!(c.side_tag(Side::Left).species, SpeciesBc::Dirichlet);
        assert_eq!(c.side_tag(Side::Top).species, SpeciesBc::NoFlux);
        assert_eq!(c.side_tag(Side::Top).potential, PotentialBc::Neumann(0.0));
    }
}
