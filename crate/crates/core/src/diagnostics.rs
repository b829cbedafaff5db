//! Scalar monitors: mass, entropy, dissipation, boundary entropy flux, the
//! discrete energy functional, channel current, extrema and Nusselt numbers.
//!
//! Volume integrals of nodal quantities use the lumped quadrature of the
//! assembly, i.e. the exact integral of the P1 interpolant.

use crate::error::{Error, Result};
use crate::fem::{element_means, gradient, integrate, ElemField, Field};
use crate::mesh::{Mesh, Point, Side, TemperatureBc};
use crate::solver::{Problem, SimState, SpeciesParams};

#[derive(Clone, Debug, PartialEq)]
pub struct DiagRecord {
    pub time: f64,
    pub dt: f64,
    pub picard_iters: usize,
    pub masses: Vec<f64>,
    pub entropy: f64,
    pub dissipation: f64,
    pub boundary_flux: f64,
    pub energy_functional: f64,
    pub current: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// `max_v exp(-xi_v)`.
    pub m_proxy: f64,
}

impl DiagRecord {
    /// Dissipation minus the entropy carried out through the boundary.
    pub fn entropy_balance_residual(&self) -> f64 {
        self.dissipation + self.boundary_flux
    }
}

pub fn total_mass(mesh: &Mesh, rho: &[f64]) -> f64 {
    integrate(mesh, rho)
}

/// `sum_i int k_B rho_i (log rho_i - C_i log T - C_i)`.
pub fn entropy(
    mesh: &Mesh,
    species: &[SpeciesParams],
    k_b: f64,
    densities: &[Field],
    t: &[f64],
) -> f64 {
    species
        .iter()
        .zip(densities)
        .map(|(s, rho)| {
            let integrand: Vec<f64> = rho
                .iter()
                .zip(t)
                .map(|(&r, &tv)| {
                    let log_r = if r > 0.0 { r.ln() } else { 0.0 };
                    k_b * r * (log_r - s.heat_capacity * tv.ln() - s.heat_capacity)
                })
                .collect();
            integrate(mesh, &integrand)
        })
        .sum()
}

/// Mean of `f(T)` over the three edge midpoints of an element.
fn midpoint_mean(t: &[f64], tri: &[usize; 3], f: impl Fn(f64) -> f64) -> f64 {
    (0..3)
        .map(|k| f(0.5 * (t[tri[k]] + t[tri[(k + 1) % 3]])))
        .sum::<f64>()
        / 3.0
}

/// `sum_i int nu_i rho_i |u_i|^2 / T + k |grad T|^2 / T^2`.
pub fn dissipation(
    mesh: &Mesh,
    species: &[SpeciesParams],
    k: f64,
    densities: &[Field],
    t: &[f64],
    u: &[ElemField],
) -> f64 {
    let means: Vec<Vec<f64>> = densities.iter().map(|r| element_means(mesh, r)).collect();
    let mut total = 0.0;
    for (e, tri) in mesh.elements().iter().enumerate() {
        let inv_t = midpoint_mean(t, tri, |x| 1.0 / x);
        let inv_t2 = midpoint_mean(t, tri, |x| 1.0 / (x * x));
        let g = gradient(mesh, e, t);
        let mut local = k * (g[0] * g[0] + g[1] * g[1]) * inv_t2;
        for (i, s) in species.iter().enumerate() {
            let v = u[i][e];
            local += s.nu * means[i][e] * (v[0] * v[0] + v[1] * v[1]) * inv_t;
        }
        total += local * mesh.area(e);
    }
    total
}

/// `int_{boundary} k (grad T . n) / T` with element gradients and midpoint
/// temperatures. Insulated edges carry no heat and contribute nothing.
pub fn boundary_entropy_flux(mesh: &Mesh, k: f64, t: &[f64]) -> f64 {
    let mut total = 0.0;
    for (edge, tag) in mesh.boundary_tags() {
        if matches!(tag.map(|t| t.temperature), Some(TemperatureBc::Insulated)) {
            continue;
        }
        let e = &mesh.edges()[edge];
        let Some(element) = e.elements[0] else {
            continue;
        };
        let g = gradient(mesh, element, t);
        let n = mesh.outward_normal(edge);
        let [a, b] = e.vertices;
        let t_mid = 0.5 * (t[a] + t[b]);
        total += k * (g[0] * n[0] + g[1] * n[1]) / t_mid * mesh.edge_length(edge);
    }
    total
}

/// `sum_i int exp(eta_i) (eta_i - xi - 1)`.
pub fn energy_functional(mesh: &Mesh, eta: &[Field], xi: &[f64]) -> f64 {
    eta.iter()
        .map(|e| {
            let integrand: Vec<f64> = e
                .iter()
                .zip(xi)
                .map(|(&h, &x)| h.exp() * (h - x - 1.0))
                .collect();
            integrate(mesh, &integrand)
        })
        .sum()
}

/// Net charge flux `sum_i z_i e int rho_i u_i . x` across the line `x = x_cut`.
pub fn current(
    mesh: &Mesh,
    species: &[SpeciesParams],
    e_charge: f64,
    densities: &[Field],
    u: &[ElemField],
    x_cut: f64,
) -> Result<f64> {
    let (lo, hi) = crate::solver::x_range(mesh);
    if !(x_cut >= lo && x_cut <= hi) {
        return Err(Error::InvalidArgument(format!(
            "current cut x = {x_cut} lies outside the domain [{lo}, {hi}]"
        )));
    }
    let mut total = 0.0;
    for (el, tri) in mesh.elements().iter().enumerate() {
        let p = tri.map(|v| mesh.vertex(v));
        let xmin = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min);
        let xmax = p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max);
        let inside = (xmin <= x_cut && x_cut < xmax) || (x_cut == hi && xmax == hi && xmin < xmax);
        if !inside {
            continue;
        }
        let Some((y0, y1)) = vertical_chord(&p, x_cut) else {
            continue;
        };
        let len = y1 - y0;
        if len <= 0.0 {
            continue;
        }
        let mid = [x_cut, 0.5 * (y0 + y1)];
        let bary = barycentric(&p, mid);
        for (i, s) in species.iter().enumerate() {
            let rho = &densities[i];
            let r = bary[0] * rho[tri[0]] + bary[1] * rho[tri[1]] + bary[2] * rho[tri[2]];
            total += s.z * e_charge * r * u[i][el][0] * len;
        }
    }
    Ok(total)
}

fn vertical_chord(p: &[Point; 3], x: f64) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..3 {
        let (a, b) = (p[k], p[(k + 1) % 3]);
        if a[0] == b[0] {
            if a[0] == x {
                lo = lo.min(a[1].min(b[1]));
                hi = hi.max(a[1].max(b[1]));
            }
            continue;
        }
        let s = (x - a[0]) / (b[0] - a[0]);
        if (0.0..=1.0).contains(&s) {
            let y = a[1] + s * (b[1] - a[1]);
            lo = lo.min(y);
            hi = hi.max(y);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

fn barycentric(p: &[Point; 3], q: Point) -> [f64; 3] {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let l1 =
        ((q[0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (q[1] - p[0][1])) / det;
    let l2 =
        ((p[1][0] - p[0][0]) * (q[1] - p[0][1]) - (q[0] - p[0][0]) * (p[1][1] - p[0][1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extrema {
    pub min: f64,
    pub max: f64,
    pub argmin: usize,
    pub argmax: usize,
}

pub fn field_extrema(f: &[f64]) -> Extrema {
    let mut ex = Extrema {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        argmin: 0,
        argmax: 0,
    };
    for (v, &x) in f.iter().enumerate() {
        if x < ex.min {
            ex.min = x;
            ex.argmin = v;
        }
        if x > ex.max {
            ex.max = x;
            ex.argmax = v;
        }
    }
    ex
}

/// `Nu = -h dT/dd / (T_w - T_m)` with `d` the inward wall distance.
pub fn nusselt_number(h: f64, dt_dd: f64, t_wall: f64, t_mean: f64) -> Result<f64> {
    let denom = t_wall - t_mean;
    if denom.abs() <= 1e-12 {
        return Err(Error::Degenerate(format!(
            "wall temperature {t_wall} equals the mean temperature {t_mean}"
        )));
    }
    Ok(-h * dt_dd / denom)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NusseltPoint {
    pub vertex: usize,
    pub position: Point,
    pub nu: f64,
}

/// Local Nusselt numbers along one wall of a structured channel. The mean
/// temperature is the trapezoidal average along the grid line through each
/// wall vertex perpendicular to the wall.
pub fn nusselt(mesh: &Mesh, t: &[f64], wall: Side, h_width: f64) -> Result<Vec<NusseltPoint>> {
    let g = mesh.grid().ok_or_else(|| {
        Error::InvalidArgument("Nusselt numbers need a structured channel mesh".into())
    })?;
    let normal = wall.inward_normal();
    let along_x = matches!(wall, Side::Bottom | Side::Top);
    let (n_along, n_across) = if along_x { (g.nx, g.ny) } else { (g.ny, g.nx) };
    let mut star: Vec<Vec<usize>> = vec![Vec::new(); mesh.n_vertices()];
    for (e, tri) in mesh.elements().iter().enumerate() {
        for &v in tri {
            star[v].push(e);
        }
    }
    let mut out = Vec::with_capacity(n_along + 1);
    for a in 0..=n_along {
        let grid_index = |c: usize| -> usize {
            let across = match wall {
                Side::Bottom | Side::Left => c,
                Side::Top | Side::Right => n_across - c,
            };
            let (i, j) = if along_x { (a, across) } else { (across, a) };
            mesh.grid_vertex(i, j).expect("inside grid")
        };
        let line: Vec<usize> = (0..=n_across).map(grid_index).collect();
        let mut mean = 0.0;
        for w in line.windows(2) {
            mean += 0.5 * (t[w[0]] + t[w[1]]);
        }
        mean /= n_across as f64;
        let v = line[0];
        let mut area = 0.0;
        let mut d = 0.0;
        for &e in &star[v] {
            let gr = gradient(mesh, e, t);
            d += mesh.area(e) * (gr[0] * normal[0] + gr[1] * normal[1]);
            area += mesh.area(e);
        }
        let nu = nusselt_number(h_width, d / area, t[v], mean)?;
        out.push(NusseltPoint {
            vertex: v,
            position: mesh.vertex(v),
            nu,
        });
    }
    Ok(out)
}

pub fn m_proxy(xi: &[f64]) -> f64 {
    xi.iter().map(|x| (-x).exp()).fold(0.0, f64::max)
}

/// Diagnostics of one state.
pub fn record(problem: &Problem, state: &SimState) -> Result<DiagRecord> {
    let mesh = &problem.mesh;
    let pc = &problem.constants;
    let densities = state.densities();
    let t = state.temperature();
    let ex = field_extrema(&t);
    Ok(DiagRecord {
        time: state.time,
        dt: state.dt_last,
        picard_iters: state.picard_iters_last,
        masses: densities.iter().map(|r| total_mass(mesh, r)).collect(),
        entropy: entropy(mesh, &problem.species, pc.k_b, &densities, &t),
        dissipation: dissipation(mesh, &problem.species, pc.k, &densities, &t, &state.u),
        boundary_flux: boundary_entropy_flux(mesh, pc.k, &t),
        energy_functional: energy_functional(mesh, &state.eta, &state.xi),
        current: current(
            mesh,
            &problem.species,
            pc.e,
            &densities,
            &state.u,
            problem.current_x,
        )?,
        t_min: ex.min,
        t_max: ex.max,
        m_proxy: m_proxy(&state.xi),
    })
}
