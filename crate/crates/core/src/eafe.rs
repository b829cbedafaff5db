//! Edge-averaged finite elements for `-div(a grad u + beta u) + c u`.
//!
//! Every element pair `(i, j)` with `i < j` carries the weight
//! `omega = -|tau| grad(lambda_i) . grad(lambda_j)` and a potential jump
//! `dpsi` along the edge from `i` to `j`. The edge contributes the
//! Scharfetter-Gummel flux `coeff * (B(dpsi) u_i - B(-dpsi) u_j)` out of `i`,
//! which makes every column sum of the operator vanish and `u = exp(-psi)`
//! its discrete kernel.

use crate::error::{Error, Result};
use crate::fem::{check_len, lumped_mass};
use crate::linalg::{CsrMatrix, Triplets};
use crate::mesh::{Mesh, Point};

/// Averaging rule for element data on an edge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EdgeAverage {
    #[default]
    Arithmetic,
    Harmonic,
}

impl EdgeAverage {
    pub fn name(self) -> &'static str {
        match self {
            EdgeAverage::Arithmetic => "arithmetic",
            EdgeAverage::Harmonic => "harmonic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "arithmetic" => Some(EdgeAverage::Arithmetic),
            "harmonic" => Some(EdgeAverage::Harmonic),
            _ => None,
        }
    }
}

/// `B(t) = t / (e^t - 1)`.
pub fn bernoulli(t: f64) -> f64 {
    if t.abs() < 1e-5 {
        // 1 - t/2 + t^2/12 - t^4/720
        let t2 = t * t;
        1.0 - 0.5 * t + t2 / 12.0 * (1.0 - t2 / 60.0)
    } else if t > 700.0 {
        t * (-t).exp()
    } else {
        t / t.exp_m1()
    }
}

/// Average of the element values adjacent to `edge`.
pub fn edge_average(mesh: &Mesh, edge: usize, values: &[f64], rule: EdgeAverage) -> f64 {
    let e = &mesh.edges()[edge];
    let mut n = 0.0;
    let mut acc = 0.0;
    for t in e.adjacent() {
        acc += match rule {
            EdgeAverage::Arithmetic => values[t],
            EdgeAverage::Harmonic => 1.0 / values[t],
        };
        n += 1.0;
    }
    match rule {
        EdgeAverage::Arithmetic => acc / n,
        EdgeAverage::Harmonic => n / acc,
    }
}

fn edge_mean_vector(mesh: &Mesh, edge: usize, values: &[Point]) -> Point {
    let e = &mesh.edges()[edge];
    let mut n = 0.0;
    let mut acc = [0.0; 2];
    for t in e.adjacent() {
        acc[0] += values[t][0];
        acc[1] += values[t][1];
        n += 1.0;
    }
    [acc[0] / n, acc[1] / n]
}

/// Potential jump `beta_E . (x_j - x_i) / a_E + (g_j - g_i)` along an edge
/// stored as `(i, j)`, where `g` is an optional nodal jump field.
pub fn edge_potential(
    mesh: &Mesh,
    edge: usize,
    a: &[f64],
    beta: Option<&[Point]>,
    nodal_jump: Option<&[f64]>,
    rule: EdgeAverage,
) -> Result<f64> {
    let [i, j] = mesh.edges()[edge].vertices;
    let mut psi = 0.0;
    if let Some(beta) = beta {
        let a_e = edge_average(mesh, edge, a, rule);
        if !(a_e > 0.0) || !a_e.is_finite() {
            return Err(Error::Assembly(format!(
                "edge diffusion {a_e} on edge ({i}, {j}) is not positive"
            )));
        }
        let b = edge_mean_vector(mesh, edge, beta);
        let (pi, pj) = (mesh.vertex(i), mesh.vertex(j));
        psi += (b[0] * (pj[0] - pi[0]) + b[1] * (pj[1] - pi[1])) / a_e;
    }
    if let Some(g) = nodal_jump {
        psi += g[j] - g[i];
    }
    Ok(psi)
}

/// Edge potentials for every edge.
pub fn edge_potentials(
    mesh: &Mesh,
    a: &[f64],
    beta: Option<&[Point]>,
    nodal_jump: Option<&[f64]>,
    rule: EdgeAverage,
) -> Result<Vec<f64>> {
    check_len("diffusion", a.len(), mesh.n_elements())?;
    if let Some(b) = beta {
        check_len("drift", b.len(), mesh.n_elements())?;
    }
    if let Some(g) = nodal_jump {
        check_len("nodal jump", g.len(), mesh.n_vertices())?;
    }
    (0..mesh.n_edges())
        .map(|e| edge_potential(mesh, e, a, beta, nodal_jump, rule))
        .collect()
}

/// Scharfetter-Gummel flux from `i` to `j` for conductance `coeff`.
pub fn edge_flux(coeff: f64, dpsi: f64, u_i: f64, u_j: f64) -> f64 {
    coeff * (bernoulli(dpsi) * u_i - bernoulli(-dpsi) * u_j)
}

/// Assembles the EAFE operator with per-element diffusion `a`, per-edge
/// potential jumps and an optional nodal reaction added as `m_v c_v`.
pub fn assemble_eafe(
    mesh: &Mesh,
    a: &[f64],
    edge_psi: &[f64],
    reaction: Option<&[f64]>,
) -> Result<CsrMatrix> {
    check_len("diffusion", a.len(), mesh.n_elements())?;
    check_len("edge potential", edge_psi.len(), mesh.n_edges())?;
    let mut t = Triplets::with_capacity(12 * mesh.n_elements() + mesh.n_vertices());
    for (e, tri) in mesh.elements().iter().enumerate() {
        let a_t = a[e];
        if !(a_t > 0.0) || !a_t.is_finite() {
            return Err(Error::Assembly(format!(
                "diffusion {a_t} on element {e} is not positive"
            )));
        }
        let g = mesh.gradients(e);
        let area = mesh.area(e);
        let edges = mesh.element_edges()[e];
        for k in 0..3 {
            let (la, lb) = ((k + 1) % 3, (k + 2) % 3);
            let omega = -area * (g[la][0] * g[lb][0] + g[la][1] * g[lb][1]);
            if omega == 0.0 {
                continue;
            }
            let edge = edges[k];
            let [i, j] = mesh.edges()[edge].vertices;
            debug_assert!((tri[la] == i && tri[lb] == j) || (tri[la] == j && tri[lb] == i));
            let coeff = a_t * omega;
            let psi = edge_psi[edge];
            let (bp, bm) = (bernoulli(psi), bernoulli(-psi));
            t.push(i, i, coeff * bp);
            t.push(i, j, -coeff * bm);
            t.push(j, j, coeff * bm);
            t.push(j, i, -coeff * bp);
        }
    }
    if let Some(c) = reaction {
        check_len("reaction", c.len(), mesh.n_vertices())?;
        if let Some(v) = c.iter().position(|&x| !(x >= 0.0)) {
            return Err(Error::CPositivity {
                vertex: v,
                value: c[v],
            });
        }
        for (v, m) in lumped_mass(mesh, c).into_iter().enumerate() {
            t.push(v, v, m);
        }
    }
    CsrMatrix::from_triplets(mesh.n_vertices(), mesh.n_vertices(), t.entries())
}

/// Convenience wrapper computing the edge potentials from an element drift.
pub fn assemble_eafe_drift(
    mesh: &Mesh,
    a: &[f64],
    beta: &[Point],
    reaction: Option<&[f64]>,
    rule: EdgeAverage,
) -> Result<CsrMatrix> {
    let psi = edge_potentials(mesh, a, Some(beta), None, rule)?;
    assemble_eafe(mesh, a, &psi, reaction)
}
