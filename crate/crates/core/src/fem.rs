//! P1 assembly: stiffness, lumped and consistent mass, boundary terms,
//! Dirichlet elimination and nodal interpolation.

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Triplets};
use crate::mesh::{Mesh, Point, PotentialBc};

/// Nodal P1 values, one per mesh vertex.
pub type Field = Vec<f64>;

/// Piecewise-constant vectors, one per element.
pub type ElemField = Vec<Point>;

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::InvalidArgument(format!(
            "{what} has length {got}, expected {want}"
        )));
    }
    Ok(())
}

/// `omega[a][b] = area * grad(lambda_a) . grad(lambda_b)` for one element.
pub fn local_stiffness(mesh: &Mesh, element: usize) -> [[f64; 3]; 3] {
    let g = mesh.gradients(element);
    let area = mesh.area(element);
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
        }
    }
    k
}

/// `sum_tau coeff_tau * int_tau grad(lambda_i) . grad(lambda_j)`.
pub fn assemble_stiffness(mesh: &Mesh, coeff: &[f64]) -> Result<CsrMatrix> {
    check_len("stiffness coefficient", coeff.len(), mesh.n_elements())?;
    let mut t = Triplets::with_capacity(9 * mesh.n_elements());
    for (e, tri) in mesh.elements().iter().enumerate() {
        let c = coeff[e];
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "diffusion coefficient {c} on element {e} is not positive"
            )));
        }
        let k = local_stiffness(mesh, e);
        for a in 0..3 {
            for b in 0..3 {
                t.push(tri[a], tri[b], c * k[a][b]);
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_vertices(), mesh.n_vertices(), t.entries())
}

/// Diagonal of the lumped mass matrix weighted by a nodal density.
pub fn lumped_mass(mesh: &Mesh, density: &[f64]) -> Vec<f64> {
    mesh.vertex_weights()
        .iter()
        .zip(density)
        .map(|(w, d)| w * d)
        .collect()
}

pub fn assemble_mass_lumped(mesh: &Mesh, density: &[f64]) -> Result<CsrMatrix> {
    check_len("density", density.len(), mesh.n_vertices())?;
    if let Some(v) = density.iter().position(|d| !d.is_finite()) {
        return Err(Error::Evaluation {
            vertex: v,
            value: density[v],
        });
    }
    Ok(CsrMatrix::from_diagonal(&lumped_mass(mesh, density)))
}

/// Consistent P1 mass matrix.
pub fn assemble_mass_consistent(mesh: &Mesh) -> Result<CsrMatrix> {
    let mut t = Triplets::with_capacity(9 * mesh.n_elements());
    for (e, tri) in mesh.elements().iter().enumerate() {
        let area = mesh.area(e);
        for a in 0..3 {
            for b in 0..3 {
                let m = if a == b { area / 6.0 } else { area / 12.0 };
                t.push(tri[a], tri[b], m);
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_vertices(), mesh.n_vertices(), t.entries())
}

/// Edge-lumped Robin terms from the potential tags: `kappa |E| / 2` on the
/// diagonal and `C |E| / 2` in the load at each endpoint.
pub fn assemble_robin(mesh: &Mesh) -> (CsrMatrix, Vec<f64>) {
    let n = mesh.n_vertices();
    let mut diag = vec![0.0; n];
    let mut load = vec![0.0; n];
    for (edge, tag) in mesh.boundary_tags() {
        if let Some(PotentialBc::Robin { kappa, value }) = tag.map(|t| t.potential) {
            let half = 0.5 * mesh.edge_length(edge);
            for &v in &mesh.edges()[edge].vertices {
                diag[v] += kappa * half;
                load[v] += value * half;
            }
        }
    }
    (CsrMatrix::from_diagonal(&diag), load)
}

/// Edge-lumped Neumann load `S |E| / 2` per endpoint.
pub fn neumann_load(mesh: &Mesh) -> Vec<f64> {
    let mut load = vec![0.0; mesh.n_vertices()];
    for (edge, tag) in mesh.boundary_tags() {
        if let Some(PotentialBc::Neumann(s)) = tag.map(|t| t.potential) {
            let half = 0.5 * mesh.edge_length(edge);
            for &v in &mesh.edges()[edge].vertices {
                load[v] += s * half;
            }
        }
    }
    load
}

/// Nodal interpolant `I_h f`.
pub fn interpolate(mesh: &Mesh, f: impl Fn(Point) -> f64) -> Result<Field> {
    mesh.vertices()
        .iter()
        .enumerate()
        .map(|(v, &p)| {
            let value = f(p);
            if value.is_finite() {
                Ok(value)
            } else {
                Err(Error::Evaluation { vertex: v, value })
            }
        })
        .collect()
}

/// Applies `f` to every nodal value.
pub fn map_field(field: &[f64], f: impl Fn(f64) -> f64) -> Result<Field> {
    field
        .iter()
        .enumerate()
        .map(|(v, &x)| {
            let value = f(x);
            if value.is_finite() {
                Ok(value)
            } else {
                Err(Error::Evaluation { vertex: v, value })
            }
        })
        .collect()
}

/// Constant gradient of a P1 field on one element.
pub fn gradient(mesh: &Mesh, element: usize, field: &[f64]) -> Point {
    let g = mesh.gradients(element);
    let tri = mesh.elements()[element];
    let mut d = [0.0; 2];
    for k in 0..3 {
        d[0] += field[tri[k]] * g[k][0];
        d[1] += field[tri[k]] * g[k][1];
    }
    d
}

/// Element means of a nodal field.
pub fn element_means(mesh: &Mesh, field: &[f64]) -> Vec<f64> {
    mesh.elements()
        .iter()
        .map(|t| (field[t[0]] + field[t[1]] + field[t[2]]) / 3.0)
        .collect()
}

/// Nodal values from element values by area-weighted averaging.
pub fn element_to_nodal(mesh: &Mesh, values: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; mesh.n_vertices()];
    let mut wsum = vec![0.0; mesh.n_vertices()];
    for (e, tri) in mesh.elements().iter().enumerate() {
        let a = mesh.area(e);
        for &v in tri {
            acc[v] += a * values[e];
            wsum[v] += a;
        }
    }
    acc.iter().zip(&wsum).map(|(a, w)| a / w).collect()
}

/// Lumped load of a piecewise-constant source: one third of `f_tau |tau|`
/// to each vertex.
pub fn element_load(mesh: &Mesh, values: &[f64]) -> Vec<f64> {
    let mut load = vec![0.0; mesh.n_vertices()];
    for (e, tri) in mesh.elements().iter().enumerate() {
        let share = values[e] * mesh.area(e) / 3.0;
        for &v in tri {
            load[v] += share;
        }
    }
    load
}

/// Lumped integral `sum_v m_v f_v`, exact for the P1 interpolant.
pub fn integrate(mesh: &Mesh, field: &[f64]) -> f64 {
    mesh.vertex_weights()
        .iter()
        .zip(field)
        .map(|(w, f)| w * f)
        .sum()
}

/// Symmetric elimination of Dirichlet constraints.
pub fn apply_dirichlet(
    a: &CsrMatrix,
    b: &[f64],
    bdata: &[(usize, f64)],
) -> Result<(CsrMatrix, Vec<f64>)> {
    let n = a.n_rows();
    check_len("right-hand side", b.len(), n)?;
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for &(v, g) in bdata {
        if v >= n {
            return Err(Error::InvalidArgument(format!(
                "Dirichlet vertex {v} out of range"
            )));
        }
        match fixed[v] {
            Some(old) if old != g => {
                return Err(Error::Config(format!(
                    "conflicting Dirichlet values {old} and {g} at vertex {v}"
                )))
            }
            _ => fixed[v] = Some(g),
        }
    }
    if bdata.is_empty() {
        return Ok((a.clone(), b.to_vec()));
    }
    let mut rhs = b.to_vec();
    let mut t = Triplets::with_capacity(a.nnz());
    for i in 0..n {
        if let Some(g) = fixed[i] {
            t.push(i, i, 1.0);
            rhs[i] = g;
            continue;
        }
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            match fixed[j] {
                Some(g) => rhs[i] -= v * g,
                None => t.push(i, j, v),
            }
        }
    }
    Ok((CsrMatrix::from_triplets(n, n, t.entries())?, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{is_m_matrix, solve};
    use crate::mesh::{build_rect_mesh, tag_boundary, BoundaryTag, SpeciesBc, TemperatureBc};

    fn tag(p: PotentialBc) -> BoundaryTag {
        BoundaryTag::new(p, TemperatureBc::Dirichlet(1.0), SpeciesBc::NoFlux)
    }

    #[test]
    fn unit_square_stiffness() {
        let m = build_rect_mesh(1.0, 1.0, 1, 1).unwrap();
        let k = assemble_stiffness(&m, &[1.0, 1.0]).unwrap();
        assert!(k.row_sums().iter().all(|s| s.abs() < 1e-14));
        // The two diagonal endpoints are shared by both triangles.
        let v00 = m.grid_vertex(0, 0).unwrap();
        let v11 = m.grid_vertex(1, 1).unwrap();
        assert!((k.get(v00, v00) - 1.0).abs() < 1e-14);
        assert!((k.get(v11, v11) - 1.0).abs() < 1e-14);
        let k2 = assemble_stiffness(&m, &[2.0, 2.0]).unwrap();
        let mut k1x2 = k.clone();
        k1x2.scale(2.0);
        assert_eq!(k2.max_abs_diff(&k1x2), 0.0);
        assert!(k.max_abs_diff(&k.transpose()) < 1e-14);
    }

    #[test]
    fn corner_diagonal_of_two_triangle_patch() {
        // Hand assembly: corner (0,0) in the right triangles (0,0),(1,0),(1,1)
        // and (0,0),(1,1),(0,1) has gradient (-1,0) and (0,-1), area 1/2 each.
        let m = build_rect_mesh(1.0, 1.0, 1, 1).unwrap();
        let k = assemble_stiffness(&m, &[1.0, 1.0]).unwrap();
        let v = m.grid_vertex(0, 0).unwrap();
        // 1/2 * 1 + 1/2 * 1
        assert!((k.get(v, v) - 1.0).abs() < 1e-14);
        // Over a full four-triangle star an interior vertex gets 4 * 1/2 * 1.
        let m2 = build_rect_mesh(2.0, 2.0, 2, 2).unwrap();
        let k2 = assemble_stiffness(&m2, &vec![1.0; m2.n_elements()]).unwrap();
        let c = m2.grid_vertex(1, 1).unwrap();
        assert!((k2.get(c, c) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn stiffness_rejects_nonpositive() {
        let m = build_rect_mesh(1.0, 1.0, 1, 1).unwrap();
        assert!(matches!(
            assemble_stiffness(&m, &[1.0, 0.0]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn stiffness_is_m_matrix_on_rect_mesh() {
        let m = build_rect_mesh(1.0, 1.0, 2, 2).unwrap();
        let k = assemble_stiffness(&m, &vec![1.0; m.n_elements()]).unwrap();
        assert!(is_m_matrix(&k, 1e-12));
    }

    #[test]
    fn lumped_mass_examples() {
        let m = build_rect_mesh(1.0, 1.0, 1, 1).unwrap();
        let d = lumped_mass(&m, &[1.0; 4]);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for &x in &d {
            assert!((x - 1.0 / 3.0).abs() < 1e-15 || (x - 1.0 / 6.0).abs() < 1e-15);
        }
        let d3 = assemble_mass_lumped(&m, &[3.0; 4]).unwrap();
        assert!((d3.diagonal().iter().sum::<f64>() - 3.0).abs() < 1e-14);
        let big = build_rect_mesh(10.0, 1.0, 100, 10).unwrap();
        let d = lumped_mass(&big, &vec![1.0; big.n_vertices()]);
        assert!((d.iter().sum::<f64>() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn lumped_mass_is_consistent_row_sum() {
        let m = build_rect_mesh(2.0, 1.0, 3, 2).unwrap();
        let mc = assemble_mass_consistent(&m).unwrap();
        let ones = vec![1.0; m.n_vertices()];
        for (a, b) in mc.row_sums().iter().zip(lumped_mass(&m, &ones)) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn robin_terms() {
        let m = build_rect_mesh(1.0, 1.0, 1, 1).unwrap();
        let none =
            tag_boundary(m.clone(), &[(&|_| true, tag(PotentialBc::Dirichlet(0.0)))]).unwrap();
        let (a, b) = assemble_robin(&none);
        assert!(a.values().iter().all(|&v| v == 0.0) && b.iter().all(|&v| v == 0.0));

        let left = |p: Point| p[0] == 0.0;
        let robin = tag_boundary(
            m.clone(),
            &[
                (
                    &left,
                    tag(PotentialBc::Robin {
                        kappa: 2.0,
                        value: 0.0,
                    }),
                ),
                (&|_| true, tag(PotentialBc::Neumann(0.0))),
            ],
        )
        .unwrap();
        let (a, b) = assemble_robin(&robin);
        let d = a.diagonal();
        for v in 0..4 {
            let expect = if m.vertex(v)[0] == 0.0 { 1.0 } else { 0.0 };
            assert_eq!(d[v], expect);
        }
        assert!(b.iter().all(|&x| x == 0.0));

        let load = tag_boundary(
            m.clone(),
            &[
                (
                    &left,
                    tag(PotentialBc::Robin {
                        kappa: 0.0,
                        value: 5.0,
                    }),
                ),
                (&|_| true, tag(PotentialBc::Neumann(0.0))),
            ],
        )
        .unwrap();
        let (_, b) = assemble_robin(&load);
        for v in 0..4 {
            let expect = if m.vertex(v)[0] == 0.0 { 2.5 } else { 0.0 };
            assert_eq!(b[v], expect);
        }
    }

    #[test]
    fn interpolation() {
        let m = build_rect_mesh(10.0, 1.0, 100, 10).unwrap();
        let x = interpolate(&m, |p| p[0]).unwrap();
        for (v, p) in m.vertices().iter().enumerate() {
            assert_eq!(x[v], p[0]);
        }
        let xi = vec![0.0; m.n_vertices()];
        assert!(map_field(&xi, |s| (-s).exp())
            .unwrap()
            .iter()
            .all(|&w| w == 1.0));
        assert!(matches!(
            interpolate(&m, |p| if p[0] > 5.0 { f64::NAN } else { 0.0 }),
            Err(Error::Evaluation { .. })
        ));
    }

    #[test]
    fn interpolated_exponential_dominates_inside_elements() {
        // I_h(e^{-xi}) e^{xi} >= 1 at element midpoints, = 1 at nodes.
        let m = build_rect_mesh(1.0, 1.0, 4, 4).unwrap();
        let xi = interpolate(&m, |p| 3.0 * p[0] - 2.0 * p[1] * p[1]).unwrap();
        let w = map_field(&xi, |s| (-s).exp()).unwrap();
        for tri in m.elements() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let value = 0.5 * (w[a] + w[b]) * (0.5 * (xi[a] + xi[b])).exp();
                assert!(value >= 1.0 - 1e-15);
            }
            for &v in tri {
                assert!((w[v] * xi[v].exp() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dirichlet_elimination() {
        let m = build_rect_mesh(1.0, 1.0, 2, 2).unwrap();
        let k = assemble_stiffness(&m, &vec![1.0; m.n_elements()]).unwrap();
        let b = vec![1.0; m.n_vertices()];
        let all: Vec<_> = (0..m.n_vertices()).map(|v| (v, 0.0)).collect();
        let (a, r) = apply_dirichlet(&k, &b, &all).unwrap();
        assert_eq!(a, CsrMatrix::identity(m.n_vertices()));
        assert!(r.iter().all(|&x| x == 0.0));
        let (a, r) = apply_dirichlet(&k, &b, &[]).unwrap();
        assert_eq!(a, k);
        assert_eq!(r, b);
        assert!(matches!(
            apply_dirichlet(&k, &b, &[(0, 1.0), (0, 2.0)]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn laplace_reproduces_linear_solution() {
        let m = build_rect_mesh(10.0, 1.0, 100, 10).unwrap();
        let k = assemble_stiffness(&m, &vec![1.0; m.n_elements()]).unwrap();
        let mut bdata = Vec::new();
        for (v, p) in m.vertices().iter().enumerate() {
            if p[0] == 0.0 {
                bdata.push((v, 0.0));
            } else if p[0] == 10.0 {
                bdata.push((v, 100.0));
            }
        }
        let (a, b) = apply_dirichlet(&k, &vec![0.0; m.n_vertices()], &bdata).unwrap();
        let (phi, _) = solve(&a, &b, 1e-12, 20).unwrap();
        for (v, p) in m.vertices().iter().enumerate() {
            assert!(
                (phi[v] - 10.0 * p[0]).abs() < 1e-9,
                "{} vs {}",
                phi[v],
                10.0 * p[0]
            );
        }
    }

    #[test]
    fn element_helpers() {
        let m = build_rect_mesh(1.0, 1.0, 2, 2).unwrap();
        let f = interpolate(&m, |p| 2.0 * p[0] - p[1]).unwrap();
        for e in 0..m.n_elements() {
            let g = gradient(&m, e, &f);
            assert!((g[0] - 2.0).abs() < 1e-13 && (g[1] + 1.0).abs() < 1e-13);
        }
        let ones = vec![1.0; m.n_elements()];
        assert!((element_load(&m, &ones).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(element_to_nodal(&m, &ones)
            .iter()
            .all(|&x| (x - 1.0).abs() < 1e-15));
        assert!((integrate(&m, &interpolate(&m, |p| p[0]).unwrap()) - 0.5).abs() < 1e-15);
    }
}
