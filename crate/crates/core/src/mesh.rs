//! Simplicial triangulations of rectangular channels.
//!
//! A [`Mesh`] is immutable once tagged. Besides connectivity it caches the
//! per-element geometry every assembly routine needs (areas, P1 shape
//! function gradients) and the lumped vertex weights (one third of the area
//! of every element touching a vertex).

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Boundary condition for the electrostatic potential on one boundary edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PotentialBc {
    /// `phi = value`.
    Dirichlet(f64),
    /// `eps grad(phi) . n = value`.
    Neumann(f64),
    /// `eps grad(phi) . n + kappa phi = value`.
    Robin { kappa: f64, value: f64 },
}

/// Boundary condition for the temperature on one boundary edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TemperatureBc {
    Dirichlet(f64),
    /// Zero heat flux (natural condition).
    Insulated,
}

/// Boundary condition shared by all ion species on one boundary edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpeciesBc {
    /// `rho u . n = 0`.
    NoFlux,
    /// Density pinned to the species' reference density.
    Dirichlet,
}

/// One tag per equation, carried by every boundary edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryTag {
    pub potential: PotentialBc,
    pub temperature: TemperatureBc,
    pub species: SpeciesBc,
}

impl BoundaryTag {
    pub fn new(potential: PotentialBc, temperature: TemperatureBc, species: SpeciesBc) -> Self {
        Self {
            potential,
            temperature,
            species,
        }
    }
}

/// Sides of a rectangular channel `[0, lx] x [0, ly]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Top => "top",
        }
    }

    /// Whether an edge midpoint lies on this side of `[0, lx] x [0, ly]`.
    pub fn contains(self, p: Point, lx: f64, ly: f64) -> bool {
        let tol = 1e-9 * lx.max(ly);
        match self {
            Side::Left => p[0].abs() <= tol,
            Side::Right => (p[0] - lx).abs() <= tol,
            Side::Bottom => p[1].abs() <= tol,
            Side::Top => (p[1] - ly).abs() <= tol,
        }
    }

    /// Unit inward normal.
    pub fn inward_normal(self) -> Point {
        match self {
            Side::Left => [1.0, 0.0],
            Side::Right => [-1.0, 0.0],
            Side::Bottom => [0.0, 1.0],
            Side::Top => [0.0, -1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    /// Endpoints, lower vertex index first.
    pub vertices: [usize; 2],
    /// Adjacent elements; the second slot is empty on the boundary.
    pub elements: [Option<usize>; 2],
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.elements[1].is_none()
    }

    pub fn adjacent(&self) -> impl Iterator<Item = usize> + '_ {
        self.elements.iter().flatten().copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryEdge {
    pub edge: usize,
    pub tag: Option<BoundaryTag>,
}

/// Structured-grid metadata kept for meshes produced by [`build_rect_mesh`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    elements: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    /// Local edge `k` of an element is the one opposite local vertex `k`.
    element_edges: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    areas: Vec<f64>,
    gradients: Vec<[Point; 3]>,
    vertex_weights: Vec<f64>,
    h: f64,
    grid: Option<Grid>,
}

/// Triangulates `[0, lx] x [0, ly]` with `nx x ny` rectangular cells, each
/// split along its bottom-left to top-right diagonal.
///
/// Vertices are numbered with the shorter grid direction running fastest so
/// that the assembled matrices have bandwidth `min(nx, ny) + 2`.
pub fn build_rect_mesh(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Mesh> {
    if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "channel dimensions must be positive, got {lx} x {ly}"
        )));
    }
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument(format!(
            "cell counts must be at least 1, got {nx} x {ny}"
        )));
    }
    let index = |i: usize, j: usize| {
        if nx >= ny {
            i * (ny + 1) + j
        } else {
            j * (nx + 1) + i
        }
    };
    let mut vertices = vec![[0.0; 2]; (nx + 1) * (ny + 1)];
    for i in 0..=nx {
        for j in 0..=ny {
            vertices[index(i, j)] = [lx * i as f64 / nx as f64, ly * j as f64 / ny as f64];
        }
    }
    let mut elements = Vec::with_capacity(2 * nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let v00 = index(i, j);
            let v10 = index(i + 1, j);
            let v11 = index(i + 1, j + 1);
            let v01 = index(i, j + 1);
            elements.push([v00, v10, v11]);
            elements.push([v00, v11, v01]);
        }
    }
    let mut mesh = Mesh::from_elements(vertices, elements)?;
    mesh.grid = Some(Grid { lx, ly, nx, ny });
    // Cell diagonal from the spacings, free of coordinate rounding.
    mesh.h = (lx / nx as f64).hypot(ly / ny as f64);
    Ok(mesh)
}

/// Tags every boundary edge with the first rule whose predicate accepts the
/// edge midpoint.
pub fn tag_boundary(
    mut mesh: Mesh,
    rules: &[(&dyn Fn(Point) -> bool, BoundaryTag)],
) -> Result<Mesh> {
    for k in 0..mesh.boundary_edges.len() {
        let mid = mesh.edge_midpoint(mesh.boundary_edges[k].edge);
        let tag = rules
            .iter()
            .find(|(pred, _)| pred(mid))
            .map(|(_, tag)| *tag)
            .ok_or_else(|| {
                Error::Config(format!(
                    "boundary edge with midpoint ({}, {}) is not covered by any boundary rule",
                    mid[0], mid[1]
                ))
            })?;
        mesh.boundary_edges[k].tag = Some(tag);
    }
    Ok(mesh)
}

impl Mesh {
    /// Builds connectivity and geometry from a vertex list and
    /// counterclockwise triangles.
    pub fn from_elements(vertices: Vec<Point>, elements: Vec<[usize; 3]>) -> Result<Mesh> {
        let nv = vertices.len();
        let mut edges: Vec<Edge> = Vec::new();
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut element_edges = Vec::with_capacity(elements.len());
        let mut areas = Vec::with_capacity(elements.len());
        let mut gradients = Vec::with_capacity(elements.len());
        let mut vertex_weights = vec![0.0; nv];

        for (e, tri) in elements.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidArgument(format!(
                    "element {e} references a vertex out of range"
                )));
            }
            let [p0, p1, p2] = tri.map(|v| vertices[v]);
            let twice_area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
            if twice_area <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "element {e} has non-positive signed area"
                )));
            }
            let inv = 1.0 / twice_area;
            gradients.push([
                [(p1[1] - p2[1]) * inv, (p2[0] - p1[0]) * inv],
                [(p2[1] - p0[1]) * inv, (p0[0] - p2[0]) * inv],
                [(p0[1] - p1[1]) * inv, (p1[0] - p0[0]) * inv],
            ]);
            let area = 0.5 * twice_area;
            areas.push(area);
            for &v in tri {
                vertex_weights[v] += area / 3.0;
            }

            let mut local = [0; 3];
            for (k, slot) in local.iter_mut().enumerate() {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                let key = (a.min(b), a.max(b));
                let idx = *lookup.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        vertices: [key.0, key.1],
                        elements: [None, None],
                    });
                    edges.len() - 1
                });
                let edge = &mut edges[idx];
                if edge.elements[0].is_none() {
                    edge.elements[0] = Some(e);
                } else if edge.elements[1].is_none() {
                    edge.elements[1] = Some(e);
                } else {
                    return Err(Error::InvalidArgument(format!(
                        "edge ({}, {}) shared by more than two elements",
                        key.0, key.1
                    )));
                }
                *slot = idx;
            }
            element_edges.push(local);
        }

        let boundary_edges = edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_boundary())
            .map(|(edge, _)| BoundaryEdge { edge, tag: None })
            .collect();
        let h = edges
            .iter()
            .map(|e| dist(vertices[e.vertices[0]], vertices[e.vertices[1]]))
            .fold(0.0, f64::max);

        Ok(Mesh {
            vertices,
            elements,
            edges,
            element_edges,
            boundary_edges,
            areas,
            gradients,
            vertex_weights,
            h,
            grid: None,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> Point {
        self.vertices[v]
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn element_edges(&self) -> &[[usize; 3]] {
        &self.element_edges
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn area(&self, element: usize) -> f64 {
        self.areas[element]
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    /// Gradients of the three barycentric shape functions on `element`.
    pub fn gradients(&self, element: usize) -> &[Point; 3] {
        &self.gradients[element]
    }

    /// Lumped mass weights: one third of the area of every element touching
    /// each vertex.
    pub fn vertex_weights(&self) -> &[f64] {
        &self.vertex_weights
    }

    /// Maximum edge length.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn grid(&self) -> Option<Grid> {
        self.grid
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn edge_length(&self, edge: usize) -> f64 {
        let [a, b] = self.edges[edge].vertices;
        dist(self.vertices[a], self.vertices[b])
    }

    pub fn edge_midpoint(&self, edge: usize) -> Point {
        let [a, b] = self.edges[edge].vertices;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
    }

    pub fn centroid(&self, element: usize) -> Point {
        let [a, b, c] = self.elements[element].map(|v| self.vertices[v]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Outward unit normal of a boundary edge.
    pub fn outward_normal(&self, edge: usize) -> Point {
        let e = &self.edges[edge];
        let [a, b] = e.vertices;
        let element = e.elements[0].expect("edge has an adjacent element");
        let third = self.elements[element]
            .iter()
            .copied()
            .find(|&v| v != a && v != b)
            .expect("triangle has a vertex off the edge");
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[third]);
        let len = dist(pa, pb);
        let mut n = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
        let to_third = [pc[0] - pa[0], pc[1] - pa[1]];
        if n[0] * to_third[0] + n[1] * to_third[1] > 0.0 {
            n = [-n[0], -n[1]];
        }
        n
    }

    /// Tags of all boundary edges; `None` entries are untagged.
    pub fn boundary_tags(&self) -> impl Iterator<Item = (usize, Option<&BoundaryTag>)> {
        self.boundary_edges.iter().map(|b| (b.edge, b.tag.as_ref()))
    }

    /// Whether every boundary edge carries a tag.
    pub fn is_tagged(&self) -> bool {
        self.boundary_edges.iter().all(|b| b.tag.is_some())
    }

    /// Vertices on boundary edges whose tag satisfies `select`, with the
    /// value it yields. Conflicting values at shared vertices are reported.
    pub fn boundary_vertex_values(
        &self,
        select: impl Fn(&BoundaryTag) -> Option<f64>,
    ) -> Result<Vec<(usize, f64)>> {
        let mut values: Vec<Option<f64>> = vec![None; self.n_vertices()];
        for b in &self.boundary_edges {
            let Some(tag) = &b.tag else { continue };
            let Some(value) = select(tag) else { continue };
            for &v in &self.edges[b.edge].vertices {
                match values[v] {
                    Some(old)
                        if (old - value).abs() > 1e-12 * old.abs().max(value.abs()).max(1.0) =>
                    {
                        let p = self.vertices[v];
                        return Err(Error::Config(format!(
                            "conflicting boundary values {old} and {value} at vertex {v} ({}, {})",
                            p[0], p[1]
                        )));
                    }
                    _ => values[v] = Some(value),
                }
            }
        }
        Ok(values
            .into_iter()
            .enumerate()
            .filter_map(|(v, val)| val.map(|x| (v, x)))
            .collect())
    }

    /// Vertices lying on any boundary edge.
    pub fn boundary_vertices(&self) -> Vec<usize> {
        let mut flag = vec![false; self.n_vertices()];
        for b in &self.boundary_edges {
            for &v in &self.edges[b.edge].vertices {
                flag[v] = true;
            }
        }
        (0..self.n_vertices()).filter(|&v| flag[v]).collect()
    }

    /// Largest interior angle over all elements, in radians.
    pub fn max_angle(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for tri in &self.elements {
            let p = tri.map(|v| self.vertices[v]);
            for k in 0..3 {
                let a = p[k];
                let b = p[(k + 1) % 3];
                let c = p[(k + 2) % 3];
                let u = [b[0] - a[0], b[1] - a[1]];
                let w = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * w[0] + u[1] * w[1]) / (norm(u) * norm(w));
                worst = worst.max(cos.clamp(-1.0, 1.0).acos());
            }
        }
        worst
    }

    /// Grid vertex `(i, j)` of a structured mesh.
    pub fn grid_vertex(&self, i: usize, j: usize) -> Option<usize> {
        let g = self.grid?;
        if i > g.nx || j > g.ny {
            return None;
        }
        Some(if g.nx >= g.ny {
            i * (g.ny + 1) + j
        } else {
            j * (g.nx + 1) + i
        })
    }
}

fn dist(a: Point, b: Point) -> f64 {
    norm([b[0] - a[0], b[1] - a[1]])
}

fn norm(v: Point) -> f64 {
    v[0].hypot(v[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all(_: Point) -> bool {
        true
    }

    fn dirichlet_everywhere() -> BoundaryTag {
        BoundaryTag::new(
            PotentialBc::Dirichlet(0.0),
            TemperatureBc::Dirichlet(1.0),
            SpeciesBc::NoFlux,
        )
    }

    #[test]
    fn smallest_grid_counts() {
        let m = build_rect_mesh(1.0, 1.0, 1, 1).unwrap();
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_elements(), 2);
        assert_eq!(m.n_edges(), 5);
        assert_eq!(m.boundary_edges().len(), 4);
    }

    #[test]
    fn channel_counts() {
        let m = build_rect_mesh(10.0, 1.0, 100, 10).unwrap();
        assert_eq!(m.n_vertices(), 101 * 11);
        assert_eq!(m.n_elements(), 2 * 100 * 10);
        assert_eq!(m.boundary_edges().len(), 2 * 100 + 2 * 10);
    }

    #[test]
    fn euler_relation() {
        for (nx, ny) in [(1, 1), (2, 1), (3, 7), (100, 10)] {
            let m = build_rect_mesh(2.0, 1.0, nx, ny).unwrap();
            let chi = m.n_vertices() as i64 - m.n_edges() as i64 + m.n_elements() as i64;
            assert_eq!(chi, 1, "nx={nx} ny={ny}");
        }
        let m = build_rect_mesh(2.0, 1.0, 2, 1).unwrap();
        assert_eq!((m.n_vertices(), m.n_edges(), m.n_elements()), (6, 9, 4));
    }

    #[test]
    fn edge_adjacency_and_orientation() {
        let m = build_rect_mesh(3.0, 2.0, 4, 3).unwrap();
        for e in m.edges() {
            assert!(e.vertices[0] < e.vertices[1]);
            assert!(e.elements[0].is_some());
        }
        let boundary = m.edges().iter().filter(|e| e.is_boundary()).count();
        assert_eq!(boundary, 2 * 4 + 2 * 3);
        assert!(m.areas().iter().all(|&a| a > 0.0));
    }

    #[test]
    fn non_obtuse_and_refinement_halves_h() {
        let coarse = build_rect_mesh(10.0, 1.0, 50, 5).unwrap();
        let fine = build_rect_mesh(10.0, 1.0, 100, 10).unwrap();
        assert!(coarse.max_angle() <= std::f64::consts::FRAC_PI_2 + 1e-12);
        assert_eq!(coarse.h(), 2.0 * fine.h());
    }

    #[test]
    fn invalid_dimensions() {
        assert!(matches!(
            build_rect_mesh(0.0, 1.0, 1, 1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            build_rect_mesh(1.0, -1.0, 1, 1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            build_rect_mesh(1.0, 1.0, 0, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn lumped_weights_sum_to_area() {
        let m = build_rect_mesh(10.0, 1.0, 20, 4).unwrap();
        let s: f64 = m.vertex_weights().iter().sum();
        assert!((s - 10.0).abs() < 1e-12);
    }

    #[test]
    fn tag_channel_sides() {
        let m = build_rect_mesh(10.0, 1.0, 100, 10).unwrap();
        let ends =
            |p: Point| Side::Left.contains(p, 10.0, 1.0) || Side::Right.contains(p, 10.0, 1.0);
        let walls =
            |p: Point| Side::Bottom.contains(p, 10.0, 1.0) || Side::Top.contains(p, 10.0, 1.0);
        let end_tag = dirichlet_everywhere();
        let wall_tag = BoundaryTag::new(
            PotentialBc::Neumann(0.0),
            TemperatureBc::Dirichlet(1.0),
            SpeciesBc::NoFlux,
        );
        let m = tag_boundary(m, &[(&ends, end_tag), (&walls, wall_tag)]).unwrap();
        assert!(m.is_tagged());
        let neumann = m
            .boundary_tags()
            .filter(|(_, t)| matches!(t.unwrap().potential, PotentialBc::Neumann(_)))
            .count();
        assert_eq!(neumann, 200);
        assert_eq!(m.boundary_edges().len(), 220);
    }

    #[test]
    fn tag_requires_cover() {
        let m = build_rect_mesh(1.0, 1.0, 2, 2).unwrap();
        let err = tag_boundary(m, &[]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("midpoint"));
    }

    #[test]
    fn single_dirichlet_rule() {
        let m = build_rect_mesh(1.0, 1.0, 3, 3).unwrap();
        let m = tag_boundary(m, &[(&all, dirichlet_everywhere())]).unwrap();
        assert!(m
            .boundary_tags()
            .all(|(_, t)| matches!(t.unwrap().potential, PotentialBc::Dirichlet(_))));
    }

    #[test]
    fn outward_normals_point_out() {
        let m = build_rect_mesh(2.0, 1.0, 4, 2).unwrap();
        for b in m.boundary_edges() {
            let mid = m.edge_midpoint(b.edge);
            let n = m.outward_normal(b.edge);
            let probe = [mid[0] + 1e-3 * n[0], mid[1] + 1e-3 * n[1]];
            let outside = probe[0] < 0.0 || probe[0] > 2.0 || probe[1] < 0.0 || probe[1] > 1.0;
            assert!(outside, "normal {n:?} at {mid:?}");
        }
    }

    #[test]
    fn conflicting_boundary_values() {
        let m = build_rect_mesh(1.0, 1.0, 2, 2).unwrap();
        let left = |p: Point| Side::Left.contains(p, 1.0, 1.0);
        let mut a = dirichlet_everywhere();
        let mut b = dirichlet_everywhere();
        a.potential = PotentialBc::Dirichlet(0.0);
        b.potential = PotentialBc::Dirichlet(5.0);
        let m = tag_boundary(m, &[(&left, a), (&all, b)]).unwrap();
        let r = m.boundary_vertex_values(|t| match t.potential {
            PotentialBc::Dirichlet(v) => Some(v),
            _ => None,
        });
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
