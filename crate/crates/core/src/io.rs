//! Output writers: diagnostic CSV time series and legacy ASCII VTK snapshots.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so
//! identical runs produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::diagnostics::DiagRecord;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::solver::{Problem, SimState};

pub fn csv_header(n_species: usize) -> String {
    let mut cols = vec!["time".to_string(), "dt".into(), "picard_iters".into()];
    cols.extend((1..=n_species).map(|i| format!("mass_{i}")));
    for c in [
        "entropy",
        "dissipation",
        "boundary_flux",
        "energy_functional",
        "current",
        "T_min",
        "T_max",
        "m_proxy",
    ] {
        cols.push(c.into());
    }
    cols.join(",")
}

pub fn csv_row(r: &DiagRecord) -> String {
    let mut cols = vec![
        format!("{:?}", r.time),
        format!("{:?}", r.dt),
        r.picard_iters.to_string(),
    ];
    cols.extend(r.masses.iter().map(|m| format!("{m:?}")));
    for x in [
        r.entropy,
        r.dissipation,
        r.boundary_flux,
        r.energy_functional,
        r.current,
        r.t_min,
        r.t_max,
        r.m_proxy,
    ] {
        cols.push(format!("{x:?}"));
    }
    cols.join(",")
}

/// Incremental CSV writer; every row is flushed so a failed run leaves the
/// records written so far on disk.
pub struct DiagCsvWriter<W: Write> {
    out: W,
    n_species: usize,
}

impl DiagCsvWriter<BufWriter<File>> {
    pub fn create(path: &Path, n_species: usize) -> Result<Self> {
        let file = File::create(path).map_err(|e| io_context(path, e))?;
        DiagCsvWriter::new(BufWriter::new(file), n_species)
    }
}

impl<W: Write> DiagCsvWriter<W> {
    pub fn new(mut out: W, n_species: usize) -> Result<Self> {
        writeln!(out, "{}", csv_header(n_species))?;
        out.flush()?;
        Ok(Self { out, n_species })
    }

    pub fn write(&mut self, r: &DiagRecord) -> Result<()> {
        if r.masses.len() != self.n_species {
            return Err(Error::InvalidArgument(format!(
                "record has {} masses, header declares {}",
                r.masses.len(),
                self.n_species
            )));
        }
        writeln!(self.out, "{}", csv_row(r))?;
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn write_diag_csv(path: &Path, n_species: usize, records: &[DiagRecord]) -> Result<()> {
    let mut w = DiagCsvWriter::create(path, n_species)?;
    for r in records {
        w.write(r)?;
    }
    Ok(())
}

fn io_context(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

/// Named arrays of one snapshot. Owned, so it can be handed to a writer thread.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Snapshot {
    pub title: String,
    pub point_scalars: Vec<(String, Vec<f64>)>,
    pub cell_vectors: Vec<(String, Vec<Point>)>,
}

impl Snapshot {
    /// `phi`, `rho_<name>`, `T` at the vertices and `u_<name>` on the cells.
    pub fn from_state(problem: &Problem, state: &SimState) -> Snapshot {
        let mut point_scalars = vec![("phi".to_string(), state.phi.clone())];
        for (i, s) in problem.species.iter().enumerate() {
            point_scalars.push((format!("rho_{}", s.name), state.density(i)));
        }
        point_scalars.push(("T".into(), state.temperature()));
        let cell_vectors = problem
            .species
            .iter()
            .zip(&state.u)
            .map(|(s, u)| (format!("u_{}", s.name), u.clone()))
            .collect();
        Snapshot {
            title: format!("heatpnp snapshot t={:?}", state.time),
            point_scalars,
            cell_vectors,
        }
    }
}

pub fn write_vtk<W: Write>(mut w: W, mesh: &Mesh, snap: &Snapshot) -> Result<()> {
    for (name, values) in &snap.point_scalars {
        if values.len() != mesh.n_vertices() {
            return Err(Error::InvalidArgument(format!(
                "point array {name} has {} values for {} vertices",
                values.len(),
                mesh.n_vertices()
            )));
        }
    }
    for (name, values) in &snap.cell_vectors {
        if values.len() != mesh.n_elements() {
            return Err(Error::InvalidArgument(format!(
                "cell array {name} has {} values for {} elements",
                values.len(),
                mesh.n_elements()
            )));
        }
    }
    let title = snap.title.replace('\n', " ");
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", if title.is_empty() { "heatpnp" } else { &title })?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.n_vertices())?;
    for p in mesh.vertices() {
        writeln!(w, "{:?} {:?} 0.0", p[0], p[1])?;
    }
    let ne = mesh.n_elements();
    writeln!(w, "CELLS {} {}", ne, 4 * ne)?;
    for t in mesh.elements() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {ne}")?;
    for _ in 0..ne {
        writeln!(w, "5")?;
    }
    if !snap.point_scalars.is_empty() {
        writeln!(w, "POINT_DATA {}", mesh.n_vertices())?;
        for (name, values) in &snap.point_scalars {
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for v in values {
                writeln!(w, "{v:?}")?;
            }
        }
    }
    if !snap.cell_vectors.is_empty() {
        writeln!(w, "CELL_DATA {ne}")?;
        for (name, values) in &snap.cell_vectors {
            writeln!(w, "VECTORS {name} double")?;
            for v in values {
                writeln!(w, "{:?} {:?} 0.0", v[0], v[1])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_vtk_snapshot(path: &Path, mesh: &Mesh, snap: &Snapshot) -> Result<()> {
    let file = File::create(path).map_err(|e| io_context(path, e))?;
    write_vtk(BufWriter::new(file), mesh, snap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_rect_mesh;

    fn record(t: f64) -> DiagRecord {
        DiagRecord {
            time: t,
            dt: 1e-3,
            picard_iters: 3,
            masses: vec![0.6, 0.6000000000000001],
            entropy: -6.9,
            dissipation: 0.1,
            boundary_flux: -0.1,
            energy_functional: -4.5,
            current: -1.8,
            t_min: 1.0,
            t_max: 3.25,
            m_proxy: 1.0,
        }
    }

    #[test]
    fn header_only_and_rows() {
        let w = DiagCsvWriter::new(Vec::new(), 2).unwrap();
        let text = String::from_utf8(w.into_inner()).unwrap();
        assert_eq!(
            text,
            "time,dt,picard_iters,mass_1,mass_2,entropy,dissipation,boundary_flux,energy_functional,current,T_min,T_max,m_proxy\n"
        );
        let mut w = DiagCsvWriter::new(Vec::new(), 2).unwrap();
        w.write(&record(0.5)).unwrap();
        let text = String::from_utf8(w.into_inner()).unwrap();
        let row = text.lines().nth(1).unwrap();
        assert_eq!(
            row,
            "0.5,0.001,3,0.6,0.6000000000000001,-6.9,0.1,-0.1,-4.5,-1.8,1.0,3.25,1.0"
        );
        let parsed: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(parsed[4], 0.6000000000000001);
        assert!(DiagCsvWriter::new(Vec::new(), 1)
            .unwrap()
            .write(&record(0.0))
            .is_err());
    }

    #[test]
    fn vtk_layout() {
        let m = build_rect_mesh(1.0, 1.0, 1, 1).unwrap();
        let snap = Snapshot {
            title: "t".into(),
            point_scalars: vec![("phi".into(), vec![0.0, 1.0, 2.0, 3.0])],
            cell_vectors: vec![("u".into(), vec![[1.0, 0.0], [0.0, 1.0]])],
        };
        let mut out = Vec::new();
        write_vtk(&mut out, &m, &snap).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(text.contains("POINTS 4 double"));
        assert!(text.contains("CELLS 2 8"));
        assert_eq!(text.matches("SCALARS").count(), 1);
        assert!(text.contains("CELL_DATA 2\nVECTORS u double"));
        let bad = Snapshot {
            point_scalars: vec![("phi".into(), vec![0.0; 3])],
            ..Default::default()
        };
        assert!(matches!(
            write_vtk(Vec::new(), &m, &bad),
            Err(Error::InvalidArgument(_))
        ));
    }
}
