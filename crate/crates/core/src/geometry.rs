//! Finite-volume meshes for the two supported geometries.
//!
//! * [`Geometry::RadialBall`]: a 3-D ball reduced by spherical symmetry to `n`
//!   concentric shells. The membrane is a single surface node, so surface
//!   fields are one scalar.
//! * [`Geometry::Disk`]: a 2-D disk on a polar tensor grid of `nr x ntheta`
//!   cells whose outer ring touches the circle. The circle carries `ntheta`
//!   surface nodes joined in a cycle.
//!
//! Both meshes are orthogonal, so two-point flux approximations are
//! consistent on every face.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryKind {
    RadialBall,
    Disk,
}

impl GeometryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GeometryKind::RadialBall => "radial_ball",
            GeometryKind::Disk => "disk",
        }
    }
}

/// Geometry description from which a [`Mesh`] is built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    RadialBall { radius: f64, n: usize },
    Disk { radius: f64, nr: usize, ntheta: usize },
}

impl Geometry {
    pub fn kind(&self) -> GeometryKind {
        match self {
            Geometry::RadialBall { .. } => GeometryKind::RadialBall,
            Geometry::Disk { .. } => GeometryKind::Disk,
        }
    }

    pub fn radius(&self) -> f64 {
        match *self {
            Geometry::RadialBall { radius, .. } | Geometry::Disk { radius, .. } => radius,
        }
    }

    pub fn build(&self) -> Result<Mesh> {
        match *self {
            Geometry::RadialBall { radius, n } => build_radial_ball_mesh(radius, n),
            Geometry::Disk { radius, nr, ntheta } => build_disk_mesh(radius, nr, ntheta),
        }
    }
}

/// Bulk control volume. The center is given in polar form; `angle` is zero
/// for the radial ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub radius: f64,
    pub angle: f64,
    pub measure: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorFace {
    pub cells: [usize; 2],
    pub measure: f64,
    /// Center-to-center distance.
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub cell: usize,
    pub measure: f64,
    /// Distance from the cell center to the face.
    pub distance: f64,
    pub node: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceNode {
    pub angle: f64,
    pub measure: f64,
}

/// Edge of the surface graph; `weight` is the inverse geodesic distance
/// between the two nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceEdge {
    pub nodes: [usize; 2],
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    geometry: Geometry,
    cells: Vec<Cell>,
    interior_faces: Vec<InteriorFace>,
    boundary_faces: Vec<BoundaryFace>,
    surface_nodes: Vec<SurfaceNode>,
    surface_edges: Vec<SurfaceEdge>,
    face_of_node: Vec<usize>,
}

fn check_radius(radius: f64) -> Result<()> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::config(format!(
            "radius must be positive and finite, got {radius}"
        )));
    }
    Ok(())
}

/// Builds `n` shells of width `radius / n`.
pub fn build_radial_ball_mesh(radius: f64, n: usize) -> Result<Mesh> {
    check_radius(radius)?;
    if n == 0 {
        return Err(Error::config("radial ball needs at least one shell (n >= 1)"));
    }
    let h = radius / n as f64;
    let edge = |i: usize| if i == n { radius } else { i as f64 * h };
    let cells = (0..n)
        .map(|i| {
            let (a, b) = (edge(i), edge(i + 1));
            Cell {
                radius: 0.5 * (a + b),
                angle: 0.0,
                measure: 4.0 * PI / 3.0 * (b.powi(3) - a.powi(3)),
            }
        })
        .collect();
    let interior_faces = (1..n)
        .map(|i| {
            let r = edge(i);
            InteriorFace {
                cells: [i - 1, i],
                measure: 4.0 * PI * r * r,
                distance: h,
            }
        })
        .collect();
    let area = 4.0 * PI * radius * radius;
    Ok(Mesh {
        geometry: Geometry::RadialBall { radius, n },
        cells,
        interior_faces,
        boundary_faces: vec![BoundaryFace {
            cell: n - 1,
            measure: area,
            distance: 0.5 * h,
            node: 0,
        }],
        surface_nodes: vec![SurfaceNode {
            angle: 0.0,
            measure: area,
        }],
        surface_edges: Vec::new(),
        face_of_node: vec![0],
    })
}

/// Builds a polar grid with `nr` rings and `ntheta` sectors. Cell `(i, j)`
/// (ring `i`, sector `j`) has index `i * ntheta + j`. The innermost ring is
/// made of wedges meeting at the origin with no flux between them across it.
pub fn build_disk_mesh(radius: f64, nr: usize, ntheta: usize) -> Result<Mesh> {
    check_radius(radius)?;
    if nr == 0 {
        return Err(Error::config("disk needs at least one ring (nr >= 1)"));
    }
    if ntheta < 3 {
        return Err(Error::config(format!(
            "disk needs ntheta >= 3 for a non-degenerate surface cycle, got {ntheta}"
        )));
    }
    let h = radius / nr as f64;
    let dtheta = 2.0 * PI / ntheta as f64;
    let edge = |i: usize| if i == nr { radius } else { i as f64 * h };
    let index = |i: usize, j: usize| i * ntheta + j % ntheta;

    let mut cells = Vec::with_capacity(nr * ntheta);
    for i in 0..nr {
        let (a, b) = (edge(i), edge(i + 1));
        for j in 0..ntheta {
            cells.push(Cell {
                radius: 0.5 * (a + b),
                angle: (j as f64 + 0.5) * dtheta,
                measure: 0.5 * (b * b - a * a) * dtheta,
            });
        }
    }

    let mut interior_faces = Vec::with_capacity(2 * nr * ntheta);
    for i in 0..nr {
        let rc = 0.5 * (edge(i) + edge(i + 1));
        for j in 0..ntheta {
            // angular neighbour
            interior_faces.push(InteriorFace {
                cells: [index(i, j), index(i, j + 1)],
                measure: h,
                distance: rc * dtheta,
            });
            // radial neighbour
            if i + 1 < nr {
                interior_faces.push(InteriorFace {
                    cells: [index(i, j), index(i + 1, j)],
                    measure: edge(i + 1) * dtheta,
                    distance: h,
                });
            }
        }
    }

    let arc = radius * dtheta;
    let boundary_faces = (0..ntheta)
        .map(|j| BoundaryFace {
            cell: index(nr - 1, j),
            measure: arc,
            distance: 0.5 * h,
            node: j,
        })
        .collect();
    let surface_nodes = (0..ntheta)
        .map(|j| SurfaceNode {
            angle: (j as f64 + 0.5) * dtheta,
            measure: arc,
        })
        .collect();
    let surface_edges = (0..ntheta)
        .map(|j| SurfaceEdge {
            nodes: [j, (j + 1) % ntheta],
            weight: 1.0 / arc,
        })
        .collect();

    Ok(Mesh {
        geometry: Geometry::Disk { radius, nr, ntheta },
        cells,
        interior_faces,
        boundary_faces,
        surface_nodes,
        surface_edges,
        face_of_node: (0..ntheta).collect(),
    })
}

impl Mesh {
    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn kind(&self) -> GeometryKind {
        self.geometry.kind()
    }

    pub fn radius(&self) -> f64 {
        self.geometry.radius()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn interior_faces(&self) -> &[InteriorFace] {
        &self.interior_faces
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    pub fn surface_nodes(&self) -> &[SurfaceNode] {
        &self.surface_nodes
    }

    pub fn surface_edges(&self) -> &[SurfaceEdge] {
        &self.surface_edges
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.surface_nodes.len()
    }

    /// Boundary face attached to surface node `node`.
    pub fn boundary_face_of_node(&self, node: usize) -> &BoundaryFace {
        &self.boundary_faces[self.face_of_node[node]]
    }

    /// Bulk cell adjacent to surface node `node`.
    pub fn cell_of_node(&self, node: usize) -> usize {
        self.boundary_face_of_node(node).cell
    }

    pub fn bulk_measure(&self) -> f64 {
        self.cells.iter().map(|c| c.measure).sum()
    }

    pub fn surface_measure(&self) -> f64 {
        self.surface_nodes.iter().map(|s| s.measure).sum()
    }

    /// Exact |B| of the continuous domain.
    pub fn exact_bulk_measure(&self) -> f64 {
        let r = self.radius();
        match self.kind() {
            GeometryKind::RadialBall => 4.0 / 3.0 * PI * r.powi(3),
            GeometryKind::Disk => PI * r * r,
        }
    }

    /// Exact |Γ| of the continuous boundary.
    pub fn exact_surface_measure(&self) -> f64 {
        let r = self.radius();
        match self.kind() {
            GeometryKind::RadialBall => 4.0 * PI * r * r,
            GeometryKind::Disk => 2.0 * PI * r,
        }
    }

    pub fn check_bulk(&self, what: &'static str, field: &[f64]) -> Result<()> {
        check_len(what, self.n_cells(), field.len())
    }

    pub fn check_surface(&self, what: &'static str, field: &[f64]) -> Result<()> {
        check_len(what, self.n_nodes(), field.len())
    }

    /// Applies the discrete Laplace–Beltrami operator, returning values per
    /// unit surface measure. Zero for the radial ball.
    pub fn laplace_beltrami(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_surface("surface field", u)?;
        let mut out = vec![0.0; u.len()];
        for e in &self.surface_edges {
            let [a, b] = e.nodes;
            let flux = e.weight * (u[b] - u[a]);
            out[a] += flux;
            out[b] -= flux;
        }
        for (o, node) in out.iter_mut().zip(&self.surface_nodes) {
            *o /= node.measure;
        }
        Ok(out)
    }

    /// Plain-text summary used for debugging output.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "geometry = {}", self.kind().as_str());
        let _ = writeln!(s, "radius = {}", self.radius());
        match self.geometry {
            Geometry::RadialBall { n, .. } => {
                let _ = writeln!(s, "n = {n}");
            }
            Geometry::Disk { nr, ntheta, .. } => {
                let _ = writeln!(s, "nr = {nr}");
                let _ = writeln!(s, "ntheta = {ntheta}");
            }
        }
        let _ = writeln!(s, "bulk_cells = {}", self.cells.len());
        let _ = writeln!(s, "interior_faces = {}", self.interior_faces.len());
        let _ = writeln!(s, "boundary_faces = {}", self.boundary_faces.len());
        let _ = writeln!(s, "surface_nodes = {}", self.surface_nodes.len());
        let _ = writeln!(s, "surface_edges = {}", self.surface_edges.len());
        let _ = writeln!(s, "bulk_measure = {:e}", self.bulk_measure());
        let _ = writeln!(s, "surface_measure = {:e}", self.surface_measure());
        s
    }
}

/// Piecewise-constant trace: each surface node takes the value of its
/// adjacent boundary cell.
pub fn trace(mesh: &Mesh, v: &[f64]) -> Result<Vec<f64>> {
    mesh.check_bulk("bulk field", v)?;
    Ok((0..mesh.n_nodes()).map(|i| v[mesh.cell_of_node(i)]).collect())
}
