//! Degree-of-freedom maps for the clamped quadratic displacement space and the
//! linear pressure space.
//!
//! Displacement dofs are numbered `2 * node + component` over the quadratic
//! nodes (vertices first, then edge midpoints). All boundary nodes are
//! constrained to zero. Pressure dofs are the mesh vertices; with a non-empty
//! Dirichlet part the Dirichlet vertices are removed, otherwise the space is
//! the zero-mean subspace and the solvers enforce the mean constraint.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mesh::{Point, TriMesh};

/// Local edge `k` of a triangle joins local vertices `LOCAL_EDGES[k]`.
pub const LOCAL_EDGES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

/// Free/constrained bookkeeping for one space.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    free_index: Vec<Option<usize>>,
    free: Vec<usize>,
}

impl DofMap {
    fn new(n_dofs: usize, constrained: &[bool]) -> Self {
        let mut free_index = vec![None; n_dofs];
        let mut free = Vec::new();
        for d in 0..n_dofs {
            if !constrained[d] {
                free_index[d] = Some(free.len());
                free.push(d);
            }
        }
        Self { free_index, free }
    }

    pub fn n_dofs(&self) -> usize {
        self.free_index.len()
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn n_constrained(&self) -> usize {
        self.n_dofs() - self.n_free()
    }

    /// Position of `dof` among the free dofs, `None` when constrained.
    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.free_index[dof]
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.free_index[dof].is_none()
    }

    /// Gathers the free entries of a full-length vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| full[d]).collect()
    }

    /// Scatters free values into a full-length vector with zeros elsewhere.
    pub fn extend(&self, free_values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_dofs()];
        for (&d, &v) in self.free.iter().zip(free_values) {
            out[d] = v;
        }
        out
    }
}

/// How the pressure space is closed.
#[derive(Debug, Clone, PartialEq)]
pub enum PressureConstraint {
    /// `V_D`: the listed vertices carry `p = 0`.
    DirichletNodes(Vec<usize>),
    /// `V_N`: no Dirichlet part, pressures are normalized to zero mean.
    ZeroMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    Displacement,
    Pressure,
}

/// A discrete function: coefficients over the full dof map of its space.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub coefficients: Vec<f64>,
    pub kind: SpaceKind,
}

impl Field {
    pub fn zeros(spaces: &Spaces, kind: SpaceKind) -> Self {
        let n = match kind {
            SpaceKind::Displacement => spaces.displacement.n_dofs(),
            SpaceKind::Pressure => spaces.pressure.n_dofs(),
        };
        Self { coefficients: vec![0.0; n], kind }
    }

    pub fn pressure(coefficients: Vec<f64>) -> Self {
        Self { coefficients, kind: SpaceKind::Pressure }
    }

    pub fn displacement(coefficients: Vec<f64>) -> Self {
        Self { coefficients, kind: SpaceKind::Displacement }
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

/// Quadratic vector displacement space and linear scalar pressure space on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Spaces {
    n_vertices: usize,
    edges: Vec<[usize; 2]>,
    triangle_edges: Vec<[usize; 3]>,
    node_coords: Vec<Point>,
    pub displacement: DofMap,
    pub pressure: DofMap,
    pub pressure_constraint: PressureConstraint,
}

impl Spaces {
    pub fn build(mesh: &TriMesh) -> Self {
        let nv = mesh.vertices().len();
        let mut edge_index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut edges = Vec::new();
        let mut triangle_edges = Vec::with_capacity(mesh.triangles().len());
        for tri in mesh.triangles() {
            let mut local = [0usize; 3];
            for (k, [a, b]) in LOCAL_EDGES.iter().enumerate() {
                let (va, vb) = (tri[*a], tri[*b]);
                let key = (va.min(vb), va.max(vb));
                let next = edges.len();
                let id = *edge_index.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    next
                });
                local[k] = id;
            }
            triangle_edges.push(local);
        }

        let mut node_coords: Vec<Point> = mesh.vertices().to_vec();
        for [a, b] in &edges {
            let (pa, pb) = (mesh.vertices()[*a], mesh.vertices()[*b]);
            node_coords.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
        }

        let n_nodes = nv + edges.len();
        let mut node_on_boundary = vec![false; n_nodes];
        for v in mesh.boundary_vertices() {
            node_on_boundary[v] = true;
        }
        for e in mesh.boundary_edges() {
            let [a, b] = e.vertices;
            let id = edge_index[&(a.min(b), a.max(b))];
            node_on_boundary[nv + id] = true;
        }
        let disp_constrained: Vec<bool> = (0..2 * n_nodes).map(|d| node_on_boundary[d / 2]).collect();
        let displacement = DofMap::new(2 * n_nodes, &disp_constrained);

        let (pressure, pressure_constraint) = if mesh.has_dirichlet_part() {
            let nodes = mesh.dirichlet_vertices();
            let mut constrained = vec![false; nv];
            for &v in &nodes {
                constrained[v] = true;
            }
            (DofMap::new(nv, &constrained), PressureConstraint::DirichletNodes(nodes))
        } else {
            (DofMap::new(nv, &vec![false; nv]), PressureConstraint::ZeroMean)
        };

        Self { n_vertices: nv, edges, triangle_edges, node_coords, displacement, pressure, pressure_constraint }
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Number of quadratic nodes (vertices plus edge midpoints).
    pub fn n_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn node_coords(&self) -> &[Point] {
        &self.node_coords
    }

    pub fn is_zero_mean(&self) -> bool {
        matches!(self.pressure_constraint, PressureConstraint::ZeroMean)
    }

    /// Quadratic nodes of triangle `t`: three vertices then the midpoints of
    /// local edges (0,1), (1,2), (2,0).
    pub fn element_nodes(&self, mesh: &TriMesh, t: usize) -> [usize; 6] {
        let [a, b, c] = mesh.triangles()[t];
        let [e0, e1, e2] = self.triangle_edges[t];
        let nv = self.n_vertices;
        [a, b, c, nv + e0, nv + e1, nv + e2]
    }

    /// Displacement dofs of triangle `t`, ordered node-major:
    /// `[n0.x, n0.y, n1.x, n1.y, ...]`.
    pub fn element_displacement_dofs(&self, mesh: &TriMesh, t: usize) -> [usize; 12] {
        let nodes = self.element_nodes(mesh, t);
        let mut out = [0usize; 12];
        for (k, &nd) in nodes.iter().enumerate() {
            out[2 * k] = 2 * nd;
            out[2 * k + 1] = 2 * nd + 1;
        }
        out
    }

    /// Checks that a field has the right length and, for displacements,
    /// vanishes on constrained dofs.
    pub fn check_field(&self, field: &Field, kind: SpaceKind) -> Result<()> {
        if field.kind != kind {
            return Err(Error::Mismatch(format!("expected a {kind:?} field, got {:?}", field.kind)));
        }
        let map = match kind {
            SpaceKind::Displacement => &self.displacement,
            SpaceKind::Pressure => &self.pressure,
        };
        if field.len() != map.n_dofs() {
            return Err(Error::Mismatch(format!(
                "{kind:?} field has {} coefficients, space has {}",
                field.len(),
                map.n_dofs()
            )));
        }
        if kind == SpaceKind::Displacement {
            for d in 0..map.n_dofs() {
                if map.is_constrained(d) && field.coefficients[d] != 0.0 {
                    return Err(Error::Mismatch(format!("displacement dof {d} is constrained but nonzero")));
                }
            }
        }
        Ok(())
    }
}

/// `|Ω|^{-1} ∫ f` for a linear field, exact (each vertex carries area/3).
pub fn mean_value(f: &Field, mesh: &TriMesh) -> f64 {
    let mut integral = 0.0;
    let mut area = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.signed_area(t);
        integral += a / 3.0 * (f.coefficients[tri[0]] + f.coefficients[tri[1]] + f.coefficients[tri[2]]);
        area += a;
    }
    integral / area
}

/// Orthogonal projection onto zero-mean functions: `f - mean(f)`.
pub fn zero_mean_project(f: &Field, mesh: &TriMesh) -> Field {
    let m = mean_value(f, mesh);
    Field::pressure(f.coefficients.iter().map(|v| v - m).collect())
}

/// Nodal interpolant of a scalar function into the pressure space.
pub fn interpolate_scalar(g: impl Fn(f64, f64) -> f64, spaces: &Spaces) -> Result<Field> {
    let mut coefficients = Vec::with_capacity(spaces.n_vertices());
    for (i, p) in spaces.node_coords()[..spaces.n_vertices()].iter().enumerate() {
        let v = g(p[0], p[1]);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("scalar sample at vertex {i} ({}, {})", p[0], p[1])));
        }
        coefficients.push(v);
    }
    Ok(Field::pressure(coefficients))
}

/// Nodal/midpoint interpolant of a vector function into the clamped
/// displacement space. Boundary entries are forced to zero.
pub fn interpolate_vector(g: impl Fn(f64, f64) -> [f64; 2], spaces: &Spaces) -> Result<Field> {
    let mut coefficients = vec![0.0; spaces.displacement.n_dofs()];
    for (node, p) in spaces.node_coords().iter().enumerate() {
        let v = g(p[0], p[1]);
        if !(v[0].is_finite() && v[1].is_finite()) {
            return Err(Error::NonFinite(format!("vector sample at node {node} ({}, {})", p[0], p[1])));
        }
        for c in 0..2 {
            if !spaces.displacement.is_constrained(2 * node + c) {
                coefficients[2 * node + c] = v[c];
            }
        }
    }
    Ok(Field::displacement(coefficients))
}
