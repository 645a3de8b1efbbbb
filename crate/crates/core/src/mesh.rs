//! Structured triangulations of the unit square with pressure boundary tags.
//!
//! Each grid cell is split by a single diagonal. The diagonal direction follows
//! a "union jack" pattern pointing towards the centre of the square, so for
//! `n >= 2` no triangle has all three vertices on the boundary. The displacement
//! boundary condition is always a homogeneous clamp on the whole boundary; only
//! the pressure tags depend on the [`BcLayout`].

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Pressure boundary condition carried by a boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    PressureDirichlet,
    PressureNeumann,
}

/// How the boundary of the square is split between pressure Dirichlet and
/// pressure Neumann parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BcLayout {
    AllDirichlet,
    AllNeumann,
    /// Dirichlet on the `x = 0` side, Neumann elsewhere.
    MixedLeftDirichlet,
}

impl BcLayout {
    pub const ALL: [BcLayout; 3] = [
        BcLayout::AllDirichlet,
        BcLayout::AllNeumann,
        BcLayout::MixedLeftDirichlet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BcLayout::AllDirichlet => "dirichlet",
            BcLayout::AllNeumann => "neumann",
            BcLayout::MixedLeftDirichlet => "mixed_left",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == name)
    }
}

impl std::fmt::Display for BcLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A boundary edge, oriented counter-clockwise around the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

impl BoundaryEdge {
    /// Unit outward normal. Edges run counter-clockwise, so the normal is the
    /// tangent rotated clockwise.
    pub fn outward_normal(&self, mesh: &TriMesh) -> [f64; 2] {
        let a = mesh.vertices[self.vertices[0]];
        let b = mesh.vertices[self.vertices[1]];
        let (tx, ty) = (b[0] - a[0], b[1] - a[1]);
        let len = tx.hypot(ty);
        [ty / len, -tx / len]
    }
}

/// Conforming triangulation of the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    n: usize,
    layout: BcLayout,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
}

/// Longest edge and total area of a mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshStats {
    pub h_max: f64,
    pub total_area: f64,
}

impl TriMesh {
    /// Builds the `n x n` structured mesh of the unit square with
    /// `(n+1)^2` vertices, `2n^2` triangles and `4n` tagged boundary edges.
    pub fn unit_square(n: usize, layout: BcLayout) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "mesh needs at least one subdivision per side".into(),
            ));
        }
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let h = 1.0 / n as f64;

        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                // i * h can round badly near 1; divide instead
                vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }

        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
                let cx = (i as f64 + 0.5) * h - 0.5;
                let cy = (j as f64 + 0.5) * h - 0.5;
                if cx * cy >= 0.0 {
                    triangles.push([v00, v10, v11]);
                    triangles.push([v00, v11, v01]);
                } else {
                    triangles.push([v00, v10, v01]);
                    triangles.push([v10, v11, v01]);
                }
            }
        }

        let tag_for = |left_side: bool| match layout {
            BcLayout::AllDirichlet => BoundaryTag::PressureDirichlet,
            BcLayout::AllNeumann => BoundaryTag::PressureNeumann,
            BcLayout::MixedLeftDirichlet if left_side => BoundaryTag::PressureDirichlet,
            BcLayout::MixedLeftDirichlet => BoundaryTag::PressureNeumann,
        };
        let mut boundary_edges = Vec::with_capacity(4 * n);
        for i in 0..n {
            boundary_edges.push(BoundaryEdge { vertices: [idx(i, 0), idx(i + 1, 0)], tag: tag_for(false) });
        }
        for j in 0..n {
            boundary_edges.push(BoundaryEdge { vertices: [idx(n, j), idx(n, j + 1)], tag: tag_for(false) });
        }
        for i in (0..n).rev() {
            boundary_edges.push(BoundaryEdge { vertices: [idx(i + 1, n), idx(i, n)], tag: tag_for(false) });
        }
        for j in (0..n).rev() {
            boundary_edges.push(BoundaryEdge { vertices: [idx(0, j + 1), idx(0, j)], tag: tag_for(true) });
        }

        let mesh = Self { n, layout, vertices, triangles, boundary_edges };
        debug_assert!(mesh.validate().is_ok());
        Ok(mesh)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn layout(&self) -> BcLayout {
        self.layout
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Signed area of triangle `t` (positive for counter-clockwise).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn stats(&self) -> MeshStats {
        let mut h_max: f64 = 0.0;
        let mut total_area = 0.0;
        for t in 0..self.triangles.len() {
            let p = self.triangle_points(t);
            for k in 0..3 {
                let (a, b) = (p[k], p[(k + 1) % 3]);
                h_max = h_max.max((b[0] - a[0]).hypot(b[1] - a[1]));
            }
            total_area += self.signed_area(t);
        }
        MeshStats { h_max, total_area }
    }

    /// Vertices lying on a pressure-Dirichlet edge, sorted. Junction vertices
    /// shared with a Neumann edge are included.
    pub fn dirichlet_vertices(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|e| e.tag == BoundaryTag::PressureDirichlet)
            .flat_map(|e| e.vertices)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// All vertices on the boundary, sorted.
    pub fn boundary_vertices(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.boundary_edges.iter().flat_map(|e| e.vertices).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn has_dirichlet_part(&self) -> bool {
        self.boundary_edges.iter().any(|e| e.tag == BoundaryTag::PressureDirichlet)
    }

    /// Checks orientation, index ranges, boundary coverage and total area.
    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidArgument(format!("triangle {t} references a missing vertex")));
            }
            if self.signed_area(t) <= 0.0 {
                return Err(Error::InvalidArgument(format!("triangle {t} is not counter-clockwise")));
            }
        }
        // an edge is on the boundary iff exactly one triangle uses it
        let mut count = std::collections::BTreeMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_insert(0usize) += 1;
            }
        }
        let mut on_boundary: Vec<(usize, usize)> =
            count.iter().filter(|(_, &c)| c == 1).map(|(&e, _)| e).collect();
        let mut tagged: Vec<(usize, usize)> = Vec::with_capacity(self.boundary_edges.len());
        for e in &self.boundary_edges {
            let [a, b] = e.vertices;
            if a >= nv || b >= nv {
                return Err(Error::InvalidArgument("boundary edge references a missing vertex".into()));
            }
            tagged.push((a.min(b), a.max(b)));
        }
        on_boundary.sort_unstable();
        tagged.sort_unstable();
        if on_boundary != tagged {
            return Err(Error::InvalidArgument("boundary edges do not cover the boundary exactly".into()));
        }
        let area = self.stats().total_area;
        if (area - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("total area {area} differs from 1")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(mesh: &TriMesh, tag: BoundaryTag) -> usize {
        mesh.boundary_edges().iter().filter(|e| e.tag == tag).count()
    }

    #[test]
    fn single_cell_neumann() {
        let m = TriMesh::unit_square(1, BcLayout::AllNeumann).unwrap();
        assert_eq!(m.vertices().len(), 4);
        assert_eq!(m.triangles().len(), 2);
        assert_eq!(count(&m, BoundaryTag::PressureNeumann), 4);
        assert!(!m.has_dirichlet_part());
    }

    #[test]
    fn four_by_four_dirichlet() {
        let m = TriMesh::unit_square(4, BcLayout::AllDirichlet).unwrap();
        assert_eq!(m.vertices().len(), 25);
        assert_eq!(m.triangles().len(), 32);
        assert_eq!(count(&m, BoundaryTag::PressureDirichlet), 16);
        assert!(m.validate().is_ok());
    }

    #[test]
    fn mixed_layout_tags_left_side_only() {
        let m = TriMesh::unit_square(4, BcLayout::MixedLeftDirichlet).unwrap();
        assert_eq!(count(&m, BoundaryTag::PressureDirichlet), 4);
        assert_eq!(count(&m, BoundaryTag::PressureNeumann), 12);
        for e in m.boundary_edges().iter().filter(|e| e.tag == BoundaryTag::PressureDirichlet) {
            for v in e.vertices {
                assert_eq!(m.vertices()[v][0], 0.0);
            }
        }
        // junction corners belong to the Dirichlet set
        assert_eq!(m.dirichlet_vertices().len(), 5);
    }

    #[test]
    fn zero_subdivisions_rejected() {
        assert!(matches!(TriMesh::unit_square(0, BcLayout::AllNeumann), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn stats_examples() {
        let s1 = TriMesh::unit_square(1, BcLayout::AllNeumann).unwrap().stats();
        assert_eq!(s1.total_area, 1.0);
        let s2 = TriMesh::unit_square(2, BcLayout::AllNeumann).unwrap().stats();
        assert!((s2.h_max - 2f64.sqrt() / 2.0).abs() < 1e-15);
        let s4 = TriMesh::unit_square(4, BcLayout::AllNeumann).unwrap().stats();
        assert!((s4.total_area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn corner_triangles_touch_the_interior() {
        let m = TriMesh::unit_square(3, BcLayout::AllDirichlet).unwrap();
        let boundary = m.boundary_vertices();
        for tri in m.triangles() {
            assert!(tri.iter().any(|v| boundary.binary_search(v).is_err()));
        }
    }

    #[test]
    fn outward_normals_point_out() {
        let m = TriMesh::unit_square(3, BcLayout::AllNeumann).unwrap();
        for e in m.boundary_edges() {
            let nrm = e.outward_normal(&m);
            let a = m.vertices()[e.vertices[0]];
            let b = m.vertices()[e.vertices[1]];
            let mid = [0.5 * (a[0] + b[0]) - 0.5, 0.5 * (a[1] + b[1]) - 0.5];
            assert!(nrm[0] * mid[0] + nrm[1] * mid[1] > 0.0);
        }
    }

    proptest::proptest! {
        #[test]
        fn area_is_one_and_h_halves(n in 1usize..24) {
            for layout in BcLayout::ALL {
                let m = TriMesh::unit_square(n, layout).unwrap();
                proptest::prop_assert!(m.validate().is_ok());
                let s = m.stats();
                let s2 = TriMesh::unit_square(2 * n, layout).unwrap().stats();
                proptest::prop_assert!((s.total_area - 1.0).abs() < 1e-12);
                proptest::prop_assert!((s.h_max - 2.0 * s2.h_max).abs() < 1e-12);
            }
        }
    }
}
