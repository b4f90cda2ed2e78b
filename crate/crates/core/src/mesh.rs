//! Uniform right-triangle meshes of the unit square.

use alloc::vec::Vec;
use core::fmt;

use crate::math::norm2;
use crate::{Error, Result};

/// Structured P1 triangulation of (0,1)².
///
/// Nodes are numbered lexicographically by `(y, x)`: node `j * (n_div + 1) + i`
/// sits at `(i / n_div, j / n_div)`. Every square cell is split along its
/// lower-left to upper-right diagonal into two counterclockwise triangles.
#[derive(Clone, Debug)]
pub struct StructuredTriMesh {
    n_div: usize,
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    on_boundary: Vec<bool>,
    boundary_nodes: Vec<usize>,
    h: f64,
}

/// Affine data of one triangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementGeometry {
    pub vertices: [[f64; 2]; 3],
    /// Positive area of the triangle.
    pub area: f64,
    /// Columns are the images of the reference edge vectors: `x = x0 + J (ξ, η)`.
    pub jacobian: [[f64; 2]; 2],
    /// Longest edge.
    pub h: f64,
}

impl ElementGeometry {
    pub fn from_vertices(vertices: [[f64; 2]; 3]) -> Self {
        let [a, b, c] = vertices;
        let jacobian = [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]];
        let det = jacobian[0][0] * jacobian[1][1] - jacobian[0][1] * jacobian[1][0];
        let edge = |p: [f64; 2], q: [f64; 2]| norm2([p[0] - q[0], p[1] - q[1]]);
        let h = edge(a, b).max(edge(b, c)).max(edge(c, a));
        ElementGeometry {
            vertices,
            area: 0.5 * det,
            jacobian,
            h,
        }
    }

    #[inline]
    pub fn determinant(&self) -> f64 {
        let j = &self.jacobian;
        j[0][0] * j[1][1] - j[0][1] * j[1][0]
    }

    /// Image of the reference point `(ξ, η)`.
    #[inline]
    pub fn map_to_physical(&self, xi: f64, eta: f64) -> [f64; 2] {
        let o = self.vertices[0];
        let j = &self.jacobian;
        [o[0] + j[0][0] * xi + j[0][1] * eta, o[1] + j[1][0] * xi + j[1][1] * eta]
    }

    /// Image of a point given in barycentric coordinates.
    #[inline]
    pub fn map_barycentric(&self, lambda: [f64; 3]) -> [f64; 2] {
        let v = &self.vertices;
        [
            lambda[0] * v[0][0] + lambda[1] * v[1][0] + lambda[2] * v[2][0],
            lambda[0] * v[0][1] + lambda[1] * v[1][1] + lambda[2] * v[2][1],
        ]
    }
}

/// Builds the `n_div × n_div` mesh of the unit square.
pub fn build_unit_square_mesh(n_div: usize) -> Result<StructuredTriMesh> {
    if n_div == 0 {
        return Err(Error::InvalidMesh("n_div must be at least 1"));
    }
    let side = n_div + 1;
    let inv = n_div as f64;

    let mut nodes = Vec::with_capacity(side * side);
    let mut on_boundary = Vec::with_capacity(side * side);
    let mut boundary_nodes = Vec::with_capacity(4 * n_div);
    for j in 0..side {
        for i in 0..side {
            nodes.push([i as f64 / inv, j as f64 / inv]);
            let b = i == 0 || j == 0 || i == n_div || j == n_div;
            if b {
                boundary_nodes.push(j * side + i);
            }
            on_boundary.push(b);
        }
    }

    let mut triangles = Vec::with_capacity(2 * n_div * n_div);
    for j in 0..n_div {
        for i in 0..n_div {
            let v00 = j * side + i;
            let v10 = v00 + 1;
            let v01 = v00 + side;
            let v11 = v01 + 1;
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }

    Ok(StructuredTriMesh {
        n_div,
        nodes,
        triangles,
        on_boundary,
        boundary_nodes,
        h: core::f64::consts::SQRT_2 / inv,
    })
}

impl StructuredTriMesh {
    pub fn n_div(&self) -> usize {
        self.n_div
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// Sorted indices of the nodes on ∂Ω.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    #[inline]
    pub fn is_boundary(&self, node: usize) -> bool {
        self.on_boundary[node]
    }

    /// Global mesh size `max h_k`.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn element_geometry(&self, k: usize) -> Result<ElementGeometry> {
        let tri = self.triangles.get(k).ok_or(Error::ElementOutOfRange {
            index: k,
            count: self.triangles.len(),
        })?;
        Ok(self.geometry_of(tri))
    }

    #[inline]
    pub(crate) fn geometry_of(&self, tri: &[usize; 3]) -> ElementGeometry {
        ElementGeometry::from_vertices([self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]]])
    }

    /// Iterates `(element index, node triple, geometry)`.
    pub fn elements(&self) -> impl Iterator<Item = (usize, &[usize; 3], ElementGeometry)> + '_ {
        self.triangles
            .iter()
            .enumerate()
            .map(move |(k, tri)| (k, tri, self.geometry_of(tri)))
    }

    /// Sorted neighbour lists (each node includes itself).
    pub fn node_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj: Vec<Vec<usize>> = (0..self.node_count()).map(|n| alloc::vec![n]).collect();
        for tri in &self.triangles {
            for &a in tri {
                for &b in tri {
                    if a != b {
                        adj[a].push(b);
                    }
                }
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Writes the debugging dump: one `x y` line per node, then one `i j k` line per triangle.
    pub fn write_text<W: fmt::Write>(&self, out: &mut W) -> fmt::Result {
        for p in &self.nodes {
            writeln!(out, "{} {}", p[0], p[1])?;
        }
        for t in &self.triangles {
            writeln!(out, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;
    use std::string::String;

    #[test]
    fn counts_for_small_meshes() {
        let m = build_unit_square_mesh(1).unwrap();
        assert_eq!(
            (m.node_count(), m.triangle_count(), m.boundary_nodes().len()),
            (4, 2, 4)
        );
        let m = build_unit_square_mesh(10).unwrap();
        assert_eq!(
            (m.node_count(), m.triangle_count(), m.boundary_nodes().len()),
            (121, 200, 40)
        );
    }

    #[test]
    fn rejects_zero_divisions() {
        assert!(matches!(build_unit_square_mesh(0), Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn element_geometry_examples() {
        let m = build_unit_square_mesh(1).unwrap();
        assert_eq!(m.element_geometry(0).unwrap().area, 0.5);
        assert!(matches!(
            m.element_geometry(2),
            Err(Error::ElementOutOfRange { index: 2, count: 2 })
        ));

        let m = build_unit_square_mesh(2).unwrap();
        for k in 0..m.triangle_count() {
            let g = m.element_geometry(k).unwrap();
            assert!((g.h - core::f64::consts::SQRT_2 / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn reference_vertices_map_to_element_vertices() {
        let m = build_unit_square_mesh(3).unwrap();
        for (_, tri, g) in m.elements() {
            let refs = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
            for (v, (xi, eta)) in tri.iter().zip(refs) {
                let p = g.map_to_physical(xi, eta);
                assert_eq!(p, m.nodes()[*v]);
            }
        }
    }

    #[test]
    fn edges_are_shared_twice_except_on_the_boundary() {
        let m = build_unit_square_mesh(5).unwrap();
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in m.triangles() {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        for ((a, b), n) in count {
            let pa = m.nodes()[a];
            let pb = m.nodes()[b];
            let on_side = (pa[0] == pb[0] && (pa[0] == 0.0 || pa[0] == 1.0))
                || (pa[1] == pb[1] && (pa[1] == 0.0 || pa[1] == 1.0));
            assert_eq!(n, if on_side { 1 } else { 2 }, "edge {a}-{b}");
        }
    }

    #[test]
    fn text_dump_has_one_line_per_entity() {
        let m = build_unit_square_mesh(2).unwrap();
        let mut s = String::new();
        m.write_text(&mut s).unwrap();
        assert_eq!(s.lines().count(), 9 + 8);
        assert!(s.starts_with("0 0\n0.5 0\n"));
    }

    proptest::proptest! {
        #[test]
        fn mesh_invariants(n in 1usize..40) {
            let m = build_unit_square_mesh(n).unwrap();
            proptest::prop_assert_eq!(m.node_count(), (n + 1) * (n + 1));
            proptest::prop_assert_eq!(m.triangle_count(), 2 * n * n);
            proptest::prop_assert_eq!(m.boundary_nodes().len(), 4 * n);
            let expected = 1.0 / (2.0 * (n * n) as f64);
            let mut total = 0.0;
            for (_, _, g) in m.elements() {
                proptest::prop_assert!(g.area > 0.0);
                proptest::prop_assert!((g.area - expected).abs() < 1e-15);
                total += g.area;
            }
            proptest::prop_assert!((total - 1.0).abs() < 1e-12);
            for (idx, p) in m.nodes().iter().enumerate() {
                let (i, j) = (idx % (n + 1), idx / (n + 1));
                proptest::prop_assert_eq!(p[0], i as f64 / n as f64);
                proptest::prop_assert_eq!(p[1], j as f64 / n as f64);
            }
        }
    }
}
