//! Triangle meshes and per-vertex geometric quantities.
//!
//! A [`Mesh`] is validated on construction and immutable afterwards. Vertex
//! order is the identity used by every correspondence, so nothing in this
//! crate reorders vertices implicitly.

mod io;
pub mod primitives;

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use crate::{Error, Result};

pub use io::{load_mesh, load_mesh_auto, save_mesh, MeshFormat};

/// Relative factor for the degenerate-triangle tolerance; the absolute
/// tolerance is this times the squared bounding-box diagonal.
pub const EPS_AREA_REL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    name: String,
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[usize; 3]>,
}

impl Mesh {
    /// Builds and validates a mesh.
    pub fn new(
        name: impl Into<String>,
        vertices: Vec<Point3<f64>>,
        triangles: Vec<[usize; 3]>,
    ) -> Result<Self> {
        let mesh = Mesh {
            name: name.into(),
            vertices,
            triangles,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some(i) = self
            .vertices
            .iter()
            .position(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(Error::Validation(format!("vertex {i} has non-finite coordinates")));
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&v| v >= n) {
                return Err(Error::Validation(format!(
                    "triangle {t} references vertex {bad} but mesh has {n} vertices"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Validation(format!("triangle {t} repeats a vertex: {tri:?}")));
            }
        }
        let eps = self.eps_area();
        for t in 0..self.triangles.len() {
            let a = self.triangle_area(t);
            if a <= eps {
                return Err(Error::Validation(format!(
                    "triangle {t} is degenerate (area {a:e} <= {eps:e})"
                )));
            }
        }
        let mut edge_faces: HashMap<(usize, usize), u32> = HashMap::new();
        for tri in &self.triangles {
            for e in 0..3 {
                *edge_faces.entry(edge_key(tri[e], tri[(e + 1) % 3])).or_default() += 1;
            }
        }
        let mut nonmanifold: Vec<_> = edge_faces.iter().filter(|(_, &c)| c > 2).collect();
        if !nonmanifold.is_empty() {
            nonmanifold.sort();
            let (e, c) = nonmanifold[0];
            return Err(Error::Validation(format!(
                "edge {e:?} is shared by {c} triangles (non-manifold)"
            )));
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Diagonal of the axis-aligned bounding box (0 for an empty mesh).
    pub fn bbox_diagonal(&self) -> f64 {
        let Some(first) = self.vertices.first() else {
            return 0.0;
        };
        let (mut lo, mut hi) = (first.coords, first.coords);
        for p in &self.vertices {
            lo = lo.inf(&p.coords);
            hi = hi.sup(&p.coords);
        }
        (hi - lo).norm()
    }

    /// Absolute area below which a triangle counts as degenerate.
    pub fn eps_area(&self) -> f64 {
        EPS_AREA_REL * self.bbox_diagonal().powi(2)
    }

    /// Unnormalized normal of triangle `t` (length equals twice its area).
    pub fn triangle_cross(&self, t: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        (pb - pa).cross(&(pc - pa))
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        0.5 * self.triangle_cross(t).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn edge_length(&self, u: usize, v: usize) -> f64 {
        (self.vertices[u] - self.vertices[v]).norm()
    }

    /// Unique undirected edges `(min, max)`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<_> = self
            .triangles
            .iter()
            .flat_map(|t| (0..3).map(move |e| edge_key(t[e], t[(e + 1) % 3])))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Sorted one-ring neighbor lists.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (u, v) in self.edges() {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Map from undirected edge to the (one or two) triangles containing it.
    pub fn edge_triangles(&self) -> HashMap<(usize, usize), Vec<usize>> {
        let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for e in 0..3 {
                map.entry(edge_key(tri[e], tri[(e + 1) % 3])).or_default().push(t);
            }
        }
        map
    }

    /// Same connectivity, coordinates multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        self.map_vertices(|p| Point3::from(p.coords * s))
    }

    /// Same connectivity with every vertex passed through `f`; revalidated.
    pub fn map_vertices(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> Result<Self> {
        Mesh::new(
            self.name.clone(),
            self.vertices.iter().map(f).collect(),
            self.triangles.clone(),
        )
    }

    /// Keeps the listed vertices (in the given order) and every triangle whose
    /// three corners are all kept.
    pub fn submesh(&self, keep: &[usize]) -> Result<Self> {
        let mut new_index = vec![usize::MAX; self.vertices.len()];
        for (i, &v) in keep.iter().enumerate() {
            if v >= self.vertices.len() {
                return Err(Error::Index(format!("vertex {v} out of range")));
            }
            new_index[v] = i;
        }
        let triangles = self
            .triangles
            .iter()
            .filter(|t| t.iter().all(|&v| new_index[v] != usize::MAX))
            .map(|t| [new_index[t[0]], new_index[t[1]], new_index[t[2]]])
            .collect();
        let vertices = keep.iter().map(|&v| self.vertices[v]).collect();
        Mesh::new(self.name.clone(), vertices, triangles)
    }

    /// Vertex coordinates as an `n x 3` matrix.
    pub fn coordinates(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.vertices.len(), 3, |i, j| self.vertices[i][j])
    }
}

pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Lumped (barycentric) vertex areas: the diagonal of the mass matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexAreas(Vec<f64>);

impl VertexAreas {
    pub fn from_values(values: Vec<f64>) -> Self {
        VertexAreas(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// One third of each incident triangle's area, per vertex.
pub fn vertex_areas(mesh: &Mesh) -> VertexAreas {
    let mut values = vec![0.0; mesh.n_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let third = mesh.triangle_area(t) / 3.0;
        for &v in tri {
            values[v] += third;
        }
    }
    VertexAreas(values)
}

/// Vertex sets connected through triangle edges. Vertices that belong to no
/// triangle form singleton components. Components are ordered by their
/// smallest vertex and each is sorted.
pub fn connected_components(mesh: &Mesh) -> Vec<Vec<usize>> {
    let n = mesh.n_vertices();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for tri in mesh.triangles() {
        for e in 0..3 {
            let a = find(&mut parent, tri[e]);
            let b = find(&mut parent, tri[(e + 1) % 3]);
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut by_root: HashMap<usize, usize> = HashMap::new();
    let mut components: Vec<Vec<usize>> = Vec::new();
    for v in 0..n {
        let r = find(&mut parent, v);
        let slot = *by_root.entry(r).or_insert_with(|| {
            components.push(Vec::new());
            components.len() - 1
        });
        components[slot].push(v);
    }
    components
}

#[cfg(test)]
mod tests {
    use super::primitives::*;
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn square_areas_split_by_valence() {
        let sq = unit_square();
        let a = vertex_areas(&sq);
        // triangles (0,1,2) and (0,2,3): vertices 0 and 2 lie on the diagonal
        assert_relative_eq!(a.values()[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(a.values()[2], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(a.values()[1], 1.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(a.values()[3], 1.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(a.total(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn equilateral_areas() {
        let m = equilateral_triangle(1.0);
        let expected = 3f64.sqrt() / 12.0;
        for &v in vertex_areas(&m).values() {
            assert_relative_eq!(v, expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn areas_scale_quadratically() {
        let m = icosphere(1, 1.0);
        let s = 2.5;
        let a1 = vertex_areas(&m);
        let a2 = vertex_areas(&m.scaled(s).unwrap());
        for (x, y) in a1.values().iter().zip(a2.values()) {
            assert_relative_eq!(*y, x * s * s, max_relative = 1e-12);
        }
    }

    #[test]
    fn rejects_out_of_range_and_repeats() {
        let v = tetrahedron().vertices().to_vec();
        assert!(matches!(
            Mesh::new("x", v.clone(), vec![[0, 1, 4]]),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            Mesh::new("x", v.clone(), vec![[0, 1, 1]]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn rejects_degenerate_triangle() {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
        ];
        assert!(matches!(Mesh::new("x", v, vec![[0, 1, 2]]), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_nonmanifold_edge() {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, -1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        let tris = vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]];
        assert!(matches!(Mesh::new("x", v, tris), Err(Error::Validation(_))));
    }

    #[test]
    fn components() {
        assert_eq!(connected_components(&tetrahedron()), vec![vec![0, 1, 2, 3]]);
        let two = two_tetrahedra();
        let comps = connected_components(&two);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0], vec![0, 1, 2, 3]);
        assert_eq!(comps[1], vec![4, 5, 6, 7]);
    }

    #[test]
    fn submesh_keeps_inner_triangles() {
        let sq = unit_square();
        let sub = sq.submesh(&[0, 1, 2]).unwrap();
        assert_eq!(sub.n_triangles(), 1);
        assert_relative_eq!(sub.total_area(), 0.5, epsilon = 1e-15);
    }
}
