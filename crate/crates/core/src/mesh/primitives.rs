//! Small procedural meshes used as fixtures and synthetic benchmarks.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::Mesh;

fn build(name: &str, vertices: Vec<Point3<f64>>, triangles: Vec<[usize; 3]>) -> Mesh {
    Mesh::new(name, vertices, triangles).expect("procedural mesh is valid")
}

pub fn tetrahedron() -> Mesh {
    let v = vec![
        Point3::new(1.0, 1.0, 1.0),
        Point3::new(1.0, -1.0, -1.0),
        Point3::new(-1.0, 1.0, -1.0),
        Point3::new(-1.0, -1.0, 1.0),
    ];
    build("tetrahedron", v, vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
}

/// Two disjoint tetrahedra in one mesh (vertices 0..4 and 4..8).
pub fn two_tetrahedra() -> Mesh {
    let t = tetrahedron();
    let mut v = t.vertices().to_vec();
    v.extend(t.vertices().iter().map(|p| p + Vector3::new(5.0, 0.0, 0.0)));
    let mut tris = t.triangles().to_vec();
    tris.extend(t.triangles().iter().map(|f| [f[0] + 4, f[1] + 4, f[2] + 4]));
    build("two_tetrahedra", v, tris)
}

/// Unit square in the z=0 plane split along the (0,2) diagonal.
pub fn unit_square() -> Mesh {
    let v = vec![
        Point3::new(0.0, 0.0, 0.0),
        Point3::new(1.0, 0.0, 0.0),
        Point3::new(1.0, 1.0, 0.0),
        Point3::new(0.0, 1.0, 0.0),
    ];
    build("unit_square", v, vec![[0, 1, 2], [0, 2, 3]])
}

pub fn equilateral_triangle(side: f64) -> Mesh {
    let h = side * 3f64.sqrt() / 2.0;
    let v = vec![
        Point3::new(0.0, 0.0, 0.0),
        Point3::new(side, 0.0, 0.0),
        Point3::new(side / 2.0, h, 0.0),
    ];
    build("equilateral", v, vec![[0, 1, 2]])
}

/// Regular `nx x ny` grid of quads on `[0,1]^2`, each split into two triangles.
pub fn grid(nx: usize, ny: usize) -> Mesh {
    assert!(nx >= 1 && ny >= 1);
    let mut v = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            v.push(Point3::new(i as f64 / nx as f64, j as f64 / ny as f64, 0.0));
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut tris = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            tris.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            tris.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    build(&format!("grid{nx}x{ny}"), v, tris)
}

/// Geodesic icosphere: `10 * 4^subdivisions + 2` vertices on a sphere of the given radius.
pub fn icosphere(subdivisions: u32, radius: f64) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<Vector3<f64>> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|c| Vector3::new(c[0], c[1], c[2]).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, v: &mut Vec<Vector3<f64>>| -> usize {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                v.push(((v[a] + v[b]) * 0.5).normalize());
                v.len() - 1
            })
        };
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut v);
            let bc = midpoint(b, c, &mut v);
            let ca = midpoint(c, a, &mut v);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let points = v.into_iter().map(|c| Point3::from(c * radius)).collect();
    build(&format!("icosphere{subdivisions}"), points, faces)
}

/// Smooth non-isometric deformation of the unit icosphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereDeformation {
    pub axis_scale: [f64; 3],
    pub bump: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl SphereDeformation {
    pub const IDENTITY: SphereDeformation = SphereDeformation {
        axis_scale: [1.0, 1.0, 1.0],
        bump: 0.0,
        frequency: 0.0,
        phase: 0.0,
    };

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        let r = 1.0
            + self.bump * (self.frequency * p.x + self.phase).sin() * (self.frequency * p.y).cos();
        Point3::new(
            p.x * r * self.axis_scale[0],
            p.y * r * self.axis_scale[1],
            p.z * r * self.axis_scale[2],
        )
    }
}

/// Icosphere pushed through `deform`; vertex order and connectivity match
/// [`icosphere`] so the identity is the ground-truth correspondence.
pub fn deformed_sphere(subdivisions: u32, deform: &SphereDeformation) -> Mesh {
    icosphere(subdivisions, 1.0)
        .map_vertices(|p| deform.apply(p))
        .expect("smooth deformation keeps triangles valid")
        .with_name(format!("deformed_sphere{subdivisions}"))
}

/// Elongated, asymmetric body about 1.7 units tall with its lowest vertex
/// (the "foot") at the bottom. Used for geodesic-ball partiality fixtures.
pub fn humanoid(subdivisions: u32) -> Mesh {
    icosphere(subdivisions, 1.0)
        .map_vertices(|p| {
            let z = 0.85 * p.z;
            let girth = 0.17 * (1.0 + 0.25 * (3.0 * z + 0.4).sin());
            Point3::new(
                girth * p.x + 0.12 * z * z,
                0.8 * girth * p.y + 0.05 * z,
                z + 0.03 * p.x,
            )
        })
        .expect("body deformation keeps triangles valid")
        .with_name(format!("humanoid{subdivisions}"))
}

/// Index of the vertex with the smallest z coordinate (lowest index on ties).
pub fn lowest_vertex(mesh: &Mesh) -> usize {
    mesh.vertices()
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bz), (i, p)| if p.z < bz { (i, p.z) } else { (bi, bz) })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::connected_components;

    #[test]
    fn icosphere_counts() {
        for (s, n) in [(0, 12), (1, 42), (2, 162), (3, 642), (4, 2562)] {
            let m = icosphere(s, 1.0);
            assert_eq!(m.n_vertices(), n);
            assert_eq!(m.n_triangles(), 20 * 4usize.pow(s));
            assert_eq!(connected_components(&m).len(), 1);
        }
    }

    #[test]
    fn icosphere_is_outward_oriented() {
        let m = icosphere(2, 1.0);
        for (t, tri) in m.triangles().iter().enumerate() {
            let c = (m.vertices()[tri[0]].coords + m.vertices()[tri[1]].coords + m.vertices()[tri[2]].coords) / 3.0;
            assert!(m.triangle_cross(t).dot(&c) > 0.0);
        }
    }

    #[test]
    fn humanoid_height() {
        let m = humanoid(3);
        let zs: Vec<f64> = m.vertices().iter().map(|p| p.z).collect();
        let h = zs.iter().cloned().fold(f64::MIN, f64::max) - zs.iter().cloned().fold(f64::MAX, f64::min);
        assert!((1.6..1.8).contains(&h), "height {h}");
    }
}
