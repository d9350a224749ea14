use crate::linalg::CsrMatrix;
use crate::mesh::{vertex_areas, Mesh, VertexAreas};
use crate::{Error, Result};

/// Cotangent stiffness matrix `W` and lumped mass `A` of a mesh.
///
/// The Laplace-Beltrami operator is `A^-1 W`; `W` is symmetric positive
/// semi-definite with the constants in its kernel.
#[derive(Debug, Clone)]
pub struct LaplacianPair {
    stiffness: CsrMatrix,
    mass: VertexAreas,
}

impl LaplacianPair {
    pub fn from_parts(stiffness: CsrMatrix, mass: VertexAreas) -> Result<Self> {
        if stiffness.n_rows() != stiffness.n_cols() || stiffness.n_rows() != mass.len() {
            return Err(Error::Dimension(format!(
                "stiffness {}x{} vs mass {}",
                stiffness.n_rows(),
                stiffness.n_cols(),
                mass.len()
            )));
        }
        Ok(LaplacianPair { stiffness, mass })
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn mass(&self) -> &VertexAreas {
        &self.mass
    }

    pub fn n(&self) -> usize {
        self.mass.len()
    }
}

/// Cotangent of the angle between `u` and `v`.
fn cot(u: &nalgebra::Vector3<f64>, v: &nalgebra::Vector3<f64>) -> f64 {
    u.dot(v) / u.cross(v).norm()
}

/// Assembles `W_ij = -(cot a_ij + cot b_ij) / 2` over edges, with the diagonal
/// set to minus the off-diagonal row sum, and `A = diag(vertex_areas)`.
pub fn build_laplacian(mesh: &Mesh) -> Result<LaplacianPair> {
    let n = mesh.n_vertices();
    let eps = mesh.eps_area();
    let limit = if eps > 0.0 { 1.0 / eps } else { f64::INFINITY };
    let pts = mesh.vertices();
    let mut trips = Vec::with_capacity(mesh.n_triangles() * 6 + n);
    let mut diag = vec![0.0; n];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for corner in 0..3 {
            let o = tri[corner];
            let i = tri[(corner + 1) % 3];
            let j = tri[(corner + 2) % 3];
            let c = cot(&(pts[i] - pts[o]), &(pts[j] - pts[o]));
            if !c.is_finite() || c.abs() > limit {
                return Err(Error::DegenerateGeometry(format!(
                    "triangle {t} has a near-zero angle at vertex {o} (cot = {c:e})"
                )));
            }
            let w = -0.5 * c;
            trips.push((i, j, w));
            trips.push((j, i, w));
            diag[i] -= w;
            diag[j] -= w;
        }
    }
    trips.extend(diag.iter().enumerate().map(|(i, &d)| (i, i, d)));
    let stiffness = CsrMatrix::from_triplets(n, n, &trips);
    LaplacianPair::from_parts(stiffness, vertex_areas(mesh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::*;
    use approx::assert_relative_eq;

    #[test]
    fn unit_square_weights() {
        let lap = build_laplacian(&unit_square()).unwrap();
        let w = lap.stiffness();
        // the diagonal (0,2) is opposite the two right angles at vertices 1 and 3
        assert_relative_eq!(w.get(0, 2), 0.0, epsilon = 1e-15);
        // boundary edges are opposite a single 45 degree angle
        for (i, j) in [(0, 1), (1, 2), (2, 3), (0, 3)] {
            assert_relative_eq!(w.get(i, j), -0.5, epsilon = 1e-15);
        }
        assert_relative_eq!(w.get(1, 3), 0.0);
    }

    #[test]
    fn equilateral_weights_equal() {
        let lap = build_laplacian(&equilateral_triangle(2.0)).unwrap();
        let expected = -0.5 / 3f64.sqrt();
        for (i, j) in [(0, 1), (1, 2), (0, 2)] {
            assert_relative_eq!(lap.stiffness().get(i, j), expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn rows_sum_to_zero_and_symmetric() {
        let m = deformed_sphere(2, &SphereDeformation { axis_scale: [1.0, 0.7, 1.3], bump: 0.1, frequency: 3.0, phase: 0.2 });
        let lap = build_laplacian(&m).unwrap();
        let w = lap.stiffness();
        let ones = vec![1.0; m.n_vertices()];
        for r in w.mul_vec(&ones) {
            assert!(r.abs() < 1e-10);
        }
        assert!(w.asymmetry() <= 1e-12 * w.max_abs());
        assert_relative_eq!(lap.mass().total(), m.total_area(), max_relative = 1e-12);
    }
}
