#![allow(dead_code)]

use embmatch::harness::synth::SPHERE_DEFORMATIONS;
use embmatch::mesh::primitives::{deformed_sphere, grid, humanoid, icosphere};
use embmatch::mesh::Mesh;
use nalgebra::{DMatrix, Point3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Five small meshes with varied geometry, boundary and scale.
pub fn fixture_meshes() -> Vec<Mesh> {
    vec![
        icosphere(2, 1.0),
        grid(8, 6),
        deformed_sphere(2, &SPHERE_DEFORMATIONS[1]),
        humanoid(2),
        grid(5, 5)
            .map_vertices(|p| Point3::new(2.0 * p.x, p.y, 0.3 * (3.0 * p.x).sin() * p.y))
            .unwrap()
            .with_name("wavy"),
    ]
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn random_targets(rng: &mut ChaCha8Rng, n_source: usize, n_target: usize) -> Vec<usize> {
    (0..n_source).map(|_| rng.random_range(0..n_target)).collect()
}

/// Brute-force nearest row of `b` for each row of `a`, lowest index on ties.
pub fn brute_nn(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<usize> {
    (0..a.nrows())
        .map(|i| {
            let mut best = (0, f64::INFINITY);
            for j in 0..b.nrows() {
                let d = (a.row(i) - b.row(j)).norm_squared();
                if d < best.1 {
                    best = (j, d);
                }
            }
            best.0
        })
        .collect()
}
