//! Synthetic fixture datasets with exact ground truth.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, Point3, Rotation3, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fmap::{Correspondence, DescriptorSet};
use crate::mesh::primitives::{deformed_sphere, humanoid, lowest_vertex, SphereDeformation};
use crate::mesh::{save_mesh, Mesh, MeshFormat};
use crate::spectral::{build_laplacian, eigenbasis, SpectralBasis};
use crate::{Error, Result};

/// Four smooth, mutually non-isometric sphere deformations.
pub const SPHERE_DEFORMATIONS: [SphereDeformation; 4] = [
    SphereDeformation { axis_scale: [1.3, 1.0, 0.8], bump: 0.10, frequency: 2.0, phase: 0.3 },
    SphereDeformation { axis_scale: [1.1, 1.2, 0.9], bump: 0.15, frequency: 3.0, phase: 1.1 },
    SphereDeformation { axis_scale: [1.4, 0.9, 1.0], bump: 0.08, frequency: 2.5, phase: 2.0 },
    SphereDeformation { axis_scale: [1.2, 1.1, 0.7], bump: 0.12, frequency: 1.5, phase: 0.7 },
];

/// `mesh` with its vertices reordered so that new vertex `i` is old vertex
/// `order[i]`. Returns the mesh and the map old index -> new index.
pub fn reorder_vertices(mesh: &Mesh, order: &[usize]) -> Result<(Mesh, Vec<usize>)> {
    let n = mesh.n_vertices();
    let mut old_to_new = vec![usize::MAX; n];
    for (new, &old) in order.iter().enumerate() {
        if old >= n || old_to_new[old] != usize::MAX {
            return Err(Error::Index(format!("order is not a permutation of 0..{n}")));
        }
        old_to_new[old] = new;
    }
    if order.len() != n {
        return Err(Error::Index(format!("order has {} entries for {n} vertices", order.len())));
    }
    let vertices = order.iter().map(|&o| mesh.vertices()[o]).collect();
    let triangles = mesh.triangles().iter().map(|t| t.map(|v| old_to_new[v])).collect();
    Ok((Mesh::new(mesh.name(), vertices, triangles)?, old_to_new))
}

/// Heat kernel signature `sum_i exp(-t lambda_i) phi_i(x)^2` at each time.
pub fn heat_kernel_signature(lbo: &SpectralBasis, times: &[f64]) -> DMatrix<f64> {
    let phi = lbo.functions();
    let lam = lbo.eigenvalues();
    DMatrix::from_fn(phi.nrows(), times.len(), |i, c| {
        (0..lbo.k()).map(|j| (-times[c] * lam[j]).exp() * phi[(i, j)] * phi[(i, j)]).sum()
    })
}

/// `count` log-spaced diffusion times for the spectrum of `lbo`.
pub fn hks_times(lbo: &SpectralBasis, count: usize) -> Vec<f64> {
    let lam = lbo.eigenvalues();
    let lmax = lam.last().copied().unwrap_or(1.0).max(1e-12);
    let lmin = lam.iter().copied().find(|&l| l > 1e-9).unwrap_or(lmax);
    let (t0, t1) = ((4.0 * std::f64::consts::LN_10 / lmax).ln(), (4.0 * std::f64::consts::LN_10 / lmin).ln());
    (0..count)
        .map(|i| {
            let s = if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
            (t0 + s * (t1 - t0)).exp()
        })
        .collect()
}

/// The four deformed spheres, each vertex-shuffled (except the first) so
/// ground-truth maps are not the identity. Returns meshes and, per mesh,
/// the position of each original icosphere vertex.
pub fn sphere_family(subdivisions: u32, seed: u64) -> Result<Vec<(Mesh, Vec<usize>)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SPHERE_DEFORMATIONS
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mesh = deformed_sphere(subdivisions, d).with_name(format!("sphere{i}"));
            let mut order: Vec<usize> = (0..mesh.n_vertices()).collect();
            if i > 0 {
                order.shuffle(&mut rng);
            }
            reorder_vertices(&mesh, &order)
        })
        .collect()
}

/// Ground truth between two meshes sharing an original vertex set.
pub fn shared_ground_truth(source_pos: &[usize], target_pos: &[usize]) -> Correspondence {
    let mut source_to_orig = vec![0; source_pos.len()];
    for (orig, &s) in source_pos.iter().enumerate() {
        source_to_orig[s] = orig;
    }
    Correspondence::new(source_to_orig.iter().map(|&o| target_pos[o]).collect())
}

/// The humanoid and a rigidly moved, vertex-shuffled copy of it (an exact
/// isometry), with the ground truth from the first to the second.
pub fn body_pair(subdivisions: u32, seed: u64) -> Result<(Mesh, Mesh, Correspondence)> {
    let body = humanoid(subdivisions).with_name("body");
    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), 0.7) * Rotation3::from_axis_angle(&Vector3::x_axis(), 0.3);
    let shift = Vector3::new(0.4, -1.0, 2.0);
    let moved = body.map_vertices(|p| Point3::from(rot * p.coords + shift))?.with_name("body_moved");
    let mut order: Vec<usize> = (0..moved.n_vertices()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xb0d7));
    let (moved, old_to_new) = reorder_vertices(&moved, &order)?;
    Ok((body, moved, Correspondence::new(old_to_new)))
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Writes a complete fixture dataset: meshes, ground truth, heat kernel
/// descriptors, an experiment config, a partiality config and a training
/// corpus config.
pub fn write_fixture_dataset(dir: impl AsRef<Path>, subdivisions: u32, seed: u64) -> Result<()> {
    let dir = dir.as_ref();
    for sub in ["meshes", "gt", "desc"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let spheres = sphere_family(subdivisions, seed)?;
    let (body, moved, body_gt) = body_pair(subdivisions, seed)?;
    let mut meshes: Vec<&Mesh> = spheres.iter().map(|(m, _)| m).collect();
    meshes.push(&body);
    meshes.push(&moved);
    for m in &meshes {
        save_mesh(m, dir.join("meshes").join(format!("{}.off", m.name())), MeshFormat::Off)?;
        let lbo = eigenbasis(&build_laplacian(m)?, 30)?;
        let hks = heat_kernel_signature(&lbo, &hks_times(&lbo, 16));
        DescriptorSet::new(hks, m.name())?.save(dir.join("desc").join(format!("{}.desc", m.name())))?;
    }
    for i in 0..spheres.len() {
        for j in 0..spheres.len() {
            if i != j {
                let gt = shared_ground_truth(&spheres[i].1, &spheres[j].1);
                gt.save(dir.join("gt").join(format!("sphere{i}_sphere{j}.corr")))?;
            }
        }
    }
    body_gt.save(dir.join("gt").join("body_body_moved.corr"))?;

    let pair = |s: &str, t: &str| format!("[[pairs]]\nsource = \"meshes/{s}.off\"\ntarget = \"meshes/{t}.off\"\ngt = \"gt/{s}_{t}.corr\"\n");
    let mut exp = String::from(
        "seed = 0\npipeline = [\"optimal_c\", \"descriptor_c\", \"zoomout_refine\"]\n\n\
         [basis]\nkind = \"lbo\"\nk = [5, 10, 20]\n\n\
         [descriptors]\ndir = \"desc\"\nd = [8, 16]\n\n\
         [zoomout]\nstart_k = 10\nend_k = 30\nstep = 5\ninit = \"optimal_c\"\ncheckpoints = [20, 30]\n\n",
    );
    for (s, t) in [("sphere0", "sphere1"), ("sphere0", "sphere2"), ("body", "body_moved")] {
        exp.push_str(&pair(s, t));
    }
    write(&dir.join("experiment.toml"), &exp)?;

    let mut part = String::new();
    let _ = write!(
        part,
        "seed = 0\npipeline = [\"descriptor_c\", \"optimal_c\"]\n\n[basis]\nkind = \"lbo\"\nk = 5\n\n\
         [descriptors]\ndir = \"desc\"\n\n[partiality]\nlandmark = {}\nradii = [0.0, 0.4, 0.8]\n\n",
        lowest_vertex(&body)
    );
    part.push_str(&pair("body", "body_moved"));
    write(&dir.join("partiality.toml"), &part)?;

    let mut corpus = String::from(
        "k = 8\ninit = \"random_gaussian\"\npreset = \"desk\"\n\n\
         [train]\nlearning_rate = 2.0\ntemperature = 0.3\nepochs = 100\n\n\
         [train.weights]\nalignment = 1.0\ncoord = 1.0\nl1 = 0.02\nsmooth = 0.0\n\n",
    );
    for i in 0..4 {
        let _ = writeln!(corpus, "[[shapes]]\npath = \"meshes/sphere{i}.off\"\n");
    }
    for (s, t) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3)] {
        let _ = writeln!(
            corpus,
            "[[pairs]]\nsource = \"sphere{s}\"\ntarget = \"sphere{t}\"\ngt = \"gt/sphere{s}_sphere{t}.corr\"\n"
        );
    }
    write(&dir.join("corpus.toml"), &corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::icosphere;

    #[test]
    fn reorder_round_trip() {
        let m = icosphere(1, 1.0);
        let order: Vec<usize> = (0..m.n_vertices()).rev().collect();
        let (r, old_to_new) = reorder_vertices(&m, &order).unwrap();
        for v in 0..m.n_vertices() {
            assert_eq!(r.vertices()[old_to_new[v]], m.vertices()[v]);
        }
        assert!((r.total_area() - m.total_area()).abs() < 1e-12);
        assert!(reorder_vertices(&m, &[0, 0]).is_err());
    }

    #[test]
    fn shared_truth_maps_same_points() {
        let fam = sphere_family(1, 3).unwrap();
        let gt = shared_ground_truth(&fam[1].1, &fam[2].1);
        let base = icosphere(1, 1.0);
        for (i, &j) in gt.targets().iter().enumerate() {
            // both vertices are images of the same icosphere vertex
            let orig_i = fam[1].1.iter().position(|&p| p == i).unwrap();
            let orig_j = fam[2].1.iter().position(|&p| p == j).unwrap();
            assert_eq!(orig_i, orig_j);
            assert!(orig_i < base.n_vertices());
        }
    }
}
