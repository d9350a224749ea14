//! Cotangent Laplace-Beltrami operator, its eigenbasis and basis utilities.

mod basis;
mod eigen;
mod laplacian;

use nalgebra::{DMatrix, DVectorView};

use crate::{Error, Result};

pub use basis::{
    read_matrix_file, write_matrix_file, BasisKind, Embedding, MatrixFile, SpectralBasis,
    RANK_TOLERANCE,
};
pub(crate) use basis::{fmt_f64, parse_floats, write_rows};
pub use eigen::{eigenbasis, eigenbasis_with, EigenOptions, EigenSolver, DENSE_LIMIT, SHIFT};
pub use laplacian::{build_laplacian, LaplacianPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DirichletMode {
    /// `f^T W f / f^T f`: the stiffness applied to the L2-normalized function.
    #[default]
    L2,
    /// Rayleigh quotient `f^T W f / f^T A f`.
    MassNormalized,
}

/// Dirichlet energy of a single per-vertex function.
pub fn dirichlet_energy(f: DVectorView<'_, f64>, lap: &LaplacianPair, mode: DirichletMode) -> Result<f64> {
    if f.len() != lap.n() {
        return Err(Error::Dimension(format!("function of length {} on {} vertices", f.len(), lap.n())));
    }
    let l2 = f.norm();
    if l2 < 1e-14 {
        return Err(Error::ZeroFunction);
    }
    let wf = lap.stiffness().mul_vec(f.as_slice());
    let num: f64 = wf.iter().zip(f.iter()).map(|(a, b)| a * b).sum();
    let den = match mode {
        DirichletMode::L2 => l2 * l2,
        DirichletMode::MassNormalized => f
            .iter()
            .zip(lap.mass().values())
            .map(|(x, a)| x * x * a)
            .sum(),
    };
    Ok(num / den)
}

/// Energies of every column of a basis.
pub fn dirichlet_energies(basis: &SpectralBasis, lap: &LaplacianPair, mode: DirichletMode) -> Result<Vec<f64>> {
    (0..basis.k())
        .map(|j| dirichlet_energy(basis.functions().column(j).as_view(), lap, mode))
        .collect()
}

/// Splits ascending eigenvalues into clusters of near-equal values. A new
/// cluster starts wherever the jump exceeds `rel_gap * max(|lambda|, 1)`.
pub fn eigenvalue_groups(values: &[f64], rel_gap: f64) -> Vec<Vec<f64>> {
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for &v in values {
        match groups.last_mut() {
            Some(g) if v - g[g.len() - 1] <= rel_gap * v.abs().max(1.0) => g.push(v),
            _ => groups.push(vec![v]),
        }
    }
    groups
}

/// First `cut` columns from `learned`, the remaining columns from `lbo`.
pub fn hybrid_basis(learned: &SpectralBasis, lbo: &SpectralBasis, cut: usize) -> Result<SpectralBasis> {
    if cut == 0 {
        return Ok(lbo.clone());
    }
    if learned.n() != lbo.n() || learned.mesh_name() != lbo.mesh_name() {
        return Err(Error::Dimension(format!(
            "learned basis on '{}' ({} rows) vs LBO basis on '{}' ({} rows)",
            learned.mesh_name(),
            learned.n(),
            lbo.mesh_name(),
            lbo.n()
        )));
    }
    if learned.k() < cut || lbo.k() <= cut {
        return Err(Error::Dimension(format!(
            "cut {cut} needs >= {cut} learned and > {cut} LBO columns (have {} and {})",
            learned.k(),
            lbo.k()
        )));
    }
    let (n, k) = (lbo.n(), lbo.k());
    let functions = DMatrix::from_fn(n, k, |i, j| {
        if j < cut {
            learned.functions()[(i, j)]
        } else {
            lbo.functions()[(i, j)]
        }
    });
    SpectralBasis::new(functions, Vec::new(), BasisKind::Hybrid, lbo.mesh_name())
}
