//! Losses on per-vertex embeddings.

use nalgebra::DMatrix;

use super::{c_from_correspondence, check_pair, gather_rows, soft_correspondence, Correspondence};
use crate::linalg::PseudoInverse;
use crate::mesh::VertexAreas;
use crate::spectral::{Embedding, SpectralBasis};
use crate::{Error, Result};

/// Alignment loss: with `C` the least-squares map under the ground truth and
/// `S` the soft correspondence, `sum_i ||(S X_N)_i - X_N[gt_i]||^2`.
pub fn loss_alignment(
    emb_m: &impl Embedding,
    emb_n: &impl Embedding,
    pi_gt: &Correspondence,
    x_n: &DMatrix<f64>,
    temperature: f64,
) -> Result<f64> {
    if x_n.nrows() != emb_n.matrix().nrows() {
        return Err(Error::Dimension(format!(
            "target coordinates have {} rows, embedding {}",
            x_n.nrows(),
            emb_n.matrix().nrows()
        )));
    }
    let c = c_from_correspondence(emb_m, emb_n, pi_gt)?;
    let s = soft_correspondence(emb_m, emb_n, &c, temperature)?;
    let residual = s * x_n - gather_rows(x_n, pi_gt.targets());
    Ok(residual.norm_squared())
}

/// `sum_i ||Phi_M[i] - Phi_N[gt_i]||^2`.
pub fn loss_universal(emb_m: &impl Embedding, emb_n: &impl Embedding, pi_gt: &Correspondence) -> Result<f64> {
    let (phi_m, phi_n) = (emb_m.matrix(), emb_n.matrix());
    check_pair(phi_m, phi_n, pi_gt)?;
    if phi_m.ncols() != phi_n.ncols() {
        return Err(Error::Dimension(format!(
            "embedding widths differ: {} vs {}",
            phi_m.ncols(),
            phi_n.ncols()
        )));
    }
    Ok((phi_m - gather_rows(phi_n, pi_gt.targets())).norm_squared())
}

/// Projection residual `||Phi Phi^+ X - X||_F^2` of the coordinate functions.
pub fn loss_coord(emb: &impl Embedding, x: &DMatrix<f64>) -> Result<f64> {
    let phi = emb.matrix();
    if x.nrows() != phi.nrows() {
        return Err(Error::Dimension(format!(
            "coordinates have {} rows, embedding {}",
            x.nrows(),
            phi.nrows()
        )));
    }
    let pinv = PseudoInverse::new(phi);
    if pinv.ill_conditioned() {
        log::warn!("embedding is ill-conditioned (condition number {:e})", pinv.condition());
    }
    Ok((phi * pinv.apply(x) - x).norm_squared())
}

/// Sum of absolute entries.
pub fn loss_l1(emb: &impl Embedding) -> f64 {
    emb.matrix().iter().map(|v| v.abs()).sum()
}

/// `||diag(Phi^T Phi_L Lambda Phi_L^T A Phi)||^2` with `Phi_L, Lambda` an LBO
/// eigenbasis and `A` the lumped mass. Only `k x k` products are formed.
pub fn loss_smooth(emb: &impl Embedding, lbo: &SpectralBasis, mass: &VertexAreas) -> Result<f64> {
    Ok(smooth_diagonal(emb.matrix(), lbo, mass)?.iter().map(|d| d * d).sum())
}

/// Diagonal of `Phi^T Phi_L Lambda Phi_L^T A Phi`.
pub(crate) fn smooth_diagonal(phi: &DMatrix<f64>, lbo: &SpectralBasis, mass: &VertexAreas) -> Result<Vec<f64>> {
    if lbo.eigenvalues().is_empty() {
        return Err(Error::MissingEigenvalues);
    }
    let n = phi.nrows();
    if lbo.n() != n || mass.len() != n {
        return Err(Error::Dimension(format!(
            "embedding has {n} rows, LBO basis {}, mass {}",
            lbo.n(),
            mass.len()
        )));
    }
    let phi_l = lbo.functions();
    let a_phi = DMatrix::from_fn(n, phi.ncols(), |i, j| mass.values()[i] * phi[(i, j)]);
    // right = Lambda Phi_L^T A Phi  (k_l x k), left = Phi^T Phi_L  (k x k_l)
    let mut right = phi_l.tr_mul(&a_phi);
    for (l, mut row) in right.row_iter_mut().enumerate() {
        row *= lbo.eigenvalues()[l];
    }
    let left = phi.tr_mul(phi_l);
    Ok((0..phi.ncols())
        .map(|c| left.row(c).iter().zip(right.column(c).iter()).map(|(a, b)| a * b).sum())
        .collect())
}
