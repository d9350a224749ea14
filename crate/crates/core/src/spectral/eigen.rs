//! Smallest eigenpairs of the pencil `W phi = lambda A phi`.
//!
//! Small problems are solved densely. Larger ones use shift-invert subspace
//! iteration: a block of vectors is repeatedly multiplied by
//! `(W - sigma A)^-1 A` (one envelope-Cholesky factorization, reused), then
//! A-orthonormalized and Rayleigh-Ritz projected onto the pencil. Ritz vectors
//! are exactly A-orthonormal and their Rayleigh quotients equal the reported
//! eigenvalues.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{BasisKind, LaplacianPair, SpectralBasis};
use crate::linalg::{sorted_symmetric_eigen, CsrMatrix, EnvelopeCholesky};
use crate::{Error, Result};

/// Problems up to this size use the dense solver under [`EigenSolver::Auto`].
pub const DENSE_LIMIT: usize = 500;

/// Shift used for the factorization, relative to the spectral scale
/// `trace(W) / trace(A)`.
pub const SHIFT: f64 = -1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenSolver {
    Auto,
    Dense,
    ShiftInvert,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub solver: EigenSolver,
    /// Convergence threshold on `||W x - l A x||_{A^-1}` relative to the
    /// largest wanted eigenvalue.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            solver: EigenSolver::Auto,
            tolerance: 1e-10,
            max_iterations: 2000,
            seed: 0x5eed,
        }
    }
}

/// The `k` smallest eigenpairs with default options.
pub fn eigenbasis(lap: &LaplacianPair, k: usize) -> Result<SpectralBasis> {
    eigenbasis_with(lap, k, &EigenOptions::default(), "")
}

pub fn eigenbasis_with(
    lap: &LaplacianPair,
    k: usize,
    opts: &EigenOptions,
    mesh_name: &str,
) -> Result<SpectralBasis> {
    let n = lap.n();
    if k == 0 || k > n {
        return Err(Error::Dimension(format!("requested {k} eigenpairs of a {n}-vertex mesh")));
    }
    if let Some(i) = lap.mass().values().iter().position(|&a| !(a > 0.0)) {
        return Err(Error::DegenerateGeometry(format!("vertex {i} has zero area (isolated?)")));
    }
    let components = pattern_components(lap.stiffness());
    if components > 1 {
        log::warn!("mesh has {components} connected components; the kernel has that dimension");
    }
    let dense = match opts.solver {
        EigenSolver::Dense => true,
        EigenSolver::ShiftInvert => false,
        EigenSolver::Auto => n <= DENSE_LIMIT,
    };
    let (mut values, mut vectors) = if dense {
        dense_pairs(lap, k)
    } else {
        shift_invert_pairs(lap, k, opts)?
    };

    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for v in &mut values {
        if *v < 0.0 && v.abs() <= 1e-8 * scale.max(f64::MIN_POSITIVE) {
            *v = 0.0;
        }
    }
    for mut col in vectors.column_iter_mut() {
        let (mut best, mut big) = (0.0f64, 0.0f64);
        for &x in col.iter() {
            if x.abs() > big {
                big = x.abs();
                best = x;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }
    SpectralBasis::new(vectors, values, BasisKind::Lbo, mesh_name)
}

fn dense_pairs(lap: &LaplacianPair, k: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = lap.n();
    let inv_sqrt: Vec<f64> = lap.mass().values().iter().map(|a| 1.0 / a.sqrt()).collect();
    let mut b = lap.stiffness().to_dense();
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    // symmetrize rounding
    let b = (&b + b.transpose()) * 0.5;
    let (vals, vecs) = sorted_symmetric_eigen(b);
    let values = vals.iter().take(k).copied().collect();
    let vectors = DMatrix::from_fn(n, k, |i, j| vecs[(i, j)] * inv_sqrt[i]);
    (values, vectors)
}

fn shift_invert_pairs(
    lap: &LaplacianPair,
    k: usize,
    opts: &EigenOptions,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = lap.n();
    let w = lap.stiffness();
    let mass = lap.mass().values();
    let trace_w: f64 = (0..n).map(|i| w.get(i, i)).sum();
    let trace_a: f64 = mass.iter().sum();
    let sigma = SHIFT * (trace_w / trace_a).max(f64::MIN_POSITIVE);
    let shifted = w.add_diagonal(-sigma, mass);
    let chol = EnvelopeCholesky::factor(&shifted)?;

    let p = n.min((2 * k).max(k + 16));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
    x.column_mut(0).fill(1.0);

    let mut last_residual = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        let ax = scale_rows(&x, mass);
        let mut y = chol.solve_dense(&ax);
        mass_orthonormalize(&mut y, mass, &mut rng);
        let wy = w.mul_dense(&y);
        let h = y.tr_mul(&wy);
        let h = (&h + h.transpose()) * 0.5;
        let (theta, q) = sorted_symmetric_eigen(h);
        x = &y * &q;
        let wx = &wy * &q;

        let lam_k = theta[k - 1].abs().max(theta[(k).min(p - 1)].abs() * 1e-3);
        let mut worst = 0.0f64;
        for j in 0..k {
            let mut r2 = 0.0;
            for i in 0..n {
                let r = wx[(i, j)] - theta[j] * mass[i] * x[(i, j)];
                r2 += r * r / mass[i];
            }
            worst = worst.max(r2.sqrt());
        }
        last_residual = worst / lam_k.max(f64::MIN_POSITIVE);
        if last_residual <= opts.tolerance {
            let values = theta.iter().take(k).copied().collect();
            return Ok((values, x.columns(0, k).into_owned()));
        }
    }
    Err(Error::Convergence(format!(
        "{k} eigenpairs not converged after {} iterations (relative residual {last_residual:e})",
        opts.max_iterations
    )))
}

fn scale_rows(x: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * d[i])
}

/// Modified Gram-Schmidt (two passes) in the `A` inner product. Columns that
/// collapse numerically are replaced by fresh random directions.
fn mass_orthonormalize(y: &mut DMatrix<f64>, mass: &[f64], rng: &mut ChaCha8Rng) {
    let (n, p) = y.shape();
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).zip(mass).map(|((x, y), m)| x * y * m).sum() };
    for j in 0..p {
        let mut attempts = 0;
        loop {
            let orig_norm = {
                let c = y.column(j);
                dot(c.as_slice(), c.as_slice()).sqrt()
            };
            for _pass in 0..2 {
                for i in 0..j {
                    let (left, mut right) = y.columns_range_pair_mut(i, j);
                    let proj = dot(left.as_slice(), right.as_slice());
                    right.axpy(-proj, &left, 1.0);
                }
            }
            let c = y.column(j);
            let norm = dot(c.as_slice(), c.as_slice()).sqrt();
            if norm > 1e-10 * orig_norm && norm > 0.0 {
                y.column_mut(j).scale_mut(1.0 / norm);
                break;
            }
            attempts += 1;
            assert!(attempts < 10, "cannot complete an A-orthonormal block");
            for i in 0..n {
                y[(i, j)] = StandardNormal.sample(rng);
            }
        }
    }
}

/// Number of connected components in the sparsity graph.
fn pattern_components(a: &CsrMatrix) -> usize {
    let n = a.n_rows();
    let mut seen = vec![false; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        stack.push(s);
        while let Some(u) = stack.pop() {
            for (v, val) in a.row(u) {
                if val != 0.0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    count
}
