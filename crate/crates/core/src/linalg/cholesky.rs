//! Envelope (profile) Cholesky factorization for sparse SPD matrices.
//!
//! Rows are reordered with reverse Cuthill-McKee first; mesh Laplacians then
//! have a narrow profile and fill stays inside it.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use super::CsrMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    values: Vec<f64>,
}

/// Reverse Cuthill-McKee ordering of the symmetric pattern of `a`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n_rows();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|r| a.row(r).map(|(c, _)| c).filter(|&c| c != r).collect())
        .collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |start: usize, visited: &[bool]| -> (usize, usize) {
        // (min-degree node of the last BFS level, eccentricity of start)
        let mut level = vec![usize::MAX; n];
        level[start] = 0;
        let mut q = VecDeque::from([start]);
        let mut last = start;
        while let Some(u) = q.pop_front() {
            last = u;
            for &v in &adj[u] {
                if !visited[v] && level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    q.push_back(v);
                }
            }
        }
        let depth = level[last];
        let best = (0..n)
            .filter(|&v| level[v] == depth)
            .min_by_key(|&v| (degree[v], v))
            .unwrap_or(last);
        (best, depth)
    };

    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // pseudo-peripheral start node
        let mut start = seed;
        let mut depth = bfs_levels(start, &visited).1;
        for _ in 0..8 {
            let far = bfs_levels(start, &visited).0;
            let d = bfs_levels(far, &visited).1;
            if d <= depth {
                break;
            }
            start = far;
            depth = d;
        }
        visited[start] = true;
        let mut q = VecDeque::from([start]);
        while let Some(u) = q.pop_front() {
            order.push(u);
            let mut nbrs: Vec<usize> = adj[u].iter().copied().filter(|&v| !visited[v]).collect();
            nbrs.sort_by_key(|&v| (degree[v], v));
            for v in nbrs {
                visited[v] = true;
                q.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

impl EnvelopeCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n_rows();
        if a.n_cols() != n {
            return Err(Error::Dimension(format!("cholesky of {}x{} matrix", n, a.n_cols())));
        }
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for (c, _) in a.row(old) {
                first[new] = first[new].min(inv[c]);
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + (i - first[i] + 1));
        }
        let mut values = vec![0.0; offset[n]];
        for (new, &old) in perm.iter().enumerate() {
            for (c, v) in a.row(old) {
                let j = inv[c];
                if j <= new {
                    values[offset[new] + (j - first[new])] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            let row_i = offset[i];
            for j in fi..i {
                let fj = first[j];
                let m0 = fi.max(fj);
                let row_j = offset[j];
                let mut s = values[row_i + (j - fi)];
                for m in m0..j {
                    s -= values[row_i + (m - fi)] * values[row_j + (m - fj)];
                }
                let ljj = values[row_j + (j - fj)];
                values[row_i + (j - fi)] = s / ljj;
            }
            let mut d = values[row_i + (i - fi)];
            for m in fi..i {
                let l = values[row_i + (m - fi)];
                d -= l * l;
            }
            if !(d > 0.0) {
                return Err(Error::DegenerateGeometry(format!(
                    "matrix is not positive definite (pivot {d:e} at row {i})"
                )));
            }
            values[row_i + (i - fi)] = d.sqrt();
        }
        Ok(EnvelopeCholesky {
            n,
            perm,
            first,
            offset,
            values,
        })
    }

    /// Stored entries of the factor (a measure of fill).
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..self.n {
            let fi = self.first[i];
            let row = self.offset[i];
            let mut s = y[i];
            for m in fi..i {
                s -= self.values[row + (m - fi)] * y[m];
            }
            y[i] = s / self.values[row + (i - fi)];
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = self.offset[i];
            y[i] /= self.values[row + (i - fi)];
            let xi = y[i];
            for m in fi..i {
                y[m] -= self.values[row + (m - fi)] * xi;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = y[new];
        }
    }

    pub fn solve_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = b.clone();
        for mut col in out.column_iter_mut() {
            self.solve_in_place(col.as_mut_slice());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn path_laplacian_plus_identity(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 3.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        // a long-range coupling to exercise the envelope
        t.push((0, n - 1, -0.5));
        t.push((n - 1, 0, -0.5));
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn solves_against_dense() {
        let a = path_laplacian_plus_identity(40);
        let chol = EnvelopeCholesky::factor(&a).unwrap();
        let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut x = b.clone();
        chol.solve_in_place(&mut x);
        let ax = a.mul_vec(&x);
        for (u, v) in ax.iter().zip(&b) {
            assert_relative_eq!(u, v, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(EnvelopeCholesky::factor(&a).is_err());
    }

    #[test]
    fn rcm_is_permutation() {
        let a = path_laplacian_plus_identity(17);
        let mut p = reverse_cuthill_mckee(&a);
        p.sort_unstable();
        assert_eq!(p, (0..17).collect::<Vec<_>>());
    }
}
