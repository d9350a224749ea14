use nalgebra::DMatrix;

/// Singular values below `PINV_RCOND * sigma_max` are treated as zero.
pub const PINV_RCOND: f64 = 1e-10;

/// Condition number above which a pseudoinverse is flagged.
pub const RANK_WARNING_CONDITION: f64 = 1e8;

/// Moore-Penrose pseudoinverse of a (typically tall) matrix, kept in
/// factored SVD form so it can be applied without forming `A^+`.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    u: DMatrix<f64>,
    inv_s: Vec<f64>,
    v: DMatrix<f64>,
    rank: usize,
    condition: f64,
}

impl PseudoInverse {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let (rows, cols) = a.shape();
        if rows == 0 || cols == 0 {
            return PseudoInverse {
                u: DMatrix::zeros(rows, 0),
                inv_s: Vec::new(),
                v: DMatrix::zeros(cols, 0),
                rank: 0,
                condition: 1.0,
            };
        }
        let svd = a.clone().svd(true, true);
        let u = svd.u.expect("requested U");
        let v = svd.v_t.expect("requested V^T").transpose();
        let s = svd.singular_values;
        let s_max = s.iter().fold(0.0f64, |m, &x| m.max(x));
        let s_min = s.iter().fold(f64::INFINITY, |m, &x| m.min(x));
        let cutoff = PINV_RCOND * s_max;
        let inv_s: Vec<f64> = s.iter().map(|&x| if x > cutoff { 1.0 / x } else { 0.0 }).collect();
        let rank = inv_s.iter().filter(|&&x| x != 0.0).count();
        let condition = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
        PseudoInverse {
            u,
            inv_s,
            v,
            rank,
            condition,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn ill_conditioned(&self) -> bool {
        !(self.condition <= RANK_WARNING_CONDITION)
    }

    /// `A^+ b` computed as `V diag(1/s) U^T b`.
    pub fn apply(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.u.nrows(), "pseudoinverse applied to wrong row count");
        let mut ub = self.u.tr_mul(b);
        for (i, mut row) in ub.row_iter_mut().enumerate() {
            row *= self.inv_s[i];
        }
        &self.v * ub
    }

    /// The explicit pseudoinverse matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        self.apply(&DMatrix::identity(self.u.nrows(), self.u.nrows()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tall_full_rank_matches_normal_equations() {
        let a = DMatrix::from_fn(7, 3, |i, j| ((i * 3 + j) as f64 * 0.71).sin() + if i == j { 2.0 } else { 0.0 });
        let b = DMatrix::from_fn(7, 2, |i, j| (i as f64 - j as f64) * 0.3);
        let x = PseudoInverse::new(&a).apply(&b);
        let ata = a.tr_mul(&a);
        let expected = ata.cholesky().unwrap().solve(&a.tr_mul(&b));
        assert_relative_eq!(x, expected, epsilon = 1e-12);
    }

    #[test]
    fn rank_deficient_is_flagged() {
        let mut a = DMatrix::from_fn(5, 2, |i, _| i as f64 + 1.0);
        a[(0, 1)] = 5.0;
        let p = PseudoInverse::new(&a);
        assert_eq!(p.rank(), 2);
        let c = DMatrix::from_fn(5, 2, |i, _| i as f64 + 1.0);
        let p = PseudoInverse::new(&c);
        assert_eq!(p.rank(), 1);
        assert!(p.ill_conditioned());
        // Penrose identity A A^+ A = A
        assert_relative_eq!(&c * p.matrix() * &c, c, epsilon = 1e-10);
    }
}
