//! Functional maps between spectral embeddings and the point maps they induce.
//!
//! A point-to-point map from `M` to `N` is stored as a [`Correspondence`]
//! (one target index per source vertex) and is never expanded into the dense
//! binary matrix; `Pi * Phi_N` is always a row gather.

mod losses;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::knn::KdTree;
use crate::linalg::PseudoInverse;
use crate::spectral::{parse_floats, read_matrix_file, write_matrix_file, Embedding};
use crate::{Error, Result};

pub use losses::{loss_alignment, loss_coord, loss_l1, loss_smooth, loss_universal};

/// Point map `M -> N`: `targets[i]` is the vertex of `N` matched to vertex `i` of `M`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Correspondence {
    targets: Vec<usize>,
    pub source_name: String,
    pub target_name: String,
}

impl Correspondence {
    pub fn new(targets: Vec<usize>) -> Self {
        Correspondence {
            targets,
            ..Default::default()
        }
    }

    pub fn identity(n: usize) -> Self {
        Correspondence::new((0..n).collect())
    }

    pub fn with_names(mut self, source: impl Into<String>, target: impl Into<String>) -> Self {
        self.source_name = source.into();
        self.target_name = target.into();
        self
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Checks every entry against the target vertex count.
    pub fn validate(&self, n_target: usize) -> Result<()> {
        match self.targets.iter().position(|&t| t >= n_target) {
            Some(i) => Err(Error::Index(format!(
                "correspondence entry {i} = {} but target has {n_target} vertices",
                self.targets[i]
            ))),
            None => Ok(()),
        }
    }

    /// `self` composed after a restriction: entry `i` becomes `targets[rows[i]]`.
    pub fn restricted(&self, rows: &[usize]) -> Result<Self> {
        let targets = rows
            .iter()
            .map(|&r| {
                self.targets
                    .get(r)
                    .copied()
                    .ok_or_else(|| Error::Index(format!("row {r} of a {}-entry map", self.len())))
            })
            .collect::<Result<_>>()?;
        Ok(Correspondence {
            targets,
            source_name: self.source_name.clone(),
            target_name: self.target_name.clone(),
        })
    }

    /// Fraction of entries equal to `other`.
    pub fn accuracy(&self, other: &Correspondence) -> f64 {
        if self.targets.is_empty() {
            return 1.0;
        }
        let hits = self.targets.iter().zip(&other.targets).filter(|(a, b)| a == b).count();
        hits as f64 / self.targets.len() as f64
    }

    /// Reads one index per line, shifting by `index_base` (0 or 1). When
    /// `expected_len` is given the line count must match it.
    pub fn load(path: impl AsRef<Path>, index_base: usize, expected_len: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut targets = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: usize = line
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("'{line}' is not a vertex index")))?;
            if v < index_base {
                return Err(Error::Index(format!("line {}: {v} below index base {index_base}", i + 1)));
            }
            targets.push(v - index_base);
        }
        if let Some(n) = expected_len {
            if targets.len() != n {
                return Err(Error::Dimension(format!(
                    "correspondence has {} lines, source has {n} vertices",
                    targets.len()
                )));
            }
        }
        Ok(Correspondence::new(targets))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = String::with_capacity(self.targets.len() * 6);
        for t in &self.targets {
            writeln!(s, "{t}").unwrap();
        }
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

/// Functional map `C` (`k_M x k_N`) taking coefficients on `N` to coefficients on `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalMap {
    matrix: DMatrix<f64>,
    condition: f64,
}

impl FunctionalMap {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dimension("functional map has non-finite entries".into()));
        }
        Ok(FunctionalMap { matrix, condition: 1.0 })
    }

    fn with_condition(matrix: DMatrix<f64>, condition: f64) -> Self {
        FunctionalMap { matrix, condition }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn k_source(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn k_target(&self) -> usize {
        self.matrix.ncols()
    }

    /// Condition number of the matrix that was pseudo-inverted to build this map.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn rank_warning(&self) -> bool {
        !(self.condition <= crate::linalg::RANK_WARNING_CONDITION)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = format!("FNMAP v1\n{} {}\n", self.k_source(), self.k_target());
        crate::spectral::write_rows(&mut s, &self.matrix);
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        if lines.next().map(|(_, l)| l) != Some("FNMAP v1") {
            return Err(Error::parse(1, "expected 'FNMAP v1' header"));
        }
        let (hl, dims) = lines.next().ok_or_else(|| Error::parse(2, "missing size line"))?;
        let dims = parse_floats(dims, hl)?;
        if dims.len() != 2 {
            return Err(Error::parse(hl, "expected 'kM kN'"));
        }
        let (km, kn) = (dims[0] as usize, dims[1] as usize);
        let rows: Vec<(usize, &str)> = lines.collect();
        if rows.len() != km {
            return Err(Error::parse(hl, format!("declared {km} rows, found {}", rows.len())));
        }
        let mut m = DMatrix::zeros(km, kn);
        for (r, (l, line)) in rows.into_iter().enumerate() {
            let vals = parse_floats(line, l)?;
            if vals.len() != kn {
                return Err(Error::parse(l, format!("expected {kn} values")));
            }
            for (c, v) in vals.into_iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        FunctionalMap::new(m)
    }
}

/// Per-vertex feature functions (`n x d`) on a named mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    pub values: DMatrix<f64>,
    pub mesh_name: String,
}

impl DescriptorSet {
    pub fn new(values: DMatrix<f64>, mesh_name: impl Into<String>) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(Error::Dimension("descriptor set needs at least one feature".into()));
        }
        Ok(DescriptorSet {
            values,
            mesh_name: mesh_name.into(),
        })
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_matrix_file(path, "DESC", None, &self.values)
    }

    pub fn load(path: impl AsRef<Path>, mesh_name: impl Into<String>) -> Result<Self> {
        let f = read_matrix_file(path)?;
        if f.kind != "DESC" {
            return Err(Error::parse(2, format!("expected kind DESC, found '{}'", f.kind)));
        }
        DescriptorSet::new(f.values, mesh_name)
    }
}

/// Rows of `phi` gathered by `pi`: the product `Pi * phi`.
pub(crate) fn gather_rows(phi: &DMatrix<f64>, pi: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(pi.len(), phi.ncols(), |i, j| phi[(pi[i], j)])
}

fn check_pair(phi_m: &DMatrix<f64>, phi_n: &DMatrix<f64>, pi: &Correspondence) -> Result<()> {
    if pi.len() != phi_m.nrows() {
        return Err(Error::Dimension(format!(
            "correspondence has {} entries, source basis {} rows",
            pi.len(),
            phi_m.nrows()
        )));
    }
    pi.validate(phi_n.nrows())
}

fn warn_if_ill_conditioned(pinv: &PseudoInverse, what: &str) {
    if pinv.ill_conditioned() {
        log::warn!("{what} is ill-conditioned (condition number {:e})", pinv.condition());
    }
}

/// `C = Phi_M^+ Pi Phi_N`, the least-squares map aligning the embeddings under `pi`.
pub fn c_from_correspondence(
    basis_m: &impl Embedding,
    basis_n: &impl Embedding,
    pi: &Correspondence,
) -> Result<FunctionalMap> {
    let (phi_m, phi_n) = (basis_m.matrix(), basis_n.matrix());
    check_pair(phi_m, phi_n, pi)?;
    let pinv = PseudoInverse::new(phi_m);
    warn_if_ill_conditioned(&pinv, "source basis");
    let c = pinv.apply(&gather_rows(phi_n, pi.targets()));
    Ok(FunctionalMap::with_condition(c, pinv.condition()))
}

/// Nearest row of `Phi_N` for every row of `Phi_M C` (lowest index on ties).
pub fn pointmap_from_c(
    fmap: &FunctionalMap,
    basis_m: &impl Embedding,
    basis_n: &impl Embedding,
) -> Result<Correspondence> {
    let (phi_m, phi_n) = (basis_m.matrix(), basis_n.matrix());
    if phi_m.ncols() != fmap.k_source() || phi_n.ncols() != fmap.k_target() {
        return Err(Error::Dimension(format!(
            "map is {}x{} but bases have {} and {} columns",
            fmap.k_source(),
            fmap.k_target(),
            phi_m.ncols(),
            phi_n.ncols()
        )));
    }
    let mapped = phi_m * fmap.matrix();
    Ok(Correspondence::new(KdTree::new(phi_n).nearest_rows(&mapped)))
}

/// Row-wise `softmax(-D / temperature)` of the embedding distance matrix
/// between `Phi_M C` and `Phi_N`. Each row sums to one.
pub fn soft_correspondence(
    emb_m: &impl Embedding,
    emb_n: &impl Embedding,
    fmap: &FunctionalMap,
    temperature: f64,
) -> Result<DMatrix<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
    }
    let (phi_m, phi_n) = (emb_m.matrix(), emb_n.matrix());
    if phi_m.ncols() != fmap.k_source() || phi_n.ncols() != fmap.k_target() {
        return Err(Error::Dimension("functional map does not match the embeddings".into()));
    }
    let mapped = phi_m * fmap.matrix();
    let d = pairwise_distances(&mapped, phi_n);
    Ok(row_softmax_neg(&d, temperature))
}

/// Euclidean distances between the rows of `a` and the rows of `b`.
pub(crate) fn pairwise_distances(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (na, nb, k) = (a.nrows(), b.nrows(), a.ncols());
    let a_rows: Vec<Vec<f64>> = (0..na).map(|i| a.row(i).iter().copied().collect()).collect();
    let b_rows: Vec<Vec<f64>> = (0..nb).map(|i| b.row(i).iter().copied().collect()).collect();
    DMatrix::from_fn(na, nb, |i, j| {
        let mut s = 0.0;
        for c in 0..k {
            let d = a_rows[i][c] - b_rows[j][c];
            s += d * d;
        }
        s.sqrt()
    })
}

/// `softmax(-d / t)` per row with a max-shift so no exponent is positive.
pub(crate) fn row_softmax_neg(d: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(d.nrows(), d.ncols());
    for i in 0..d.nrows() {
        let min = d.row(i).iter().fold(f64::INFINITY, |m, &x| m.min(x));
        let mut total = 0.0;
        for j in 0..d.ncols() {
            let e = (-(d[(i, j)] - min) / t).exp();
            s[(i, j)] = e;
            total += e;
        }
        for j in 0..d.ncols() {
            s[(i, j)] /= total;
        }
    }
    s
}

/// Least-squares map from descriptor preservation: with `A_X = Phi_X^+ G_X`,
/// returns the minimum-norm `C` minimizing `||C A_N - A_M||_F`.
pub fn c_from_descriptors(
    basis_m: &impl Embedding,
    basis_n: &impl Embedding,
    desc_m: &DescriptorSet,
    desc_n: &DescriptorSet,
) -> Result<FunctionalMap> {
    let (phi_m, phi_n) = (basis_m.matrix(), basis_n.matrix());
    if desc_m.d() != desc_n.d() {
        return Err(Error::Dimension(format!(
            "descriptor counts differ: {} vs {}",
            desc_m.d(),
            desc_n.d()
        )));
    }
    if desc_m.values.nrows() != phi_m.nrows() || desc_n.values.nrows() != phi_n.nrows() {
        return Err(Error::Dimension("descriptor rows do not match basis rows".into()));
    }
    let pm = PseudoInverse::new(phi_m);
    let pn = PseudoInverse::new(phi_n);
    warn_if_ill_conditioned(&pm, "source basis");
    warn_if_ill_conditioned(&pn, "target basis");
    let a_m = pm.apply(&desc_m.values);
    let a_n = pn.apply(&desc_n.values);
    // C A_N = A_M  <=>  A_N^T C^T = A_M^T
    let solve = PseudoInverse::new(&a_n.transpose());
    warn_if_ill_conditioned(&solve, "target descriptor coefficients");
    let c = solve.apply(&a_m.transpose()).transpose();
    Ok(FunctionalMap::with_condition(c, solve.condition()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn softmax_hand_case() {
        let d = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 2.0, 2.0, 1.0, 0.0]);
        let s = row_softmax_neg(&d, 1.0);
        assert_relative_eq!(s[(0, 0)], 0.6652, epsilon = 5e-5);
        assert_relative_eq!(s[(0, 1)], 0.2447, epsilon = 5e-5);
        assert_relative_eq!(s[(0, 2)], 0.0900, epsilon = 5e-5);
    }

    #[test]
    fn softmax_single_column_is_one() {
        let d = DMatrix::from_column_slice(4, 1, &[3.0, 0.0, 1e6, 7.0]);
        let s = row_softmax_neg(&d, 0.01);
        assert!(s.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn softmax_does_not_overflow() {
        let d = DMatrix::from_row_slice(1, 3, &[1e5, 1e5 + 1.0, 1e5 + 2.0]);
        let s = row_softmax_neg(&d, 1e-3);
        assert_eq!(s[(0, 0)], 1.0);
        assert!(s.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn correspondence_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        let c = Correspondence::new(vec![3, 0, 2, 2]);
        c.save(&p).unwrap();
        assert_eq!(Correspondence::load(&p, 0, Some(4)).unwrap(), c);
        assert!(matches!(Correspondence::load(&p, 0, Some(5)), Err(Error::Dimension(_))));
        fs::write(&p, "4\n1\n3\n3\n").unwrap();
        assert_eq!(Correspondence::load(&p, 1, None).unwrap(), c);
    }

    #[test]
    fn fnmap_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.fnmap");
        let m = FunctionalMap::new(DMatrix::from_fn(3, 2, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0))).unwrap();
        m.save(&p).unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with("FNMAP v1\n3 2\n"));
        assert_eq!(FunctionalMap::load(&p).unwrap().matrix(), m.matrix());
    }

    #[test]
    fn descriptor_file_kind() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.desc");
        let d = DescriptorSet::new(DMatrix::from_element(4, 2, 0.5), "m").unwrap();
        d.save(&p).unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with("FNBASIS v1\n4 2 DESC\n"));
        assert_eq!(DescriptorSet::load(&p, "m").unwrap(), d);
    }

    #[test]
    fn fmt_helper_has_17_digits() {
        assert_eq!(crate::spectral::fmt_f64(1.0 / 3.0), "3.3333333333333331e-1");
    }
}
