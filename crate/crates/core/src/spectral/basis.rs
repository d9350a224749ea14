use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::linalg::singular_values;
use crate::{Error, Result};

/// Minimum ratio `sigma_min / sigma_max` for a basis to count as full rank.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BasisKind {
    Lbo,
    Learned,
    Hybrid,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisKind::Lbo => "LBO",
            BasisKind::Learned => "Learned",
            BasisKind::Hybrid => "Hybrid",
        })
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lbo" => Ok(BasisKind::Lbo),
            "learned" => Ok(BasisKind::Learned),
            "hybrid" => Ok(BasisKind::Hybrid),
            other => Err(Error::Config(format!("unknown basis kind '{other}'"))),
        }
    }
}

/// Anything that exposes an `n x k` per-vertex embedding matrix.
pub trait Embedding {
    fn matrix(&self) -> &DMatrix<f64>;
}

impl Embedding for DMatrix<f64> {
    fn matrix(&self) -> &DMatrix<f64> {
        self
    }
}

/// An `n x k` basis (one column per function) on a named mesh.
///
/// LBO bases carry their eigenvalues and are mass-orthonormal; learned and
/// hybrid bases carry none. Every basis is full column rank.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    functions: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    kind: BasisKind,
    mesh_name: String,
}

impl Embedding for SpectralBasis {
    fn matrix(&self) -> &DMatrix<f64> {
        &self.functions
    }
}

impl SpectralBasis {
    pub fn new(
        functions: DMatrix<f64>,
        eigenvalues: Vec<f64>,
        kind: BasisKind,
        mesh_name: impl Into<String>,
    ) -> Result<Self> {
        let k = functions.ncols();
        if !eigenvalues.is_empty() && eigenvalues.len() != k {
            return Err(Error::Dimension(format!(
                "{} eigenvalues for {k} basis functions",
                eigenvalues.len()
            )));
        }
        if k > functions.nrows() {
            return Err(Error::Dimension(format!(
                "{k} basis functions on {} vertices",
                functions.nrows()
            )));
        }
        if functions.iter().any(|v| !v.is_finite()) {
            return Err(Error::Rank("basis has non-finite entries".into()));
        }
        check_full_rank(&functions)?;
        Ok(SpectralBasis {
            functions,
            eigenvalues,
            kind,
            mesh_name: mesh_name.into(),
        })
    }

    pub fn functions(&self) -> &DMatrix<f64> {
        &self.functions
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn mesh_name(&self) -> &str {
        &self.mesh_name
    }

    pub fn n(&self) -> usize {
        self.functions.nrows()
    }

    pub fn k(&self) -> usize {
        self.functions.ncols()
    }

    /// First `k` columns (and eigenvalues).
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k > self.k() {
            return Err(Error::Dimension(format!("cannot take {k} of {} columns", self.k())));
        }
        Ok(SpectralBasis {
            functions: self.functions.columns(0, k).into_owned(),
            eigenvalues: self.eigenvalues.iter().take(k).copied().collect(),
            kind: self.kind,
            mesh_name: self.mesh_name.clone(),
        })
    }

    /// Restriction to the listed rows, e.g. the surviving vertices of a cut.
    pub fn row_restricted(&self, rows: &[usize], mesh_name: impl Into<String>) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n()) {
            return Err(Error::Index(format!("row {bad} of {}-row basis", self.n())));
        }
        let functions = self.functions.select_rows(rows.iter());
        SpectralBasis::new(functions, self.eigenvalues.clone(), self.kind, mesh_name)
    }

    pub fn with_kind(mut self, kind: BasisKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let eigs = (!self.eigenvalues.is_empty()).then_some(self.eigenvalues.as_slice());
        write_matrix_file(path, &self.kind.to_string(), eigs, &self.functions)
    }

    /// Reads a basis file; `mesh_name` labels the result.
    pub fn load(path: impl AsRef<Path>, mesh_name: impl Into<String>) -> Result<Self> {
        let file = read_matrix_file(path)?;
        let kind: BasisKind = file.kind.parse().map_err(|_| {
            Error::parse(2, format!("'{}' is not a basis kind", file.kind))
        })?;
        SpectralBasis::new(file.values, file.eigenvalues.unwrap_or_default(), kind, mesh_name)
    }
}

pub(crate) fn check_full_rank(m: &DMatrix<f64>) -> Result<()> {
    if m.ncols() == 0 {
        return Ok(());
    }
    let s = singular_values(m);
    let (hi, lo) = (s[0], *s.last().unwrap());
    if !(lo > RANK_TOLERANCE * hi) {
        return Err(Error::Rank(format!(
            "smallest singular value {lo:e} vs largest {hi:e}"
        )));
    }
    Ok(())
}

/// Contents of an `FNBASIS v1` file.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub kind: String,
    pub eigenvalues: Option<Vec<f64>>,
    pub values: DMatrix<f64>,
}

/// Formats with 17 significant digits.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `FNBASIS v1\nn k kind\n[eigs: ...\n]` followed by `n` rows of `k` values.
pub fn write_matrix_file(
    path: impl AsRef<Path>,
    kind: &str,
    eigenvalues: Option<&[f64]>,
    values: &DMatrix<f64>,
) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::new();
    writeln!(s, "FNBASIS v1").unwrap();
    writeln!(s, "{} {} {}", values.nrows(), values.ncols(), kind).unwrap();
    if let Some(eigs) = eigenvalues {
        s.push_str("eigs:");
        for &e in eigs {
            s.push(' ');
            s.push_str(&fmt_f64(e));
        }
        s.push('\n');
    }
    write_rows(&mut s, values);
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_rows(s: &mut String, values: &DMatrix<f64>) {
    for row in values.row_iter() {
        let line: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
}

pub fn read_matrix_file(path: impl AsRef<Path>) -> Result<MatrixFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "FNBASIS v1")) => {}
        _ => return Err(Error::parse(1, "expected 'FNBASIS v1' header")),
    }
    let (hl, header) = lines.next().ok_or_else(|| Error::parse(2, "missing size line"))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 3 {
        return Err(Error::parse(hl, "expected 'n k kind'"));
    }
    let n: usize = toks[0].parse().map_err(|_| Error::parse(hl, "bad row count"))?;
    let k: usize = toks[1].parse().map_err(|_| Error::parse(hl, "bad column count"))?;
    let kind = toks[2].to_string();
    let mut rest: Vec<(usize, &str)> = lines.filter(|(_, l)| !l.is_empty()).collect();
    let mut eigenvalues = None;
    if let Some((el, first)) = rest.first().copied() {
        if let Some(e) = first.strip_prefix("eigs:") {
            let eigs = parse_floats(e, el)?;
            if eigs.len() != k {
                return Err(Error::parse(el, format!("{} eigenvalues for k = {k}", eigs.len())));
            }
            eigenvalues = Some(eigs);
            rest.remove(0);
        }
    }
    if rest.len() != n {
        return Err(Error::parse(hl, format!("declared {n} rows, found {}", rest.len())));
    }
    let mut values = DMatrix::zeros(n, k);
    for (r, (l, line)) in rest.iter().enumerate() {
        let row = parse_floats(line, *l)?;
        if row.len() != k {
            return Err(Error::parse(*l, format!("expected {k} values, found {}", row.len())));
        }
        for (c, v) in row.into_iter().enumerate() {
            values[(r, c)] = v;
        }
    }
    Ok(MatrixFile {
        kind,
        eigenvalues,
        values,
    })
}

pub(crate) fn parse_floats(s: &str, line: usize) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::parse(line, format!("cannot parse number '{t}'")))
        })
        .collect()
}
