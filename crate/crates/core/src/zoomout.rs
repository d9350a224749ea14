//! ZoomOut refinement and functional-map block diagnostics.
//!
//! Each iteration recomputes `C` from scratch on the first `k` columns of both
//! bases, recovers a point map by nearest neighbors, then grows `k`. No
//! orthogonality of the bases is assumed, so hybrid learned/LBO bases work
//! unchanged.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::fmap::{c_from_correspondence, pointmap_from_c, Correspondence, FunctionalMap};
use crate::spectral::{hybrid_basis, BasisKind, SpectralBasis};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisSource {
    #[default]
    Lbo,
    /// Learned columns up to `start_k`, LBO eigenfunctions after.
    HybridLearnedThenLbo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoomOutConfig {
    pub start_k: usize,
    pub end_k: usize,
    pub step: usize,
    #[serde(default)]
    pub basis_source: BasisSource,
}

impl ZoomOutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.start_k == 0 || self.start_k > self.end_k || self.step == 0 {
            return Err(Error::Config(format!(
                "zoomout needs 1 <= start_k <= end_k and step >= 1 (got {} -> {} by {})",
                self.start_k, self.end_k, self.step
            )));
        }
        Ok(())
    }

    /// Basis sizes visited, ending exactly at `end_k`.
    pub fn schedule(&self) -> Vec<usize> {
        let mut ks = vec![self.start_k];
        let mut k = self.start_k;
        while k < self.end_k {
            k = (k + self.step).min(self.end_k);
            ks.push(k);
        }
        ks
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoomOutStep {
    pub k: usize,
    pub fmap: FunctionalMap,
    pub correspondence: Correspondence,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ZoomOutTrace {
    pub steps: Vec<ZoomOutStep>,
}

impl ZoomOutTrace {
    pub fn at_k(&self, k: usize) -> Option<&ZoomOutStep> {
        self.steps.iter().find(|s| s.k == k)
    }

    pub fn last(&self) -> Option<&ZoomOutStep> {
        self.steps.last()
    }

    /// Writes `<pair>_zo<k>.fnmap` and `<pair>_zo<k>.corr` for each listed `k`
    /// (every iteration when `ks` is `None`).
    pub fn export(&self, dir: impl AsRef<Path>, pair: &str, ks: Option<&[usize]>) -> Result<()> {
        let dir = dir.as_ref();
        for step in &self.steps {
            if ks.is_some_and(|ks| !ks.contains(&step.k)) {
                continue;
            }
            step.fmap.save(dir.join(format!("{pair}_zo{}.fnmap", step.k)))?;
            step.correspondence.save(dir.join(format!("{pair}_zo{}.corr", step.k)))?;
        }
        Ok(())
    }
}

/// Refines `pi_init` by growing the basis from `start_k` to `end_k`.
pub fn zoomout(
    pi_init: &Correspondence,
    basis_m: &SpectralBasis,
    basis_n: &SpectralBasis,
    cfg: &ZoomOutConfig,
) -> Result<ZoomOutTrace> {
    cfg.validate()?;
    if basis_m.k() < cfg.end_k || basis_n.k() < cfg.end_k {
        return Err(Error::Dimension(format!(
            "zoomout to k = {} needs that many columns (bases have {} and {})",
            cfg.end_k,
            basis_m.k(),
            basis_n.k()
        )));
    }
    if cfg.basis_source == BasisSource::HybridLearnedThenLbo
        && (basis_m.kind() != BasisKind::Hybrid || basis_n.kind() != BasisKind::Hybrid)
        && cfg.start_k < cfg.end_k
    {
        return Err(Error::Config("hybrid zoomout expects hybrid bases (see zoomout_hybrid)".into()));
    }
    let mut pi = pi_init.clone();
    let mut trace = ZoomOutTrace::default();
    for k in cfg.schedule() {
        let phi_m = basis_m.functions().columns(0, k).into_owned();
        let phi_n = basis_n.functions().columns(0, k).into_owned();
        let c = c_from_correspondence(&phi_m, &phi_n, &pi)?;
        pi = pointmap_from_c(&c, &phi_m, &phi_n)?;
        trace.steps.push(ZoomOutStep {
            k,
            fmap: c,
            correspondence: pi.clone(),
        });
    }
    Ok(trace)
}

/// Builds hybrid bases with `cut = start_k` (learned columns first, LBO
/// eigenfunctions from index `start_k + 1` on) and runs [`zoomout`].
pub fn zoomout_hybrid(
    pi_init: &Correspondence,
    learned_m: &SpectralBasis,
    lbo_m: &SpectralBasis,
    learned_n: &SpectralBasis,
    lbo_n: &SpectralBasis,
    cfg: &ZoomOutConfig,
) -> Result<ZoomOutTrace> {
    let cfg = ZoomOutConfig {
        basis_source: BasisSource::HybridLearnedThenLbo,
        ..*cfg
    };
    let hm = hybrid_basis(learned_m, &lbo_m.truncated(cfg.end_k)?, cfg.start_k)?;
    let hn = hybrid_basis(learned_n, &lbo_n.truncated(cfg.end_k)?, cfg.start_k)?;
    zoomout(pi_init, &hm, &hn, &cfg)
}

/// Elementwise `|C_init - C_final|` on the leading `block x block` entries and its Frobenius norm.
pub fn block_difference(
    c_init: &FunctionalMap,
    c_final: &FunctionalMap,
    block: usize,
) -> Result<(DMatrix<f64>, f64)> {
    let limit = c_init
        .k_source()
        .min(c_init.k_target())
        .min(c_final.k_source())
        .min(c_final.k_target());
    if block > limit {
        return Err(Error::Dimension(format!("block {block} exceeds map size {limit}")));
    }
    let diff = DMatrix::from_fn(block, block, |i, j| {
        (c_init.matrix()[(i, j)] - c_final.matrix()[(i, j)]).abs()
    });
    let norm = diff.norm();
    Ok((diff, norm))
}

/// Frobenius norms of `C[0:cut, cut:]` (top right) and `C[cut:, 0:cut]` (bottom left).
pub fn offdiag_blocks(c: &FunctionalMap, cut: usize) -> Result<(f64, f64)> {
    let (rows, cols) = (c.k_source(), c.k_target());
    if cut > rows || cut > cols {
        return Err(Error::Dimension(format!("cut {cut} outside a {rows}x{cols} map")));
    }
    let m = c.matrix();
    let top_right = m.view((0, cut), (cut, cols - cut)).norm();
    let bottom_left = m.view((cut, 0), (rows - cut, cut)).norm();
    Ok((top_right, bottom_left))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fmap(m: DMatrix<f64>) -> FunctionalMap {
        FunctionalMap::new(m).unwrap()
    }

    #[test]
    fn schedule_clamps_last_step() {
        let cfg = ZoomOutConfig { start_k: 4, end_k: 11, step: 3, basis_source: BasisSource::Lbo };
        assert_eq!(cfg.schedule(), vec![4, 7, 10, 11]);
        let one = ZoomOutConfig { start_k: 5, end_k: 5, step: 2, basis_source: BasisSource::Lbo };
        assert_eq!(one.schedule(), vec![5]);
        assert!(ZoomOutConfig { step: 0, ..one }.validate().is_err());
        assert!(ZoomOutConfig { start_k: 6, ..one }.validate().is_err());
    }

    #[test]
    fn block_difference_cases() {
        let init = fmap(DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64));
        let mut ext = DMatrix::from_element(5, 5, 9.0);
        ext.view_mut((0, 0), (3, 3)).copy_from(init.matrix());
        let (d, n) = block_difference(&init, &fmap(ext), 3).unwrap();
        assert_eq!(n, 0.0);
        assert!(d.iter().all(|&x| x == 0.0));
        let (d, n) = block_difference(&init, &init, 0).unwrap();
        assert_eq!((d.len(), n), (0, 0.0));
        assert!(block_difference(&init, &init, 4).is_err());
    }

    #[test]
    fn offdiag_of_block_diagonal() {
        let mut m = DMatrix::zeros(6, 6);
        m.view_mut((0, 0), (2, 2)).fill(1.0);
        m.view_mut((2, 2), (4, 4)).fill(-2.0);
        assert_eq!(offdiag_blocks(&fmap(m), 2).unwrap(), (0.0, 0.0));
        assert_eq!(offdiag_blocks(&fmap(DMatrix::identity(60, 60)), 40).unwrap(), (0.0, 0.0));
        assert!(offdiag_blocks(&fmap(DMatrix::identity(3, 3)), 4).is_err());
    }
}
