//! Objective values and frozen-`C` gradients for one training pair.

use nalgebra::DMatrix;

use super::{training_coordinates, EmbeddingSet, TrainConfig};
use crate::fmap::c_from_correspondence;
use crate::linalg::PseudoInverse;
use crate::{Error, Result};

/// Objective value at the current embeddings and its gradient with respect
/// to the source and target embedding matrices.
#[derive(Debug, Clone)]
pub struct PairGradient {
    pub loss: f64,
    /// The map held fixed while differentiating (`None` without an alignment term).
    pub frozen_c: Option<DMatrix<f64>>,
    pub grad_source: DMatrix<f64>,
    pub grad_target: DMatrix<f64>,
}

fn frozen_c(set: &EmbeddingSet, pair: usize, cfg: &TrainConfig) -> Result<Option<DMatrix<f64>>> {
    if cfg.weights.alignment == 0.0 {
        return Ok(None);
    }
    let p = &set.corpus.pairs[pair];
    let c = c_from_correspondence(&set.embeddings[p.source], &set.embeddings[p.target], &p.gt)?;
    Ok(Some(c.matrix().clone()))
}

fn check_pair_index(set: &EmbeddingSet, pair: usize) -> Result<()> {
    if pair >= set.corpus.pairs.len() {
        return Err(Error::Index(format!("pair {pair} of {}", set.corpus.pairs.len())));
    }
    Ok(())
}

/// Gradient of the configured objective on `pair`, with `C` recomputed from
/// the current embeddings and then treated as a constant.
pub fn pair_gradient(set: &EmbeddingSet, pair: usize, cfg: &TrainConfig) -> Result<PairGradient> {
    check_pair_index(set, pair)?;
    let c = frozen_c(set, pair, cfg)?;
    let p = &set.corpus.pairs[pair];
    let (loss, gm, gn) = evaluate(
        set,
        pair,
        cfg,
        c.as_ref(),
        &set.embeddings[p.source],
        &set.embeddings[p.target],
        true,
    )?;
    let (grad_source, grad_target) = (gm.unwrap(), gn.unwrap());
    let bad = grad_source.iter().chain(grad_target.iter()).filter(|v| !v.is_finite()).count();
    if bad > 0 || !loss.is_finite() {
        let src = &set.corpus.shapes[p.source].mesh;
        let tgt = &set.corpus.shapes[p.target].mesh;
        let amax = |m: &DMatrix<f64>| m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        return Err(Error::NonFiniteGradient(format!(
            "pair {} -> {}: loss {loss}, {bad} non-finite gradient entries, max |emb| {:e} / {:e}, temperature {}",
            src.name(),
            tgt.name(),
            amax(&set.embeddings[p.source]),
            amax(&set.embeddings[p.target]),
            cfg.temperature
        )));
    }
    Ok(PairGradient { loss, frozen_c: c, grad_source, grad_target })
}

/// The objective of `pair` evaluated at arbitrary embeddings with a given
/// frozen map. This is the function whose gradient [`pair_gradient`] returns.
pub fn frozen_objective(
    set: &EmbeddingSet,
    pair: usize,
    cfg: &TrainConfig,
    c: Option<&DMatrix<f64>>,
    phi_m: &DMatrix<f64>,
    phi_n: &DMatrix<f64>,
) -> Result<f64> {
    check_pair_index(set, pair)?;
    if cfg.weights.alignment > 0.0 && c.is_none() {
        return Err(Error::Config("alignment term needs a frozen map".into()));
    }
    Ok(evaluate(set, pair, cfg, c, phi_m, phi_n, false)?.0)
}

/// Objective of `pair` with `C` recomputed from the current embeddings.
pub fn pair_objective(set: &EmbeddingSet, pair: usize, cfg: &TrainConfig) -> Result<f64> {
    check_pair_index(set, pair)?;
    let c = frozen_c(set, pair, cfg)?;
    let p = &set.corpus.pairs[pair];
    frozen_objective(set, pair, cfg, c.as_ref(), &set.embeddings[p.source], &set.embeddings[p.target])
}

/// One gradient-descent update of both shapes at the configured learning
/// rate. Returns the objective after the update.
pub fn step_gradient(set: &mut EmbeddingSet, pair: usize, cfg: &TrainConfig) -> Result<f64> {
    step_with_rate(set, pair, cfg, cfg.learning_rate)
}

/// As [`step_gradient`] with an explicit learning rate.
pub fn step_with_rate(set: &mut EmbeddingSet, pair: usize, cfg: &TrainConfig, lr: f64) -> Result<f64> {
    let g = pair_gradient(set, pair, cfg)?;
    let (s, t) = (set.corpus.pairs[pair].source, set.corpus.pairs[pair].target);
    if lr != 0.0 {
        set.embeddings[s] -= &g.grad_source * lr;
        set.embeddings[t] -= &g.grad_target * lr;
    }
    pair_objective(set, pair, cfg)
}

#[allow(clippy::type_complexity)]
fn evaluate(
    set: &EmbeddingSet,
    pair: usize,
    cfg: &TrainConfig,
    c: Option<&DMatrix<f64>>,
    phi_m: &DMatrix<f64>,
    phi_n: &DMatrix<f64>,
    want_grad: bool,
) -> Result<(f64, Option<DMatrix<f64>>, Option<DMatrix<f64>>)> {
    let p = &set.corpus.pairs[pair];
    let w = &cfg.weights;
    for (m, shape) in [(phi_m, p.source), (phi_n, p.target)] {
        let n = set.corpus.shapes[shape].mesh.n_vertices();
        if m.shape() != (n, set.k) {
            return Err(Error::Dimension(format!("embedding is {:?}, expected ({n}, {})", m.shape(), set.k)));
        }
    }
    let mut loss = 0.0;
    let mut gm = want_grad.then(|| DMatrix::zeros(phi_m.nrows(), phi_m.ncols()));
    let mut gn = want_grad.then(|| DMatrix::zeros(phi_n.nrows(), phi_n.ncols()));

    if w.alignment > 0.0 {
        let c = c.expect("checked by callers");
        let x_n = training_coordinates(&set.corpus.shapes[p.target], cfg.center_unit_area);
        let (l, grads) = alignment(phi_m, phi_n, c, &x_n, p.gt.targets(), cfg.temperature, want_grad);
        loss += w.alignment * l;
        if let (Some(gm), Some(gn), Some((dm, dn))) = (gm.as_mut(), gn.as_mut(), grads) {
            *gm += dm * w.alignment;
            *gn += dn * w.alignment;
        }
    }

    // Per-shape terms; a self-pair counts its shape once.
    let mut per_shape = vec![(p.source, phi_m, &mut gm)];
    if p.target != p.source {
        per_shape.push((p.target, phi_n, &mut gn));
    }
    for (shape, phi, grad) in per_shape {
        let s = &set.corpus.shapes[shape];
        if w.coord > 0.0 {
            let x = training_coordinates(s, cfg.center_unit_area);
            let pinv = PseudoInverse::new(phi);
            let b = pinv.apply(&x);
            let r = &x - phi * &b;
            loss += w.coord * r.norm_squared();
            if let Some(g) = grad.as_mut() {
                *g -= (&r * b.transpose()) * (2.0 * w.coord);
            }
        }
        if w.l1 > 0.0 {
            loss += w.l1 * phi.iter().map(|v| v.abs()).sum::<f64>();
            if let Some(g) = grad.as_mut() {
                *g += phi.map(|v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 }) * w.l1;
            }
        }
        if w.smooth > 0.0 {
            let lbo = s.lbo.as_ref().ok_or(Error::MissingEigenvalues)?;
            if lbo.eigenvalues().is_empty() {
                return Err(Error::MissingEigenvalues);
            }
            let phi_l = lbo.functions();
            let lam = lbo.eigenvalues();
            let a = s.mass.values();
            let a_phi = DMatrix::from_fn(phi.nrows(), phi.ncols(), |i, j| a[i] * phi[(i, j)]);
            // right = Lambda Phi_L^T A Phi,  back = Lambda Phi_L^T Phi  (both k_l x k)
            let mut right = phi_l.tr_mul(&a_phi);
            let mut back = phi_l.tr_mul(phi);
            for l in 0..lam.len() {
                right.row_mut(l).scale_mut(lam[l]);
                back.row_mut(l).scale_mut(lam[l]);
            }
            let m_phi = phi_l * &right;
            let d: Vec<f64> = (0..phi.ncols()).map(|c| phi.column(c).dot(&m_phi.column(c))).collect();
            loss += w.smooth * d.iter().map(|v| v * v).sum::<f64>();
            if let Some(g) = grad.as_mut() {
                let mut mt_phi = phi_l * &back;
                for (i, mut row) in mt_phi.row_iter_mut().enumerate() {
                    row *= a[i];
                }
                let mut dir = m_phi + mt_phi;
                for (c, mut col) in dir.column_iter_mut().enumerate() {
                    col *= 2.0 * d[c] * w.smooth;
                }
                *g += dir;
            }
        }
    }
    if p.target == p.source {
        if let (Some(gm), Some(gn)) = (gm.as_mut(), gn.as_mut()) {
            *gm += &*gn;
            gn.copy_from(gm);
        }
    }
    Ok((loss, gm, gn))
}

/// Alignment loss `||S X_N - X_N[gt]||^2` for a fixed `C`, and optionally its
/// gradient with respect to `Phi_M` and `Phi_N`.
///
/// Works one source row at a time: distances, the shifted softmax and the
/// gradient contributions of that row, so no `n_M x n_N` matrix is stored.
#[allow(clippy::type_complexity)]
fn alignment(
    phi_m: &DMatrix<f64>,
    phi_n: &DMatrix<f64>,
    c: &DMatrix<f64>,
    x_n: &DMatrix<f64>,
    gt: &[usize],
    temperature: f64,
    want_grad: bool,
) -> (f64, Option<(DMatrix<f64>, DMatrix<f64>)>) {
    let p = phi_m * c;
    let (nm, nn, k) = (p.nrows(), phi_n.nrows(), p.ncols());
    let p_rows = row_major(&p);
    let n_rows = row_major(phi_n);
    let x_rows = row_major(x_n);
    let mut d = vec![0.0; nn];
    let mut s = vec![0.0; nn];
    let mut loss = 0.0;
    let mut dp = vec![0.0; nm * k];
    let mut dn = vec![0.0; nn * k];
    let mut col_sums = vec![0.0; nn];
    for i in 0..nm {
        let pi = &p_rows[i * k..(i + 1) * k];
        let mut min = f64::INFINITY;
        for j in 0..nn {
            let nj = &n_rows[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for c in 0..k {
                let t = pi[c] - nj[c];
                acc += t * t;
            }
            d[j] = acc.sqrt();
            min = min.min(d[j]);
        }
        let mut total = 0.0;
        for j in 0..nn {
            s[j] = (-(d[j] - min) / temperature).exp();
            total += s[j];
        }
        let mut sx = [0.0; 3];
        for j in 0..nn {
            s[j] /= total;
            for c in 0..3 {
                sx[c] += s[j] * x_rows[j * 3 + c];
            }
        }
        let g = gt[i];
        let r = [sx[0] - x_rows[g * 3], sx[1] - x_rows[g * 3 + 1], sx[2] - x_rows[g * 3 + 2]];
        loss += r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
        if !want_grad {
            continue;
        }
        // dL/dS_ij = 2 r_i . x_j; its S-weighted mean is 2 r_i . (S X)_i
        let mean = 2.0 * (r[0] * sx[0] + r[1] * sx[1] + r[2] * sx[2]);
        let dpi = &mut dp[i * k..(i + 1) * k];
        let mut row_sum = 0.0;
        for j in 0..nn {
            if d[j] <= 0.0 || s[j] == 0.0 {
                continue;
            }
            let gij = 2.0 * (r[0] * x_rows[j * 3] + r[1] * x_rows[j * 3 + 1] + r[2] * x_rows[j * 3 + 2]);
            let e = -s[j] * (gij - mean) / (temperature * d[j]);
            row_sum += e;
            col_sums[j] += e;
            let nj = &n_rows[j * k..(j + 1) * k];
            let dnj = &mut dn[j * k..(j + 1) * k];
            for c in 0..k {
                dpi[c] -= e * nj[c];
                dnj[c] -= e * pi[c];
            }
        }
        for c in 0..k {
            dpi[c] += row_sum * pi[c];
        }
    }
    if !want_grad {
        return (loss, None);
    }
    for j in 0..nn {
        for c in 0..k {
            dn[j * k + c] += col_sums[j] * n_rows[j * k + c];
        }
    }
    let dp = DMatrix::from_row_slice(nm, k, &dp);
    let dn = DMatrix::from_row_slice(nn, k, &dn);
    (loss, Some((dp * c.transpose(), dn)))
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}
