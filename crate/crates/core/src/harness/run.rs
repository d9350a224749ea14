//! Pair evaluation, run concurrently over a bounded thread pool.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::report::{ExperimentReport, PartialityReport, PartialityRow, ReportRow};
use super::{BasisSpec, ExperimentConfig, Pipeline};
use crate::fmap::{c_from_correspondence, c_from_descriptors, pointmap_from_c, Correspondence, DescriptorSet};
use crate::geodesics::{cut_geodesic_ball, geodesic_error_with_graph, GeodesicGraph};
use crate::mesh::{load_mesh_auto, Mesh};
use crate::spectral::{build_laplacian, eigenbasis_with, hybrid_basis, BasisKind, EigenOptions, SpectralBasis};
use crate::zoomout::{zoomout, BasisSource, ZoomOutConfig};
use crate::{Error, Result};

/// Seed of one pair: the experiment seed XOR the 64-bit FNV-1a hash of its id.
pub fn pair_seed(seed: u64, pair_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in pair_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    seed ^ h
}

/// A mesh with the widest basis any configured run needs.
struct Shape {
    mesh: Mesh,
    basis: SpectralBasis,
    descriptors: Option<DescriptorSet>,
}

fn widest_lbo(cfg: &ExperimentConfig) -> usize {
    let zo = cfg.zoomout.as_ref().map(|z| z.end_k).unwrap_or(0);
    match &cfg.basis {
        BasisSpec::Lbo { k } => k.to_vec().into_iter().max().unwrap_or(0).max(zo),
        BasisSpec::Hybrid { k, .. } => *k,
        BasisSpec::Learned { .. } => 0,
    }
}

fn lbo_on(mesh: &Mesh, k: usize, seed: u64) -> Result<SpectralBasis> {
    let lap = build_laplacian(mesh)?;
    let opts = EigenOptions { seed, ..EigenOptions::default() };
    eigenbasis_with(&lap, k, &opts, mesh.name())
}

fn load_shape(cfg: &ExperimentConfig, path: &std::path::Path, seed: u64) -> Result<Shape> {
    let mesh = load_mesh_auto(cfg.resolve(path))?;
    let stored = |dir: &std::path::Path| -> Result<SpectralBasis> {
        let file = cfg.resolve(dir).join(format!("{}.fnbasis", mesh.name()));
        let b = SpectralBasis::load(file, mesh.name())?;
        if b.n() != mesh.n_vertices() {
            return Err(Error::Dimension(format!(
                "basis for '{}' has {} rows, mesh {} vertices",
                mesh.name(),
                b.n(),
                mesh.n_vertices()
            )));
        }
        Ok(b)
    };
    let basis = match &cfg.basis {
        BasisSpec::Lbo { .. } => lbo_on(&mesh, widest_lbo(cfg), seed)?,
        BasisSpec::Learned { dir, .. } => stored(dir)?,
        BasisSpec::Hybrid { dir, cut, k } => hybrid_basis(&stored(dir)?, &lbo_on(&mesh, *k, seed)?, *cut)?,
    };
    let descriptors = match &cfg.descriptors {
        Some(spec) => {
            let file = cfg.resolve(&spec.dir).join(format!("{}.desc", mesh.name()));
            let d = DescriptorSet::load(file, mesh.name())?;
            if d.values.nrows() != mesh.n_vertices() {
                return Err(Error::Dimension(format!("descriptors for '{}' do not match its vertices", mesh.name())));
            }
            Some(d)
        }
        None => None,
    };
    Ok(Shape { mesh, basis, descriptors })
}

/// The source shape restricted to the survivors of a cut. LBO bases are
/// recomputed on the partial mesh; stored columns are row-restricted.
fn restrict_shape(cfg: &ExperimentConfig, full: &Shape, partial: Mesh, kept: &[usize], seed: u64) -> Result<Shape> {
    let name = partial.name().to_string();
    let basis = match &cfg.basis {
        BasisSpec::Lbo { .. } => lbo_on(&partial, widest_lbo(cfg), seed)?,
        BasisSpec::Learned { .. } => full.basis.row_restricted(kept, name.as_str())?,
        BasisSpec::Hybrid { cut, k, .. } => {
            let learned = SpectralBasis::new(
                full.basis.functions().select_rows(kept.iter()).columns(0, *cut).into_owned(),
                Vec::new(),
                BasisKind::Learned,
                name.as_str(),
            )?;
            hybrid_basis(&learned, &lbo_on(&partial, *k, seed)?, *cut)?
        }
    };
    let descriptors = match &full.descriptors {
        Some(d) => Some(DescriptorSet::new(d.values.select_rows(kept.iter()), name.as_str())?),
        None => None,
    };
    Ok(Shape { mesh: partial, basis, descriptors })
}

fn basis_sizes(cfg: &ExperimentConfig, basis: &SpectralBasis) -> Vec<usize> {
    match &cfg.basis {
        BasisSpec::Lbo { k } => k.to_vec(),
        BasisSpec::Learned { k: Some(k), .. } => k.to_vec(),
        BasisSpec::Learned { k: None, .. } | BasisSpec::Hybrid { .. } => vec![basis.k()],
    }
}

fn descriptor_sizes(cfg: &ExperimentConfig, desc: Option<&DescriptorSet>) -> Vec<usize> {
    match (cfg.descriptors.as_ref().and_then(|s| s.d.as_ref()), desc) {
        (Some(d), _) => d.to_vec(),
        (None, Some(desc)) => vec![desc.d()],
        (None, None) => Vec::new(),
    }
}

fn columns(b: &SpectralBasis, k: usize) -> Result<DMatrix<f64>> {
    if k > b.k() {
        return Err(Error::Dimension(format!("{k} columns requested from a {}-column basis", b.k())));
    }
    Ok(b.functions().columns(0, k).into_owned())
}

fn leading_descriptors(desc: Option<&DescriptorSet>, d: usize) -> Result<DescriptorSet> {
    let desc = desc.ok_or_else(|| Error::Config("descriptors not configured".into()))?;
    if d == 0 || d > desc.d() {
        return Err(Error::Dimension(format!("{d} descriptors requested, {} stored", desc.d())));
    }
    DescriptorSet::new(desc.values.columns(0, d).into_owned(), desc.mesh_name.clone())
}

fn initial_c(
    how: Pipeline,
    phi_m: &DMatrix<f64>,
    phi_n: &DMatrix<f64>,
    src: &Shape,
    tgt: &Shape,
    gt: &Correspondence,
    d: Option<usize>,
) -> Result<crate::fmap::FunctionalMap> {
    match how {
        Pipeline::DescriptorC => {
            let d = d.expect("descriptor runs carry d");
            let dm = leading_descriptors(src.descriptors.as_ref(), d)?;
            let dn = leading_descriptors(tgt.descriptors.as_ref(), d)?;
            c_from_descriptors(phi_m, phi_n, &dm, &dn)
        }
        _ => c_from_correspondence(phi_m, phi_n, gt),
    }
}

struct PairContext<'a> {
    cfg: &'a ExperimentConfig,
    id: String,
    src: &'a Shape,
    tgt: &'a Shape,
    graph: &'a GeodesicGraph,
    gt: &'a Correspondence,
}

impl PairContext<'_> {
    fn row(&self, pipeline: Pipeline, k: Option<usize>, d: Option<usize>, checkpoint: String) -> ReportRow {
        ReportRow {
            pair: self.id.clone(),
            pipeline,
            basis: self.cfg.basis.label().to_string(),
            k,
            d,
            checkpoint,
            outcome: Ok(0.0),
            time_ms: 0,
            per_vertex: Vec::new(),
        }
    }

    fn scored(&self, mut row: ReportRow, predicted: &Correspondence, started: Instant) -> Result<ReportRow> {
        let e = geodesic_error_with_graph(predicted, self.gt, &self.tgt.mesh, self.graph, self.cfg.error_normalization)?;
        row.outcome = Ok(e.mean);
        row.per_vertex = e.per_vertex;
        if self.cfg.timing {
            row.time_ms = started.elapsed().as_millis() as u64;
        }
        Ok(row)
    }

    fn failed(&self, pipeline: Pipeline, k: Option<usize>, d: Option<usize>, e: &Error) -> ReportRow {
        log::warn!("pair {} ({}): {e}", self.id, pipeline.name());
        ReportRow { outcome: Err(e.kind().to_string()), ..self.row(pipeline, k, d, "error".into()) }
    }

    fn single(&self, pipeline: Pipeline, k: usize, d: Option<usize>) -> Result<ReportRow> {
        let t = Instant::now();
        let phi_m = columns(&self.src.basis, k)?;
        let phi_n = columns(&self.tgt.basis, k)?;
        let c = initial_c(pipeline, &phi_m, &phi_n, self.src, self.tgt, self.gt, d)?;
        let pred = pointmap_from_c(&c, &phi_m, &phi_n)?;
        self.scored(self.row(pipeline, Some(k), d, "final".into()), &pred, t)
    }

    fn refined(&self, d: Option<usize>) -> Result<Vec<ReportRow>> {
        let t = Instant::now();
        let z = self.cfg.zoomout.as_ref().expect("validated");
        let zcfg = ZoomOutConfig {
            start_k: z.start_k,
            end_k: z.end_k,
            step: z.step,
            basis_source: if matches!(self.cfg.basis, BasisSpec::Hybrid { .. }) {
                BasisSource::HybridLearnedThenLbo
            } else {
                BasisSource::Lbo
            },
        };
        let phi_m = columns(&self.src.basis, z.start_k)?;
        let phi_n = columns(&self.tgt.basis, z.start_k)?;
        let c0 = initial_c(z.init, &phi_m, &phi_n, self.src, self.tgt, self.gt, d)?;
        let pi0 = pointmap_from_c(&c0, &phi_m, &phi_n)?;
        let init_row = self.scored(self.row(Pipeline::ZoomoutRefine, Some(z.start_k), d, "init".into()), &pi0, t)?;
        let trace = zoomout(&pi0, &self.src.basis, &self.tgt.basis, &zcfg)?;
        let wanted = z.checkpoints.clone().unwrap_or_else(|| vec![z.end_k]);
        let mut rows = vec![init_row];
        for k in wanted {
            let step = trace
                .at_k(k)
                .ok_or_else(|| Error::Config(format!("checkpoint {k} is not on the zoomout schedule")))?;
            let row = self.row(Pipeline::ZoomoutRefine, Some(k), d, format!("zo{k}"));
            rows.push(self.scored(row, &step.correspondence, t)?);
        }
        Ok(rows)
    }

    fn all_rows(&self) -> Vec<ReportRow> {
        let mut rows = Vec::new();
        let ks = basis_sizes(self.cfg, &self.src.basis);
        let ds = descriptor_sizes(self.cfg, self.src.descriptors.as_ref());
        for pipeline in self.cfg.pipelines() {
            match pipeline {
                Pipeline::OptimalC => {
                    for &k in &ks {
                        rows.push(self.single(pipeline, k, None).unwrap_or_else(|e| self.failed(pipeline, Some(k), None, &e)));
                    }
                }
                Pipeline::DescriptorC => {
                    for &k in &ks {
                        for &d in &ds {
                            let r = self.single(pipeline, k, Some(d));
                            rows.push(r.unwrap_or_else(|e| self.failed(pipeline, Some(k), Some(d), &e)));
                        }
                    }
                }
                Pipeline::ZoomoutRefine => {
                    let z = self.cfg.zoomout.as_ref().expect("validated");
                    let dlist: Vec<Option<usize>> = if z.init == Pipeline::DescriptorC {
                        ds.iter().map(|&d| Some(d)).collect()
                    } else {
                        vec![None]
                    };
                    for d in dlist {
                        match self.refined(d) {
                            Ok(r) => rows.extend(r),
                            Err(e) => rows.push(self.failed(pipeline, None, d, &e)),
                        }
                    }
                }
            }
        }
        rows
    }
}

struct LoadedPair {
    src: Shape,
    tgt: Shape,
    graph: GeodesicGraph,
    gt: Correspondence,
}

fn load_pair(cfg: &ExperimentConfig, i: usize, seed: u64) -> Result<LoadedPair> {
    let p = &cfg.pairs[i];
    let src = load_shape(cfg, &p.source, seed)?;
    let tgt = load_shape(cfg, &p.target, seed)?;
    let gt = Correspondence::load(cfg.resolve(&p.gt), cfg.index_base, Some(src.mesh.n_vertices()))?;
    gt.validate(tgt.mesh.n_vertices())?;
    let graph = GeodesicGraph::new(&tgt.mesh);
    Ok(LoadedPair { src, tgt, graph, gt })
}

fn failed_pair(cfg: &ExperimentConfig, id: &str, e: &Error) -> Vec<ReportRow> {
    log::warn!("pair {id}: {e}");
    cfg.pipelines()
        .into_iter()
        .map(|pipeline| ReportRow {
            pair: id.to_string(),
            pipeline,
            basis: cfg.basis.label().to_string(),
            k: None,
            d: None,
            checkpoint: "error".into(),
            outcome: Err(e.kind().to_string()),
            time_ms: 0,
            per_vertex: Vec::new(),
        })
        .collect()
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Runs every configured pipeline on every pair, `jobs` pairs at a time
/// (0 picks the number of cores). Per-pair failures become error rows.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    let per_pair: Vec<(String, Vec<ReportRow>)> = pool(jobs)?.install(|| {
        (0..cfg.pairs.len())
            .into_par_iter()
            .map(|i| {
                let id = cfg.pair_id(i);
                let rows = match load_pair(cfg, i, pair_seed(cfg.seed, &id)) {
                    Ok(lp) => PairContext {
                        cfg,
                        id: id.clone(),
                        src: &lp.src,
                        tgt: &lp.tgt,
                        graph: &lp.graph,
                        gt: &lp.gt,
                    }
                    .all_rows(),
                    Err(e) => failed_pair(cfg, &id, &e),
                };
                (id, rows)
            })
            .collect()
    });
    Ok(ExperimentReport { rows: sorted(per_pair) })
}

fn sorted<T>(mut per_pair: Vec<(String, Vec<T>)>) -> Vec<T> {
    per_pair.sort_by(|a, b| a.0.cmp(&b.0));
    per_pair.into_iter().flat_map(|(_, rows)| rows).collect()
}

/// Cuts a geodesic ball of each radius around `landmark` from every source
/// shape and evaluates the configured pipelines on the partial shapes.
pub fn run_partiality(cfg: &ExperimentConfig, landmark: usize, radii: &[f64], jobs: usize) -> Result<PartialityReport> {
    cfg.validate()?;
    if radii.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::Config("partiality radii must be nonnegative".into()));
    }
    let per_pair: Vec<(String, Vec<PartialityRow>)> = pool(jobs)?.install(|| {
        (0..cfg.pairs.len())
            .into_par_iter()
            .map(|i| {
                let id = cfg.pair_id(i);
                let seed = pair_seed(cfg.seed, &id);
                let rows = match load_pair(cfg, i, seed) {
                    Ok(lp) => radii.iter().flat_map(|&r| partial_rows(cfg, &id, &lp, landmark, r, seed)).collect(),
                    Err(e) => radii
                        .iter()
                        .flat_map(|&radius| {
                            failed_pair(cfg, &id, &e)
                                .into_iter()
                                .map(move |row| PartialityRow { radius, survivors: None, row })
                        })
                        .collect(),
                };
                (id, rows)
            })
            .collect()
    });
    Ok(PartialityReport { rows: sorted(per_pair) })
}

fn partial_rows(
    cfg: &ExperimentConfig,
    id: &str,
    lp: &LoadedPair,
    landmark: usize,
    radius: f64,
    seed: u64,
) -> Vec<PartialityRow> {
    let rows = |src: &Shape, gt: &Correspondence| {
        PairContext { cfg, id: id.to_string(), src, tgt: &lp.tgt, graph: &lp.graph, gt }.all_rows()
    };
    let wrap = |rows: Vec<ReportRow>, survivors: Option<usize>| {
        rows.into_iter()
            .map(|row| PartialityRow { radius, survivors: survivors.filter(|_| !row.is_error()), row })
            .collect::<Vec<_>>()
    };
    if radius == 0.0 {
        return wrap(rows(&lp.src, &lp.gt), Some(lp.src.mesh.n_vertices()));
    }
    let cut = cut_geodesic_ball(&lp.src.mesh, landmark, radius).and_then(|cut| {
        let gt = lp.gt.restricted(&cut.kept_to_full)?;
        let shape = restrict_shape(cfg, &lp.src, cut.partial, &cut.kept_to_full, seed)?;
        Ok((shape, gt))
    });
    match cut {
        Ok((shape, gt)) => {
            let n = shape.mesh.n_vertices();
            wrap(rows(&shape, &gt), Some(n))
        }
        Err(e) => wrap(failed_pair(cfg, id, &e), None),
    }
}
