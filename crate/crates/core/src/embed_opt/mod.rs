//! Free-parameter fitting of per-vertex embeddings over a training corpus.
//!
//! Each shape owns an `n x k` matrix that is updated directly by gradient
//! descent. Within a step the least-squares map `C` is recomputed from the
//! current embeddings and then held fixed while differentiating, so the
//! gradients are exact for the frozen-`C` objective rather than for the
//! objective differentiated through the pseudoinverse.

mod objective;
mod train;

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::fmap::Correspondence;
use crate::mesh::{vertex_areas, Mesh, VertexAreas};
use crate::spectral::{build_laplacian, eigenbasis_with, BasisKind, EigenOptions, SpectralBasis};
use crate::{Error, Result};

pub use objective::{frozen_objective, pair_gradient, pair_objective, step_gradient, step_with_rate, PairGradient};
pub use train::{cosine_warm_restart, train, training_accuracy, AccuracyCheckpoint, CurvePoint, TrainReport};

#[derive(Debug, Clone)]
pub struct CorpusShape {
    pub mesh: Mesh,
    pub mass: VertexAreas,
    /// LBO eigenbasis, needed by LBO seeding and the smoothness objective.
    pub lbo: Option<SpectralBasis>,
}

#[derive(Debug, Clone)]
pub struct CorpusPair {
    pub source: usize,
    pub target: usize,
    pub gt: Correspondence,
}

/// Training shapes and the ground-truth maps between them.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    shapes: Vec<CorpusShape>,
    pairs: Vec<CorpusPair>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Shapes are identified by mesh name, which must be unique.
    pub fn new(meshes: Vec<Mesh>) -> Result<Self> {
        let mut corpus = Corpus::default();
        for mesh in meshes {
            if corpus.index.contains_key(mesh.name()) {
                return Err(Error::Config(format!("duplicate shape name '{}'", mesh.name())));
            }
            corpus.index.insert(mesh.name().to_string(), corpus.shapes.len());
            let mass = vertex_areas(&mesh);
            corpus.shapes.push(CorpusShape { mesh, mass, lbo: None });
        }
        Ok(corpus)
    }

    pub fn add_pair(&mut self, source: &str, target: &str, gt: Correspondence) -> Result<usize> {
        let s = self.shape_index(source)?;
        let t = self.shape_index(target)?;
        if gt.len() != self.shapes[s].mesh.n_vertices() {
            return Err(Error::Dimension(format!(
                "ground truth for {source} -> {target} has {} entries, source has {} vertices",
                gt.len(),
                self.shapes[s].mesh.n_vertices()
            )));
        }
        gt.validate(self.shapes[t].mesh.n_vertices())?;
        self.pairs.push(CorpusPair { source: s, target: t, gt });
        Ok(self.pairs.len() - 1)
    }

    pub fn shape_index(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("no shape named '{name}' in the corpus")))
    }

    pub fn shapes(&self) -> &[CorpusShape] {
        &self.shapes
    }

    pub fn pairs(&self) -> &[CorpusPair] {
        &self.pairs
    }

    /// Computes a `k`-column LBO basis for every shape lacking one that wide.
    pub fn compute_lbo(&mut self, k: usize) -> Result<()> {
        for shape in &mut self.shapes {
            if shape.lbo.as_ref().is_some_and(|b| b.k() >= k) {
                continue;
            }
            let lap = build_laplacian(&shape.mesh)?;
            let basis = eigenbasis_with(&lap, k, &EigenOptions::default(), shape.mesh.name())?;
            shape.lbo = Some(basis);
        }
        Ok(())
    }
}

/// Per-shape coordinates, optionally centered at the area-weighted centroid
/// and scaled to unit surface area.
pub fn training_coordinates(shape: &CorpusShape, center_unit_area: bool) -> DMatrix<f64> {
    let mut x = shape.mesh.coordinates();
    if center_unit_area {
        let total = shape.mass.total();
        for c in 0..3 {
            let mean: f64 = x
                .column(c)
                .iter()
                .zip(shape.mass.values())
                .map(|(v, a)| v * a)
                .sum::<f64>()
                / total;
            x.column_mut(c).add_scalar_mut(-mean);
        }
        x /= total.sqrt();
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    LboSeed,
    RandomGaussian,
}

/// Trainable embeddings, one `n_s x k` matrix per corpus shape.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    k: usize,
    embeddings: Vec<DMatrix<f64>>,
    corpus: Corpus,
}

/// LBO seeding copies each shape's first `k` eigenfunctions; random
/// initialization draws i.i.d. `N(0, 1/k)` entries from a seeded stream.
pub fn init_embeddings(mut corpus: Corpus, k: usize, strategy: InitStrategy, seed: u64) -> Result<EmbeddingSet> {
    if k == 0 {
        return Err(Error::Dimension("embedding width must be positive".into()));
    }
    if let Some(s) = corpus.shapes.iter().find(|s| s.mesh.n_vertices() < k) {
        return Err(Error::Dimension(format!(
            "k = {k} exceeds the {} vertices of '{}'",
            s.mesh.n_vertices(),
            s.mesh.name()
        )));
    }
    let embeddings = match strategy {
        InitStrategy::LboSeed => {
            corpus.compute_lbo(k)?;
            corpus
                .shapes
                .iter()
                .map(|s| s.lbo.as_ref().map(|b| b.functions().columns(0, k).into_owned()).unwrap())
                .collect()
        }
        InitStrategy::RandomGaussian => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, (1.0 / k as f64).sqrt()).expect("positive std");
            corpus
                .shapes
                .iter()
                .map(|s| {
                    // column-major fill keeps the draw order explicit
                    let n = s.mesh.n_vertices();
                    let values: Vec<f64> = (0..n * k).map(|_| normal.sample(&mut rng)).collect();
                    DMatrix::from_vec(n, k, values)
                })
                .collect()
        }
    };
    Ok(EmbeddingSet { k, embeddings, corpus })
}

impl EmbeddingSet {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    /// Mutable corpus access, e.g. to attach LBO bases for the smoothness term.
    pub fn corpus_mut(&mut self) -> &mut Corpus {
        &mut self.corpus
    }

    pub fn embedding(&self, shape: usize) -> &DMatrix<f64> {
        &self.embeddings[shape]
    }

    pub fn embedding_by_name(&self, name: &str) -> Result<&DMatrix<f64>> {
        Ok(&self.embeddings[self.corpus.shape_index(name)?])
    }

    pub fn embeddings(&self) -> &[DMatrix<f64>] {
        &self.embeddings
    }

    pub fn set_embedding(&mut self, shape: usize, values: DMatrix<f64>) -> Result<()> {
        let expected = (self.corpus.shapes[shape].mesh.n_vertices(), self.k);
        if values.shape() != expected {
            return Err(Error::Dimension(format!(
                "embedding is {:?}, expected {expected:?}",
                values.shape()
            )));
        }
        self.embeddings[shape] = values;
        Ok(())
    }

    /// The embedding of `shape` as a learned basis.
    pub fn basis(&self, shape: usize) -> Result<SpectralBasis> {
        SpectralBasis::new(
            self.embeddings[shape].clone(),
            Vec::new(),
            BasisKind::Learned,
            self.corpus.shapes[shape].mesh.name(),
        )
    }

    /// Writes `<shape>.fnbasis` (kind Learned) for every shape.
    pub fn save_checkpoint(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for i in 0..self.embeddings.len() {
            let name = self.corpus.shapes[i].mesh.name();
            self.basis(i)?.save(dir.join(format!("{name}.fnbasis")))?;
        }
        Ok(())
    }
}

/// Weights of the summed objective. The alignment term acts on the pair; the
/// other terms act on each shape of the pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveWeights {
    pub alignment: f64,
    pub coord: f64,
    pub l1: f64,
    pub smooth: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights { alignment: 1.0, coord: 0.0, l1: 0.0, smooth: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub weights: ObjectiveWeights,
    pub learning_rate: f64,
    /// Passes over the (shuffled) pair list; one step updates one pair.
    pub epochs: usize,
    pub seed: u64,
    pub temperature: f64,
    /// Warm-restart period of the cosine schedule, in steps.
    pub restart_period: usize,
    pub center_unit_area: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::desk()
    }
}

impl TrainConfig {
    /// Defaults sized for meshes of a few thousand vertices.
    pub fn desk() -> Self {
        TrainConfig {
            weights: ObjectiveWeights::default(),
            learning_rate: 1e-2,
            epochs: 500,
            seed: 0,
            temperature: 1.0,
            restart_period: 100,
            center_unit_area: true,
        }
    }

    /// Learning rate and epoch budget of the original network training.
    pub fn paper_schedule() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            epochs: 1200,
            ..TrainConfig::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(TrainConfig::desk()),
            "paper_schedule" => Ok(TrainConfig::paper_schedule()),
            other => Err(Error::Config(format!("unknown preset '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        let all = [w.alignment, w.coord, w.l1, w.smooth];
        if all.iter().any(|x| !x.is_finite() || *x < 0.0) || all.iter().all(|&x| x == 0.0) {
            return Err(Error::Config("objective weights must be nonnegative with one positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.restart_period == 0 {
            return Err(Error::Config("restart_period must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::icosphere;

    fn corpus() -> Corpus {
        let a = icosphere(1, 1.0).with_name("a");
        let b = icosphere(1, 2.0).with_name("b");
        let mut c = Corpus::new(vec![a, b]).unwrap();
        c.add_pair("a", "b", Correspondence::identity(42)).unwrap();
        c
    }

    #[test]
    fn random_init_is_reproducible() {
        let s1 = init_embeddings(corpus(), 5, InitStrategy::RandomGaussian, 7).unwrap();
        let s2 = init_embeddings(corpus(), 5, InitStrategy::RandomGaussian, 7).unwrap();
        let s3 = init_embeddings(corpus(), 5, InitStrategy::RandomGaussian, 8).unwrap();
        assert_eq!(s1.embeddings(), s2.embeddings());
        assert_ne!(s1.embeddings(), s3.embeddings());
        let var = s1.embedding(0).iter().map(|v| v * v).sum::<f64>() / (42.0 * 5.0);
        assert!((var - 0.2).abs() < 0.06, "variance {var}");
    }

    #[test]
    fn width_checks() {
        assert!(matches!(
            init_embeddings(corpus(), 43, InitStrategy::RandomGaussian, 0),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            init_embeddings(corpus(), 43, InitStrategy::LboSeed, 0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn corpus_rejects_bad_pairs() {
        let mut c = corpus();
        assert!(c.add_pair("a", "zz", Correspondence::identity(42)).is_err());
        assert!(c.add_pair("a", "b", Correspondence::identity(41)).is_err());
        assert!(Corpus::new(vec![icosphere(0, 1.0), icosphere(0, 1.0)]).is_err());
    }

    #[test]
    fn centered_unit_area_coordinates() {
        let c = corpus();
        let x = training_coordinates(&c.shapes()[1], true);
        let shape = &c.shapes()[1];
        for col in 0..3 {
            let m: f64 = x.column(col).iter().zip(shape.mass.values()).map(|(v, a)| v * a).sum();
            assert!(m.abs() < 1e-12);
        }
        let scaled = shape.mesh.map_vertices(|p| (p.coords / shape.mass.total().sqrt()).into()).unwrap();
        assert!((scaled.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn presets() {
        assert_eq!(TrainConfig::preset("paper_schedule").unwrap().epochs, 1200);
        assert_eq!(TrainConfig::default().learning_rate, 1e-2);
        assert!(TrainConfig::preset("fast").is_err());
        let zero = TrainConfig {
            weights: ObjectiveWeights { alignment: 0.0, ..Default::default() },
            ..TrainConfig::desk()
        };
        assert!(zero.validate().is_err());
    }
}
