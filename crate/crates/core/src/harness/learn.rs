//! Training-corpus configuration for embedding fitting.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embed_opt::{init_embeddings, train, Corpus, EmbeddingSet, InitStrategy, ObjectiveWeights, TrainConfig, TrainReport};
use crate::fmap::Correspondence;
use crate::mesh::load_mesh_auto;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusShapeSpec {
    pub path: PathBuf,
}

/// A training pair; `source` and `target` are mesh file stems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPairSpec {
    pub source: String,
    pub target: String,
    pub gt: PathBuf,
}

/// Overrides applied on top of the chosen preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub weights: Option<ObjectiveWeights>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub temperature: Option<f64>,
    pub restart_period: Option<usize>,
    pub center_unit_area: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnConfig {
    pub k: usize,
    #[serde(default = "default_init")]
    pub init: InitStrategy,
    /// `desk` or `paper_schedule`.
    #[serde(default = "default_preset")]
    pub preset: String,
    #[serde(default)]
    pub index_base: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub train: TrainOverrides,
    pub shapes: Vec<CorpusShapeSpec>,
    pub pairs: Vec<CorpusPairSpec>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_init() -> InitStrategy {
    InitStrategy::RandomGaussian
}

fn default_preset() -> String {
    "desk".into()
}

impl LearnConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: LearnConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LearnConfig::from_toml(&text, path.parent().map(Path::to_path_buf).unwrap_or_default())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// The preset with overrides applied; the seed comes from `seed`.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut t = TrainConfig::preset(&self.preset)?;
        let o = &self.train;
        if let Some(w) = o.weights {
            t.weights = w;
        }
        t.learning_rate = o.learning_rate.unwrap_or(t.learning_rate);
        t.epochs = o.epochs.unwrap_or(t.epochs);
        t.temperature = o.temperature.unwrap_or(t.temperature);
        t.restart_period = o.restart_period.unwrap_or(t.restart_period);
        t.center_unit_area = o.center_unit_area.unwrap_or(t.center_unit_area);
        t.seed = self.seed;
        t.validate()?;
        Ok(t)
    }

    pub fn corpus(&self) -> Result<Corpus> {
        if self.shapes.is_empty() || self.pairs.is_empty() {
            return Err(Error::Config("corpus needs shapes and pairs".into()));
        }
        let meshes = self
            .shapes
            .iter()
            .map(|s| load_mesh_auto(self.resolve(&s.path)))
            .collect::<Result<Vec<_>>>()?;
        let mut corpus = Corpus::new(meshes)?;
        for p in &self.pairs {
            let n = corpus.shapes()[corpus.shape_index(&p.source)?].mesh.n_vertices();
            let gt = Correspondence::load(self.resolve(&p.gt), self.index_base, Some(n))?;
            corpus.add_pair(&p.source, &p.target, gt)?;
        }
        Ok(corpus)
    }
}

/// Loads the corpus, initializes and trains.
pub fn run_learning(cfg: &LearnConfig) -> Result<(EmbeddingSet, TrainReport, TrainConfig)> {
    let tcfg = cfg.train_config()?;
    let mut corpus = cfg.corpus()?;
    if tcfg.weights.smooth > 0.0 {
        corpus.compute_lbo(cfg.k.max(2))?;
    }
    let set = init_embeddings(corpus, cfg.k, cfg.init, cfg.seed)?;
    let (set, report) = train(set, &tcfg)?;
    Ok((set, report, tcfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_to_preset() {
        let text = "k = 4\npreset = \"paper_schedule\"\nseed = 9\n[train]\nepochs = 3\n[[shapes]]\npath = \"a.off\"\n[[pairs]]\nsource = \"a\"\ntarget = \"a\"\ngt = \"id.corr\"\n";
        let cfg = LearnConfig::from_toml(text, ".").unwrap();
        let t = cfg.train_config().unwrap();
        assert_eq!((t.epochs, t.learning_rate, t.seed), (3, 1e-4, 9));
        assert_eq!(cfg.init, InitStrategy::RandomGaussian);
        let bad = text.replace("paper_schedule", "fast");
        assert!(LearnConfig::from_toml(&bad, ".").unwrap().train_config().is_err());
    }
}
