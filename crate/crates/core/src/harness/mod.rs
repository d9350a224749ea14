//! Experiment orchestration: pair benchmarks, partiality sweeps and accuracy curves.
//!
//! An experiment is described by a TOML file. Relative paths are resolved
//! against the directory of that file. A minimal configuration:
//!
//! ```toml
//! seed = 0
//! pipeline = "optimal_c"
//!
//! [basis]
//! kind = "lbo"
//! k = [10, 20]
//!
//! [[pairs]]
//! source = "meshes/a.off"
//! target = "meshes/b.off"
//! gt = "gt/a_b.corr"
//! ```
//!
//! See the README for every key.

mod learn;
mod report;
mod run;
pub mod synth;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::geodesics::ErrorNormalization;
use crate::{Error, Result};

pub use report::{error_curve, error_curve_csv, ExperimentReport, PartialityReport, PartialityRow, ReportRow, REPORT_HEADER};
pub use learn::{run_learning, CorpusPairSpec, CorpusShapeSpec, LearnConfig, TrainOverrides};
pub use run::{pair_seed, run_experiment, run_partiality};

/// A single value or a list, so `k = 20` and `k = [10, 20]` both parse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// `C` from the ground truth, then nearest neighbors.
    #[default]
    OptimalC,
    /// `C` from descriptor preservation, then nearest neighbors.
    DescriptorC,
    /// An initial map refined by ZoomOut.
    ZoomoutRefine,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::OptimalC => "optimal_c",
            Pipeline::DescriptorC => "descriptor_c",
            Pipeline::ZoomoutRefine => "zoomout_refine",
        }
    }
}

impl std::str::FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimal_c" => Ok(Pipeline::OptimalC),
            "descriptor_c" => Ok(Pipeline::DescriptorC),
            "zoomout_refine" => Ok(Pipeline::ZoomoutRefine),
            other => Err(Error::Config(format!("unknown pipeline '{other}'"))),
        }
    }
}

/// Which basis each shape uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisSpec {
    /// LBO eigenbasis computed on the fly; one run per listed `k`.
    Lbo { k: OneOrMany<usize> },
    /// Stored bases `<dir>/<mesh stem>.fnbasis`, optionally truncated.
    Learned {
        dir: PathBuf,
        #[serde(default)]
        k: Option<OneOrMany<usize>>,
    },
    /// Learned columns `0..cut` followed by LBO eigenfunctions up to `k` columns.
    Hybrid { dir: PathBuf, cut: usize, k: usize },
}

impl BasisSpec {
    pub fn label(&self) -> &'static str {
        match self {
            BasisSpec::Lbo { .. } => "LBO",
            BasisSpec::Learned { .. } => "Learned",
            BasisSpec::Hybrid { .. } => "Hybrid",
        }
    }
}

/// Stored descriptors `<dir>/<mesh stem>.desc`; `d` selects leading columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptorSpec {
    pub dir: PathBuf,
    #[serde(default)]
    pub d: Option<OneOrMany<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoomOutSpec {
    pub start_k: usize,
    pub end_k: usize,
    pub step: usize,
    /// Pipeline producing the initial map at `start_k`.
    #[serde(default)]
    pub init: Pipeline,
    /// Basis sizes reported as rows; defaults to `end_k` only.
    #[serde(default)]
    pub checkpoints: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialitySpec {
    /// Vertex of the source mesh at the center of the removed ball.
    pub landmark: usize,
    /// Ball radii; 0 means the uncut shape.
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    #[serde(default)]
    pub id: Option<String>,
    pub source: PathBuf,
    pub target: PathBuf,
    pub gt: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Index base of ground-truth files (0 or 1).
    #[serde(default)]
    pub index_base: usize,
    #[serde(default)]
    pub error_normalization: ErrorNormalization,
    #[serde(default = "default_pipeline")]
    pub pipeline: OneOrMany<Pipeline>,
    pub basis: BasisSpec,
    #[serde(default)]
    pub descriptors: Option<DescriptorSpec>,
    #[serde(default)]
    pub zoomout: Option<ZoomOutSpec>,
    #[serde(default)]
    pub partiality: Option<PartialitySpec>,
    /// Record wall time per row. Off by default so reports are reproducible byte for byte.
    #[serde(default)]
    pub timing: bool,
    pub pairs: Vec<PairSpec>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_pipeline() -> OneOrMany<Pipeline> {
    OneOrMany::One(Pipeline::OptimalC)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        ExperimentConfig::from_toml(&text, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn pipelines(&self) -> Vec<Pipeline> {
        self.pipeline.to_vec()
    }

    /// Pair identifier: the explicit `id`, else `<source stem>-<target stem>`.
    pub fn pair_id(&self, i: usize) -> String {
        let p = &self.pairs[i];
        p.id.clone().unwrap_or_else(|| {
            let stem = |q: &Path| q.file_stem().and_then(|s| s.to_str()).unwrap_or("mesh").to_string();
            format!("{}-{}", stem(&p.source), stem(&p.target))
        })
    }

    /// Checks structural consistency and that every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::Config("no pairs configured".into()));
        }
        if self.index_base > 1 {
            return Err(Error::Config(format!("index_base must be 0 or 1, got {}", self.index_base)));
        }
        let pipelines = self.pipelines();
        if pipelines.is_empty() {
            return Err(Error::Config("no pipeline configured".into()));
        }
        let needs_desc = pipelines.contains(&Pipeline::DescriptorC)
            || (pipelines.contains(&Pipeline::ZoomoutRefine)
                && self.zoomout.as_ref().is_some_and(|z| z.init == Pipeline::DescriptorC));
        if needs_desc && self.descriptors.is_none() {
            return Err(Error::Config("descriptor pipeline needs a [descriptors] section".into()));
        }
        if pipelines.contains(&Pipeline::ZoomoutRefine) {
            let z = self
                .zoomout
                .as_ref()
                .ok_or_else(|| Error::Config("zoomout_refine needs a [zoomout] section".into()))?;
            if z.init == Pipeline::ZoomoutRefine {
                return Err(Error::Config("zoomout init must be optimal_c or descriptor_c".into()));
            }
            crate::zoomout::ZoomOutConfig {
                start_k: z.start_k,
                end_k: z.end_k,
                step: z.step,
                basis_source: Default::default(),
            }
            .validate()?;
        }
        match &self.basis {
            BasisSpec::Lbo { k } if k.to_vec().is_empty() || k.to_vec().contains(&0) => {
                return Err(Error::Config("LBO basis sizes must be positive".into()));
            }
            BasisSpec::Hybrid { cut, k, .. } if cut >= k => {
                return Err(Error::Config(format!("hybrid cut {cut} must be below k = {k}")));
            }
            _ => {}
        }
        if let Some(p) = &self.partiality {
            if p.radii.iter().any(|r| !(*r >= 0.0)) {
                return Err(Error::Config("partiality radii must be nonnegative".into()));
            }
        }
        let mut ids = BTreeSet::new();
        for i in 0..self.pairs.len() {
            let id = self.pair_id(i);
            if !ids.insert(id.clone()) {
                return Err(Error::Config(format!("duplicate pair id '{id}'")));
            }
            let p = &self.pairs[i];
            for f in [&p.source, &p.target, &p.gt] {
                let full = self.resolve(f);
                if !full.is_file() {
                    return Err(Error::Config(format!("pair '{id}': missing file {}", full.display())));
                }
            }
        }
        for dir in [
            match &self.basis {
                BasisSpec::Learned { dir, .. } | BasisSpec::Hybrid { dir, .. } => Some(dir),
                BasisSpec::Lbo { .. } => None,
            },
            self.descriptors.as_ref().map(|d| &d.dir),
        ]
        .into_iter()
        .flatten()
        {
            if !self.resolve(dir).is_dir() {
                return Err(Error::Config(format!("missing directory {}", self.resolve(dir).display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
seed = 7
index_base = 1
error_normalization = "none"
pipeline = ["optimal_c", "zoomout_refine"]
timing = false

[basis]
kind = "hybrid"
dir = "learned"
cut = 40
k = 60

[descriptors]
dir = "desc"
d = [20, 40]

[zoomout]
start_k = 40
end_k = 60
step = 5
checkpoints = [50, 60]

[partiality]
landmark = 3
radii = [0.0, 0.4, 0.8]

[[pairs]]
source = "a.off"
target = "b.off"
gt = "a_b.corr"

[[pairs]]
id = "second"
source = "/abs/c.off"
target = "b.off"
gt = "c_b.corr"
"#;

    #[test]
    fn parses_every_section() {
        let cfg = ExperimentConfig::from_toml(FULL, "/base").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.pipelines(), vec![Pipeline::OptimalC, Pipeline::ZoomoutRefine]);
        assert_eq!(cfg.basis, BasisSpec::Hybrid { dir: "learned".into(), cut: 40, k: 60 });
        assert_eq!(cfg.error_normalization, ErrorNormalization::None);
        assert_eq!(cfg.descriptors.as_ref().unwrap().d, Some(OneOrMany::Many(vec![20, 40])));
        assert_eq!(cfg.pair_id(0), "a-b");
        assert_eq!(cfg.pair_id(1), "second");
        assert_eq!(cfg.resolve(&cfg.pairs[0].source), PathBuf::from("/base/a.off"));
        assert_eq!(cfg.resolve(&cfg.pairs[1].source), PathBuf::from("/abs/c.off"));
        // files do not exist under /base
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn defaults_and_rejections() {
        let minimal = "[basis]\nkind = \"lbo\"\nk = 20\n[[pairs]]\nsource = \"a.off\"\ntarget = \"a.off\"\ngt = \"id.corr\"\n";
        let cfg = ExperimentConfig::from_toml(minimal, ".").unwrap();
        assert_eq!(cfg.pipelines(), vec![Pipeline::OptimalC]);
        assert_eq!(cfg.error_normalization, ErrorNormalization::SqrtArea);
        assert_eq!(cfg.index_base, 0);
        assert!(!cfg.timing);
        let typo = minimal.replace("seed", "sead").replace("[basis]", "sead = 1\n[basis]");
        assert!(ExperimentConfig::from_toml(&typo, ".").is_err());
        let no_desc = minimal.replace("[basis]", "pipeline = \"descriptor_c\"\n[basis]");
        let cfg = ExperimentConfig::from_toml(&no_desc, ".").unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("descriptors"));
    }
}
