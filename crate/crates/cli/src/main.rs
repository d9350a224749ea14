//! Command-line front end: bases, matching, ZoomOut, cuts, training and benchmarks.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use embmatch::fmap::{c_from_correspondence, c_from_descriptors, pointmap_from_c, Correspondence, DescriptorSet};
use embmatch::geodesics::{cut_geodesic_ball_with, geodesic_error, ErrorNormalization};
use embmatch::harness::{self, ExperimentConfig, LearnConfig};
use embmatch::mesh::{load_mesh_auto, Mesh};
use embmatch::spectral::{build_laplacian, eigenbasis_with, hybrid_basis, EigenOptions, EigenSolver, SpectralBasis};
use embmatch::zoomout::{zoomout, BasisSource, ZoomOutConfig};

#[derive(Parser)]
#[command(name = "embmatch", version, about = "Spectral and learned-basis shape matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Random seed (overrides the config file seed where one exists)
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for all outputs (created if missing)
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Compute and save an LBO eigenbasis
    Basis {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value_t = Solver::Auto)]
        solver: Solver,
        #[command(flatten)]
        common: Common,
    },
    /// Match one pair with a single pipeline
    Match {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long, value_enum, default_value_t = MatchPipeline::OptimalC)]
        pipeline: MatchPipeline,
        /// Basis size
        #[arg(long)]
        k: usize,
        /// Directory of stored `<stem>.desc` descriptors
        #[arg(long)]
        desc_dir: Option<PathBuf>,
        /// Number of leading descriptors to use (default all)
        #[arg(long)]
        d: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Refine a map with ZoomOut
    Zoomout {
        #[command(flatten)]
        pair: PairArgs,
        /// Initial correspondence file; defaults to the optimal map from --gt at start_k
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        start_k: usize,
        #[arg(long)]
        end_k: usize,
        #[arg(long, default_value_t = 1)]
        step: usize,
        /// Learned columns below start_k, LBO above (needs --basis-dir)
        #[arg(long)]
        hybrid: bool,
        /// Basis sizes to export (default every iteration)
        #[arg(long, value_delimiter = ',')]
        export_k: Option<Vec<usize>>,
        #[command(flatten)]
        common: Common,
    },
    /// Remove geodesic balls around a landmark
    Cut {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        landmark: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        radius: Vec<f64>,
        /// Keep every component instead of the largest
        #[arg(long)]
        keep_all_components: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Fit per-vertex embeddings on a training corpus
    LearnEmbedding {
        /// Corpus TOML file
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a full experiment from a TOML config
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Concurrent pairs (0 = all cores)
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Record wall time per row (breaks byte-identical reruns)
        #[arg(long)]
        timing: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Cumulative accuracy curve from per-vertex error files
    Curve {
        #[arg(long, required = true, num_args = 1..)]
        errors: Vec<PathBuf>,
        /// Largest threshold
        #[arg(long, default_value_t = 10.0)]
        max: f64,
        /// Number of threshold intervals
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic fixture dataset with exact ground truth
    Synth {
        #[arg(long, default_value_t = 3)]
        subdivisions: u32,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone)]
struct PairArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Ground-truth correspondence (one target index per source vertex)
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    index_base: usize,
    /// Directory of stored `<stem>.fnbasis` files; LBO is computed when absent
    #[arg(long)]
    basis_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Normalization::SqrtArea)]
    normalization: Normalization,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Auto,
    Dense,
    ShiftInvert,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchPipeline {
    OptimalC,
    DescriptorC,
}

#[derive(Clone, Copy, ValueEnum)]
enum Normalization {
    SqrtArea,
    None,
}

impl From<Normalization> for ErrorNormalization {
    fn from(n: Normalization) -> Self {
        match n {
            Normalization::SqrtArea => ErrorNormalization::SqrtArea,
            Normalization::None => ErrorNormalization::None,
        }
    }
}

fn prepare(common: &Common) -> Result<()> {
    fs::create_dir_all(&common.out_dir).with_context(|| format!("creating {}", common.out_dir.display()))
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn lbo(mesh: &Mesh, k: usize, seed: u64, solver: EigenSolver) -> Result<SpectralBasis> {
    let opts = EigenOptions { seed, solver, ..EigenOptions::default() };
    Ok(eigenbasis_with(&build_laplacian(mesh)?, k, &opts, mesh.name())?)
}

fn stored_basis(dir: &Path, mesh: &Mesh) -> Result<SpectralBasis> {
    let file = dir.join(format!("{}.fnbasis", mesh.name()));
    let b = SpectralBasis::load(&file, mesh.name()).with_context(|| format!("loading {}", file.display()))?;
    if b.n() != mesh.n_vertices() {
        bail!("{} has {} rows, mesh has {} vertices", file.display(), b.n(), mesh.n_vertices());
    }
    Ok(b)
}

/// A basis with at least `k` columns: stored if a directory is given, else LBO.
fn basis_for(args: &PairArgs, mesh: &Mesh, k: usize, seed: u64) -> Result<SpectralBasis> {
    match &args.basis_dir {
        Some(dir) => Ok(stored_basis(dir, mesh)?.truncated(k)?),
        None => lbo(mesh, k, seed, EigenSolver::Auto),
    }
}

struct LoadedPair {
    id: String,
    source: Mesh,
    target: Mesh,
    gt: Option<Correspondence>,
}

fn load_pair(args: &PairArgs) -> Result<LoadedPair> {
    let source = load_mesh_auto(&args.source).with_context(|| format!("loading {}", args.source.display()))?;
    let target = load_mesh_auto(&args.target).with_context(|| format!("loading {}", args.target.display()))?;
    let gt = match &args.gt {
        Some(p) => {
            let gt = Correspondence::load(p, args.index_base, Some(source.n_vertices()))
                .with_context(|| format!("loading {}", p.display()))?;
            gt.validate(target.n_vertices())?;
            Some(gt)
        }
        None => None,
    };
    let id = format!("{}-{}", source.name(), target.name());
    Ok(LoadedPair { id, source, target, gt })
}

fn per_vertex_text(errors: &[f64]) -> String {
    let mut s = String::with_capacity(errors.len() * 10);
    for e in errors {
        let _ = writeln!(s, "{e:.6}");
    }
    s
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Basis { mesh, k, solver, common } => {
            prepare(&common)?;
            let m = load_mesh_auto(&mesh).with_context(|| format!("loading {}", mesh.display()))?;
            let solver = match solver {
                Solver::Auto => EigenSolver::Auto,
                Solver::Dense => EigenSolver::Dense,
                Solver::ShiftInvert => EigenSolver::ShiftInvert,
            };
            let b = lbo(&m, k, common.seed.unwrap_or(0), solver)?;
            let out = common.out_dir.join(format!("{}.fnbasis", m.name()));
            b.save(&out)?;
            println!("wrote {} ({} x {})", out.display(), b.n(), b.k());
        }
        Command::Match { pair, pipeline, k, desc_dir, d, common } => {
            prepare(&common)?;
            let seed = common.seed.unwrap_or(0);
            let lp = load_pair(&pair)?;
            let bm = basis_for(&pair, &lp.source, k, seed)?;
            let bn = basis_for(&pair, &lp.target, k, seed)?;
            let c = match pipeline {
                MatchPipeline::OptimalC => {
                    let gt = lp.gt.as_ref().context("optimal_c needs --gt")?;
                    c_from_correspondence(&bm, &bn, gt)?
                }
                MatchPipeline::DescriptorC => {
                    let dir = desc_dir.as_ref().context("descriptor_c needs --desc-dir")?;
                    let load = |m: &Mesh| -> Result<DescriptorSet> {
                        let file = dir.join(format!("{}.desc", m.name()));
                        let full = DescriptorSet::load(&file, m.name()).with_context(|| format!("loading {}", file.display()))?;
                        let d = d.unwrap_or(full.d());
                        if d == 0 || d > full.d() {
                            bail!("--d {d} outside 1..={}", full.d());
                        }
                        Ok(DescriptorSet::new(full.values.columns(0, d).into_owned(), m.name())?)
                    };
                    c_from_descriptors(&bm, &bn, &load(&lp.source)?, &load(&lp.target)?)?
                }
            };
            let pred = pointmap_from_c(&c, &bm, &bn)?;
            c.save(common.out_dir.join(format!("{}.fnmap", lp.id)))?;
            pred.save(common.out_dir.join(format!("{}.corr", lp.id)))?;
            if let Some(gt) = &lp.gt {
                let e = geodesic_error(&pred, gt, &lp.target, pair.normalization.into())?;
                write(&common.out_dir.join(format!("{}.err", lp.id)), &per_vertex_text(&e.per_vertex))?;
                println!("{}: mean geodesic error {:.6}", lp.id, e.mean);
            }
        }
        Command::Zoomout { pair, init, start_k, end_k, step, hybrid, export_k, common } => {
            prepare(&common)?;
            let seed = common.seed.unwrap_or(0);
            let lp = load_pair(&pair)?;
            let (bm, bn, source) = if hybrid {
                let dir = pair.basis_dir.as_ref().context("--hybrid needs --basis-dir")?;
                let h = |m: &Mesh| -> Result<SpectralBasis> {
                    Ok(hybrid_basis(&stored_basis(dir, m)?, &lbo(m, end_k, seed, EigenSolver::Auto)?, start_k)?)
                };
                (h(&lp.source)?, h(&lp.target)?, BasisSource::HybridLearnedThenLbo)
            } else {
                (
                    basis_for(&pair, &lp.source, end_k, seed)?,
                    basis_for(&pair, &lp.target, end_k, seed)?,
                    BasisSource::Lbo,
                )
            };
            let pi0 = match &init {
                Some(p) => {
                    let pi = Correspondence::load(p, pair.index_base, Some(lp.source.n_vertices()))?;
                    pi.validate(lp.target.n_vertices())?;
                    pi
                }
                None => {
                    let gt = lp.gt.as_ref().context("zoomout needs --init or --gt")?;
                    let (m, n) = (bm.truncated(start_k)?, bn.truncated(start_k)?);
                    pointmap_from_c(&c_from_correspondence(&m, &n, gt)?, &m, &n)?
                }
            };
            let cfg = ZoomOutConfig { start_k, end_k, step, basis_source: source };
            let trace = zoomout(&pi0, &bm, &bn, &cfg)?;
            trace.export(&common.out_dir, &lp.id, export_k.as_deref())?;
            if let Some(gt) = &lp.gt {
                let mut csv = String::from("k,mean_err\n");
                let e0 = geodesic_error(&pi0, gt, &lp.target, pair.normalization.into())?;
                let _ = writeln!(csv, "init,{:.6}", e0.mean);
                for s in &trace.steps {
                    let e = geodesic_error(&s.correspondence, gt, &lp.target, pair.normalization.into())?;
                    let _ = writeln!(csv, "{},{:.6}", s.k, e.mean);
                }
                write(&common.out_dir.join(format!("{}_zoomout.csv", lp.id)), &csv)?;
            }
            println!("{}: {} zoomout iterations", lp.id, trace.steps.len());
        }
        Command::Cut { mesh, landmark, radius, keep_all_components, common } => {
            prepare(&common)?;
            let m = load_mesh_auto(&mesh).with_context(|| format!("loading {}", mesh.display()))?;
            let mut csv = String::from("radius,survivors,status\n");
            let mut failed = false;
            for r in radius {
                match cut_geodesic_ball_with(&m, landmark, r, keep_all_components) {
                    Ok(cut) => {
                        cut.save(&common.out_dir, &format!("{}_r{r}", m.name()))?;
                        let _ = writeln!(csv, "{r:.6},{},ok", cut.partial.n_vertices());
                    }
                    Err(e @ embmatch::Error::EmptyResult) => {
                        failed = true;
                        let _ = writeln!(csv, "{r:.6},0,{}", e.kind());
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            write(&common.out_dir.join(format!("{}_cuts.csv", m.name())), &csv)?;
            if failed {
                return Ok(ExitCode::from(2));
            }
        }
        Command::LearnEmbedding { config, common } => {
            prepare(&common)?;
            let mut cfg = LearnConfig::load(&config)?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            let (set, report, tcfg) = harness::run_learning(&cfg)?;
            report.save(&common.out_dir, &set, &tcfg)?;
            let last = report.curve.last().map(|p| p.loss).unwrap_or(f64::NAN);
            println!("trained {} steps, final loss {last:.6}", report.curve.len());
            if report.non_monotone_accuracy {
                println!("note: training accuracy was not monotone across checkpoints");
            }
        }
        Command::Eval { config, jobs, timing, common } => {
            prepare(&common)?;
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            cfg.timing |= timing;
            let report = harness::run_experiment(&cfg, jobs)?;
            write(&common.out_dir.join("report.csv"), &report.csv())?;
            write(&common.out_dir.join("errors.txt"), &per_vertex_text(&report.pooled_errors()))?;
            let mut failures = report.failures();
            if let Some(p) = &cfg.partiality {
                let part = harness::run_partiality(&cfg, p.landmark, &p.radii, jobs)?;
                write(&common.out_dir.join("partiality.csv"), &part.csv())?;
                write(&common.out_dir.join("partiality_table.csv"), &part.table_csv())?;
                failures += part.failures();
            }
            println!("{} rows, {failures} failed", report.rows.len());
            if failures > 0 {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Curve { errors, max, steps, common } => {
            prepare(&common)?;
            if steps == 0 || !(max > 0.0) {
                bail!("--steps must be positive and --max > 0");
            }
            let mut all = Vec::new();
            for p in &errors {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                    let v: f64 = line.trim().parse().with_context(|| format!("{}:{}: not a number", p.display(), i + 1))?;
                    all.push(v);
                }
            }
            let thresholds: Vec<f64> = (0..=steps).map(|i| max * i as f64 / steps as f64).collect();
            write(&common.out_dir.join("curve.csv"), &harness::error_curve_csv(&all, &thresholds))?;
        }
        Command::Synth { subdivisions, common } => {
            prepare(&common)?;
            harness::synth::write_fixture_dataset(&common.out_dir, subdivisions, common.seed.unwrap_or(0))?;
            println!("wrote fixtures to {}", common.out_dir.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
