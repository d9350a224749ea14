//! Training loop with a cosine-annealing warm-restart schedule.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{step_with_rate, EmbeddingSet, TrainConfig};
use crate::fmap::{c_from_correspondence, pointmap_from_c};
use crate::spectral::fmt_f64;
use crate::{Error, Result};

/// Learning rate at `step`: cosine decay from `base` to zero over each period,
/// jumping back to `base` at every multiple of `period`.
pub fn cosine_warm_restart(base: f64, step: usize, period: usize) -> f64 {
    let t = (step % period) as f64 / period as f64;
    0.5 * base * (1.0 + (PI * t).cos())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    /// Objective after the update.
    pub loss: f64,
    pub lr: f64,
    /// The schedule restarted at this step.
    pub restart: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyCheckpoint {
    /// Number of steps completed.
    pub step: usize,
    /// Mean fraction of exactly recovered ground-truth matches over training pairs.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub curve: Vec<CurvePoint>,
    pub accuracy: Vec<AccuracyCheckpoint>,
    /// Set when accuracy dropped between consecutive checkpoints. Reported,
    /// not treated as an error.
    pub non_monotone_accuracy: bool,
}

impl TrainReport {
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("step,loss,lr,restart_flag\n");
        for p in &self.curve {
            let _ = writeln!(s, "{},{},{},{}", p.step, fmt_f64(p.loss), fmt_f64(p.lr), u8::from(p.restart));
        }
        s
    }

    pub fn accuracy_csv(&self) -> String {
        let mut s = String::from("step,accuracy\n");
        for a in &self.accuracy {
            let _ = writeln!(s, "{},{:.6}", a.step, a.accuracy);
        }
        s
    }

    /// Writes the learned bases, `loss_curve.csv`, `accuracy.csv` and the
    /// config used (`train_config.toml`) under `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, set: &EmbeddingSet, cfg: &TrainConfig) -> Result<()> {
        let dir = dir.as_ref();
        set.save_checkpoint(dir)?;
        let write = |name: &str, body: String| {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(path, e))
        };
        write("loss_curve.csv", self.curve_csv())?;
        write("accuracy.csv", self.accuracy_csv())?;
        let toml = toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?;
        write("train_config.toml", toml)
    }
}

/// Mean point-map accuracy over all corpus pairs using `C` from the ground truth.
pub fn training_accuracy(set: &EmbeddingSet) -> Result<f64> {
    let pairs = set.corpus().pairs();
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for p in pairs {
        let (m, n) = (set.embedding(p.source), set.embedding(p.target));
        let c = c_from_correspondence(m, n, &p.gt)?;
        total += pointmap_from_c(&c, m, n)?.accuracy(&p.gt);
    }
    Ok(total / pairs.len() as f64)
}

/// Runs `cfg.epochs` passes over the corpus pairs, one update per pair, in
/// an order reshuffled each epoch from `cfg.seed`.
pub fn train(mut set: EmbeddingSet, cfg: &TrainConfig) -> Result<(EmbeddingSet, TrainReport)> {
    cfg.validate()?;
    let n_pairs = set.corpus().pairs().len();
    let total = cfg.epochs * n_pairs;
    let mut report = TrainReport::default();
    if total == 0 {
        return Ok((set, report));
    }
    let track = cfg.weights.alignment > 0.0;
    let checkpoints: Vec<usize> = (0..=10).map(|i| (total * i) / 10).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n_pairs).collect();
    let mut step = 0;
    if track {
        report.accuracy.push(AccuracyCheckpoint { step: 0, accuracy: training_accuracy(&set)? });
    }
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &pair in &order {
            let lr = cosine_warm_restart(cfg.learning_rate, step, cfg.restart_period);
            let loss = step_with_rate(&mut set, pair, cfg, lr)?;
            report.curve.push(CurvePoint {
                step,
                loss,
                lr,
                restart: step > 0 && step % cfg.restart_period == 0,
            });
            step += 1;
            if track && checkpoints[1..].contains(&step) && report.accuracy.last().map(|a| a.step) != Some(step) {
                report.accuracy.push(AccuracyCheckpoint { step, accuracy: training_accuracy(&set)? });
            }
        }
    }
    report.non_monotone_accuracy = report.accuracy.windows(2).any(|w| w[1].accuracy < w[0].accuracy);
    if report.non_monotone_accuracy {
        log::warn!("training accuracy was not monotone across checkpoints");
    }
    Ok((set, report))
}
