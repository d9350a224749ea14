use embmatch::embed_opt::{
    cosine_warm_restart, frozen_objective, init_embeddings, pair_gradient, pair_objective, step_gradient,
    training_coordinates, train, Corpus, InitStrategy, ObjectiveWeights, TrainConfig,
};
use embmatch::fmap::{loss_alignment, Correspondence};
use embmatch::harness::synth::reorder_vertices;
use embmatch::mesh::primitives::{grid, icosphere};
use embmatch::mesh::Mesh;
use embmatch::spectral::{BasisKind, SpectralBasis};
use nalgebra::{DMatrix, Point3, Rotation3};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Two 20-vertex bent grids with a scrambled ground truth.
fn grid_corpus(seed: u64) -> Corpus {
    let a = grid(4, 3).with_name("a");
    let b = a
        .map_vertices(|p| Point3::new(p.x * 1.3, p.y, 0.2 * p.x * p.y))
        .unwrap()
        .with_name("b");
    let mut perm: Vec<usize> = (0..20).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut corpus = Corpus::new(vec![a, b]).unwrap();
    corpus.add_pair("a", "b", Correspondence::new(perm)).unwrap();
    corpus.compute_lbo(6).unwrap();
    corpus
}

/// A unit icosphere and a rotated, vertex-shuffled copy with exact ground truth.
fn isometric_spheres(subdivisions: u32) -> Corpus {
    let a = icosphere(subdivisions, 1.0).with_name("a");
    let rot = Rotation3::from_euler_angles(0.3, 0.5, 0.1);
    let b = a.map_vertices(|p| Point3::from(rot * p.coords)).unwrap();
    let mut order: Vec<usize> = (0..b.n_vertices()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let (b, old_to_new) = reorder_vertices(&b, &order).unwrap();
    let mut corpus = Corpus::new(vec![a, b.with_name("b")]).unwrap();
    corpus.add_pair("a", "b", Correspondence::new(old_to_new)).unwrap();
    corpus
}

/// Largest `|finite difference - analytic|` over all entries, relative to the
/// largest analytic gradient component.
fn gradient_error(corpus: &Corpus, weights: ObjectiveWeights, seed: u64) -> f64 {
    let set = init_embeddings(corpus.clone(), 3, InitStrategy::RandomGaussian, seed).unwrap();
    let cfg = TrainConfig { weights, temperature: 0.5, ..TrainConfig::desk() };
    let g = pair_gradient(&set, 0, &cfg).unwrap();
    let c = g.frozen_c.as_ref();
    let (m0, n0) = (set.embedding(0).clone(), set.embedding(1).clone());
    let scale = g.grad_source.amax().max(g.grad_target.amax());
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for side in 0..2 {
        let base = if side == 0 { &m0 } else { &n0 };
        for idx in 0..base.len() {
            let (mut p, mut q) = (base.clone(), base.clone());
            p[idx] += h;
            q[idx] -= h;
            let f = |x: &DMatrix<f64>| {
                if side == 0 {
                    frozen_objective(&set, 0, &cfg, c, x, &n0).unwrap()
                } else {
                    frozen_objective(&set, 0, &cfg, c, &m0, x).unwrap()
                }
            };
            let fd = (f(&p) - f(&q)) / (2.0 * h);
            let an = if side == 0 { g.grad_source[idx] } else { g.grad_target[idx] };
            worst = worst.max((fd - an).abs() / scale);
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    let only = |f: fn(&mut ObjectiveWeights)| {
        let mut w = ObjectiveWeights { alignment: 0.0, coord: 0.0, l1: 0.0, smooth: 0.0 };
        f(&mut w);
        w
    };
    let cases = [
        ("alignment", only(|w| w.alignment = 1.0)),
        ("coord", only(|w| w.coord = 1.0)),
        ("l1", only(|w| w.l1 = 1.0)),
        ("smooth", only(|w| w.smooth = 1.0)),
        ("mixed", ObjectiveWeights { alignment: 0.7, coord: 0.3, l1: 0.1, smooth: 2.0 }),
    ];
    for seed in 0..4 {
        let corpus = grid_corpus(seed);
        for (name, w) in cases {
            let err = gradient_error(&corpus, w, seed + 10);
            assert!(err < 1e-5, "{name} (seed {seed}): {err:e}");
        }
    }
}

#[test]
fn zero_learning_rate_keeps_embeddings() {
    let mut set = init_embeddings(grid_corpus(0), 3, InitStrategy::RandomGaussian, 1).unwrap();
    let before = set.embeddings().to_vec();
    let cfg = TrainConfig { learning_rate: 0.0, ..TrainConfig::desk() };
    let loss = step_gradient(&mut set, 0, &cfg).unwrap();
    assert_eq!(set.embeddings(), before.as_slice());
    assert_eq!(loss, pair_objective(&set, 0, &cfg).unwrap());
}

#[test]
fn l1_gradient_is_weight_on_positive_entries() {
    let mut set = init_embeddings(grid_corpus(0), 3, InitStrategy::RandomGaussian, 1).unwrap();
    for s in 0..2 {
        let abs = set.embedding(s).abs();
        set.set_embedding(s, abs).unwrap();
    }
    let w = ObjectiveWeights { alignment: 0.0, coord: 0.0, l1: 0.25, smooth: 0.0 };
    let g = pair_gradient(&set, 0, &TrainConfig { weights: w, ..TrainConfig::desk() }).unwrap();
    assert!(g.grad_source.iter().chain(g.grad_target.iter()).all(|&v| v == 0.25));
}

#[test]
fn non_finite_embeddings_abort_with_diagnostics() {
    let mut set = init_embeddings(grid_corpus(0), 3, InitStrategy::RandomGaussian, 1).unwrap();
    let mut bad = set.embedding(0).clone();
    bad[(2, 1)] = f64::NAN;
    set.set_embedding(0, bad).unwrap();
    let w = ObjectiveWeights { alignment: 0.0, coord: 0.0, l1: 1.0, smooth: 0.0 };
    let err = pair_gradient(&set, 0, &TrainConfig { weights: w, ..TrainConfig::desk() }).unwrap_err();
    assert_eq!(err.kind(), "NonFiniteGradient");
    let msg = err.to_string();
    assert!(msg.contains("a -> b") && msg.contains("temperature"), "{msg}");
}

#[test]
fn random_init_is_reproducible() {
    let corpus = grid_corpus(0);
    let a = init_embeddings(corpus.clone(), 3, InitStrategy::RandomGaussian, 7).unwrap();
    let b = init_embeddings(corpus.clone(), 3, InitStrategy::RandomGaussian, 7).unwrap();
    let c = init_embeddings(corpus.clone(), 3, InitStrategy::RandomGaussian, 8).unwrap();
    assert_eq!(a.embeddings(), b.embeddings());
    assert_ne!(a.embeddings(), c.embeddings());
    assert_eq!(init_embeddings(corpus, 21, InitStrategy::RandomGaussian, 7).unwrap_err().kind(), "DimensionError");
}

#[test]
fn lbo_seed_self_pair_is_aligned() {
    let mesh = icosphere(2, 1.0).map_vertices(|p| Point3::new(1.3 * p.x, p.y, 0.8 * p.z)).unwrap().with_name("s");
    let n = mesh.n_vertices();
    let mut corpus = Corpus::new(vec![mesh]).unwrap();
    corpus.add_pair("s", "s", Correspondence::identity(n)).unwrap();
    let set = init_embeddings(corpus, 8, InitStrategy::LboSeed, 0).unwrap();
    let x = training_coordinates(&set.corpus().shapes()[0], true);
    let phi = set.embedding(0);
    let loss = loss_alignment(phi, phi, &Correspondence::identity(n), &x, 1e-4).unwrap();
    assert!(loss < 1e-6, "{loss}");
}

#[test]
fn training_is_deterministic() {
    let cfg = TrainConfig { epochs: 30, restart_period: 10, learning_rate: 0.5, seed: 4, ..TrainConfig::desk() };
    let run = |cfg: &TrainConfig| {
        let set = init_embeddings(grid_corpus(2), 3, InitStrategy::RandomGaussian, 3).unwrap();
        train(set, cfg).unwrap()
    };
    let ((s1, r1), (s2, r2)) = (run(&cfg), run(&cfg));
    assert_eq!(r1.curve_csv(), r2.curve_csv());
    assert_eq!(s1.embeddings(), s2.embeddings());
    assert_eq!(r1.curve.len(), 30);
    let flagged: Vec<usize> = r1.curve.iter().filter(|p| p.restart).map(|p| p.step).collect();
    assert_eq!(flagged, vec![10, 20]);
    // the starting point plus ten evenly spaced checkpoints
    let steps: Vec<usize> = r1.accuracy.iter().map(|a| a.step).collect();
    assert_eq!(steps, vec![0, 3, 6, 9, 12, 15, 18, 21, 24, 27, 30]);
}

#[test]
fn zero_epochs_leave_the_set_alone() {
    let set = init_embeddings(grid_corpus(0), 3, InitStrategy::RandomGaussian, 1).unwrap();
    let before = set.embeddings().to_vec();
    let (after, report) = train(set, &TrainConfig { epochs: 0, ..TrainConfig::desk() }).unwrap();
    assert_eq!(after.embeddings(), before.as_slice());
    assert!(report.curve.is_empty());
}

#[test]
fn coordinates_are_representable_with_square_embeddings() {
    let mesh: Mesh = icosphere(1, 1.0).with_name("s");
    let n = mesh.n_vertices();
    let mut corpus = Corpus::new(vec![mesh]).unwrap();
    corpus.add_pair("s", "s", Correspondence::identity(n)).unwrap();
    let set = init_embeddings(corpus, n, InitStrategy::RandomGaussian, 2).unwrap();
    let w = ObjectiveWeights { alignment: 0.0, coord: 1.0, l1: 0.0, smooth: 0.0 };
    let cfg = TrainConfig { weights: w, epochs: 5, ..TrainConfig::desk() };
    let (set, report) = train(set, &cfg).unwrap();
    assert!(report.curve.last().unwrap().loss < 1e-8);
    assert!(pair_objective(&set, 0, &cfg).unwrap() < 1e-8);
}

#[test]
fn checkpoint_round_trips_as_learned_bases() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig { epochs: 3, ..TrainConfig::desk() };
    let set = init_embeddings(grid_corpus(0), 3, InitStrategy::RandomGaussian, 1).unwrap();
    let (set, report) = train(set, &cfg).unwrap();
    report.save(dir.path(), &set, &cfg).unwrap();
    let b = SpectralBasis::load(dir.path().join("a.fnbasis"), "a").unwrap();
    assert_eq!(b.kind(), BasisKind::Learned);
    assert_eq!(b.functions(), set.embedding(0));
    let curve = std::fs::read_to_string(dir.path().join("loss_curve.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("step,loss,lr,restart_flag"));
    assert_eq!(curve.lines().count(), 4);
    let saved = std::fs::read_to_string(dir.path().join("train_config.toml")).unwrap();
    assert!(saved.contains("center_unit_area = true"), "{saved}");
}

/// Convergence smoke test. The desk defaults barely move this objective in
/// 500 steps, so a larger step and sharper softmax are used.
#[test]
fn isometric_spheres_converge() {
    let corpus = isometric_spheres(3);
    let w = ObjectiveWeights { alignment: 1.0, coord: 0.0, l1: 0.0, smooth: 0.0 };
    let cfg = TrainConfig { weights: w, learning_rate: 3.0, temperature: 0.3, epochs: 500, seed: 0, ..TrainConfig::desk() };
    let set = init_embeddings(corpus, 8, InitStrategy::RandomGaussian, 0).unwrap();
    let initial = pair_objective(&set, 0, &cfg).unwrap();
    let (set, report) = train(set, &cfg).unwrap();
    assert_eq!(report.curve.len(), 500);
    let last = pair_objective(&set, 0, &cfg).unwrap();
    assert!(last < 0.1 * initial, "{initial} -> {last}");
}

proptest! {
    #[test]
    fn schedule_stays_in_range(base in 1e-6f64..10.0, step in 0usize..10_000, period in 1usize..500) {
        let lr = cosine_warm_restart(base, step, period);
        prop_assert!(lr >= 0.0 && lr <= base);
        if step % period == 0 {
            prop_assert_eq!(lr, base);
        }
        prop_assert_eq!(lr, cosine_warm_restart(base, step + period, period));
    }
}
