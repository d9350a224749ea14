use std::path::Path;

use embmatch::fmap::{c_from_correspondence, c_from_descriptors, Correspondence, DescriptorSet};
use embmatch::harness::synth::write_fixture_dataset;
use embmatch::harness::{error_curve, error_curve_csv, pair_seed, run_experiment, run_partiality, ExperimentConfig, REPORT_HEADER};
use embmatch::mesh::load_mesh_auto;
use embmatch::spectral::{build_laplacian, eigenbasis};
use proptest::prelude::*;

fn dataset() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_fixture_dataset(dir.path(), 2, 0).unwrap();
    dir
}

fn config(dir: &Path, body: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(body, dir).unwrap()
}

#[test]
fn fixture_experiment_has_full_grid() {
    let dir = dataset();
    let cfg = ExperimentConfig::load(dir.path().join("experiment.toml")).unwrap();
    let report = run_experiment(&cfg, 1).unwrap();
    // per pair: 3 optimal rows, 3 x 2 descriptor rows, init + 2 zoomout checkpoints
    assert_eq!(report.rows.len(), 3 * (3 + 6 + 3));
    assert_eq!(report.failures(), 0);
    let csv = report.csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(REPORT_HEADER));
    let ids: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert!(ids.windows(2).all(|w| w[0] <= w[1]), "rows sorted by pair id");
    for row in &report.rows {
        let e = row.outcome.clone().unwrap();
        assert!(e.is_finite() && e >= 0.0);
        if row.pair == "body-body_moved" && row.pipeline.name() == "optimal_c" {
            assert!(e < 1e-9, "exact isometry should match perfectly: {e}");
        }
    }
    assert!(csv.contains("sphere0-sphere1,zoomout_refine,LBO,30,,zo30,"));
}

#[test]
fn self_pair_has_zero_error() {
    let dir = dataset();
    let ids: String = (0..162).map(|i| format!("{i}\n")).collect();
    std::fs::write(dir.path().join("gt/id.corr"), ids).unwrap();
    let cfg = config(
        dir.path(),
        "pipeline = \"optimal_c\"\n[basis]\nkind = \"lbo\"\nk = 20\n\
         [[pairs]]\nsource = \"meshes/sphere2.off\"\ntarget = \"meshes/sphere2.off\"\ngt = \"gt/id.corr\"\n",
    );
    let report = run_experiment(&cfg, 1).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.rows[0].outcome, Ok(0.0));
    assert_eq!(report.rows[0].pair, "sphere2-sphere2");
}

#[test]
fn reruns_are_byte_identical_at_any_job_count() {
    let dir = dataset();
    let cfg = ExperimentConfig::load(dir.path().join("experiment.toml")).unwrap();
    let a = run_experiment(&cfg, 1).unwrap().csv();
    let b = run_experiment(&cfg, 1).unwrap().csv();
    let c = run_experiment(&cfg, 3).unwrap().csv();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn failing_pairs_become_error_rows() {
    let dir = dataset();
    // a ground truth with too few entries
    std::fs::write(dir.path().join("gt/short.corr"), "0\n1\n2\n").unwrap();
    let cfg = config(
        dir.path(),
        "pipeline = \"optimal_c\"\n[basis]\nkind = \"lbo\"\nk = 5\n\
         [[pairs]]\nsource = \"meshes/sphere0.off\"\ntarget = \"meshes/sphere1.off\"\ngt = \"gt/sphere0_sphere1.corr\"\n\
         [[pairs]]\nid = \"broken\"\nsource = \"meshes/sphere0.off\"\ntarget = \"meshes/body.off\"\ngt = \"gt/short.corr\"\n",
    );
    let report = run_experiment(&cfg, 1).unwrap();
    assert_eq!(report.failures(), 1);
    assert_eq!(report.exit_code(), 2);
    let broken = report.rows.iter().find(|r| r.pair == "broken").unwrap();
    assert_eq!(broken.checkpoint, "error");
    let line = report.csv().lines().find(|l| l.starts_with("broken")).unwrap().to_string();
    // the pair fails while loading, before any basis size is tried
    assert_eq!(line, "broken,optimal_c,LBO,,,error,DimensionError,0");
    assert!(report.rows.iter().any(|r| r.pair == "sphere0-sphere1" && r.outcome.is_ok()));
}

#[test]
fn invalid_configs_are_rejected_up_front() {
    let dir = dataset();
    let base = "pipeline = \"descriptor_c\"\n[basis]\nkind = \"lbo\"\nk = 5\n\
                [[pairs]]\nsource = \"meshes/sphere0.off\"\ntarget = \"meshes/sphere1.off\"\ngt = \"gt/sphere0_sphere1.corr\"\n";
    let cfg = config(dir.path(), base);
    assert_eq!(cfg.validate().unwrap_err().kind(), "ConfigError");
    let missing = base.replace("descriptor_c", "optimal_c").replace("sphere1.off", "nope.off");
    assert!(config(dir.path(), &missing).validate().is_err());
    assert!(ExperimentConfig::from_toml("pairs = []\nbogus = 1\n", dir.path()).is_err());
}

#[test]
fn optimal_map_has_the_smallest_alignment_residual() {
    let dir = dataset();
    let root = dir.path();
    for (s, t) in [("sphere0", "sphere1"), ("sphere0", "sphere2"), ("body", "body_moved")] {
        let m = load_mesh_auto(root.join(format!("meshes/{s}.off"))).unwrap();
        let n = load_mesh_auto(root.join(format!("meshes/{t}.off"))).unwrap();
        let gt = Correspondence::load(root.join(format!("gt/{s}_{t}.corr")), 0, Some(m.n_vertices())).unwrap();
        let dm = DescriptorSet::load(root.join(format!("desc/{s}.desc")), s).unwrap();
        let dn = DescriptorSet::load(root.join(format!("desc/{t}.desc")), t).unwrap();
        for k in [5, 10, 20] {
            let bm = eigenbasis(&build_laplacian(&m).unwrap(), k).unwrap();
            let bn = eigenbasis(&build_laplacian(&n).unwrap(), k).unwrap();
            let target = nalgebra::DMatrix::from_fn(m.n_vertices(), k, |i, j| bn.functions()[(gt.targets()[i], j)]);
            let residual = |c: &nalgebra::DMatrix<f64>| (bm.functions() * c - &target).norm();
            let opt = residual(c_from_correspondence(&bm, &bn, &gt).unwrap().matrix());
            let desc = residual(c_from_descriptors(&bm, &bn, &dm, &dn).unwrap().matrix());
            assert!(opt <= desc + 1e-12, "{s}-{t} k={k}: {opt} > {desc}");
        }
    }
}

#[test]
fn partiality_report_is_nested_and_complete() {
    let dir = dataset();
    let cfg = ExperimentConfig::load(dir.path().join("partiality.toml")).unwrap();
    let p = cfg.partiality.clone().unwrap();
    let report = run_partiality(&cfg, p.landmark, &p.radii, 1).unwrap();
    assert_eq!(report.failures(), 0);
    let survivors = |pipeline: &str| -> Vec<usize> {
        report.rows.iter().filter(|r| r.row.pipeline.name() == pipeline).map(|r| r.survivors.unwrap()).collect()
    };
    let s = survivors("descriptor_c");
    assert_eq!(s.len(), 3);
    assert!(s.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(s[0], 162);
    let table = report.table_csv();
    assert!(table.starts_with("radius,pipeline,basis,k,d,checkpoint,pairs,failed,mean_survivors,mean_err\n"));
    assert_eq!(table.lines().count(), 1 + 3 * 2);

    // radius 0 reproduces the plain experiment
    let plain = run_experiment(&cfg, 1).unwrap();
    for row in report.rows.iter().filter(|r| r.radius == 0.0) {
        let same = plain.rows.iter().find(|q| q.pipeline == row.row.pipeline).unwrap();
        assert_eq!(same.outcome, row.row.outcome);
    }
}

#[test]
fn oversized_radius_is_an_error_row() {
    let dir = dataset();
    let cfg = ExperimentConfig::load(dir.path().join("partiality.toml")).unwrap();
    let report = run_partiality(&cfg, cfg.partiality.as_ref().unwrap().landmark, &[0.4, 100.0], 1).unwrap();
    let big: Vec<_> = report.rows.iter().filter(|r| r.radius == 100.0).collect();
    assert!(!big.is_empty());
    assert!(big.iter().all(|r| r.row.outcome == Err("EmptyResult".into())));
    assert_eq!(report.exit_code(), 2);
}

#[test]
fn pair_seeds_mix_the_id() {
    assert_ne!(pair_seed(0, "a-b"), pair_seed(0, "a-c"));
    assert_eq!(pair_seed(5, "a-b"), pair_seed(5, "a-b"));
    assert_eq!(pair_seed(5, "a-b") ^ pair_seed(0, "a-b"), 5);
}

#[test]
fn curve_examples() {
    assert_eq!(error_curve(&[0.1, 0.3], &[0.0, 0.2, 0.4]), vec![0.0, 0.5, 1.0]);
    assert!(error_curve(&[0.0; 7], &[0.0, 1.0, 5.0]).iter().all(|&a| a == 1.0));
    assert_eq!(error_curve_csv(&[0.1, 0.3], &[0.2]), "threshold,accuracy\n0.200000,0.500000\n");
}

proptest! {
    #[test]
    fn curve_matches_counting(errors in prop::collection::vec(0.0f64..10.0, 1..200), mut t in prop::collection::vec(0.0f64..12.0, 1..20)) {
        t.sort_by(f64::total_cmp);
        let curve = error_curve(&errors, &t);
        for (i, &th) in t.iter().enumerate() {
            let count = errors.iter().filter(|&&e| e <= th).count();
            prop_assert_eq!(curve[i], count as f64 / errors.len() as f64);
        }
        prop_assert!(curve.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn corpus_config_trains_every_shape() {
    let dir = dataset();
    let mut cfg = embmatch::harness::LearnConfig::load(dir.path().join("corpus.toml")).unwrap();
    cfg.train.epochs = Some(2);
    let (set, report, tcfg) = embmatch::harness::run_learning(&cfg).unwrap();
    assert_eq!(set.embeddings().len(), 4);
    assert_eq!(set.k(), 8);
    assert_eq!(report.curve.len(), 2 * 5);
    assert_eq!((tcfg.learning_rate, tcfg.temperature), (2.0, 0.3));
}
