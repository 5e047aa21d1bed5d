use std::fs;

use noisefield_core::crowd::Scale;
use noisefield_harness::aggregate::load_records;
use noisefield_harness::config::{Direction, ExperimentConfig, Preset};
use noisefield_harness::runner::{run_batch, specs};

fn small(direction: Direction, methods: &[&str], out: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        direction,
        methods: methods.iter().map(|m| m.to_string()).collect(),
        scale: Scale::Small,
        seed_count: Some(3),
        output: Some(out.to_path_buf()),
        parallelism: 1,
        ..Default::default()
    }
}

#[test]
fn two_methods_three_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Direction::Spawn, &["perlin_a", "uniform"], dir.path());
    let batch = run_batch(&cfg).unwrap();
    assert_eq!(batch.records.len(), 6);
    assert_eq!(batch.failures(), 0);
    for m in ["perlin_a", "uniform"] {
        for s in 0..3 {
            let run = dir.path().join("default").join(m).join("small").join(format!("seed_{s}"));
            assert!(run.join("run.json").exists(), "{}", run.display());
        }
    }
    let agg = fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    let row = agg.lines().find(|l| l.contains(",perlin_a,small,violations,")).unwrap();
    assert!(row.ends_with(",3,0"), "{row}");
    let echo = fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert!(echo.contains(&batch.config_hash));
    assert_eq!(ExperimentConfig::from_toml(&echo).unwrap().hash(), cfg.hash());
}

#[test]
fn rerun_gives_identical_aggregate() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_batch(&small(Direction::Action, &["perlin", "poisson"], a.path())).unwrap();
    run_batch(&small(Direction::Action, &["perlin", "poisson"], b.path())).unwrap();
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("aggregate.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn aggregate_from_disk_matches_batch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Direction::Crowd, &["perlin_dual"], dir.path());
    let batch = run_batch(&cfg).unwrap();
    let before = fs::read(dir.path().join("aggregate.csv")).unwrap();
    let records = load_records(dir.path()).unwrap();
    assert_eq!(records.len(), 3);
    assert_eq!(records.iter().map(|r| &r.metrics).collect::<Vec<_>>(), batch.records.iter().map(|r| &r.metrics).collect::<Vec<_>>());
    noisefield_harness::aggregate::write_tables(dir.path(), &records).unwrap();
    assert_eq!(fs::read(dir.path().join("aggregate.csv")).unwrap(), before);
}

#[test]
fn bad_method_is_recorded_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(Direction::Spawn, &["perlin_a", "nonesuch"], dir.path());
    cfg.seed_count = Some(1);
    let batch = run_batch(&cfg).unwrap();
    assert_eq!(batch.failures(), 1);
    assert!(fs::read_to_string(dir.path().join("failures.txt")).unwrap().contains("nonesuch"));
}

#[test]
fn presets_expand_to_grids() {
    let mut cfg = ExperimentConfig::default();
    Preset::Hyper.apply(&mut cfg);
    cfg.seed_count = Some(2);
    cfg.methods = vec!["perlin".into()];
    assert_eq!(specs(&cfg).unwrap().len(), 36 * 2);
    let mut cfg = ExperimentConfig::default();
    Preset::PerlinScale.apply(&mut cfg);
    cfg.seed_count = Some(1);
    let s = specs(&cfg).unwrap();
    assert_eq!(s.len(), 3);
    assert!(s.iter().all(|r| r.overrides.iter().any(|(k, _)| k == "policy.v_drift")));
}

#[test]
fn worldgen_defaults_to_template_seeds() {
    let cfg = ExperimentConfig { direction: Direction::Worldgen, ..Default::default() };
    let seeds: Vec<u64> = specs(&cfg).unwrap().iter().map(|s| s.seed).collect();
    assert_eq!(seeds, vec![42, 7, 99]);
}
