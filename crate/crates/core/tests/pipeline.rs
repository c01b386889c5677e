use lumenlab_core::evalbench::{evaluate, CopyDegradedRelighter, OracleRelighter};
use lumenlab_core::model::VelocityModel;
use lumenlab_core::scenes::{generate_dataset, load_dataset, persist_dataset, GenConfig};
use lumenlab_core::trainer::{train, training_step, TrainConfig, TrainData, TrainState};
use lumenlab_core::Error;

fn cfg(iterations: usize) -> TrainConfig {
    TrainConfig {
        iterations,
        lambda_phy: 0.0,
        seed: 21,
        ..TrainConfig::desk()
    }
}

#[test]
fn dataset_survives_disk() {
    let dir = tempfile::tempdir().unwrap();
    let samples = generate_dataset(5, 6, &GenConfig::default()).unwrap();
    persist_dataset(&samples, dir.path(), 5).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back.len(), 6);
    for (a, b) in samples.iter().zip(&back) {
        assert_eq!(a.tuple, b.tuple);
    }
}

#[test]
fn resume_matches_uninterrupted_run() {
    let samples = generate_dataset(6, 8, &GenConfig::default()).unwrap();
    let data = TrainData::new(&samples);
    let dir = tempfile::tempdir().unwrap();

    let mut straight = TrainState::new(&cfg(6), 5, 32, 32).unwrap();
    train(&mut straight, &data, None, None).unwrap();

    let mut first = TrainState::new(&cfg(3), 5, 32, 32).unwrap();
    train(&mut first, &data, None, None).unwrap();
    let path = dir.path().join("state.llab");
    first.save(&path).unwrap();
    let mut resumed = TrainState::load(&path).unwrap();
    resumed.cfg.iterations = 6;
    train(&mut resumed, &data, None, None).unwrap();

    assert_eq!(resumed.iteration, 6);
    assert_eq!(resumed.model.params.flatten(), straight.model.params.flatten());
    assert_eq!(resumed.history, straight.history);
}

#[test]
fn losses_drop_and_checkpoint_reloads() {
    let samples = generate_dataset(7, 16, &GenConfig::default()).unwrap();
    let data = TrainData::new(&samples);
    let dir = tempfile::tempdir().unwrap();
    let mut st = TrainState::new(&cfg(60), 5, 32, 32).unwrap();
    train(&mut st, &data, None, Some(dir.path())).unwrap();
    let first = st.history[..10].iter().map(|r| r.l0).sum::<f64>();
    let last = st.history[50..].iter().map(|r| r.l0).sum::<f64>();
    assert!(last < first, "L0 {first} -> {last}");
    assert!(st.history.iter().all(|r| r.is_finite() && r.l0 >= 0.0 && r.l_fast >= 0.0));

    let (model, meta) = VelocityModel::load(&dir.path().join("model.llab")).unwrap();
    assert_eq!(meta.iteration, 60);
    assert_eq!(model.params.flatten(), st.model.params.flatten());
    let csv = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 61);
}

#[test]
fn physics_without_estimator_is_a_config_error() {
    let samples = generate_dataset(8, 4, &GenConfig::default()).unwrap();
    let data = TrainData::new(&samples);
    let mut c = cfg(1);
    c.lambda_phy = 0.1;
    let mut st = TrainState::new(&c, 5, 32, 32).unwrap();
    let dump = tempfile::tempdir().unwrap();
    assert!(matches!(training_step(&mut st, &data, None, dump.path()), Err(Error::Config(_))));
}

#[test]
fn oracle_beats_copy_on_every_quality_metric() {
    let test = generate_dataset(9, 4, &GenConfig::default()).unwrap();
    let oracle = evaluate(&OracleRelighter, &test, None, 2).unwrap();
    let copy = evaluate(&CopyDegradedRelighter, &test, None, 2).unwrap();
    assert_eq!(oracle.psnr, 100.0);
    assert!(oracle.ssim > copy.ssim && copy.psnr < 100.0);
    assert!(oracle.dense_l2.is_none());
}
