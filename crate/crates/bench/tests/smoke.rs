//! The benched calls, once each at bench sizes.

use lumenlab_core::annotation::infer_label;
use lumenlab_core::flowcore::{sample_from, standard_normal};
use lumenlab_core::rng::stream;
use lumenlab_core::scenes::{generate_dataset, to_f64, GenConfig};
use lumenlab_core::trainer::{conditioning, prepare, training_step, TrainConfig, TrainData, TrainState};

#[test]
fn benched_paths_run() {
    let samples = generate_dataset(2, 2, &GenConfig::default()).unwrap();
    let s = &samples[0];
    infer_label(&to_f64(&s.tuple.v_real), &to_f64(&s.tuple.normals), &to_f64(&s.tuple.depth), &s.tuple.mask).unwrap();

    let data = TrainData::new(&samples);
    let mut cfg = TrainConfig::desk();
    cfg.lambda_phy = 0.0;
    let mut state = TrainState::new(&cfg, 5, 32, 32).unwrap();
    let report = training_step(&mut state, &data, None, &std::env::temp_dir()).unwrap();
    assert!(report.is_finite());

    let prepared: Vec<_> = samples.iter().map(prepare).collect();
    let items: Vec<_> = prepared.iter().collect();
    let x0 = standard_normal(&mut stream(0, &[]), [2, 15, 32, 32]);
    let out = sample_from(&state.model, &x0, 2, cfg.k_max, &conditioning(&items)).unwrap();
    assert_eq!(out.shape(), x0.shape());
}
