use criterion::{black_box, criterion_group, criterion_main, Criterion};
use lumenlab_core::annotation::infer_label;
use lumenlab_core::evalbench::quality_metrics;
use lumenlab_core::flowcore::{sample_from, standard_normal};
use lumenlab_core::rng::stream;
use lumenlab_core::scenes::{generate_dataset, generate_sample, to_f64, GenConfig};
use lumenlab_core::trainer::{conditioning, prepare, training_step, TrainConfig, TrainData, TrainState};

fn data(c: &mut Criterion) {
    let cfg = GenConfig::default();
    c.bench_function("generate_sample", |b| {
        let mut i = 0;
        b.iter(|| {
            i += 1;
            generate_sample(1, i, &cfg).unwrap()
        })
    });
    let s = generate_sample(1, 0, &cfg).unwrap();
    let (video, normals, depth) = (to_f64(&s.tuple.v_real), to_f64(&s.tuple.normals), to_f64(&s.tuple.depth));
    c.bench_function("infer_label", |b| {
        b.iter(|| infer_label(black_box(&video), &normals, &depth, &s.tuple.mask))
    });
    let other = to_f64(&s.tuple.v_deg);
    c.bench_function("quality_metrics", |b| b.iter(|| quality_metrics(black_box(&video), &other).unwrap()));
}

fn model(c: &mut Criterion) {
    let samples = generate_dataset(2, 8, &GenConfig::default()).unwrap();
    let data = TrainData::new(&samples);
    let mut cfg = TrainConfig::desk();
    cfg.lambda_phy = 0.0;
    let mut state = TrainState::new(&cfg, 5, 32, 32).unwrap();
    let dump = std::env::temp_dir();
    c.bench_function("training_step_no_phy", |b| {
        b.iter(|| training_step(&mut state, &data, None, &dump).unwrap())
    });

    let prepared: Vec<_> = samples.iter().map(prepare).collect();
    let items: Vec<_> = prepared.iter().collect();
    let cond = conditioning(&items);
    let x0 = standard_normal(&mut stream(0, &[]), [8, 15, 32, 32]);
    for steps in [1, 16] {
        c.bench_function(&format!("sample_batch8_steps{steps}"), |b| {
            b.iter(|| sample_from(&state.model, black_box(&x0), steps, cfg.k_max, &cond).unwrap())
        });
    }
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = data, model
}
criterion_main!(benches);
