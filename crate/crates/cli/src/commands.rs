use std::path::{Path, PathBuf};

use lumenlab_core::container::{self, ArrayData, NamedArray};
use lumenlab_core::evalbench::{
    bench_generate, bench_run, evaluate, write_bench_reports, BenchReport, CopyDegradedRelighter, EvalReport,
    OracleRelighter, RandomRelighter, Relighter, TrainedRelighter, DEFAULT_CASES_PER_ATTRIBUTE,
};
use lumenlab_core::geometry::{train_estimator as fit_estimator, EstimatorConfig, GeometryEstimator};
use lumenlab_core::model::VelocityModel;
use lumenlab_core::scenes::{generate_dataset, load_dataset, persist_dataset, FillMode, GenConfig};
use lumenlab_core::trainer::{self, TrainConfig, TrainData, TrainState};
use lumenlab_core::{Error, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::config::{echo, layered, read_config};
use crate::{BenchModel, Common, LossTerm, Switch};

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Nothing {}

fn path_or_none(p: &str) -> Option<PathBuf> {
    (!p.is_empty()).then(|| PathBuf::from(p))
}

fn path_text(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.to_string_lossy().into_owned())
}

fn resolve<A, B>(common: &Common, a: A, b: B) -> Result<(A, B)>
where
    A: Serialize + serde::de::DeserializeOwned,
    B: Serialize + serde::de::DeserializeOwned,
{
    let text = read_config(common.config.as_deref())?;
    let origin = common.config.clone().unwrap_or_default();
    layered(a, b, text.as_deref(), &origin)
}

fn parse_steps(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad step count {s:?}")))
        })
        .collect()
}

fn load_estimator(path: Option<PathBuf>) -> Result<Option<GeometryEstimator>> {
    path.map(|p| GeometryEstimator::load(&p)).transpose()
}

fn load_model(path: &Path) -> Result<VelocityModel> {
    VelocityModel::load(path).map(|(m, _)| m)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v).expect("report serialises");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenRun {
    format_version: u32,
    n: usize,
    seed: u64,
    frames: usize,
    width: usize,
    height: usize,
    fill: FillMode,
}

impl Default for GenRun {
    fn default() -> Self {
        Self {
            format_version: 1,
            n: 64,
            seed: 0,
            frames: 5,
            width: 32,
            height: 32,
            fill: FillMode::Gaussian,
        }
    }
}

pub fn gen_data(common: &Common, n: Option<usize>) -> Result<()> {
    let (mut run, _) = resolve(common, GenRun::default(), Nothing {})?;
    run.n = n.unwrap_or(run.n);
    run.seed = common.seed.unwrap_or(run.seed);
    if run.frames < 2 {
        return Err(Error::Config("frames must be at least 2".into()));
    }
    echo::<_, Nothing>(&common.out, "gen-data", &run, None)?;
    let mut cfg = GenConfig::default();
    cfg.scene.frames = run.frames;
    cfg.scene.width = run.width;
    cfg.scene.height = run.height;
    cfg.t = run.frames - 1;
    cfg.fill = run.fill;
    let samples = generate_dataset(run.seed, run.n, &cfg)?;
    let m = persist_dataset(&samples, &common.out, run.seed)?;
    log::info!("wrote {} samples to {}", m.count, common.out.display());
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EstimatorRun {
    seed: u64,
    data: String,
}

pub fn train_estimator(common: &Common, data: Option<PathBuf>, iterations: Option<usize>) -> Result<()> {
    let (mut run, mut cfg) = resolve(common, EstimatorRun::default(), EstimatorConfig::default())?;
    run.seed = common.seed.unwrap_or(run.seed);
    run.data = path_text(data).unwrap_or(run.data);
    cfg.iterations = iterations.unwrap_or(cfg.iterations);
    echo(&common.out, "train-estimator", &run, Some(&cfg))?;
    let samples = load_dataset(Path::new(&run.data))?;
    let est = fit_estimator(&samples, &cfg, run.seed)?;
    est.save(&common.out.join("estimator.llab"))?;
    write_json(&common.out.join("estimator_report.json"), &est.report)
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainRun {
    data: String,
    estimator: String,
    resume: String,
}

pub fn train(
    common: &Common,
    data: Option<PathBuf>,
    estimator: Option<PathBuf>,
    resume: Option<PathBuf>,
    iterations: Option<usize>,
    disable: &[LossTerm],
    augment: Option<Switch>,
) -> Result<()> {
    let (mut run, mut cfg) = resolve(common, TrainRun::default(), TrainConfig::desk())?;
    run.data = path_text(data).unwrap_or(run.data);
    run.estimator = path_text(estimator).unwrap_or(run.estimator);
    run.resume = path_text(resume).unwrap_or(run.resume);
    cfg.seed = common.seed.unwrap_or(cfg.seed);
    cfg.iterations = iterations.unwrap_or(cfg.iterations);
    for term in disable {
        match term {
            LossTerm::Fast => cfg.lambda_fast = 0.0,
            LossTerm::Phy => cfg.lambda_phy = 0.0,
            LossTerm::Depth => cfg.depth_weight = 0.0,
            LossTerm::Normal => cfg.normal_weight = 0.0,
        }
    }
    if let Some(a) = augment {
        cfg.augment = a == Switch::On;
    }
    cfg.validate()?;
    echo(&common.out, "train", &run, Some(&cfg))?;
    let samples = load_dataset(Path::new(&run.data))?;
    let first = samples
        .first()
        .ok_or_else(|| Error::Empty(format!("dataset {} is empty", run.data)))?;
    let est = if cfg.lambda_phy > 0.0 {
        let p = path_or_none(&run.estimator)
            .ok_or_else(|| Error::Config("the physics loss needs --estimator (or --disable-loss phy)".into()))?;
        Some(GeometryEstimator::load(&p)?)
    } else {
        None
    };
    let mut state = match path_or_none(&run.resume) {
        Some(p) => {
            let mut s = TrainState::load(&p)?;
            s.cfg.iterations = cfg.iterations;
            s
        }
        None => TrainState::new(&cfg, first.tuple.frames(), first.tuple.height(), first.tuple.width())?,
    };
    let td = TrainData::new(&samples);
    trainer::train(&mut state, &td, est.as_ref(), Some(&common.out))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SampleRun {
    seed: u64,
    checkpoint: String,
    data: String,
    index: usize,
    steps: usize,
}

impl Default for SampleRun {
    fn default() -> Self {
        Self {
            seed: 0,
            checkpoint: "model.llab".into(),
            data: String::new(),
            index: 0,
            steps: 16,
        }
    }
}

pub fn sample(
    common: &Common,
    checkpoint: Option<PathBuf>,
    data: Option<PathBuf>,
    index: Option<usize>,
    steps: Option<usize>,
) -> Result<()> {
    let (mut run, _) = resolve(common, SampleRun::default(), Nothing {})?;
    run.seed = common.seed.unwrap_or(run.seed);
    run.checkpoint = path_text(checkpoint).unwrap_or(run.checkpoint);
    run.data = path_text(data).unwrap_or(run.data);
    run.index = index.unwrap_or(run.index);
    run.steps = steps.unwrap_or(run.steps);
    echo::<_, Nothing>(&common.out, "sample", &run, None)?;
    let model = load_model(Path::new(&run.checkpoint))?;
    let samples = load_dataset(Path::new(&run.data))?;
    let s = samples
        .get(run.index)
        .ok_or_else(|| Error::Config(format!("index {} outside dataset of {}", run.index, samples.len())))?;
    let relighter = TrainedRelighter {
        model: &model,
        steps: run.steps,
        seed: run.seed,
    };
    let video = relighter.relight(&[s], run.index)?.remove(0);
    let stem = format!("sample_{:05}", run.index);
    container::write(
        &common.out.join(format!("{stem}.llab")),
        &[NamedArray::new("video", ArrayData::F64(video.clone().into_dyn()))],
    )?;
    let q = lumenlab_core::evalbench::quality_metrics(&video, &lumenlab_core::scenes::to_f64(&s.tuple.v_real))?;
    write_json(&common.out.join(format!("{stem}.json")), &q)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalRun {
    seed: u64,
    checkpoint: String,
    data: String,
    estimator: String,
    steps: String,
    batch: usize,
}

impl Default for EvalRun {
    fn default() -> Self {
        Self {
            seed: 0,
            checkpoint: "model.llab".into(),
            data: String::new(),
            estimator: String::new(),
            steps: "1,2,4,8,16".into(),
            batch: 16,
        }
    }
}

pub(crate) const EVAL_CSV_HEADER: &str = "model,steps,n,psnr,ssim,temporal_smoothness_proxy,dense_l2";

fn eval_row(r: &EvalReport, steps: usize) -> String {
    format!(
        "{},{steps},{},{},{},{},{}",
        r.model,
        r.n,
        r.psnr,
        r.ssim,
        r.temporal_smoothness_proxy,
        r.dense_l2.map_or_else(String::new, |v| v.to_string())
    )
}

pub fn eval(
    common: &Common,
    checkpoint: Option<PathBuf>,
    data: Option<PathBuf>,
    estimator: Option<PathBuf>,
    steps: Option<String>,
) -> Result<()> {
    let (mut run, _) = resolve(common, EvalRun::default(), Nothing {})?;
    run.seed = common.seed.unwrap_or(run.seed);
    run.checkpoint = path_text(checkpoint).unwrap_or(run.checkpoint);
    run.data = path_text(data).unwrap_or(run.data);
    run.estimator = path_text(estimator).unwrap_or(run.estimator);
    run.steps = steps.unwrap_or(run.steps);
    let budgets = parse_steps(&run.steps)?;
    echo::<_, Nothing>(&common.out, "eval", &run, None)?;
    let model = load_model(Path::new(&run.checkpoint))?;
    let est = load_estimator(path_or_none(&run.estimator))?;
    let samples = load_dataset(Path::new(&run.data))?;
    let mut reports = vec![(0, evaluate(&CopyDegradedRelighter, &samples, est.as_ref(), run.batch)?)];
    for &steps in &budgets {
        let m = TrainedRelighter {
            model: &model,
            steps,
            seed: run.seed,
        };
        reports.push((steps, evaluate(&m, &samples, est.as_ref(), run.batch)?));
    }
    let mut csv = format!("{EVAL_CSV_HEADER}\n");
    for (s, r) in &reports {
        csv.push_str(&eval_row(r, *s));
        csv.push('\n');
    }
    let path = common.out.join("eval.csv");
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    let json: Vec<&EvalReport> = reports.iter().map(|(_, r)| r).collect();
    write_json(&common.out.join("eval.json"), &json)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BenchRun {
    seed: u64,
    model: String,
    checkpoint: String,
    estimator: String,
    n_per_attribute: usize,
    steps: String,
    batch: usize,
}

impl Default for BenchRun {
    fn default() -> Self {
        Self {
            seed: 0,
            model: "trained".into(),
            checkpoint: "model.llab".into(),
            estimator: String::new(),
            n_per_attribute: DEFAULT_CASES_PER_ATTRIBUTE,
            steps: "16".into(),
            batch: 16,
        }
    }
}

pub fn bench(
    common: &Common,
    checkpoint: Option<PathBuf>,
    estimator: Option<PathBuf>,
    model: Option<BenchModel>,
    n: Option<usize>,
    steps: Option<String>,
) -> Result<()> {
    let (mut run, _) = resolve(common, BenchRun::default(), Nothing {})?;
    run.seed = common.seed.unwrap_or(run.seed);
    run.checkpoint = path_text(checkpoint).unwrap_or(run.checkpoint);
    run.estimator = path_text(estimator).unwrap_or(run.estimator);
    run.n_per_attribute = n.unwrap_or(run.n_per_attribute);
    run.steps = steps.unwrap_or(run.steps);
    if let Some(m) = model {
        run.model = m.to_possible_value().expect("named").get_name().to_string();
    }
    let kind = BenchModel::from_str(&run.model, true).map_err(|_| Error::Config(format!("unknown model {}", run.model)))?;
    let budgets = parse_steps(&run.steps)?;
    echo::<_, Nothing>(&common.out, "bench", &run, None)?;
    let trained = match kind {
        BenchModel::Trained => Some(load_model(Path::new(&run.checkpoint))?),
        _ => None,
    };
    let est = load_estimator(path_or_none(&run.estimator))?;
    let suite = bench_generate(run.seed, run.n_per_attribute, &GenConfig::default())?;
    let mut reports: Vec<BenchReport> = Vec::new();
    match (&trained, kind) {
        (Some(m), _) => {
            for &steps in &budgets {
                let r = TrainedRelighter {
                    model: m,
                    steps,
                    seed: run.seed,
                };
                reports.push(bench_run(&r, est.as_ref(), &suite, run.batch)?);
            }
        }
        (None, BenchModel::Oracle) => reports.push(bench_run(&OracleRelighter, est.as_ref(), &suite, run.batch)?),
        (None, BenchModel::Random) => {
            reports.push(bench_run(&RandomRelighter { seed: run.seed }, est.as_ref(), &suite, run.batch)?)
        }
        (None, _) => reports.push(bench_run(&CopyDegradedRelighter, est.as_ref(), &suite, run.batch)?),
    }
    write_bench_reports(&common.out, &reports)
}
