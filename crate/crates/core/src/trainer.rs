//! Joint objective `λ0 L0 + λ1 L_fast + λ2 L_phy`, batch partitioning,
//! augmentation, the optimisation loop and resumable training state.

use std::collections::HashMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{Array3, Array4, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::encode_label;
use crate::autodiff::{Graph, Tensor};
use crate::checkpoint;
use crate::error::{Error, Result};
use crate::flowcore::{
    interpolate, mse, sample_on_graph, sample_pair_stepsize, sample_pair_time, sample_time,
    shortcut_target, standard_normal, velocity_target, Conditioning, LogitNormal, VelocityField,
};
use crate::geometry::{
    depth_tensor, mask_tensor, normals_tensor, physics_loss_graph, GeometryEstimator, MapVars, PhysicsLossConfig,
};
use crate::model::{init_model, stack, video_to_channels, ModelConfig, VelocityModel};
use crate::optim::{clip_global_norm, AdamW, AdamWConfig};
use crate::rng::{stream, tag};
use crate::scenes::{degrade, render, to_f64, DataSample, LightProgram, SceneSpec, TrainingTuple};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

/// Every knob of a training run. Serialises to flat `key = value` text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub format_version: u32,
    pub lambda0: f64,
    pub lambda_fast: f64,
    pub lambda_phy: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    /// Global gradient-norm cap; 0 disables.
    pub grad_clip: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub fast_fraction: f64,
    pub phy_fraction_of_flow: f64,
    pub k_max: usize,
    pub eval_every: usize,
    pub checkpoint_every: usize,
    /// Euler steps used to generate the samples the physics loss sees.
    pub phy_steps: usize,
    pub depth_weight: f64,
    pub normal_weight: f64,
    pub global_norm: bool,
    pub augment: bool,
    pub time_mu: f64,
    pub time_sigma: f64,
    pub hidden: usize,
    pub blocks: usize,
    pub n_freq: usize,
    pub param_budget: usize,
    /// Head predicts a clean clip, converted to a velocity.
    pub predict_clean: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            lambda0: 1.0,
            lambda_fast: 0.1,
            lambda_phy: 0.1,
            learning_rate: 1e-5,
            beta1: 0.0,
            beta2: 0.999,
            weight_decay: 0.0,
            grad_clip: 1.0,
            batch_size: 8,
            iterations: 5000,
            seed: 0,
            fast_fraction: 0.2,
            phy_fraction_of_flow: 0.5,
            k_max: crate::flowcore::DEFAULT_K_MAX,
            eval_every: 0,
            checkpoint_every: 0,
            phy_steps: 4,
            depth_weight: 1.0,
            normal_weight: 1.0,
            global_norm: false,
            augment: false,
            time_mu: 0.0,
            time_sigma: 1.0,
            hidden: 16,
            blocks: 2,
            n_freq: 6,
            param_budget: 500_000,
            predict_clean: true,
        }
    }
}

impl TrainConfig {
    /// The settings used for desk-scale runs.
    pub fn desk() -> Self {
        Self {
            learning_rate: 1e-3,
            beta2: 0.99,
            iterations: 2000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.format_version != CONFIG_FORMAT_VERSION {
            return bad("unsupported config format_version");
        }
        for (name, v) in [("fast_fraction", self.fast_fraction), ("phy_fraction_of_flow", self.phy_fraction_of_flow)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if [self.lambda0, self.lambda_fast, self.lambda_phy, self.depth_weight, self.normal_weight]
            .iter()
            .any(|w| *w < 0.0 || !w.is_finite())
        {
            return bad("loss weights must be finite and >= 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.k_max < 1 || self.phy_steps == 0 || !self.phy_steps.is_power_of_two() || self.phy_steps > 1 << self.k_max {
            return bad("phy_steps must be a power of two no larger than 2^k_max");
        }
        if self.learning_rate <= 0.0 || self.time_sigma <= 0.0 {
            return bad("learning_rate and time_sigma must be positive");
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        crate::kvconfig::to_kv("training configuration", self)
    }

    /// Parse `key = value` lines over the defaults.
    pub fn from_kv(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = crate::kvconfig::from_kv(text, origin)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn model_config(&self, frames: usize, height: usize, width: usize) -> ModelConfig {
        ModelConfig {
            frames,
            height,
            width,
            hidden: self.hidden,
            blocks: self.blocks,
            n_freq: self.n_freq,
            k_max: self.k_max,
            param_budget: self.param_budget,
            conv3d: false,
            predict_clean: self.predict_clean,
        }
    }

    pub fn physics(&self) -> PhysicsLossConfig {
        PhysicsLossConfig {
            depth_weight: self.depth_weight,
            normal_weight: self.normal_weight,
            global_norm: self.global_norm,
        }
    }

    fn time(&self) -> LogitNormal {
        LogitNormal {
            mu: self.time_mu,
            sigma: self.time_sigma,
        }
    }
}

/// `round(frac * n)` with halves rounded up.
pub fn round_half_up(frac: f64, n: usize) -> usize {
    ((frac * n as f64) + 0.5).floor() as usize
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub fast: Vec<usize>,
    pub flow: Vec<usize>,
    /// Subset of `flow`.
    pub phy: Vec<usize>,
}

/// Split batch slots `0..b` into consistency, flow and physics sets.
pub fn partition_batch(rng: &mut impl Rng, b: usize, fast_fraction: f64, phy_fraction: f64) -> Result<Partition> {
    if b == 0 {
        return Err(Error::Empty("batch is empty".into()));
    }
    let mut idx: Vec<usize> = (0..b).collect();
    idx.shuffle(rng);
    let n_fast = round_half_up(fast_fraction, b).min(b);
    let flow = idx.split_off(n_fast);
    let mut fast = idx;
    let mut shuffled = flow.clone();
    shuffled.shuffle(rng);
    let mut phy: Vec<usize> = shuffled[..round_half_up(phy_fraction, flow.len()).min(flow.len())].to_vec();
    let mut flow = flow;
    fast.sort_unstable();
    flow.sort_unstable();
    phy.sort_unstable();
    Ok(Partition { fast, flow, phy })
}

/// Scene and real program per scene id, for re-rendering degradations.
#[derive(Clone, Debug, Default)]
pub struct SceneBank {
    scenes: HashMap<u64, (SceneSpec, LightProgram)>,
}

impl SceneBank {
    pub fn from_samples(samples: &[DataSample]) -> Self {
        let scenes = samples
            .iter()
            .map(|s| (s.meta.scene.id, (s.meta.scene.clone(), s.meta.real_program.clone())))
            .collect();
        Self { scenes }
    }

    pub fn get(&self, id: u64) -> Result<&(SceneSpec, LightProgram)> {
        self.scenes.get(&id).ok_or(Error::UnknownScene(id))
    }
}

/// Subject pixels from `deg`, everything else from `real`.
pub fn compose_degraded(real: &Array4<f32>, mask: &Array3<u8>, deg: &Array4<f64>) -> Array4<f32> {
    let mut out = real.clone();
    Zip::indexed(&mut out).for_each(|(f, r, c, k), v| {
        if mask[[f, r, c]] == 1 {
            *v = deg[[f, r, c, k]] as f32;
        }
    });
    out
}

/// Replace `v_deg` with a fresh draw from the scene's degradation pool.
/// Returns the new tuple and the pool index drawn.
pub fn augment_degraded(
    rng: &mut impl Rng,
    tuple: &TrainingTuple,
    scene_id: u64,
    bank: &SceneBank,
) -> Result<(TrainingTuple, usize)> {
    let (spec, real) = bank.get(scene_id)?;
    let d = degrade(spec, real, rng)?;
    let rendered = render(spec, &d.program)?;
    if rendered.mask != tuple.mask {
        return Err(Error::GeometryMismatch(format!("scene {scene_id} re-renders with a different mask")));
    }
    let mut out = tuple.clone();
    out.v_deg = compose_degraded(&tuple.v_real, &tuple.mask, &rendered.video);
    Ok((out, d.index))
}

/// A sample in network layout.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub scene_id: u64,
    pub x1: Array3<f64>,
    pub x_deg: Array3<f64>,
    pub x_bg: Array3<f64>,
    pub c: Vec<f64>,
    /// `(F, 1, H, W)`, `(F, 3, H, W)` and `(F, 1, H, W)`.
    pub depth: Tensor,
    pub normals: Tensor,
    pub mask: Tensor,
}

pub fn prepare(s: &DataSample) -> Prepared {
    let t = &s.tuple;
    Prepared {
        scene_id: s.meta.scene.id,
        x1: video_to_channels(&t.v_real),
        x_deg: video_to_channels(&t.v_deg),
        x_bg: video_to_channels(&t.v_bg),
        c: encode_label(&t.label).values,
        depth: depth_tensor(&to_f64(&t.depth)),
        normals: normals_tensor(&to_f64(&t.normals)),
        mask: mask_tensor(&t.mask),
    }
}

pub fn conditioning(items: &[&Prepared]) -> Conditioning {
    let dx: Vec<Array3<f64>> = items.iter().map(|p| p.x_deg.clone()).collect();
    let bx: Vec<Array3<f64>> = items.iter().map(|p| p.x_bg.clone()).collect();
    let n = items.len();
    let dim = items.first().map_or(0, |p| p.c.len());
    Conditioning {
        x_deg: stack(&dx),
        x_bg: stack(&bx),
        c: Tensor::from_shape_fn((n, dim, 1, 1), |(i, j, _, _)| items[i].c[j]),
    }
}

fn concat0(parts: &[&Tensor]) -> Tensor {
    let views: Vec<_> = parts.iter().map(|t| t.view()).collect();
    ndarray::concatenate(Axis(0), &views).expect("shapes agree")
}

/// Loss components of one step. Disabled or empty branches report 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub iteration: usize,
    pub l0: f64,
    pub l_fast: f64,
    pub l_phy: f64,
    pub total: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [self.l0, self.l_fast, self.l_phy, self.total].iter().all(|v| v.is_finite())
    }
}

/// Draws of one iteration, exposed so tests can rebuild a step by hand.
#[derive(Clone, Debug)]
pub struct StepDraws {
    pub batch: Vec<usize>,
    pub partition: Partition,
}

/// Batch indices and partition for `iteration`: functions of
/// `(seed, iteration)` only.
pub fn step_draws(cfg: &TrainConfig, n_data: usize, iteration: usize) -> Result<StepDraws> {
    if n_data == 0 {
        return Err(Error::Empty("dataset is empty".into()));
    }
    let it = iteration as u64;
    let mut rng = stream(cfg.seed, &[tag::BATCH, it]);
    let batch: Vec<usize> = if cfg.batch_size <= n_data {
        rand::seq::index::sample(&mut rng, n_data, cfg.batch_size).into_vec()
    } else {
        (0..cfg.batch_size).map(|_| rng.gen_range(0..n_data)).collect()
    };
    let partition = partition_batch(
        &mut stream(cfg.seed, &[tag::PARTITION, it]),
        cfg.batch_size,
        cfg.fast_fraction,
        cfg.phy_fraction_of_flow,
    )?;
    Ok(StepDraws { batch, partition })
}

/// Scalar losses for one step, with gradients with respect to the model
/// parameters in store order.
pub fn losses_and_grads(
    model: &VelocityModel,
    estimator: Option<&GeometryEstimator>,
    items: &[&Prepared],
    part: &Partition,
    cfg: &TrainConfig,
    iteration: usize,
) -> Result<(LossReport, Vec<Tensor>)> {
    losses_with_teacher(model, model, estimator, items, part, cfg, iteration)
}

/// As [`losses_and_grads`], with the consistency targets taken from a
/// separate `teacher`.
pub fn losses_with_teacher(
    model: &VelocityModel,
    teacher: &VelocityModel,
    estimator: Option<&GeometryEstimator>,
    items: &[&Prepared],
    part: &Partition,
    cfg: &TrainConfig,
    iteration: usize,
) -> Result<(LossReport, Vec<Tensor>)> {
    let it = iteration as u64;
    let seed = cfg.seed;
    let pick = |idx: &[usize]| -> Vec<&Prepared> { idx.iter().map(|&i| items[i]).collect() };
    let x1_of = |ps: &[&Prepared]| -> Tensor {
        let v: Vec<Array3<f64>> = ps.iter().map(|p| p.x1.clone()).collect();
        stack(&v)
    };

    let mut g = Graph::new();
    let bound = model.bind(&mut g, true);
    let mut total = g.scalar_constant(0.0);
    let mut report = LossReport {
        iteration,
        l0: 0.0,
        l_fast: 0.0,
        l_phy: 0.0,
        total: 0.0,
    };

    if cfg.lambda0 > 0.0 && !part.flow.is_empty() {
        let ps = pick(&part.flow);
        let x1 = x1_of(&ps);
        let mut rng = stream(seed, &[tag::NOISE, it, 0]);
        let x0 = standard_normal(&mut rng, crate::autodiff::shape4(&x1));
        let mut trng = stream(seed, &[tag::TIME, it, 0]);
        let t: Vec<f64> = (0..ps.len()).map(|_| sample_time(&mut trng, cfg.time())).collect();
        let x_t = interpolate(&x0, &x1, &t)?;
        let target = velocity_target(&x0, &x1)?;
        let cond = conditioning(&ps).place(&mut g);
        let xv = g.constant(x_t);
        let v = bound.velocity(&mut g, xv, &t, &vec![0.0; ps.len()], &cond);
        let l0 = mse(&mut g, v, &target);
        report.l0 = g.scalar(l0);
        let term = g.scale(l0, cfg.lambda0);
        total = g.add(total, term);
    }

    if cfg.lambda_fast > 0.0 && !part.fast.is_empty() {
        let ps = pick(&part.fast);
        let x1 = x1_of(&ps);
        let mut rng = stream(seed, &[tag::NOISE, it, 1]);
        let x0 = standard_normal(&mut rng, crate::autodiff::shape4(&x1));
        let mut srng = stream(seed, &[tag::STEP, it]);
        let mut trng = stream(seed, &[tag::TIME, it, 1]);
        let mut d = Vec::with_capacity(ps.len());
        let mut t = Vec::with_capacity(ps.len());
        for _ in 0..ps.len() {
            let di = sample_pair_stepsize(&mut srng, cfg.k_max)?;
            t.push(sample_pair_time(&mut trng, cfg.time(), di));
            d.push(di);
        }
        let x_t = interpolate(&x0, &x1, &t)?;
        let cond = conditioning(&ps);
        let target = shortcut_target(teacher, &x_t, &t, &d, &cond)?;
        let cv = cond.place(&mut g);
        let xv = g.constant(x_t);
        let d2: Vec<f64> = d.iter().map(|v| 2.0 * v).collect();
        let v = bound.velocity(&mut g, xv, &t, &d2, &cv);
        let lf = mse(&mut g, v, &target);
        report.l_fast = g.scalar(lf);
        let term = g.scale(lf, cfg.lambda_fast);
        total = g.add(total, term);
    }

    if cfg.lambda_phy > 0.0 && !part.phy.is_empty() {
        let est = estimator.ok_or_else(|| Error::Config("physics loss enabled without an estimator".into()))?;
        let ps = pick(&part.phy);
        let shape = ps[0].x1.dim();
        let mut rng = stream(seed, &[tag::NOISE, it, 2]);
        let x0 = standard_normal(&mut rng, [ps.len(), shape.0, shape.1, shape.2]);
        let cv = conditioning(&ps).place(&mut g);
        let x0v = g.constant(x0);
        let x_hat = sample_on_graph(&bound, &mut g, x0v, cfg.phy_steps, cfg.k_max, &cv)?;
        let pred = est.estimate_graph(&mut g, x_hat);
        let depth: Vec<&Tensor> = ps.iter().map(|p| &p.depth).collect();
        let normals: Vec<&Tensor> = ps.iter().map(|p| &p.normals).collect();
        let masks: Vec<&Tensor> = ps.iter().map(|p| &p.mask).collect();
        let reference = MapVars {
            depth: g.constant(concat0(&depth)),
            normals: g.constant(concat0(&normals)),
        };
        let lp = physics_loss_graph(&mut g, pred, reference, &concat0(&masks), ps.len(), &cfg.physics());
        report.l_phy = g.scalar(lp.value);
        let term = g.scale(lp.value, cfg.lambda_phy);
        total = g.add(total, term);
    }

    report.total = g.scalar(total);
    let grads = g.backward(total);
    Ok((report, bound.params.collect(&grads, &model.params)))
}

/// Model, optimiser and progress. The random state of iteration `i` is a
/// function of `(seed, i)`, so `iteration` is the whole generator state.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub cfg: TrainConfig,
    pub model: VelocityModel,
    pub opt: AdamW,
    pub iteration: usize,
    pub history: Vec<LossReport>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StateMeta {
    kind: String,
    config: TrainConfig,
    model: ModelConfig,
    architecture: String,
    iteration: usize,
    optimizer_step: u64,
    history: Vec<LossReport>,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig, frames: usize, height: usize, width: usize) -> Result<Self> {
        cfg.validate()?;
        let model = init_model(&cfg.model_config(frames, height, width), cfg.seed)?;
        let opt = AdamW::new(
            AdamWConfig {
                lr: cfg.learning_rate,
                beta1: cfg.beta1,
                beta2: cfg.beta2,
                eps: 1e-8,
                weight_decay: cfg.weight_decay,
            },
            model.params.values(),
        );
        Ok(Self {
            cfg: cfg.clone(),
            model,
            opt,
            iteration: 0,
            history: Vec::new(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut arrays = checkpoint::store_arrays("param/", &self.model.params);
        for (i, name) in self.model.params.names().iter().enumerate() {
            arrays.push(checkpoint::tensor_array(format!("adam_m/{name}"), &self.opt.m[i]));
            arrays.push(checkpoint::tensor_array(format!("adam_v/{name}"), &self.opt.v[i]));
        }
        let meta = StateMeta {
            kind: "train_state".into(),
            config: self.cfg.clone(),
            model: self.model.cfg.clone(),
            architecture: checkpoint::architecture_hash(&self.model.params),
            iteration: self.iteration,
            optimizer_step: self.opt.step,
            history: self.history.clone(),
        };
        checkpoint::save(path, &arrays, &meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (arrays, meta): (_, StateMeta) = checkpoint::load(path)?;
        let mut st = TrainState::new(&meta.config, meta.model.frames, meta.model.height, meta.model.width)?;
        checkpoint::restore_store(path, &arrays, "param/", &mut st.model.params)?;
        let names: Vec<String> = st.model.params.names().to_vec();
        for (i, name) in names.iter().enumerate() {
            for (prefix, slot) in [("adam_m/", &mut st.opt.m[i]), ("adam_v/", &mut st.opt.v[i])] {
                let key = format!("{prefix}{name}");
                let t: Tensor = crate::container::take(&arrays, &key).map_err(|d| Error::parse(path, d))?;
                *slot = t;
            }
        }
        st.opt.step = meta.optimizer_step;
        st.iteration = meta.iteration;
        st.history = meta.history;
        Ok(st)
    }
}

/// Data for the loop: prepared samples plus what augmentation needs.
pub struct TrainData<'a> {
    pub samples: &'a [DataSample],
    pub prepared: Vec<Prepared>,
    pub bank: SceneBank,
}

impl<'a> TrainData<'a> {
    pub fn new(samples: &'a [DataSample]) -> Self {
        Self {
            samples,
            prepared: samples.iter().map(prepare).collect(),
            bank: SceneBank::from_samples(samples),
        }
    }
}

fn dump_diagnostics(dir: &Path, report: &LossReport, cfg: &TrainConfig, batch: &[usize]) -> PathBuf {
    let path = dir.join(format!("nonfinite_{:06}.json", report.iteration));
    let doc = serde_json::json!({
        "iteration": report.iteration,
        "seed": cfg.seed,
        "batch": batch,
        "losses": report,
        "config": cfg,
    });
    // The error already reports the failure; a failed dump only loses detail.
    let _ = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, doc.to_string()));
    path
}

/// One optimiser update for the state's current iteration.
pub fn training_step(
    state: &mut TrainState,
    data: &TrainData,
    estimator: Option<&GeometryEstimator>,
    dump_dir: &Path,
) -> Result<LossReport> {
    let cfg = state.cfg.clone();
    let it = state.iteration;
    let draws = step_draws(&cfg, data.prepared.len(), it)?;
    let mut augmented = Vec::new();
    if cfg.augment {
        for (slot, &i) in draws.batch.iter().enumerate() {
            let mut rng = stream(cfg.seed, &[tag::AUGMENT, it as u64, slot as u64]);
            let s = &data.samples[i];
            let (t, _) = augment_degraded(&mut rng, &s.tuple, s.meta.scene.id, &data.bank)?;
            let mut p = data.prepared[i].clone();
            p.x_deg = video_to_channels(&t.v_deg);
            augmented.push(p);
        }
    }
    let items: Vec<&Prepared> = if cfg.augment {
        augmented.iter().collect()
    } else {
        draws.batch.iter().map(|&i| &data.prepared[i]).collect()
    };
    let (report, mut grads) = losses_and_grads(&state.model, estimator, &items, &draws.partition, &cfg, it)?;
    if !report.is_finite() {
        let dump = dump_diagnostics(dump_dir, &report, &cfg, &draws.batch);
        return Err(Error::NonFiniteLoss {
            iteration: it,
            seed: cfg.seed,
            dump,
        });
    }
    clip_global_norm(&mut grads, cfg.grad_clip);
    state.opt.update(state.model.params.values_mut(), &grads);
    state.iteration += 1;
    state.history.push(report);
    Ok(report)
}

pub const LOSS_CSV_HEADER: &str = "iteration,L0,Lfast,Lphy,total";

pub fn loss_csv_line(r: &LossReport) -> String {
    format!("{},{},{},{},{}", r.iteration, r.l0, r.l_fast, r.l_phy, r.total)
}

pub fn write_loss_csv(path: &Path, history: &[LossReport]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::from(LOSS_CSV_HEADER);
    text.push('\n');
    for r in history {
        text.push_str(&loss_csv_line(r));
        text.push('\n');
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Run (or continue) `state` until `state.cfg.iterations`. With `out`, the
/// loss curve, periodic checkpoints and the final model are written there.
pub fn train(
    state: &mut TrainState,
    data: &TrainData,
    estimator: Option<&GeometryEstimator>,
    out: Option<&Path>,
) -> Result<()> {
    if data.prepared.is_empty() {
        return Err(Error::Empty("dataset is empty".into()));
    }
    let dump_dir = out.map_or_else(std::env::temp_dir, Path::to_path_buf);
    while state.iteration < state.cfg.iterations {
        let r = training_step(state, data, estimator, &dump_dir)?;
        let done = state.iteration;
        if state.cfg.eval_every > 0 && done.is_multiple_of(state.cfg.eval_every) {
            let k = state.cfg.eval_every.min(state.history.len());
            let recent = &state.history[state.history.len() - k..];
            let mean = recent.iter().map(|r| r.total).sum::<f64>() / k as f64;
            log::info!("iteration {done}: total {:.5} (mean of last {k}: {mean:.5})", r.total);
        }
        if let Some(dir) = out {
            if state.cfg.checkpoint_every > 0 && done.is_multiple_of(state.cfg.checkpoint_every) {
                state.save(&dir.join(format!("state_{done:06}.llab")))?;
            }
        }
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_loss_csv(&dir.join("loss.csv"), &state.history)?;
        state.save(&dir.join("state.llab"))?;
        state.model.save(&dir.join("model.llab"), state.cfg.seed, state.iteration)?;
    }
    Ok(())
}

/// Convert a sampled batch row back to an `(F, H, W, 3)` video clipped to
/// `[0, 1]`.
pub fn to_video(x: &Tensor, i: usize) -> Array4<f64> {
    crate::model::channels_to_video(x, i).mapv(|v| v.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_counts_round_half_up() {
        let mut rng = stream(0, &[]);
        let p = partition_batch(&mut rng, 10, 0.2, 0.5).unwrap();
        assert_eq!((p.fast.len(), p.flow.len(), p.phy.len()), (2, 8, 4));
        let p = partition_batch(&mut rng, 5, 0.2, 0.5).unwrap();
        assert_eq!((p.fast.len(), p.flow.len(), p.phy.len()), (1, 4, 2));
        assert!(p.phy.iter().all(|i| p.flow.contains(i)));
        assert!(partition_batch(&mut rng, 0, 0.2, 0.5).is_err());
    }

    #[test]
    fn kv_round_trip() {
        let cfg = TrainConfig {
            learning_rate: 2.5e-4,
            augment: true,
            seed: 77,
            ..TrainConfig::desk()
        };
        let back = TrainConfig::from_kv(&cfg.to_kv(), Path::new("x")).unwrap();
        assert_eq!(back, cfg);
        assert!(TrainConfig::from_kv("nope = 1", Path::new("x")).is_err());
        assert!(TrainConfig::from_kv("fast_fraction = 1.5", Path::new("x")).is_err());
        assert!(TrainConfig::from_kv("batch_size 3", Path::new("x")).is_err());
    }
}
