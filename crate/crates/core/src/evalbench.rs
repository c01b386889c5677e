//! Evaluation metrics and the attribute-controllability benchmark.
//!
//! Quality is PSNR and SSIM averaged over frames. Temporal behaviour is
//! reported through `temporal_smoothness_proxy`, the mean squared second
//! difference along time. Lumos consistency re-annotates generated videos
//! with [`infer_label`] against the ground-truth geometry of each case.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{s, Array2, Array3, Array4, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{infer_label, is_clean_render, label_from_program, Attribute, LightingLabel};
use crate::error::{Error, Result};
use crate::flowcore::{sample_from, standard_normal};
use crate::geometry::{physics_loss, GeometryEstimator, GeometryMaps, PhysicsLossConfig, PhysicsLossValue};
use crate::model::{stack, VelocityModel};
use crate::rng::{stream, tag};
use crate::scenes::{
    key_light_reach, make_sample, normalize3, random_perpendicular, render, sample_lit_scene, sweep_directions,
    to_f64, DataSample, Dynamics, GenConfig, LightProgram, LightSpec, SceneSpec, SourceType, MIN_KEY_REACH,
};
use crate::trainer::{conditioning, prepare, to_video};

pub const PSNR_CAP: f64 = 100.0;
const MSE_FLOOR: f64 = 1e-10;
const SSIM_TAPS: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const DYNAMIC_RANGE: f64 = 255.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    pub psnr: f64,
    pub ssim: f64,
}

fn check_pair(a: &Array4<f64>, b: &Array4<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("videos {:?} and {:?}", a.shape(), b.shape())));
    }
    if a.shape()[0] == 0 || a.shape()[3] == 0 {
        return Err(Error::Empty("video has no frames".into()));
    }
    Ok(())
}

/// PSNR of a single frame with peak 1, capped at [`PSNR_CAP`].
pub fn frame_psnr(a: ndarray::ArrayView3<f64>, b: ndarray::ArrayView3<f64>) -> f64 {
    let mse = (&a - &b).mapv(|d| d * d).mean().unwrap_or(0.0);
    if mse < MSE_FLOOR {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_TAPS / 2) as f64;
    let w: Vec<f64> = (0..SSIM_TAPS)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Separable filter over the valid region; images smaller than the window
/// use a window cropped to the image.
fn filter_valid(img: &Array2<f64>, w: &[f64]) -> Array2<f64> {
    let (h, wd) = img.dim();
    let kh = w.len().min(h);
    let kw = w.len().min(wd);
    let wh = renorm(&w[(w.len() - kh) / 2..(w.len() - kh) / 2 + kh]);
    let ww = renorm(&w[(w.len() - kw) / 2..(w.len() - kw) / 2 + kw]);
    let rows = Array2::from_shape_fn((h, wd - kw + 1), |(r, c)| (0..kw).map(|k| ww[k] * img[[r, c + k]]).sum::<f64>());
    Array2::from_shape_fn((h - kh + 1, wd - kw + 1), |(r, c)| (0..kh).map(|k| wh[k] * rows[[r + k, c]]).sum::<f64>())
}

fn renorm(w: &[f64]) -> Vec<f64> {
    let t: f64 = w.iter().sum();
    w.iter().map(|v| v / t).collect()
}

/// Mean SSIM of one channel: Gaussian window (11 taps, sigma 1.5) on the
/// 8-bit range with the usual constants.
pub fn channel_ssim(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let w = gaussian_window();
    let a = a.mapv(|v| v * DYNAMIC_RANGE);
    let b = b.mapv(|v| v * DYNAMIC_RANGE);
    let c1 = (0.01 * DYNAMIC_RANGE).powi(2);
    let c2 = (0.03 * DYNAMIC_RANGE).powi(2);
    let mu_a = filter_valid(&a, &w);
    let mu_b = filter_valid(&b, &w);
    let aa = filter_valid(&(&a * &a), &w);
    let bb = filter_valid(&(&b * &b), &w);
    let ab = filter_valid(&(&a * &b), &w);
    let mut total = 0.0;
    for ((ma, mb), ((saa, sbb), sab)) in mu_a.iter().zip(mu_b.iter()).zip(aa.iter().zip(bb.iter()).zip(ab.iter())) {
        let va = saa - ma * ma;
        let vb = sbb - mb * mb;
        let cov = sab - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total / mu_a.len() as f64
}

/// PSNR and SSIM of `(F, H, W, C)` videos in `[0, 1]`, averaged over frames
/// (and channels for SSIM).
pub fn quality_metrics(pred: &Array4<f64>, reference: &Array4<f64>) -> Result<Quality> {
    check_pair(pred, reference)?;
    let (frames, _, _, channels) = pred.dim();
    let mut psnr = 0.0;
    let mut ssim = 0.0;
    for f in 0..frames {
        let a = pred.index_axis(Axis(0), f);
        let b = reference.index_axis(Axis(0), f);
        psnr += frame_psnr(a, b);
        for c in 0..channels {
            ssim += channel_ssim(a.slice(s![.., .., c]), b.slice(s![.., .., c]));
        }
    }
    Ok(Quality {
        psnr: psnr / frames as f64,
        ssim: ssim / (frames * channels) as f64,
    })
}

/// Mean squared second temporal difference. Lower is smoother; zero for any
/// video that is linear in time per pixel.
pub fn temporal_smoothness_proxy(video: &Array4<f64>) -> Result<f64> {
    let frames = video.shape()[0];
    if frames < 3 {
        return Err(Error::Shape(format!("need at least 3 frames, got {frames}")));
    }
    let a = video.slice(s![2.., .., .., ..]);
    let b = video.slice(s![1..frames - 1, .., .., ..]);
    let c = video.slice(s![..frames - 2, .., .., ..]);
    let d2 = &a - &(&b * 2.0) + c;
    Ok(d2.mapv(|v| v * v).mean().unwrap_or(0.0))
}

/// Ground-truth geometry of one case, in the classifier's layout.
#[derive(Clone, Debug)]
pub struct CaseGeometry {
    pub depth: Array3<f64>,
    pub normals: Array4<f64>,
    pub mask: Array3<u8>,
}

impl CaseGeometry {
    pub fn of(s: &DataSample) -> Self {
        Self {
            depth: to_f64(&s.tuple.depth),
            normals: to_f64(&s.tuple.normals),
            mask: s.tuple.mask.clone(),
        }
    }

    pub fn maps(&self) -> GeometryMaps {
        GeometryMaps {
            depth: self.depth.clone(),
            normals: self.normals.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LumosScore {
    /// Accuracy per attribute in [`Attribute::ALL`] order.
    pub per_attribute: [f64; 6],
    pub avg: f64,
    /// Cases the classifier could not annotate; they count as misses.
    pub degenerate: usize,
    pub n: usize,
    /// Per case and attribute, whether the prediction matched.
    pub hits: Vec<[bool; 6]>,
}

pub fn mean6(v: &[f64; 6]) -> f64 {
    v.iter().sum::<f64>() / 6.0
}

/// Re-annotate each predicted video and compare with its target label.
pub fn lumos_score(preds: &[Array4<f64>], targets: &[LightingLabel], geometry: &[CaseGeometry]) -> Result<LumosScore> {
    if preds.is_empty() {
        return Err(Error::Empty("no cases to score".into()));
    }
    if preds.len() != targets.len() || preds.len() != geometry.len() {
        return Err(Error::Shape(format!(
            "{} predictions, {} targets, {} geometries",
            preds.len(),
            targets.len(),
            geometry.len()
        )));
    }
    let mut hits = Vec::with_capacity(preds.len());
    let mut degenerate = 0;
    for ((p, t), g) in preds.iter().zip(targets).zip(geometry) {
        match infer_label(p, &g.normals, &g.depth, &g.mask) {
            Ok(label) => hits.push(Attribute::ALL.map(|a| label.get(a) == t.get(a))),
            Err(Error::DegenerateGeometry(_)) => {
                degenerate += 1;
                hits.push([false; 6]);
            }
            Err(e) => return Err(e),
        }
    }
    let n = hits.len();
    let per_attribute: [f64; 6] =
        std::array::from_fn(|a| hits.iter().filter(|h| h[a]).count() as f64 / n as f64);
    Ok(LumosScore {
        avg: mean6(&per_attribute),
        per_attribute,
        degenerate,
        n,
        hits,
    })
}

/// Physics loss between the frozen estimator's reading of `pred` and the
/// reference maps.
pub fn dense_l2_error(
    est: &GeometryEstimator,
    pred: &Array4<f64>,
    reference: &GeometryMaps,
    mask: &Array3<u8>,
) -> Result<PhysicsLossValue> {
    if !est.frozen {
        return Err(Error::Config("dense L2 error needs a frozen estimator".into()));
    }
    let maps = est.estimate(pred)?;
    physics_loss(&maps, reference, mask, &PhysicsLossConfig::default())
}

/// Anything that turns a case's conditioning into a video.
pub trait Relighter {
    fn name(&self) -> String;

    /// Videos `(F, H, W, 3)` in `[0, 1]` for `samples`, whose case indices
    /// start at `first`. Results must not depend on how cases are batched.
    fn relight(&self, samples: &[&DataSample], first: usize) -> Result<Vec<Array4<f64>>>;
}

/// Sampling from a trained velocity model.
pub struct TrainedRelighter<'a> {
    pub model: &'a VelocityModel,
    pub steps: usize,
    pub seed: u64,
}

impl Relighter for TrainedRelighter<'_> {
    fn name(&self) -> String {
        format!("trained@{}", self.steps)
    }

    fn relight(&self, samples: &[&DataSample], first: usize) -> Result<Vec<Array4<f64>>> {
        if samples.is_empty() {
            return Ok(Vec::new());
        }
        let prepared: Vec<_> = samples.iter().map(|s| prepare(s)).collect();
        let refs: Vec<_> = prepared.iter().collect();
        let cond = conditioning(&refs);
        let (c, h, w) = prepared[0].x1.dim();
        let noise: Vec<Array3<f64>> = (0..samples.len())
            .map(|i| {
                let mut rng = stream(self.seed, &[tag::EVAL, (first + i) as u64]);
                standard_normal(&mut rng, [1, c, h, w]).index_axis_move(Axis(0), 0)
            })
            .collect();
        let x = sample_from(self.model, &stack(&noise), self.steps, self.model.cfg.k_max, &cond)?;
        Ok((0..samples.len()).map(|i| to_video(&x, i)).collect())
    }
}

/// Returns the ground-truth render of the target: the renderer as model.
pub struct OracleRelighter;

impl Relighter for OracleRelighter {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn relight(&self, samples: &[&DataSample], _first: usize) -> Result<Vec<Array4<f64>>> {
        Ok(samples.iter().map(|s| to_f64(&s.tuple.v_real)).collect())
    }
}

/// Uniform noise in `[0, 1]`.
pub struct RandomRelighter {
    pub seed: u64,
}

impl Relighter for RandomRelighter {
    fn name(&self) -> String {
        "random".into()
    }

    fn relight(&self, samples: &[&DataSample], first: usize) -> Result<Vec<Array4<f64>>> {
        Ok(samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut rng = stream(self.seed, &[tag::EVAL, (first + i) as u64]);
                Array4::from_shape_simple_fn(s.tuple.v_real.dim(), || rng.gen::<f64>())
            })
            .collect())
    }
}

/// Returns the degraded input unchanged.
pub struct CopyDegradedRelighter;

impl Relighter for CopyDegradedRelighter {
    fn name(&self) -> String {
        "copy_degraded".into()
    }

    fn relight(&self, samples: &[&DataSample], _first: usize) -> Result<Vec<Array4<f64>>> {
        Ok(samples.iter().map(|s| to_f64(&s.tuple.v_deg)).collect())
    }
}

fn relight_all(model: &dyn Relighter, samples: &[&DataSample], batch: usize) -> Result<Vec<Array4<f64>>> {
    let mut out = Vec::with_capacity(samples.len());
    for (k, chunk) in samples.chunks(batch.max(1)).enumerate() {
        out.extend(model.relight(chunk, k * batch.max(1))?);
    }
    Ok(out)
}

/// Held-out quality of a relighter against the real videos.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub n: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub temporal_smoothness_proxy: f64,
    /// Mean over cases; `None` without an estimator.
    pub dense_l2: Option<f64>,
    pub dense_l2_skipped_frames: usize,
}

struct Accum {
    psnr: f64,
    ssim: f64,
    smooth: f64,
    dense: f64,
    skipped: usize,
}

fn accumulate(
    preds: &[Array4<f64>],
    samples: &[&DataSample],
    estimator: Option<&GeometryEstimator>,
) -> Result<Accum> {
    let mut acc = Accum {
        psnr: 0.0,
        ssim: 0.0,
        smooth: 0.0,
        dense: 0.0,
        skipped: 0,
    };
    for (p, s) in preds.iter().zip(samples) {
        let q = quality_metrics(p, &to_f64(&s.tuple.v_real))?;
        acc.psnr += q.psnr;
        acc.ssim += q.ssim;
        acc.smooth += temporal_smoothness_proxy(p)?;
        if let Some(est) = estimator {
            let g = CaseGeometry::of(s);
            let d = dense_l2_error(est, p, &g.maps(), &g.mask)?;
            acc.dense += d.value;
            acc.skipped += d.skipped_frames;
        }
    }
    let n = preds.len() as f64;
    acc.psnr /= n;
    acc.ssim /= n;
    acc.smooth /= n;
    acc.dense /= n;
    Ok(acc)
}

pub fn evaluate(
    model: &dyn Relighter,
    samples: &[DataSample],
    estimator: Option<&GeometryEstimator>,
    batch: usize,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples to evaluate".into()));
    }
    let refs: Vec<&DataSample> = samples.iter().collect();
    let preds = relight_all(model, &refs, batch)?;
    let acc = accumulate(&preds, &refs, estimator)?;
    Ok(EvalReport {
        model: model.name(),
        n: samples.len(),
        psnr: acc.psnr,
        ssim: acc.ssim,
        temporal_smoothness_proxy: acc.smooth,
        dense_l2: estimator.map(|_| acc.dense),
        dense_l2_skipped_frames: acc.skipped,
    })
}

/// One benchmark case: a target that differs from its family base in
/// exactly `attribute`.
#[derive(Clone, Debug)]
pub struct BenchCase {
    pub attribute: Attribute,
    pub base_label: LightingLabel,
    /// Target scene, program and render; `sample.tuple.label` is the target.
    pub sample: DataSample,
}

impl BenchCase {
    pub fn target(&self) -> LightingLabel {
        self.sample.tuple.label
    }
}

#[derive(Clone, Debug)]
pub struct BenchSuite {
    pub seed: u64,
    pub n_per_attribute: usize,
    pub cases: Vec<BenchCase>,
}

impl BenchSuite {
    pub fn family(&self, a: Attribute) -> impl Iterator<Item = &BenchCase> {
        self.cases.iter().filter(move |c| c.attribute == a)
    }
}

pub const DEFAULT_CASES_PER_ATTRIBUTE: usize = 60;
const BENCH_ATTEMPTS: u64 = 400;

/// Representative value ranges for each intensity and temperature class,
/// kept clear of the thresholds.
const INTENSITY_RANGES: [(f64, f64); 3] = [(1050.0, 1800.0), (220.0, 950.0), (60.0, 185.0)];
const TEMPERATURE_RANGES: [(f64, f64); 3] = [(5100.0, 9500.0), (4050.0, 4950.0), (2200.0, 3950.0)];

fn spherical(theta_deg: f64, phi_deg: f64) -> [f64; 3] {
    let (t, p) = (theta_deg.to_radians(), phi_deg.to_radians());
    normalize3([t.sin() * p.cos(), t.sin() * p.sin(), t.cos()])
}

/// Proposal for a light direction of class `target` (index into
/// `Direction::ALL`) and, for the classes that depend on it, an ambient
/// level.
fn propose_direction(rng: &mut impl Rng, target: usize, ambient: f64) -> ([f64; 3], f64) {
    use crate::annotation::Direction as D;
    let horizontal = |rng: &mut dyn rand::RngCore, spread: f64| {
        let base = if rng.gen_bool(0.5) { 0.0 } else { 180.0 };
        base + rng.gen_range(-spread..=spread)
    };
    match D::from_index(target).expect("direction index") {
        D::Front => (spherical(rng.gen_range(0.0..27.0), rng.gen_range(0.0..360.0)), ambient),
        D::Back => (spherical(rng.gen_range(153.0..170.0), rng.gen_range(0.0..360.0)), ambient),
        D::Side => (spherical(rng.gen_range(35.0..145.0), horizontal(rng, 35.0)), ambient),
        D::Top => (spherical(rng.gen_range(35.0..145.0), 90.0 + rng.gen_range(-35.0..35.0)), ambient),
        D::Bottom => (spherical(rng.gen_range(35.0..145.0), 270.0 + rng.gen_range(-35.0..35.0)), ambient),
        D::Split => (spherical(rng.gen_range(75.0..105.0), horizontal(rng, 15.0)), rng.gen_range(0.03..0.08)),
        D::Ambient => (spherical(rng.gen_range(95.0..150.0), rng.gen_range(0.0..360.0)), rng.gen_range(0.2..0.35)),
    }
}

fn mean_intensity(p: &LightProgram) -> f64 {
    p.frames.iter().map(|f| f.intensity).sum::<f64>() / p.frames.len() as f64
}

/// Intensity-weighted mean direction of a program.
fn central_direction(p: &LightProgram) -> [f64; 3] {
    let mut acc = [0.0; 3];
    for f in &p.frames {
        for i in 0..3 {
            acc[i] += f.intensity * f.direction[i];
        }
    }
    normalize3(acc)
}

fn angle_between(a: [f64; 3], b: [f64; 3]) -> f64 {
    crate::scenes::dot3(a, b).clamp(-1.0, 1.0).acos()
}

/// Move the program's light to `dir`, keeping its dynamics.
fn redirect(p: &LightProgram, dir: [f64; 3], ambient: f64, rng: &mut impl Rng) -> LightProgram {
    match p.dynamics {
        Dynamics::MovingSource => {
            let n = p.frames.len();
            let sweep = angle_between(p.frames[0].direction, p.frames[n - 1].direction);
            let axis = random_perpendicular(rng, dir);
            let dirs = sweep_directions(dir, axis, sweep, n);
            LightProgram {
                frames: p
                    .frames
                    .iter()
                    .zip(dirs)
                    .map(|(f, d)| LightSpec {
                        direction: d,
                        ambient,
                        ..*f
                    })
                    .collect(),
                dynamics: Dynamics::MovingSource,
            }
        }
        _ => LightProgram {
            frames: p
                .frames
                .iter()
                .map(|f| LightSpec {
                    direction: dir,
                    ambient,
                    ..*f
                })
                .collect(),
            dynamics: p.dynamics,
        },
    }
}

fn map_frames(p: &LightProgram, f: impl Fn(&LightSpec) -> LightSpec) -> LightProgram {
    LightProgram {
        frames: p.frames.iter().map(f).collect(),
        dynamics: p.dynamics,
    }
}

/// Change one attribute of `(spec, program)` towards category `target`.
fn mutate(
    attribute: Attribute,
    target: usize,
    spec: &SceneSpec,
    program: &LightProgram,
    cfg: &GenConfig,
    rng: &mut impl Rng,
) -> Result<(SceneSpec, LightProgram)> {
    let mut spec = spec.clone();
    let frames = program.frames.len();
    let program = match attribute {
        Attribute::Direction => {
            let (dir, ambient) = propose_direction(rng, target, program.frames[0].ambient);
            redirect(program, dir, ambient, rng)
        }
        Attribute::SourceType => {
            let source = SourceType::from(crate::annotation::Source::from_index(target).expect("source index"));
            map_frames(program, |f| LightSpec {
                source_type: source,
                ..*f
            })
        }
        Attribute::Intensity => {
            let (lo, hi) = INTENSITY_RANGES[target];
            let scale = rng.gen_range(lo..=hi) / mean_intensity(program);
            map_frames(program, |f| LightSpec {
                intensity: f.intensity * scale,
                ..*f
            })
        }
        Attribute::ColorTemperature => {
            let (lo, hi) = TEMPERATURE_RANGES[target];
            let k = rng.gen_range(lo..=hi);
            map_frames(program, |f| LightSpec {
                color_temperature: k,
                ..*f
            })
        }
        Attribute::Temporal => {
            let base = LightSpec {
                direction: central_direction(program),
                intensity: mean_intensity(program),
                ..program.frames[0]
            };
            match Dynamics::from(crate::annotation::Temporal::from_index(target).expect("temporal index")) {
                Dynamics::Static => LightProgram::constant(base, frames),
                Dynamics::IntensityChanging => {
                    let r = cfg.light.ramp_ratio.sample(rng);
                    let from = 2.0 * base.intensity / (1.0 + r);
                    let (a, b) = if rng.gen_bool(0.5) { (from, from * r) } else { (from * r, from) };
                    LightProgram::intensity_ramp(base, a, b, frames)
                }
                Dynamics::MovingSource => {
                    let sweep = cfg.light.sweep_degrees.sample(rng).to_radians();
                    let axis = random_perpendicular(rng, base.direction);
                    LightProgram {
                        frames: sweep_directions(base.direction, axis, sweep, frames)
                            .into_iter()
                            .map(|d| LightSpec { direction: d, ..base })
                            .collect(),
                        dynamics: Dynamics::MovingSource,
                    }
                }
            }
        }
        Attribute::Optical => {
            use crate::annotation::Optical as O;
            let o = O::from_index(target).expect("optical index");
            spec.fog_density = if o == O::Scattering {
                cfg.scene.fog_density.sample(rng)
            } else {
                0.0
            };
            spec.mirror_flag = o == O::RefractionReflection;
            spec.glass_flag = o == O::Transmission;
            program.clone()
        }
    };
    program.validate()?;
    Ok((spec, program))
}

/// Build one case: target category `target` of `attribute`, number `j`
/// within its family, global index `index`.
fn bench_case(seed: u64, attribute: Attribute, target: usize, j: usize, index: usize, cfg: &GenConfig) -> Result<BenchCase> {
    let a = attribute as u64;
    for attempt in 0..BENCH_ATTEMPTS {
        let tags = [tag::BENCH, a, j as u64, attempt];
        let (spec, program, real) = sample_lit_scene(seed, &tags, cfg)?;
        if !is_clean_render(&real.video, &real.normals, &real.mask) {
            continue;
        }
        let base_label = label_from_program(&program, &spec, &real);
        if base_label.get(attribute) == target {
            continue;
        }
        let mut rng = stream(seed, &[tag::BENCH, a, j as u64, attempt, 1]);
        let Ok((tspec, tprog)) = mutate(attribute, target, &spec, &program, cfg, &mut rng) else {
            continue;
        };
        let rendered = render(&tspec, &tprog)?;
        if key_light_reach(&tprog, &rendered) < MIN_KEY_REACH
            || !is_clean_render(&rendered.video, &rendered.normals, &rendered.mask)
        {
            continue;
        }
        let label = label_from_program(&tprog, &tspec, &rendered);
        if label.get(attribute) != target || label.diff(&base_label) != [attribute] {
            continue;
        }
        let sample = make_sample(index, &tspec, &tprog, &rendered, cfg.fill, seed)?;
        return Ok(BenchCase {
            attribute,
            base_label,
            sample,
        });
    }
    Err(Error::Config(format!(
        "no {} case with category {target} after {BENCH_ATTEMPTS} attempts",
        attribute.name()
    )))
}

/// Six families of `n_per_attribute` cases. Target categories cycle through
/// each attribute's classes so every family is balanced.
pub fn bench_generate(seed: u64, n_per_attribute: usize, cfg: &GenConfig) -> Result<BenchSuite> {
    if n_per_attribute == 0 {
        return Err(Error::Config("need at least one case per attribute".into()));
    }
    cfg.validate()?;
    let mut cases = Vec::with_capacity(6 * n_per_attribute);
    for (ai, a) in Attribute::ALL.into_iter().enumerate() {
        for j in 0..n_per_attribute {
            let index = ai * n_per_attribute + j;
            cases.push(bench_case(seed, a, j % a.cardinality(), j, index, cfg)?);
        }
    }
    Ok(BenchSuite {
        seed,
        n_per_attribute,
        cases,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: String,
    pub n: usize,
    /// Controllability per attribute, measured on that attribute's family.
    pub per_attribute: [f64; 6],
    pub avg_score: f64,
    /// Bootstrap 95% interval per attribute.
    pub ci_low: [f64; 6],
    pub ci_high: [f64; 6],
    pub psnr: f64,
    pub ssim: f64,
    pub temporal_smoothness_proxy: f64,
    pub dense_l2: Option<f64>,
    pub degenerate: usize,
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

fn bootstrap_interval(hits: &[bool], rng: &mut impl Rng) -> (f64, f64) {
    let n = hits.len();
    let mut means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| (0..n).filter(|_| hits[rng.gen_range(0..n)]).count() as f64 / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let at = |q: f64| means[((q * (BOOTSTRAP_RESAMPLES - 1) as f64).round()) as usize];
    (at(0.025), at(0.975))
}

pub fn bench_run(
    model: &dyn Relighter,
    estimator: Option<&GeometryEstimator>,
    suite: &BenchSuite,
    batch: usize,
) -> Result<BenchReport> {
    if suite.cases.is_empty() {
        return Err(Error::Empty("benchmark suite has no cases".into()));
    }
    let samples: Vec<&DataSample> = suite.cases.iter().map(|c| &c.sample).collect();
    let preds = relight_all(model, &samples, batch)?;
    let targets: Vec<LightingLabel> = suite.cases.iter().map(BenchCase::target).collect();
    let geometry: Vec<CaseGeometry> = samples.iter().map(|s| CaseGeometry::of(s)).collect();
    let score = lumos_score(&preds, &targets, &geometry)?;
    let mut per_attribute = [0.0; 6];
    let mut ci_low = [0.0; 6];
    let mut ci_high = [0.0; 6];
    for (ai, a) in Attribute::ALL.into_iter().enumerate() {
        let hits: Vec<bool> = suite
            .cases
            .iter()
            .zip(&score.hits)
            .filter(|(c, _)| c.attribute == a)
            .map(|(_, h)| h[ai])
            .collect();
        if hits.is_empty() {
            return Err(Error::Empty(format!("no {} cases", a.name())));
        }
        per_attribute[ai] = hits.iter().filter(|h| **h).count() as f64 / hits.len() as f64;
        let (lo, hi) = bootstrap_interval(&hits, &mut stream(suite.seed, &[tag::BOOTSTRAP, ai as u64]));
        ci_low[ai] = lo;
        ci_high[ai] = hi;
    }
    let acc = accumulate(&preds, &samples, estimator)?;
    Ok(BenchReport {
        model: model.name(),
        n: suite.cases.len(),
        avg_score: mean6(&per_attribute),
        per_attribute,
        ci_low,
        ci_high,
        psnr: acc.psnr,
        ssim: acc.ssim,
        temporal_smoothness_proxy: acc.smooth,
        dense_l2: estimator.map(|_| acc.dense),
        degenerate: score.degenerate,
    })
}

/// Column order of the bench CSV.
pub fn bench_csv_header() -> String {
    let mut cols = vec!["model".to_string(), "n".into()];
    cols.extend(Attribute::ALL.iter().map(|a| a.name().to_string()));
    cols.push("avg".into());
    cols.extend(Attribute::ALL.iter().map(|a| format!("{}_ci_low", a.name())));
    cols.extend(Attribute::ALL.iter().map(|a| format!("{}_ci_high", a.name())));
    cols.extend(["psnr", "ssim", "temporal_smoothness_proxy", "dense_l2", "degenerate"].map(String::from));
    cols.join(",")
}

pub fn bench_csv_row(r: &BenchReport) -> String {
    let mut cols = vec![r.model.replace(',', ";"), r.n.to_string()];
    cols.extend(r.per_attribute.iter().map(f64::to_string));
    cols.push(r.avg_score.to_string());
    cols.extend(r.ci_low.iter().map(f64::to_string));
    cols.extend(r.ci_high.iter().map(f64::to_string));
    cols.push(r.psnr.to_string());
    cols.push(r.ssim.to_string());
    cols.push(r.temporal_smoothness_proxy.to_string());
    cols.push(r.dense_l2.map_or_else(String::new, |v| v.to_string()));
    cols.push(r.degenerate.to_string());
    cols.join(",")
}

/// Markdown table: one row per report, six attribute columns and the average.
pub fn bench_markdown(reports: &[BenchReport]) -> String {
    let mut s = String::from("| Model |");
    for a in Attribute::ALL {
        let _ = write!(s, " {} |", a.name());
    }
    s.push_str(" Avg. Score | PSNR | SSIM | Dense L2 |\n|---|");
    s.push_str(&"---|".repeat(10));
    s.push('\n');
    for r in reports {
        let _ = write!(s, "| {} |", r.model);
        for v in r.per_attribute {
            let _ = write!(s, " {v:.3} |");
        }
        let dense = r.dense_l2.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(s, " {:.3} | {:.3} | {:.4} | {dense} |", r.avg_score, r.psnr, r.ssim);
    }
    s
}

/// Write `bench.csv`, `bench.json` and `bench.md` into `dir`.
pub fn write_bench_reports(dir: &Path, reports: &[BenchReport]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut csv = bench_csv_header();
    csv.push('\n');
    for r in reports {
        csv.push_str(&bench_csv_row(r));
        csv.push('\n');
    }
    let json = serde_json::to_string_pretty(reports).expect("reports serialize");
    for (name, text) in [("bench.csv", csv), ("bench.json", json), ("bench.md", bench_markdown(reports))] {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(v: f64) -> Array4<f64> {
        Array4::from_elem((3, 16, 16, 3), v)
    }

    #[test]
    fn psnr_closed_form_and_cap() {
        let q = quality_metrics(&uniform(0.0), &uniform(0.5)).unwrap();
        assert!((q.psnr - 6.020599913279624).abs() < 1e-12);
        let same = quality_metrics(&uniform(0.3), &uniform(0.3)).unwrap();
        assert_eq!(same.psnr, PSNR_CAP);
        assert!((same.ssim - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_is_symmetric() {
        let mut rng = stream(3, &[]);
        let a = Array4::from_shape_simple_fn((2, 16, 16, 3), || rng.gen::<f64>());
        let b = Array4::from_shape_simple_fn((2, 16, 16, 3), || rng.gen::<f64>());
        let ab = quality_metrics(&a, &b).unwrap().ssim;
        let ba = quality_metrics(&b, &a).unwrap().ssim;
        assert_eq!(ab, ba);
        assert!(ab < 0.5);
    }

    #[test]
    fn smoothness_oracles() {
        assert_eq!(temporal_smoothness_proxy(&uniform(0.4)).unwrap(), 0.0);
        let ramp = Array4::from_shape_fn((5, 4, 4, 3), |(f, r, c, k)| 0.1 * f as f64 + 0.01 * (r + c + k) as f64);
        assert!(temporal_smoothness_proxy(&ramp).unwrap() < 1e-20);
        let flicker = Array4::from_shape_fn((6, 4, 4, 3), |(f, _, _, _)| (f % 2) as f64);
        assert!((temporal_smoothness_proxy(&flicker).unwrap() - 4.0).abs() < 1e-12);
        assert!(temporal_smoothness_proxy(&Array4::zeros((2, 4, 4, 3))).is_err());
    }

    #[test]
    fn lumos_rejects_empty() {
        assert!(matches!(lumos_score(&[], &[], &[]), Err(Error::Empty(_))));
    }
}
