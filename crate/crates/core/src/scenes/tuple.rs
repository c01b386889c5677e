//! Training tuples `(v_deg, v_bg, mask, label) -> v_real` and the seeded
//! pipeline that produces them.

use ndarray::{Array3, Array4, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::degrade::{degrade, Degradation};
use super::fill::{gaussian_background_fill, FillMode};
use super::render::render;
use super::sample::{sample_light_program, sample_scene, LightBounds, SceneBounds};
use super::types::{dot3, LightProgram, RenderedSample, SceneSpec};
use crate::annotation::{label_from_program, LightingLabel};
use crate::error::{Error, Result};
use crate::rng::{stream, tag};

/// Supervised unit. Videos are `(F, H, W, 3)`; stored in single precision
/// so the on-disk form round-trips exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingTuple {
    pub v_real: Array4<f32>,
    pub v_deg: Array4<f32>,
    /// Background fill with the subject region zeroed.
    pub v_bg: Array4<f32>,
    pub mask: Array3<u8>,
    /// Ground-truth geometry of the real render.
    pub depth: Array3<f32>,
    pub normals: Array4<f32>,
    pub label: LightingLabel,
}

impl TrainingTuple {
    pub fn frames(&self) -> usize {
        self.v_real.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.v_real.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.v_real.shape()[2]
    }
}

pub fn to_f32<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> ndarray::Array<f32, D> {
    a.mapv(|v| v as f32)
}

pub fn to_f64<D: ndarray::Dimension>(a: &ndarray::Array<f32, D>) -> ndarray::Array<f64, D> {
    a.mapv(f64::from)
}

/// Assemble a tuple from two renders of the same scene.
pub fn build_tuple(
    real: &RenderedSample,
    deg: &RenderedSample,
    label: LightingLabel,
    mode: FillMode,
    rng: &mut impl Rng,
) -> Result<TrainingTuple> {
    if real.mask != deg.mask {
        return Err(Error::GeometryMismatch("subject masks differ".into()));
    }
    if real.depth != deg.depth || real.normals != deg.normals {
        return Err(Error::GeometryMismatch("depth or normals differ".into()));
    }
    let mut v_deg = real.video.clone();
    Zip::indexed(&mut v_deg).for_each(|(f, r, c, k), v| {
        if real.mask[[f, r, c]] == 1 {
            *v = deg.video[[f, r, c, k]];
        }
    });
    let mut v_bg = gaussian_background_fill(&real.video, &real.mask, mode, rng)?;
    Zip::indexed(&mut v_bg).for_each(|(f, r, c, _), v| {
        if real.mask[[f, r, c]] == 1 {
            *v = 0.0;
        }
    });
    Ok(TrainingTuple {
        v_real: to_f32(&real.video),
        v_deg: to_f32(&v_deg),
        v_bg: to_f32(&v_bg),
        mask: real.mask.clone(),
        depth: to_f32(&real.depth),
        normals: to_f32(&real.normals),
        label,
    })
}

/// Minimum of `max n.l` over frames: how well the key light reaches the
/// visible subject in its worst frame.
pub fn key_light_reach(program: &LightProgram, geometry: &RenderedSample) -> f64 {
    let mut worst = f64::INFINITY;
    for (f, light) in program.frames.iter().enumerate() {
        let mut best = f64::NEG_INFINITY;
        let normals = geometry.normals.index_axis(ndarray::Axis(0), f);
        for ((r, c), &m) in geometry.mask.index_axis(ndarray::Axis(0), f).indexed_iter() {
            if m == 1 {
                let n = [normals[[r, c, 0]], normals[[r, c, 1]], normals[[r, c, 2]]];
                best = best.max(dot3(n, light.direction));
            }
        }
        worst = worst.min(best);
    }
    worst
}

/// Programs whose key light reaches the subject less than this (as a
/// cosine) in some frame are redrawn by the generators.
pub const MIN_KEY_REACH: f64 = 0.1;

/// Provenance of a tuple, stored in the sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub index: usize,
    pub scene: SceneSpec,
    pub real_program: LightProgram,
    pub degraded_program: LightProgram,
    pub degradation_index: usize,
    pub label: LightingLabel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSample {
    pub meta: SampleMeta,
    pub tuple: TrainingTuple,
}

/// Everything that determines a generated dataset besides the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub scene: SceneBounds,
    pub light: LightBounds,
    /// Frames minus one.
    pub t: usize,
    pub fill: FillMode,
    pub max_attempts: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            scene: SceneBounds::default(),
            light: LightBounds::default(),
            t: 4,
            fill: FillMode::Gaussian,
            max_attempts: 200,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scene.frames != self.t + 1 {
            return Err(Error::Config(format!(
                "scene frames {} must equal t + 1 = {}",
                self.scene.frames,
                self.t + 1
            )));
        }
        self.scene.validate()?;
        self.light.validate()
    }
}

/// Draw a scene and a light program whose key light reaches the subject in
/// every frame, and render it.
pub fn sample_lit_scene(
    seed: u64,
    tags: &[u64],
    cfg: &GenConfig,
) -> Result<(SceneSpec, LightProgram, RenderedSample)> {
    for attempt in 0..cfg.max_attempts as u64 {
        let mut path = tags.to_vec();
        path.push(attempt);
        let spec = sample_scene(&mut stream(seed, &[&path[..], &[tag::SCENE]].concat()), &cfg.scene)?;
        let program = sample_light_program(&mut stream(seed, &[&path[..], &[tag::LIGHT]].concat()), &cfg.light, cfg.t)?;
        let real = render(&spec, &program)?;
        if key_light_reach(&program, &real) >= MIN_KEY_REACH {
            return Ok((spec, program, real));
        }
    }
    Err(Error::Config(format!(
        "no lit scene found in {} attempts",
        cfg.max_attempts
    )))
}

/// Build a tuple for a given scene and real program.
pub fn make_sample(
    index: usize,
    spec: &SceneSpec,
    program: &LightProgram,
    real: &RenderedSample,
    fill: FillMode,
    seed: u64,
) -> Result<DataSample> {
    let label = label_from_program(program, spec, real);
    let Degradation {
        index: degradation_index,
        program: degraded_program,
        ..
    } = degrade(spec, program, &mut stream(seed, &[tag::DEGRADE_DRAW, index as u64]))?;
    let deg = render(spec, &degraded_program)?;
    let tuple = build_tuple(
        real,
        &deg,
        label,
        fill,
        &mut stream(seed, &[tag::FILL, index as u64]),
    )?;
    Ok(DataSample {
        meta: SampleMeta {
            index,
            scene: spec.clone(),
            real_program: program.clone(),
            degraded_program,
            degradation_index,
            label,
        },
        tuple,
    })
}

/// Sample number `index` of the dataset generated from `seed`.
pub fn generate_sample(seed: u64, index: usize, cfg: &GenConfig) -> Result<DataSample> {
    let (spec, program, real) = sample_lit_scene(seed, &[tag::SPLIT, index as u64], cfg)?;
    make_sample(index, &spec, &program, &real, cfg.fill, seed)
}

pub fn generate_dataset(seed: u64, n: usize, cfg: &GenConfig) -> Result<Vec<DataSample>> {
    cfg.validate()?;
    (0..n).map(|i| generate_sample(seed, i, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GenConfig {
        let mut cfg = GenConfig::default();
        cfg.scene.width = 16;
        cfg.scene.height = 16;
        cfg.scene.frames = 3;
        cfg.scene.sphere_radius = super::super::sample::Range::new(0.8, 1.0);
        cfg.scene.heightfield_radius = super::super::sample::Range::new(0.8, 1.0);
        cfg.scene.plane_half_size = super::super::sample::Range::new(0.5, 0.6);
        cfg.t = 2;
        cfg
    }

    #[test]
    fn background_is_preserved_in_degraded_video() {
        for s in generate_dataset(3, 4, &small()).unwrap() {
            let t = &s.tuple;
            Zip::indexed(&t.v_deg).for_each(|(f, r, c, k), v| {
                if t.mask[[f, r, c]] == 0 {
                    assert_eq!(v.to_bits(), t.v_real[[f, r, c, k]].to_bits());
                }
            });
        }
    }

    #[test]
    fn identity_degradation_reproduces_real() {
        let cfg = small();
        let (spec, program, real) = sample_lit_scene(1, &[0], &cfg).unwrap();
        let label = label_from_program(&program, &spec, &real);
        let t = build_tuple(&real, &real, label, FillMode::Pure, &mut stream(0, &[])).unwrap();
        assert_eq!(t.v_deg, t.v_real);
    }

    #[test]
    fn mask_mismatch_is_rejected() {
        let cfg = small();
        let (spec, program, real) = sample_lit_scene(1, &[0], &cfg).unwrap();
        let label = label_from_program(&program, &spec, &real);
        let mut other = real.clone();
        other.mask[[0, 0, 0]] ^= 1;
        let r = build_tuple(&real, &other, label, FillMode::Pure, &mut stream(0, &[]));
        assert!(matches!(r, Err(Error::GeometryMismatch(_))));
    }

    #[test]
    fn subject_region_of_background_input_is_blank() {
        let s = generate_sample(9, 0, &small()).unwrap();
        Zip::indexed(&s.tuple.v_bg).for_each(|(f, r, c, _), v| {
            if s.tuple.mask[[f, r, c]] == 1 {
                assert_eq!(*v, 0.0);
            }
        });
    }
}
