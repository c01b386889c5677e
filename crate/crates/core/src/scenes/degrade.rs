//! Degradation pool: the subject re-lit under a stylised preset from one of
//! a few canonical directions.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::types::{normalize3, LightProgram, LightSpec, SceneSpec, SourceType};
use crate::error::{Error, Result};
use crate::rng::{stream, tag};

/// Named lighting style used to degrade a subject.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StylePreset {
    pub name: &'static str,
    pub source_type: SourceType,
    pub intensity: f64,
    pub color_temperature: f64,
    pub ambient: f64,
}

pub const STYLE_CATALOG: [StylePreset; 10] = [
    StylePreset { name: "soft window daylight", source_type: SourceType::Natural, intensity: 450.0, color_temperature: 5600.0, ambient: 0.15 },
    StylePreset { name: "warm tungsten lamp", source_type: SourceType::Artificial, intensity: 300.0, color_temperature: 2700.0, ambient: 0.08 },
    StylePreset { name: "neon club light", source_type: SourceType::Artificial, intensity: 700.0, color_temperature: 8500.0, ambient: 0.05 },
    StylePreset { name: "golden hour sun", source_type: SourceType::Natural, intensity: 900.0, color_temperature: 3200.0, ambient: 0.10 },
    StylePreset { name: "overcast sky", source_type: SourceType::Natural, intensity: 250.0, color_temperature: 7000.0, ambient: 0.30 },
    StylePreset { name: "candle glow", source_type: SourceType::Artificial, intensity: 120.0, color_temperature: 2100.0, ambient: 0.04 },
    StylePreset { name: "studio softbox", source_type: SourceType::Artificial, intensity: 600.0, color_temperature: 4500.0, ambient: 0.20 },
    StylePreset { name: "harsh noon sun", source_type: SourceType::Natural, intensity: 1500.0, color_temperature: 6000.0, ambient: 0.10 },
    StylePreset { name: "game engine key light", source_type: SourceType::Rendering, intensity: 800.0, color_temperature: 6500.0, ambient: 0.12 },
    StylePreset { name: "moonlit night", source_type: SourceType::Natural, intensity: 90.0, color_temperature: 9000.0, ambient: 0.06 },
];

/// Left, right, top and bottom, tilted towards the camera.
pub const CANONICAL_DIRECTIONS: [(&str, [f64; 3]); 4] = [
    ("left", [-1.0, 0.0, 0.35]),
    ("right", [1.0, 0.0, 0.35]),
    ("top", [0.0, 1.0, 0.35]),
    ("bottom", [0.0, -1.0, 0.35]),
];

pub const PRESETS_PER_SCENE: usize = 5;
pub const DIRECTIONS_PER_SCENE: usize = 3;

/// One pool entry: a preset from one direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradeConfig {
    pub preset: usize,
    pub direction: usize,
    pub light: LightSpec,
}

impl DegradeConfig {
    pub fn program(&self, frames: usize) -> LightProgram {
        LightProgram::constant(self.light, frames)
    }

    pub fn describe(&self) -> String {
        format!(
            "{} from {}",
            STYLE_CATALOG[self.preset].name, CANONICAL_DIRECTIONS[self.direction].0
        )
    }
}

/// The scene's pool: 5 presets x 3 directions, chosen from the scene id.
pub fn degradation_pool(spec: &SceneSpec) -> Vec<DegradeConfig> {
    let mut rng = stream(spec.id, &[tag::DEGRADE_POOL]);
    let mut presets = index::sample(&mut rng, STYLE_CATALOG.len(), PRESETS_PER_SCENE).into_vec();
    let mut dirs = index::sample(&mut rng, CANONICAL_DIRECTIONS.len(), DIRECTIONS_PER_SCENE).into_vec();
    presets.sort_unstable();
    dirs.sort_unstable();
    let mut pool = Vec::with_capacity(presets.len() * dirs.len());
    for &p in &presets {
        let s = STYLE_CATALOG[p];
        for &d in &dirs {
            pool.push(DegradeConfig {
                preset: p,
                direction: d,
                light: LightSpec {
                    direction: normalize3(CANONICAL_DIRECTIONS[d].1),
                    source_type: s.source_type,
                    intensity: s.intensity,
                    color_temperature: s.color_temperature,
                    ambient: s.ambient,
                },
            });
        }
    }
    pool
}

/// A drawn degradation: its index in the scene's pool and the program.
#[derive(Clone, Debug, PartialEq)]
pub struct Degradation {
    pub index: usize,
    pub config: DegradeConfig,
    pub program: LightProgram,
}

/// Draw uniformly from `pool`, skipping entries identical to `real`.
pub fn degrade_from_pool(
    pool: &[DegradeConfig],
    frames: usize,
    real: &LightProgram,
    rng: &mut impl Rng,
) -> Result<Degradation> {
    let candidates: Vec<usize> = (0..pool.len())
        .filter(|i| pool[*i].program(frames) != *real)
        .collect();
    let &index = candidates
        .choose(rng)
        .ok_or_else(|| Error::Config("degradation pool is empty".into()))?;
    Ok(Degradation {
        index,
        config: pool[index].clone(),
        program: pool[index].program(frames),
    })
}

/// Draw a degradation program for `spec` that differs from `real`.
pub fn degrade(spec: &SceneSpec, real: &LightProgram, rng: &mut impl Rng) -> Result<Degradation> {
    degrade_from_pool(&degradation_pool(spec), spec.frames, real, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn spec(id: u64) -> SceneSpec {
        SceneSpec {
            id,
            width: 16,
            height: 16,
            frames: 3,
            geometry_kind: crate::scenes::GeometryKind::Sphere,
            geometry_params: vec![1.0],
            albedo_map: Array3::from_elem((16, 16, 3), 0.5),
            subject_center_path: vec![[8.0, 8.0]; 3],
            fog_density: 0.0,
            mirror_flag: false,
            glass_flag: false,
        }
    }

    #[test]
    fn pool_has_fifteen_distinct_entries() {
        for id in 0..20 {
            let pool = degradation_pool(&spec(id));
            assert_eq!(pool.len(), 15);
            for i in 0..pool.len() {
                for j in i + 1..pool.len() {
                    assert_ne!(pool[i], pool[j]);
                }
            }
        }
    }

    #[test]
    fn real_program_is_never_drawn() {
        let s = spec(3);
        let pool = degradation_pool(&s);
        let real = pool[4].program(3);
        let mut rng = stream(0, &[]);
        for _ in 0..200 {
            let d = degrade(&s, &real, &mut rng).unwrap();
            assert_ne!(d.index, 4);
            assert_ne!(d.program, real);
        }
    }

    #[test]
    fn empty_pool_is_a_config_error() {
        let real = LightProgram::constant(degradation_pool(&spec(1))[0].light, 3);
        let r = degrade_from_pool(&[], 3, &real, &mut stream(0, &[]));
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
