use ndarray::{Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Sphere,
    Heightfield,
    Plane,
}

impl GeometryKind {
    pub const ALL: [GeometryKind; 3] = [
        GeometryKind::Sphere,
        GeometryKind::Heightfield,
        GeometryKind::Plane,
    ];
}

/// Parametric scene: one subject in front of a flat backdrop, seen by an
/// orthographic camera.
///
/// `geometry_params` layout by kind:
/// - sphere: `[radius]`
/// - heightfield: `[radius, dome_height, (amp, cx, cy, width) x 3]`
/// - plane: `[half_size, slope_x, slope_y]`
///
/// All lengths are scene units. `subject_center_path` holds one subject
/// centre per frame in pixel coordinates `(col, row)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub id: u64,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub geometry_kind: GeometryKind,
    pub geometry_params: Vec<f64>,
    /// Backdrop reflectance, `(height, width, 3)`. The subject itself is a
    /// calibrated grey of reflectance [`crate::scenes::SUBJECT_ALBEDO`].
    pub albedo_map: Array3<f64>,
    pub subject_center_path: Vec<[f64; 2]>,
    pub fog_density: f64,
    pub mirror_flag: bool,
    pub glass_flag: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceType {
    Natural,
    Artificial,
    Rendering,
}

impl SourceType {
    pub const ALL: [SourceType; 3] = [
        SourceType::Natural,
        SourceType::Artificial,
        SourceType::Rendering,
    ];
}

/// One frame of illumination.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightSpec {
    /// Unit vector from the surface towards the light. `+z` points from the
    /// subject to the camera.
    pub direction: [f64; 3],
    pub source_type: SourceType,
    /// Lumen-like scalar; shading uses `intensity / 1000`.
    pub intensity: f64,
    /// Kelvin, within `[2000, 10000]`.
    pub color_temperature: f64,
    pub ambient: f64,
}

impl LightSpec {
    pub fn validate(&self) -> Result<()> {
        let n = norm3(self.direction);
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("light direction has norm {n}")));
        }
        if !(self.intensity > 0.0 && self.intensity.is_finite()) {
            return Err(Error::Config(format!(
                "light intensity must be positive, got {}",
                self.intensity
            )));
        }
        if !(2000.0..=10000.0).contains(&self.color_temperature) {
            return Err(Error::Config(format!(
                "colour temperature {} outside [2000, 10000]",
                self.color_temperature
            )));
        }
        if !(self.ambient >= 0.0 && self.ambient.is_finite()) {
            return Err(Error::Config(format!("ambient {} < 0", self.ambient)));
        }
        Ok(())
    }

    pub fn intensity_scaled(&self) -> f64 {
        self.intensity / 1000.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    Static,
    IntensityChanging,
    MovingSource,
}

impl Dynamics {
    pub const ALL: [Dynamics; 3] = [
        Dynamics::Static,
        Dynamics::IntensityChanging,
        Dynamics::MovingSource,
    ];
}

/// Per-frame lighting schedule (`T + 1` frames).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightProgram {
    pub frames: Vec<LightSpec>,
    pub dynamics: Dynamics,
}

impl LightProgram {
    pub fn constant(light: LightSpec, frames: usize) -> Self {
        Self {
            frames: vec![light; frames],
            dynamics: Dynamics::Static,
        }
    }

    /// Fixed direction, intensity ramping linearly from `from` to `to`.
    pub fn intensity_ramp(base: LightSpec, from: f64, to: f64, frames: usize) -> Self {
        let frames_v = (0..frames)
            .map(|f| {
                let u = if frames > 1 {
                    f as f64 / (frames - 1) as f64
                } else {
                    0.0
                };
                LightSpec {
                    intensity: from + (to - from) * u,
                    ..base
                }
            })
            .collect();
        Self {
            frames: frames_v,
            dynamics: Dynamics::IntensityChanging,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .frames
            .first()
            .ok_or_else(|| Error::Config("light program has no frames".into()))?;
        for f in &self.frames {
            f.validate()?;
        }
        let same_dir = self.frames.iter().all(|f| f.direction == first.direction);
        let same_int = self.frames.iter().all(|f| f.intensity == first.intensity);
        let ok = match self.dynamics {
            Dynamics::Static => self.frames.iter().all(|f| f == first),
            Dynamics::IntensityChanging => {
                let inc = self
                    .frames
                    .windows(2)
                    .all(|w| w[1].intensity >= w[0].intensity);
                let dec = self
                    .frames
                    .windows(2)
                    .all(|w| w[1].intensity <= w[0].intensity);
                same_dir && (inc || dec)
            }
            Dynamics::MovingSource => same_int && (!same_dir || self.frames.len() == 1),
        };
        if !ok {
            return Err(Error::Config(format!(
                "light program violates {:?} invariants",
                self.dynamics
            )));
        }
        Ok(())
    }
}

/// Everything the renderer produces for one scene under one light program.
/// Arrays are frame-major: video `(F, H, W, 3)`, depth `(F, H, W)`,
/// normals `(F, H, W, 3)`, mask `(F, H, W)` with 1 on the subject.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedSample {
    pub video: Array4<f64>,
    pub depth: Array3<f64>,
    pub normals: Array4<f64>,
    pub mask: Array3<u8>,
}

impl RenderedSample {
    pub fn frames(&self) -> usize {
        self.video.shape()[0]
    }
}

pub(crate) fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub(crate) fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let n = norm3(v);
    [v[0] / n, v[1] / n, v[2] / n]
}

pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
