//! Threshold rules shared by the program labeler and the pixel classifier.

use ndarray::{Array3, Array4};

use super::label::{Direction, Intensity, LightingLabel, Optical, Source, Temperature, Temporal};
use crate::scenes::{dot3, normalize3, LightProgram, RenderedSample, SceneSpec, CAMERA_AXIS};

/// Above this many lumens the light is glare.
pub const GLARE_ABOVE: f64 = 1000.0;
/// At or above this many lumens (and up to [`GLARE_ABOVE`]) the light is moderate.
pub const MODERATE_FROM: f64 = 200.0;
/// At or above this temperature the tone is cool.
pub const COOL_FROM: f64 = 5000.0;
/// At or above this temperature (and below [`COOL_FROM`]) the tone is neutral.
pub const NEUTRAL_FROM: f64 = 4000.0;
/// Angle to the camera axis under which a light counts as frontal.
pub const FRONT_MAX_DEG: f64 = 30.0;
/// Angle to the camera axis over which a light counts as back light.
pub const BACK_MIN_DEG: f64 = 150.0;
/// Left/right brightness ratio above which lighting is split.
pub const SPLIT_RATIO: f64 = 3.0;
/// Direct light weaker than this fraction of the ambient term is ambient.
pub const AMBIENT_FRACTION: f64 = 0.25;

pub fn intensity_class(lumens: f64) -> Intensity {
    if lumens > GLARE_ABOVE {
        Intensity::Glare
    } else if lumens >= MODERATE_FROM {
        Intensity::Moderate
    } else {
        Intensity::Dim
    }
}

pub fn temperature_class(kelvin: f64) -> Temperature {
    if kelvin >= COOL_FROM {
        Temperature::Cool
    } else if kelvin >= NEUTRAL_FROM {
        Temperature::Neutral
    } else {
        Temperature::Warm
    }
}

/// Sector of a unit light direction relative to the camera axis, ignoring
/// the split and ambient cases.
pub fn direction_sector(l: [f64; 3]) -> Direction {
    let theta = dot3(l, CAMERA_AXIS).clamp(-1.0, 1.0).acos().to_degrees();
    if theta < FRONT_MAX_DEG {
        Direction::Front
    } else if theta > BACK_MIN_DEG {
        Direction::Back
    } else if l[0].abs() >= l[1].abs() {
        Direction::Side
    } else if l[1] > 0.0 {
        Direction::Top
    } else {
        Direction::Bottom
    }
}

/// Largest `n.l` over all masked pixels of all frames (`-inf` when the
/// mask is empty).
pub fn max_masked_dot(normals: &Array4<f64>, mask: &Array3<u8>, l: [f64; 3]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for ((f, r, c), &m) in mask.indexed_iter() {
        if m == 1 {
            let n = [normals[[f, r, c, 0]], normals[[f, r, c, 1]], normals[[f, r, c, 2]]];
            best = best.max(dot3(n, l));
        }
    }
    best
}

/// Ratio of the brighter to the darker half of the subject, split at the
/// mask centroid column of each frame and pooled over frames. Brightness is
/// the channel mean.
pub fn left_right_ratio(video: &Array4<f64>, mask: &Array3<u8>) -> f64 {
    let (frames, h, w) = mask.dim();
    let (mut left, mut nl, mut right, mut nr) = (0.0, 0usize, 0.0, 0usize);
    for f in 0..frames {
        let (mut sum_c, mut count) = (0.0, 0usize);
        for r in 0..h {
            for c in 0..w {
                if mask[[f, r, c]] == 1 {
                    sum_c += c as f64;
                    count += 1;
                }
            }
        }
        if count == 0 {
            continue;
        }
        let centroid = sum_c / count as f64;
        for r in 0..h {
            for c in 0..w {
                if mask[[f, r, c]] != 1 {
                    continue;
                }
                let v = (video[[f, r, c, 0]] + video[[f, r, c, 1]] + video[[f, r, c, 2]]) / 3.0;
                let x = c as f64;
                if x < centroid {
                    left += v;
                    nl += 1;
                } else if x > centroid {
                    right += v;
                    nr += 1;
                }
            }
        }
    }
    if nl == 0 || nr == 0 {
        return 1.0;
    }
    let (l, r) = (left / nl as f64, right / nr as f64);
    let (hi, lo) = if l > r { (l, r) } else { (r, l) };
    if lo <= 0.0 {
        if hi > 0.0 {
            f64::INFINITY
        } else {
            1.0
        }
    } else {
        hi / lo
    }
}

/// Aggregate lighting statistics from which the direction label follows.
#[derive(Clone, Copy, Debug)]
pub struct DirectionEvidence {
    /// Intensity-weighted mean light direction, `None` when no frame has
    /// a usable direct light.
    pub dominant: Option<[f64; 3]>,
    /// Mean scaled intensity (`lumens / 1000`).
    pub mean_scaled: f64,
    pub ambient: f64,
    pub split_ratio: f64,
}

/// Direction with precedence ambient, split, then angular sector.
pub fn direction_class(ev: &DirectionEvidence, normals: &Array4<f64>, mask: &Array3<u8>) -> Direction {
    let Some(l) = ev.dominant else {
        return Direction::Ambient;
    };
    let direct = ev.mean_scaled * max_masked_dot(normals, mask, l).max(0.0);
    if direct < AMBIENT_FRACTION * ev.ambient {
        return Direction::Ambient;
    }
    if ev.split_ratio > SPLIT_RATIO {
        return Direction::Split;
    }
    direction_sector(l)
}

/// Intensity-weighted dominant direction `normalize(sum s_f l_f)`.
pub fn dominant_direction(weighted: impl IntoIterator<Item = (f64, [f64; 3])>) -> Option<[f64; 3]> {
    let mut acc = [0.0; 3];
    for (s, l) in weighted {
        for i in 0..3 {
            acc[i] += s * l[i];
        }
    }
    let n = (acc[0] * acc[0] + acc[1] * acc[1] + acc[2] * acc[2]).sqrt();
    (n > 1e-12).then(|| normalize3(acc))
}

pub fn optical_class(fog: bool, mirror: bool, glass: bool) -> Optical {
    if fog {
        Optical::Scattering
    } else if mirror {
        Optical::RefractionReflection
    } else if glass {
        Optical::Transmission
    } else {
        Optical::None
    }
}

/// Label of the lighting a program describes. `geometry` is the render of
/// `spec` under `program`; its normals, mask and video feed the ambient and
/// split rules.
pub fn label_from_program(program: &LightProgram, spec: &SceneSpec, geometry: &RenderedSample) -> LightingLabel {
    let n = program.frames.len().max(1) as f64;
    let lumens = program.frames.iter().map(|f| f.intensity).sum::<f64>() / n;
    let kelvin = program.frames.iter().map(|f| f.color_temperature).sum::<f64>() / n;
    let ambient = program.frames.iter().map(|f| f.ambient).sum::<f64>() / n;
    let ev = DirectionEvidence {
        dominant: dominant_direction(program.frames.iter().map(|f| (f.intensity_scaled(), f.direction))),
        mean_scaled: lumens / 1000.0,
        ambient,
        split_ratio: left_right_ratio(&geometry.video, &geometry.mask),
    };
    LightingLabel {
        direction: direction_class(&ev, &geometry.normals, &geometry.mask),
        source_type: Source::from(program.frames[0].source_type),
        intensity: intensity_class(lumens),
        color_temperature: temperature_class(kelvin),
        temporal: Temporal::from(program.dynamics),
        optical: optical_class(spec.fog_density > 0.0, spec.mirror_flag, spec.glass_flag),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intensity_boundaries() {
        assert_eq!(intensity_class(1500.0), Intensity::Glare);
        assert_eq!(intensity_class(1000.0), Intensity::Moderate);
        assert_eq!(intensity_class(1000.000001), Intensity::Glare);
        assert_eq!(intensity_class(200.0), Intensity::Moderate);
        assert_eq!(intensity_class(199.999), Intensity::Dim);
    }

    #[test]
    fn temperature_boundaries() {
        assert_eq!(temperature_class(3000.0), Temperature::Warm);
        assert_eq!(temperature_class(4000.0), Temperature::Neutral);
        assert_eq!(temperature_class(3999.9), Temperature::Warm);
        assert_eq!(temperature_class(5000.0), Temperature::Cool);
        assert_eq!(temperature_class(4999.9), Temperature::Neutral);
    }

    #[test]
    fn sectors() {
        assert_eq!(direction_sector(CAMERA_AXIS), Direction::Front);
        assert_eq!(direction_sector([0.0, 0.0, -1.0]), Direction::Back);
        assert_eq!(direction_sector(normalize3([1.0, 0.2, 0.3])), Direction::Side);
        assert_eq!(direction_sector(normalize3([-1.0, 0.2, 0.3])), Direction::Side);
        assert_eq!(direction_sector(normalize3([0.1, 1.0, 0.3])), Direction::Top);
        assert_eq!(direction_sector(normalize3([0.1, -1.0, 0.3])), Direction::Bottom);
    }
}
