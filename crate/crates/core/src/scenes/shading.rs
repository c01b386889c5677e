//! Shading model shared by the renderer and the inverse classifier.
//!
//! ```text
//! I_c = clip( albedo_c * gain_c * (ambient + s * tint_c * direct) * exp(-fog * depth) )
//! direct = max(0, n.l) + [mirror] * MIRROR_REFLECTANCE * max(0, n.u)
//! ```
//!
//! with `s = intensity / 1000`, `u = FLOOR_BOUNCE` the direction of light
//! bounced up by a mirror or water floor, and `tint = GLASS_TINT` when the
//! key light passes through glass (identity otherwise).

use serde::Serialize;

use super::types::{dot3, LightSpec, SourceType};

/// Reflectance of the (grey) subject.
pub const SUBJECT_ALBEDO: f64 = 0.25;
/// Fraction of the key light bounced back by a mirror or water floor.
pub const MIRROR_REFLECTANCE: f64 = 0.5;
/// Direction towards the floor that bounces light up onto the subject.
pub const FLOOR_BOUNCE: [f64; 3] = [0.0, -1.0, 0.0];
/// Per-channel transmission of window glass in front of the key light.
pub const GLASS_TINT: [f64; 3] = [0.7, 1.0, 0.85];

/// Temperature anchors of the piecewise-linear gain table. Red and blue
/// always sum to 2, green is 1 before the source-type factor.
pub const GAIN_TABLE: [(f64, [f64; 3]); 3] = [
    (2000.0, [1.3, 1.0, 0.7]),
    (4500.0, [1.0, 1.0, 1.0]),
    (8000.0, [0.75, 1.0, 1.25]),
];

/// Green-channel factor identifying the spectral signature of each source
/// type (broad daylight, phosphor-lit artificial, magenta-leaning CG).
pub fn source_green_factor(source: SourceType) -> f64 {
    match source {
        SourceType::Natural => 1.0,
        SourceType::Artificial => 1.15,
        SourceType::Rendering => 0.85,
    }
}

/// Table gain for a colour temperature, clamped outside the anchors.
pub fn temperature_gain(kelvin: f64) -> [f64; 3] {
    let (t0, g0) = GAIN_TABLE[0];
    let (t2, g2) = GAIN_TABLE[2];
    if kelvin <= t0 {
        return g0;
    }
    if kelvin >= t2 {
        return g2;
    }
    let seg = if kelvin <= GAIN_TABLE[1].0 { 0 } else { 1 };
    let (ta, ga) = GAIN_TABLE[seg];
    let (tb, gb) = GAIN_TABLE[seg + 1];
    let u = (kelvin - ta) / (tb - ta);
    [
        ga[0] + (gb[0] - ga[0]) * u,
        ga[1] + (gb[1] - ga[1]) * u,
        ga[2] + (gb[2] - ga[2]) * u,
    ]
}

/// Full per-channel light gain: temperature table times source signature.
pub fn gain(kelvin: f64, source: SourceType) -> [f64; 3] {
    let mut g = temperature_gain(kelvin);
    g[1] *= source_green_factor(source);
    g
}

/// Inverse of the table on the blue/red ratio. Ratios beyond the anchors
/// clamp to 2000 K or 8000 K.
pub fn temperature_from_blue_red(ratio: f64) -> f64 {
    let r_lo = GAIN_TABLE[0].1[2] / GAIN_TABLE[0].1[0];
    let r_hi = GAIN_TABLE[2].1[2] / GAIN_TABLE[2].1[0];
    if !(ratio > r_lo) {
        return GAIN_TABLE[0].0;
    }
    if ratio >= r_hi {
        return GAIN_TABLE[2].0;
    }
    // On each segment red = ra + dr*u and blue = ba + db*u, so
    // ratio = (ba + db*u) / (ra + dr*u) solves linearly for u.
    for seg in 0..2 {
        let (ta, ga) = GAIN_TABLE[seg];
        let (tb, gb) = GAIN_TABLE[seg + 1];
        let (ra, ba) = (ga[0], ga[2]);
        let (dr, db) = (gb[0] - ga[0], gb[2] - ga[2]);
        let u = (ratio * ra - ba) / (db - ratio * dr);
        if (0.0..=1.0).contains(&u) {
            return ta + (tb - ta) * u;
        }
    }
    GAIN_TABLE[1].0
}

/// Optical set-up of a scene that changes how light reaches surfaces.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Optics {
    pub fog_density: f64,
    pub mirror: bool,
    pub glass: bool,
}

/// Direct (key) light factor before tint: `max(0, n.l)` plus the floor
/// bounce when a mirror is present.
pub fn direct_term(normal: [f64; 3], light_dir: [f64; 3], mirror: bool) -> f64 {
    let mut d = dot3(normal, light_dir).max(0.0);
    if mirror {
        d += MIRROR_REFLECTANCE * dot3(normal, FLOOR_BOUNCE).max(0.0);
    }
    d
}

/// Unclipped radiance of a surface point.
pub fn radiance(
    albedo: [f64; 3],
    normal: [f64; 3],
    depth: f64,
    light: &LightSpec,
    optics: Optics,
) -> [f64; 3] {
    let g = gain(light.color_temperature, light.source_type);
    let direct = light.intensity_scaled() * direct_term(normal, light.direction, optics.mirror);
    let fog = (-optics.fog_density * depth).exp();
    let mut out = [0.0; 3];
    for c in 0..3 {
        let tint = if optics.glass { GLASS_TINT[c] } else { 1.0 };
        out[c] = albedo[c] * g[c] * (light.ambient + direct * tint) * fog;
    }
    out
}

pub fn shade(
    albedo: [f64; 3],
    normal: [f64; 3],
    depth: f64,
    light: &LightSpec,
    optics: Optics,
) -> [f64; 3] {
    radiance(albedo, normal, depth, light, optics).map(|v| v.clamp(0.0, 1.0))
}

/// Serializable description of the gain table for dataset manifests.
#[derive(Debug, Serialize)]
pub struct GainTableDoc {
    pub anchors_kelvin: Vec<f64>,
    pub anchor_gains_rgb: Vec<[f64; 3]>,
    pub source_green_factor: [(SourceType, f64); 3],
    pub subject_albedo: f64,
    pub mirror_reflectance: f64,
    pub glass_tint: [f64; 3],
}

pub fn gain_table_doc() -> GainTableDoc {
    GainTableDoc {
        anchors_kelvin: GAIN_TABLE.iter().map(|a| a.0).collect(),
        anchor_gains_rgb: GAIN_TABLE.iter().map(|a| a.1).collect(),
        source_green_factor: SourceType::ALL.map(|s| (s, source_green_factor(s))),
        subject_albedo: SUBJECT_ALBEDO,
        mirror_reflectance: MIRROR_REFLECTANCE,
        glass_tint: GLASS_TINT,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors_are_exact_and_red_plus_blue_is_two() {
        assert_eq!(temperature_gain(2000.0), [1.3, 1.0, 0.7]);
        assert_eq!(temperature_gain(4500.0), [1.0, 1.0, 1.0]);
        assert_eq!(temperature_gain(9000.0), [0.75, 1.0, 1.25]);
        for k in (2000..=10000).step_by(250) {
            let g = temperature_gain(k as f64);
            assert!((g[0] + g[2] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn blue_red_inverse_recovers_temperature() {
        for k in (2000..=8000).step_by(125) {
            let g = temperature_gain(k as f64);
            let back = temperature_from_blue_red(g[2] / g[0]);
            assert!((back - k as f64).abs() < 1e-6, "{k} -> {back}");
        }
        assert_eq!(temperature_from_blue_red(0.1), 2000.0);
        assert_eq!(temperature_from_blue_red(5.0), 8000.0);
    }

    #[test]
    fn source_factor_only_touches_green() {
        let n = gain(3000.0, SourceType::Natural);
        let a = gain(3000.0, SourceType::Artificial);
        assert_eq!(n[0], a[0]);
        assert_eq!(n[2], a[2]);
        assert!((a[1] - 1.15).abs() < 1e-12);
    }
}
