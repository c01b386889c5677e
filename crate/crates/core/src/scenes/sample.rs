//! Seeded sampling of scenes and light programs.

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::render::{footprint_radius, pixel_size, VIEW_EXTENT};
use super::types::{
    dot3, norm3, normalize3, Dynamics, GeometryKind, LightProgram, LightSpec, SceneSpec,
    SourceType,
};
use crate::error::{Error, Result};

/// Closed interval used by the samplers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.hi > self.lo {
            rng.gen_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    fn check(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(Error::Config(format!(
                "{name}: empty range [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Bounds for [`sample_scene`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneBounds {
    pub width: usize,
    pub height: usize,
    /// Number of rendered frames (`T + 1`).
    pub frames: usize,
    pub kinds: Vec<GeometryKind>,
    pub sphere_radius: Range,
    pub heightfield_radius: Range,
    pub dome_height: Range,
    pub bump_amplitude: Range,
    pub bump_width: Range,
    pub plane_half_size: Range,
    pub plane_slope: Range,
    /// Maximum subject speed in pixels per frame.
    pub max_speed: f64,
    pub backdrop_albedo: Range,
    pub fog_probability: f64,
    pub fog_density: Range,
    pub mirror_probability: f64,
    pub glass_probability: f64,
}

impl Default for SceneBounds {
    fn default() -> Self {
        Self {
            width: 32,
            height: 32,
            frames: 5,
            kinds: GeometryKind::ALL.to_vec(),
            sphere_radius: Range::new(0.8, 1.3),
            heightfield_radius: Range::new(1.0, 1.4),
            dome_height: Range::new(0.4, 0.9),
            bump_amplitude: Range::new(-0.2, 0.3),
            bump_width: Range::new(0.25, 0.45),
            plane_half_size: Range::new(0.7, 1.0),
            plane_slope: Range::new(-0.35, 0.35),
            max_speed: 1.0,
            backdrop_albedo: Range::new(0.3, 0.8),
            fog_probability: 0.2,
            fog_density: Range::new(0.08, 0.3),
            mirror_probability: 0.15,
            glass_probability: 0.15,
        }
    }
}

impl SceneBounds {
    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::Config("no geometry kinds allowed".into()));
        }
        if self.width < 8 || self.height < 8 || self.frames == 0 {
            return Err(Error::Config(format!(
                "image {}x{} with {} frames is too small",
                self.width, self.height, self.frames
            )));
        }
        for (name, r) in [
            ("sphere_radius", self.sphere_radius),
            ("heightfield_radius", self.heightfield_radius),
            ("dome_height", self.dome_height),
            ("bump_amplitude", self.bump_amplitude),
            ("bump_width", self.bump_width),
            ("plane_half_size", self.plane_half_size),
            ("plane_slope", self.plane_slope),
            ("backdrop_albedo", self.backdrop_albedo),
            ("fog_density", self.fog_density),
        ] {
            r.check(name)?;
        }
        if self.sphere_radius.lo <= 0.0
            || self.heightfield_radius.lo <= 0.0
            || self.plane_half_size.lo <= 0.0
            || self.bump_width.lo <= 0.0
        {
            return Err(Error::Config("subject sizes must be positive".into()));
        }
        if self.backdrop_albedo.lo < 0.0 || self.backdrop_albedo.hi > 1.0 {
            return Err(Error::Config("backdrop albedo outside [0, 1]".into()));
        }
        let probs = [
            self.fog_probability,
            self.mirror_probability,
            self.glass_probability,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || probs.iter().sum::<f64>() > 1.0 {
            return Err(Error::Config("optical probabilities must sum to <= 1".into()));
        }
        if self.fog_density.lo < 0.0 {
            return Err(Error::Config("fog density must be >= 0".into()));
        }
        let half_view = VIEW_EXTENT * self.width.min(self.height) as f64 / self.width as f64 / 2.0;
        for kind in &self.kinds {
            let r = self.max_footprint(*kind);
            if r + 2.0 * pixel_size(self.width) >= half_view {
                return Err(Error::Config(format!(
                    "{kind:?} footprint {r} does not fit inside the frame"
                )));
            }
        }
        if !(self.max_speed >= 0.0) {
            return Err(Error::Config("max_speed must be >= 0".into()));
        }
        Ok(())
    }

    fn max_footprint(&self, kind: GeometryKind) -> f64 {
        match kind {
            GeometryKind::Sphere => self.sphere_radius.hi,
            GeometryKind::Heightfield => self.heightfield_radius.hi,
            GeometryKind::Plane => self.plane_half_size.hi * std::f64::consts::SQRT_2,
        }
    }
}

/// Which optical set-up a scene uses; at most one is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpticalChoice {
    None,
    Fog,
    Mirror,
    Glass,
}

/// Draw a scene. A pure function of the generator state and `bounds`.
pub fn sample_scene(rng: &mut impl Rng, bounds: &SceneBounds) -> Result<SceneSpec> {
    bounds.validate()?;
    let kind = *bounds.kinds.choose(rng).expect("validated non-empty");
    let params = sample_geometry_params(rng, bounds, kind);
    let id = rng.gen::<u64>();
    let albedo_map = sample_backdrop(rng, bounds);
    let path = sample_path(rng, bounds, footprint_radius(kind, &params));

    let u: f64 = rng.gen();
    let optical = if u < bounds.fog_probability {
        OpticalChoice::Fog
    } else if u < bounds.fog_probability + bounds.mirror_probability {
        OpticalChoice::Mirror
    } else if u < bounds.fog_probability + bounds.mirror_probability + bounds.glass_probability {
        OpticalChoice::Glass
    } else {
        OpticalChoice::None
    };
    let fog_density = if optical == OpticalChoice::Fog {
        bounds.fog_density.sample(rng)
    } else {
        0.0
    };
    Ok(SceneSpec {
        id,
        width: bounds.width,
        height: bounds.height,
        frames: bounds.frames,
        geometry_kind: kind,
        geometry_params: params,
        albedo_map,
        subject_center_path: path,
        fog_density,
        mirror_flag: optical == OpticalChoice::Mirror,
        glass_flag: optical == OpticalChoice::Glass,
    })
}

pub(crate) fn sample_geometry_params(
    rng: &mut impl Rng,
    bounds: &SceneBounds,
    kind: GeometryKind,
) -> Vec<f64> {
    match kind {
        GeometryKind::Sphere => vec![bounds.sphere_radius.sample(rng)],
        GeometryKind::Heightfield => {
            let r = bounds.heightfield_radius.sample(rng);
            let mut p = vec![r, bounds.dome_height.sample(rng)];
            for _ in 0..3 {
                let ang = rng.gen_range(0.0..std::f64::consts::TAU);
                let rad = rng.gen_range(0.0..0.6) * r;
                p.extend([
                    bounds.bump_amplitude.sample(rng),
                    rad * ang.cos(),
                    rad * ang.sin(),
                    bounds.bump_width.sample(rng),
                ]);
            }
            p
        }
        GeometryKind::Plane => vec![
            bounds.plane_half_size.sample(rng),
            bounds.plane_slope.sample(rng),
            bounds.plane_slope.sample(rng),
        ],
    }
}

/// Smooth backdrop: a base colour plus a linear gradient, clipped to the
/// configured albedo range.
fn sample_backdrop(rng: &mut impl Rng, bounds: &SceneBounds) -> Array3<f64> {
    let base: [f64; 3] = std::array::from_fn(|_| bounds.backdrop_albedo.sample(rng));
    let gx: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-0.1..0.1));
    let gy: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-0.1..0.1));
    let (h, w) = (bounds.height, bounds.width);
    Array3::from_shape_fn((h, w, 3), |(r, c, ch)| {
        let u = c as f64 / (w - 1) as f64 - 0.5;
        let v = r as f64 / (h - 1) as f64 - 0.5;
        (base[ch] + gx[ch] * u + gy[ch] * v).clamp(bounds.backdrop_albedo.lo, bounds.backdrop_albedo.hi)
    })
}

/// Linear subject motion that keeps the footprint (plus one pixel) inside
/// the frame on every frame.
fn sample_path(rng: &mut impl Rng, bounds: &SceneBounds, footprint: f64) -> Vec<[f64; 2]> {
    let px = pixel_size(bounds.width);
    let margin = footprint / px + 1.0;
    let (w, h) = (bounds.width as f64, bounds.height as f64);
    let (lo_x, hi_x) = (margin, w - margin);
    let (lo_y, hi_y) = (margin, h - margin);
    let steps = (bounds.frames - 1) as f64;
    let speed = rng.gen_range(0.0..=bounds.max_speed);
    let ang = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut v = [speed * ang.cos(), speed * ang.sin()];
    // Shrink the velocity until the whole path fits.
    for _ in 0..60 {
        if (v[0] * steps).abs() <= hi_x - lo_x && (v[1] * steps).abs() <= hi_y - lo_y {
            break;
        }
        v = [v[0] * 0.5, v[1] * 0.5];
    }
    let start_range = |lo: f64, hi: f64, d: f64| {
        let (a, b) = if d >= 0.0 { (lo, hi - d) } else { (lo - d, hi) };
        (a, b.max(a))
    };
    let (ax, bx) = start_range(lo_x, hi_x, v[0] * steps);
    let (ay, by) = start_range(lo_y, hi_y, v[1] * steps);
    let x0 = if bx > ax { rng.gen_range(ax..=bx) } else { ax };
    let y0 = if by > ay { rng.gen_range(ay..=by) } else { ay };
    (0..bounds.frames)
        .map(|f| [x0 + v[0] * f as f64, y0 + v[1] * f as f64])
        .collect()
}

/// Bounds for [`sample_light_program`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightBounds {
    /// Prior mean of the light direction (normalised on use).
    pub direction_mean: [f64; 3],
    /// Standard deviation of the isotropic Gaussian perturbation added to
    /// the mean before normalising.
    pub direction_spread: f64,
    /// Intensity range, sampled log-uniformly.
    pub intensity: Range,
    pub temperature: Range,
    pub ambient: Range,
    /// Relative weights of static / intensity-changing / moving programs.
    pub dynamics_weights: [f64; 3],
    /// Ratio between ramp endpoints of an intensity-changing program.
    pub ramp_ratio: Range,
    /// Total angular sweep of a moving source, degrees.
    pub sweep_degrees: Range,
    pub sources: Vec<SourceType>,
}

impl Default for LightBounds {
    fn default() -> Self {
        Self {
            direction_mean: [0.0, 0.2, 1.0],
            direction_spread: 0.8,
            intensity: Range::new(60.0, 1800.0),
            temperature: Range::new(2200.0, 9500.0),
            ambient: Range::new(0.03, 0.35),
            dynamics_weights: [1.0, 1.0, 1.0],
            ramp_ratio: Range::new(1.3, 2.5),
            sweep_degrees: Range::new(20.0, 50.0),
            sources: SourceType::ALL.to_vec(),
        }
    }
}

impl LightBounds {
    pub fn validate(&self) -> Result<()> {
        if norm3(self.direction_mean) < 1e-12 {
            return Err(Error::Config("direction prior mean is zero".into()));
        }
        if !(self.direction_spread >= 0.0) {
            return Err(Error::Config("direction spread must be >= 0".into()));
        }
        for (name, r) in [
            ("intensity", self.intensity),
            ("temperature", self.temperature),
            ("ambient", self.ambient),
            ("ramp_ratio", self.ramp_ratio),
            ("sweep_degrees", self.sweep_degrees),
        ] {
            r.check(name)?;
        }
        if self.intensity.lo <= 0.0 {
            return Err(Error::Config("intensity must be positive".into()));
        }
        if self.temperature.lo < 2000.0 || self.temperature.hi > 10000.0 {
            return Err(Error::Config("temperature outside [2000, 10000]".into()));
        }
        if self.ambient.lo < 0.0 || self.ramp_ratio.lo < 1.0 {
            return Err(Error::Config("ambient >= 0 and ramp ratio >= 1 required".into()));
        }
        if self.dynamics_weights.iter().any(|w| *w < 0.0)
            || self.dynamics_weights.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::Config("dynamics weights must be >= 0 and not all zero".into()));
        }
        if self.sources.is_empty() {
            return Err(Error::Config("no source types allowed".into()));
        }
        Ok(())
    }

    /// Only the given dynamics kind can be drawn.
    pub fn forcing(mut self, d: Dynamics) -> Self {
        self.dynamics_weights = [0.0; 3];
        self.dynamics_weights[d as usize] = 1.0;
        self
    }
}

pub fn sample_direction(rng: &mut impl Rng, mean: [f64; 3], spread: f64) -> [f64; 3] {
    let m = normalize3(mean);
    loop {
        let v: [f64; 3] = std::array::from_fn(|i| {
            let z: f64 = StandardNormal.sample(rng);
            m[i] + spread * z
        });
        if norm3(v) > 1e-6 {
            return normalize3(v);
        }
    }
}

fn log_uniform(rng: &mut impl Rng, r: Range) -> f64 {
    if r.hi > r.lo {
        (rng.gen_range(r.lo.ln()..=r.hi.ln())).exp().clamp(r.lo, r.hi)
    } else {
        r.lo
    }
}

/// Rodrigues rotation of `v` about unit `axis` by `angle` radians.
pub fn rotate(v: [f64; 3], axis: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    let k = axis;
    let kxv = [
        k[1] * v[2] - k[2] * v[1],
        k[2] * v[0] - k[0] * v[2],
        k[0] * v[1] - k[1] * v[0],
    ];
    let kdv = dot3(k, v);
    std::array::from_fn(|i| v[i] * c + kxv[i] * s + k[i] * kdv * (1.0 - c))
}

/// A unit vector perpendicular to `v`, drawn uniformly around it.
pub fn random_perpendicular(rng: &mut impl Rng, v: [f64; 3]) -> [f64; 3] {
    loop {
        let u: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let d = dot3(u, v);
        let p = [u[0] - d * v[0], u[1] - d * v[1], u[2] - d * v[2]];
        if norm3(p) > 1e-6 {
            return normalize3(p);
        }
    }
}

/// Directions sweeping `sweep` radians through `center`, one per frame.
pub fn sweep_directions(center: [f64; 3], axis: [f64; 3], sweep: f64, frames: usize) -> Vec<[f64; 3]> {
    (0..frames)
        .map(|f| {
            let u = if frames > 1 {
                f as f64 / (frames - 1) as f64 - 0.5
            } else {
                0.0
            };
            normalize3(rotate(center, axis, u * sweep))
        })
        .collect()
}

/// Draw a light program with `t + 1` frames.
pub fn sample_light_program(rng: &mut impl Rng, bounds: &LightBounds, t: usize) -> Result<LightProgram> {
    if t < 1 {
        return Err(Error::Config("a light program needs T >= 1".into()));
    }
    bounds.validate()?;
    let frames = t + 1;
    let total: f64 = bounds.dynamics_weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut dynamics = Dynamics::Static;
    for (d, w) in Dynamics::ALL.iter().zip(bounds.dynamics_weights) {
        if w > 0.0 && u < w {
            dynamics = *d;
            break;
        }
        u -= w;
        if w > 0.0 {
            dynamics = *d;
        }
    }
    let base = LightSpec {
        direction: sample_direction(rng, bounds.direction_mean, bounds.direction_spread),
        source_type: *bounds.sources.choose(rng).expect("validated non-empty"),
        intensity: log_uniform(rng, bounds.intensity),
        color_temperature: bounds.temperature.sample(rng),
        ambient: bounds.ambient.sample(rng),
    };
    let program = match dynamics {
        Dynamics::Static => LightProgram::constant(base, frames),
        Dynamics::IntensityChanging => {
            let ratio = bounds.ramp_ratio.sample(rng).max(1.0);
            let (lo, hi) = (bounds.intensity.lo, bounds.intensity.hi);
            // Keep both endpoints inside the intensity range.
            let ratio = ratio.min(hi / lo);
            let a = base.intensity.clamp(lo, hi / ratio);
            let (from, to) = if rng.gen_bool(0.5) {
                (a, a * ratio)
            } else {
                (a * ratio, a)
            };
            LightProgram::intensity_ramp(base, from, to, frames)
        }
        Dynamics::MovingSource => {
            let sweep = bounds.sweep_degrees.sample(rng).to_radians();
            let axis = random_perpendicular(rng, base.direction);
            let dirs = sweep_directions(base.direction, axis, sweep, frames);
            LightProgram {
                frames: dirs
                    .into_iter()
                    .map(|d| LightSpec {
                        direction: d,
                        ..base
                    })
                    .collect(),
                dynamics: Dynamics::MovingSource,
            }
        }
    };
    program.validate()?;
    Ok(program)
}
