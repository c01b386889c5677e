//! Model-free lighting classifier: inverts the shading model from pixels,
//! normals and depth, then applies the same rules as the program labeler.
//!
//! Per frame and channel the masked, unsaturated pixels are fitted with
//!
//! ```text
//! I_c = exp(-f * depth) * ( K_c + max(0, n.B_c) + gamma_c * max(0, -n_y) )
//! ```
//!
//! where the hinge's active set is shared across channels and found by
//! alternating least squares from several starting directions. The fog
//! density `f` is shared by all frames and found by a 1-D search; the floor
//! bounce term `gamma` is only fitted under the mirror hypothesis.

use nalgebra::{Matrix4, SMatrix, SVector};
use ndarray::{Array3, Array4};

use super::label::{LightingLabel, Source, Temporal};
use super::rules::{
    direction_class, dominant_direction, intensity_class, left_right_ratio, optical_class,
    temperature_class, DirectionEvidence,
};
use crate::error::{Error, Result};
use crate::scenes::{
    dot3, normalize3, source_green_factor, temperature_from_blue_red, SourceType, FLOOR_BOUNCE,
    GLASS_TINT, MIRROR_REFLECTANCE, SUBJECT_ALBEDO,
};

/// Pixels at or above this value in any channel are treated as clipped.
pub const SATURATION_LEVEL: f64 = 0.999;
/// Fog densities above this are reported as scattering.
pub const FOG_DETECT: f64 = 0.02;
/// Relative intensity spread above which intensity counts as changing.
pub const INTENSITY_SPREAD: f64 = 0.05;
/// Angular spread (degrees) above which the source counts as moving.
pub const ANGLE_SPREAD_DEG: f64 = 3.0;

/// Largest saturated share of the subject for a render to count as clean.
pub const CLEAN_SATURATION: f64 = 0.01;

/// Share of masked pixels with any channel at or above [`SATURATION_LEVEL`].
pub fn saturation_fraction(video: &Array4<f64>, mask: &Array3<u8>) -> f64 {
    let (mut masked, mut sat) = (0usize, 0usize);
    for ((f, r, c), &m) in mask.indexed_iter() {
        if m == 1 {
            masked += 1;
            if (0..3).any(|k| video[[f, r, c, k]] >= SATURATION_LEVEL) {
                sat += 1;
            }
        }
    }
    if masked == 0 {
        0.0
    } else {
        sat as f64 / masked as f64
    }
}

/// Renders the classifier is expected to invert exactly: little clipping and
/// more than one surface orientation in view.
pub fn is_clean_render(video: &Array4<f64>, normals: &Array4<f64>, mask: &Array3<u8>) -> bool {
    if saturation_fraction(video, mask) >= CLEAN_SATURATION {
        return false;
    }
    let mut first: Option<[f64; 3]> = None;
    for ((f, r, c), &m) in mask.indexed_iter() {
        if m != 1 {
            continue;
        }
        let n = [normals[[f, r, c, 0]], normals[[f, r, c, 1]], normals[[f, r, c, 2]]];
        match first {
            None => first = Some(n),
            Some(n0) if (0..3).any(|k| (n[k] - n0[k]).abs() > 1e-6) => return true,
            Some(_) => {}
        }
    }
    false
}

const FOG_MAX: f64 = 0.5;
const FOG_GRID: usize = 20;
const MAX_ACTIVE_SET_ITERS: usize = 30;

type Mat5 = SMatrix<f64, 5, 5>;
type Vec5 = SVector<f64, 5>;

#[derive(Clone, Copy, Debug)]
struct Px {
    n: [f64; 3],
    depth: f64,
    i: [f64; 3],
}

#[derive(Clone, Copy, Debug)]
struct FrameFit {
    k: [f64; 3],
    b: [[f64; 3]; 3],
    gamma: [f64; 3],
    residual: f64,
}

impl FrameFit {
    fn b_sum(&self) -> [f64; 3] {
        std::array::from_fn(|i| self.b[0][i] + self.b[1][i] + self.b[2][i])
    }
}

/// Everything the classifier recovers, before thresholds are applied.
#[derive(Clone, Debug)]
pub struct InferredLighting {
    pub fog_density: f64,
    pub mirror: bool,
    pub glass: bool,
    /// Per-frame scaled intensity (`lumens / 1000`).
    pub scaled_intensity: Vec<f64>,
    pub ambient: Vec<f64>,
    /// Per-frame light direction; `None` when no pixel faces the light.
    pub directions: Vec<Option<[f64; 3]>>,
    pub color_temperature: f64,
    pub green_factor: f64,
}

fn row(n: [f64; 3], active: bool, mirror: bool) -> Vec5 {
    let a = if active { 1.0 } else { 0.0 };
    let bounce = if mirror { dot3(n, FLOOR_BOUNCE).max(0.0) } else { 0.0 };
    Vec5::new(1.0, a * n[0], a * n[1], a * n[2], bounce)
}

fn solve(ata: &Mat5, atb: &Vec5) -> Vec5 {
    let svd = ata.svd(true, true);
    let smax = svd.singular_values.max();
    if smax <= 0.0 {
        return Vec5::zeros();
    }
    svd.solve(atb, smax * 1e-12).unwrap_or_else(|_| Vec5::zeros())
}

fn fit_active(px: &[Px], fog: f64, mirror: bool, active: &[bool]) -> FrameFit {
    let mut ata = Mat5::zeros();
    let mut atb = [Vec5::zeros(); 3];
    let weights: Vec<f64> = px.iter().map(|p| (-fog * p.depth).exp()).collect();
    for ((p, &on), &w) in px.iter().zip(active).zip(&weights) {
        let r = row(p.n, on, mirror) * w;
        ata += r * r.transpose();
        for c in 0..3 {
            atb[c] += r * p.i[c];
        }
    }
    let theta: [Vec5; 3] = std::array::from_fn(|c| solve(&ata, &atb[c]));
    let mut fit = FrameFit {
        k: std::array::from_fn(|c| theta[c][0]),
        b: std::array::from_fn(|c| [theta[c][1], theta[c][2], theta[c][3]]),
        gamma: std::array::from_fn(|c| theta[c][4]),
        residual: 0.0,
    };
    fit.residual = residual(px, &weights, &fit, mirror);
    fit
}

fn residual(px: &[Px], weights: &[f64], fit: &FrameFit, mirror: bool) -> f64 {
    let mut r = 0.0;
    for (p, w) in px.iter().zip(weights) {
        let bounce = if mirror { dot3(p.n, FLOOR_BOUNCE).max(0.0) } else { 0.0 };
        for c in 0..3 {
            let pred = w * (fit.k[c] + dot3(p.n, fit.b[c]).max(0.0) + fit.gamma[c] * bounce);
            r += (p.i[c] - pred).powi(2);
        }
    }
    r
}

/// Alternating active-set fit from one starting direction (`None` starts
/// with an empty active set).
fn fit_from(px: &[Px], fog: f64, mirror: bool, start: Option<[f64; 3]>) -> FrameFit {
    let mut active: Vec<bool> = px
        .iter()
        .map(|p| start.is_some_and(|l| dot3(p.n, l) > 0.0))
        .collect();
    let mut fit = fit_active(px, fog, mirror, &active);
    for _ in 0..MAX_ACTIVE_SET_ITERS {
        let b = fit.b_sum();
        let next: Vec<bool> = px.iter().map(|p| dot3(p.n, b) > 0.0).collect();
        if next == active {
            break;
        }
        let cand = fit_active(px, fog, mirror, &next);
        active = next;
        if cand.residual > fit.residual {
            fit = cand;
            break;
        }
        fit = cand;
    }
    fit
}

fn start_directions() -> Vec<Option<[f64; 3]>> {
    let mut v = vec![None];
    for x in [-1.0, 0.0, 1.0] {
        for y in [-1.0, 0.0, 1.0] {
            for z in [-1.0, 0.0, 1.0] {
                if x != 0.0 || y != 0.0 || z != 0.0 {
                    v.push(Some(normalize3([x, y, z])));
                }
            }
        }
    }
    v
}

fn warm_start(fit: &FrameFit) -> Option<[f64; 3]> {
    let b = fit.b_sum();
    let n = dot3(b, b).sqrt();
    (n > 0.0).then(|| [b[0] / n, b[1] / n, b[2] / n])
}

fn best_of(px: &[Px], fog: f64, mirror: bool, starts: &[Option<[f64; 3]>]) -> FrameFit {
    starts
        .iter()
        .map(|s| fit_from(px, fog, mirror, *s))
        .min_by(|a, b| a.residual.total_cmp(&b.residual))
        .expect("at least one start")
}

fn fit_all(frames: &[Vec<Px>], fog: f64, mirror: bool, starts: &[Vec<Option<[f64; 3]>>]) -> (Vec<FrameFit>, f64) {
    let fits: Vec<FrameFit> = frames
        .iter()
        .zip(starts)
        .map(|(px, s)| best_of(px, fog, mirror, s))
        .collect();
    let total = fits.iter().map(|f| f.residual).sum();
    (fits, total)
}

fn warm_starts(fits: &[&[FrameFit]]) -> Vec<Vec<Option<[f64; 3]>>> {
    (0..fits[0].len())
        .map(|i| {
            let mut s: Vec<Option<[f64; 3]>> = fits.iter().map(|f| warm_start(&f[i])).collect();
            s.push(None);
            s
        })
        .collect()
}

/// Shared fog density minimizing the total residual of the base model.
fn search_fog(frames: &[Vec<Px>], base: &[FrameFit]) -> (f64, Vec<FrameFit>, f64) {
    let mut grid: Vec<(f64, Vec<FrameFit>, f64)> = Vec::with_capacity(FOG_GRID + 1);
    grid.push((0.0, base.to_vec(), base.iter().map(|f| f.residual).sum()));
    for j in 1..=FOG_GRID {
        let fog = FOG_MAX * j as f64 / FOG_GRID as f64;
        let starts = warm_starts(&[&grid[j - 1].1, base]);
        let (fits, total) = fit_all(frames, fog, false, &starts);
        grid.push((fog, fits, total));
    }
    let j_best = (0..grid.len())
        .min_by(|a, b| grid[*a].2.total_cmp(&grid[*b].2))
        .expect("non-empty grid");
    let lo = grid[j_best.saturating_sub(1)].0;
    let hi = grid[(j_best + 1).min(FOG_GRID)].0;
    let seed_fits = grid[j_best].1.clone();
    let eval = |fog: f64| {
        let starts = warm_starts(&[&seed_fits, base]);
        fit_all(frames, fog, false, &starts)
    };
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = eval(x1).1;
    let mut f2 = eval(x2).1;
    for _ in 0..40 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = eval(x1).1;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = eval(x2).1;
        }
    }
    let mut best = (grid[j_best].0, grid[j_best].1.clone(), grid[j_best].2);
    let mid = 0.5 * (a + b);
    let (fits, total) = eval(mid);
    if total < best.2 {
        best = (mid, fits, total);
    }
    best
}

fn collect_pixels(
    video: &Array4<f64>,
    normals: &Array4<f64>,
    depth: &Array3<f64>,
    mask: &Array3<u8>,
) -> Result<Vec<Vec<Px>>> {
    let (frames, h, w) = mask.dim();
    if video.dim() != (frames, h, w, 3) || normals.dim() != (frames, h, w, 3) || depth.dim() != (frames, h, w) {
        return Err(Error::Shape(format!(
            "video {:?}, normals {:?}, depth {:?} and mask {:?} disagree",
            video.shape(),
            normals.shape(),
            depth.shape(),
            mask.shape()
        )));
    }
    let mut out = Vec::with_capacity(frames);
    for f in 0..frames {
        let mut px = Vec::new();
        let mut any = false;
        for r in 0..h {
            for c in 0..w {
                if mask[[f, r, c]] != 1 {
                    continue;
                }
                any = true;
                let i = [video[[f, r, c, 0]], video[[f, r, c, 1]], video[[f, r, c, 2]]];
                if i.iter().any(|v| *v >= SATURATION_LEVEL) {
                    continue;
                }
                px.push(Px {
                    n: [normals[[f, r, c, 0]], normals[[f, r, c, 1]], normals[[f, r, c, 2]]],
                    depth: depth[[f, r, c]],
                    i,
                });
            }
        }
        if !any {
            return Err(Error::Empty(format!("frame {f} has an empty mask")));
        }
        check_rank(&px, f)?;
        out.push(px);
    }
    Ok(out)
}

/// The system `[1, n]` must have full rank over the usable pixels.
fn check_rank(px: &[Px], frame: usize) -> Result<()> {
    let mut m = Matrix4::<f64>::zeros();
    for p in px {
        let r = nalgebra::Vector4::new(1.0, p.n[0], p.n[1], p.n[2]);
        m += r * r.transpose();
    }
    let eig = m.symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if px.len() < 4 || hi <= 0.0 || lo / hi < 1e-9 {
        return Err(Error::DegenerateGeometry(format!(
            "frame {frame}: {} usable pixels do not span distinct normals",
            px.len()
        )));
    }
    Ok(())
}

/// Recover the physical lighting parameters from pixels.
pub fn infer_lighting(
    video: &Array4<f64>,
    normals: &Array4<f64>,
    depth: &Array3<f64>,
    mask: &Array3<u8>,
) -> Result<InferredLighting> {
    let frames = collect_pixels(video, normals, depth, mask)?;
    let all_starts = vec![start_directions(); frames.len()];
    let energy: f64 = frames
        .iter()
        .flatten()
        .map(|p| p.i.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);

    let (base0, _) = fit_all(&frames, 0.0, false, &all_starts);
    let (fog, _, _) = search_fog(&frames, &base0);
    let (fog_fits, fog_res) = fit_all(&frames, fog, false, &all_starts);
    let (mirror_fits, mirror_res) = fit_all(&frames, 0.0, true, &all_starts);

    let mirror = fog_res / energy > 1e-8 && mirror_res < 0.5 * fog_res;
    let (fits, fog) = if mirror { (mirror_fits, 0.0) } else { (fog_fits, fog) };

    let norm = |v: [f64; 3]| dot3(v, v).sqrt();
    let beta: Vec<[f64; 3]> = fits.iter().map(|f| f.b.map(norm)).collect();
    let sum_beta: [f64; 3] = std::array::from_fn(|c| beta.iter().map(|b| b[c]).sum());
    let sum_k: [f64; 3] = std::array::from_fn(|c| fits.iter().map(|f| f.k[c]).sum());

    let glass = if sum_beta[1] > 1e-9 && sum_k.iter().all(|k| *k > 1e-12) {
        let u: [f64; 3] = std::array::from_fn(|c| sum_beta[c] / sum_k[c]);
        let q = [u[0] / u[1], u[2] / u[1]];
        let d_none = (q[0] - 1.0).powi(2) + (q[1] - 1.0).powi(2);
        let d_glass = (q[0] - GLASS_TINT[0]).powi(2) + (q[1] - GLASS_TINT[2]).powi(2);
        d_glass < d_none
    } else {
        false
    };
    let tint = if glass { GLASS_TINT } else { [1.0; 3] };

    let rho = SUBJECT_ALBEDO;
    let mut scaled = Vec::with_capacity(fits.len());
    let mut ambient = Vec::with_capacity(fits.len());
    let mut directions = Vec::with_capacity(fits.len());
    let mut gain_acc = [0.0; 3];
    for (fit, b) in fits.iter().zip(&beta) {
        let has_light = b[1] > 1e-9 * (fit.k[1].abs() + 1e-12);
        let per_channel: [f64; 3] = std::array::from_fn(|c| {
            if has_light {
                b[c] / tint[c]
            } else if mirror {
                fit.gamma[c].max(0.0) / (MIRROR_REFLECTANCE * tint[c])
            } else {
                0.0
            }
        });
        scaled.push((per_channel[0] + per_channel[2]) / (2.0 * rho));
        ambient.push((fit.k[0] + fit.k[2]) / (2.0 * rho));
        directions.push(has_light.then(|| normalize3(fit.b_sum())));
        for c in 0..3 {
            gain_acc[c] += fit.k[c] + per_channel[c];
        }
    }
    let color_temperature = if gain_acc[0] > 0.0 {
        temperature_from_blue_red(gain_acc[2] / gain_acc[0])
    } else {
        4500.0
    };
    let green_factor = 2.0 * gain_acc[1] / (gain_acc[0] + gain_acc[2]).max(f64::MIN_POSITIVE);
    Ok(InferredLighting {
        fog_density: fog,
        mirror,
        glass,
        scaled_intensity: scaled,
        ambient,
        directions,
        color_temperature,
        green_factor,
    })
}

fn nearest_source(green: f64) -> SourceType {
    *SourceType::ALL
        .iter()
        .min_by(|a, b| {
            (source_green_factor(**a) - green)
                .abs()
                .total_cmp(&(source_green_factor(**b) - green).abs())
        })
        .expect("non-empty")
}

fn temporal_class(inf: &InferredLighting) -> Temporal {
    let dirs: Vec<[f64; 3]> = inf.directions.iter().flatten().copied().collect();
    let mut max_angle: f64 = 0.0;
    for i in 0..dirs.len() {
        for j in i + 1..dirs.len() {
            let a = dot3(dirs[i], dirs[j]).clamp(-1.0, 1.0).acos().to_degrees();
            max_angle = max_angle.max(a);
        }
    }
    if max_angle > ANGLE_SPREAD_DEG {
        return Temporal::DynamicMoving;
    }
    let s = &inf.scaled_intensity;
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    let (lo, hi) = s
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if mean > 0.0 && (hi - lo) / mean > INTENSITY_SPREAD {
        Temporal::DynamicIntensity
    } else {
        Temporal::Static
    }
}

/// Classify the lighting of a video from its pixels and known geometry.
pub fn infer_label(
    video: &Array4<f64>,
    normals: &Array4<f64>,
    depth: &Array3<f64>,
    mask: &Array3<u8>,
) -> Result<LightingLabel> {
    let inf = infer_lighting(video, normals, depth, mask)?;
    let n = inf.scaled_intensity.len() as f64;
    let mean_scaled = inf.scaled_intensity.iter().sum::<f64>() / n;
    let ev = DirectionEvidence {
        dominant: dominant_direction(
            inf.scaled_intensity
                .iter()
                .zip(&inf.directions)
                .filter_map(|(s, d)| d.map(|d| (*s, d))),
        ),
        mean_scaled,
        ambient: inf.ambient.iter().sum::<f64>() / n,
        split_ratio: left_right_ratio(video, mask),
    };
    Ok(LightingLabel {
        direction: direction_class(&ev, normals, mask),
        source_type: Source::from(nearest_source(inf.green_factor)),
        intensity: intensity_class(1000.0 * mean_scaled),
        color_temperature: temperature_class(inf.color_temperature),
        temporal: temporal_class(&inf),
        optical: optical_class(inf.fog_density > FOG_DETECT, inf.mirror, inf.glass),
    })
}
