//! Orthographic ray casting of a [`SceneSpec`] under a [`LightProgram`].

use ndarray::{Array3, Array4};

use super::shading::{shade, Optics, SUBJECT_ALBEDO};
use super::types::{normalize3, GeometryKind, LightProgram, RenderedSample, SceneSpec};
use crate::error::{Error, Result};

/// Image width in scene units.
pub const VIEW_EXTENT: f64 = 4.0;
/// Camera plane height; depth is `CAMERA_Z - z`.
pub const CAMERA_Z: f64 = 6.0;
/// Height of the flat backdrop plane.
pub const BACKDROP_Z: f64 = -2.0;
/// Unit vector from the subject towards the camera.
pub const CAMERA_AXIS: [f64; 3] = [0.0, 0.0, 1.0];

pub fn pixel_size(width: usize) -> f64 {
    VIEW_EXTENT / width as f64
}

/// Scene-plane coordinates of a pixel centre (`y` up).
pub fn pixel_to_scene(col: f64, row: f64, width: usize, height: usize) -> (f64, f64) {
    let s = pixel_size(width);
    (
        (col + 0.5 - width as f64 / 2.0) * s,
        (height as f64 / 2.0 - row - 0.5) * s,
    )
}

/// Scene-plane coordinates of a (continuous) subject centre.
pub fn center_to_scene(center: [f64; 2], width: usize, height: usize) -> (f64, f64) {
    let s = pixel_size(width);
    (
        (center[0] - width as f64 / 2.0) * s,
        (height as f64 / 2.0 - center[1]) * s,
    )
}

/// Radius (scene units) of a disc that contains the subject footprint.
pub fn footprint_radius(kind: GeometryKind, params: &[f64]) -> f64 {
    match kind {
        GeometryKind::Sphere | GeometryKind::Heightfield => params[0],
        GeometryKind::Plane => params[0] * std::f64::consts::SQRT_2,
    }
}

/// Subject surface point hit at offset `(dx, dy)` from the subject centre:
/// `(height z, unit normal)`.
pub fn subject_hit(kind: GeometryKind, params: &[f64], dx: f64, dy: f64) -> Option<(f64, [f64; 3])> {
    match kind {
        GeometryKind::Sphere => {
            let r = params[0];
            let rho2 = dx * dx + dy * dy;
            if rho2 >= r * r {
                return None;
            }
            let z = (r * r - rho2).sqrt();
            Some((z, [dx / r, dy / r, z / r]))
        }
        GeometryKind::Heightfield => {
            let r = params[0];
            let rho2 = dx * dx + dy * dy;
            if rho2 >= r * r {
                return None;
            }
            let h0 = params[1];
            let mut z = h0 * (1.0 - rho2 / (r * r));
            let mut gx = -2.0 * h0 * dx / (r * r);
            let mut gy = -2.0 * h0 * dy / (r * r);
            for bump in params[2..].chunks_exact(4) {
                let (amp, bx, by, w) = (bump[0], bump[1], bump[2], bump[3]);
                let (ex, ey) = (dx - bx, dy - by);
                let e = amp * (-(ex * ex + ey * ey) / (2.0 * w * w)).exp();
                z += e;
                gx -= e * ex / (w * w);
                gy -= e * ey / (w * w);
            }
            Some((z, normalize3([-gx, -gy, 1.0])))
        }
        GeometryKind::Plane => {
            let half = params[0];
            if dx.abs() > half || dy.abs() > half {
                return None;
            }
            let (sx, sy) = (params[1], params[2]);
            Some((sx * dx + sy * dy, normalize3([-sx, -sy, 1.0])))
        }
    }
}

/// Expected `geometry_params` length per kind.
pub fn param_len(kind: GeometryKind) -> usize {
    match kind {
        GeometryKind::Sphere => 1,
        GeometryKind::Heightfield => 2 + 4 * 3,
        GeometryKind::Plane => 3,
    }
}

/// Geometry only: depth, normals and mask for every frame. Lighting never
/// enters, so these are identical under any light program.
pub fn render_geometry(spec: &SceneSpec) -> (Array3<f64>, Array4<f64>, Array3<u8>) {
    let (f, h, w) = (spec.frames, spec.height, spec.width);
    let mut depth = Array3::zeros((f, h, w));
    let mut normals = Array4::zeros((f, h, w, 3));
    let mut mask = Array3::zeros((f, h, w));
    for fr in 0..f {
        let (cx, cy) = center_to_scene(spec.subject_center_path[fr], w, h);
        for row in 0..h {
            for col in 0..w {
                let (x, y) = pixel_to_scene(col as f64, row as f64, w, h);
                let (z, n, m) = match subject_hit(spec.geometry_kind, &spec.geometry_params, x - cx, y - cy) {
                    Some((z, n)) => (z, n, 1u8),
                    None => (BACKDROP_Z, CAMERA_AXIS, 0u8),
                };
                depth[[fr, row, col]] = CAMERA_Z - z;
                for c in 0..3 {
                    normals[[fr, row, col, c]] = n[c];
                }
                mask[[fr, row, col]] = m;
            }
        }
    }
    (depth, normals, mask)
}

pub fn optics_of(spec: &SceneSpec) -> Optics {
    Optics {
        fog_density: spec.fog_density,
        mirror: spec.mirror_flag,
        glass: spec.glass_flag,
    }
}

/// Render the scene under `program`. Frame counts must agree.
pub fn render(spec: &SceneSpec, program: &LightProgram) -> Result<RenderedSample> {
    if program.len() != spec.frames {
        return Err(Error::Shape(format!(
            "light program has {} frames, scene has {}",
            program.len(),
            spec.frames
        )));
    }
    let (depth, normals, mask) = render_geometry(spec);
    let (f, h, w) = (spec.frames, spec.height, spec.width);
    let optics = optics_of(spec);
    let mut video = Array4::zeros((f, h, w, 3));
    for fr in 0..f {
        let light = &program.frames[fr];
        for row in 0..h {
            for col in 0..w {
                let albedo = if mask[[fr, row, col]] == 1 {
                    [SUBJECT_ALBEDO; 3]
                } else {
                    [
                        spec.albedo_map[[row, col, 0]],
                        spec.albedo_map[[row, col, 1]],
                        spec.albedo_map[[row, col, 2]],
                    ]
                };
                let n = [
                    normals[[fr, row, col, 0]],
                    normals[[fr, row, col, 1]],
                    normals[[fr, row, col, 2]],
                ];
                let rgb = shade(albedo, n, depth[[fr, row, col]], light, optics);
                for c in 0..3 {
                    video[[fr, row, col, c]] = rgb[c];
                }
            }
        }
    }
    Ok(RenderedSample {
        video,
        depth,
        normals,
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenes::shading::gain;
    use crate::scenes::types::{LightSpec, SourceType};

    pub(crate) fn plane_scene(slope: [f64; 2]) -> SceneSpec {
        SceneSpec {
            id: 0,
            width: 16,
            height: 16,
            frames: 2,
            geometry_kind: GeometryKind::Plane,
            geometry_params: vec![1.0, slope[0], slope[1]],
            albedo_map: Array3::from_elem((16, 16, 3), 0.5),
            subject_center_path: vec![[8.0, 8.0]; 2],
            fog_density: 0.0,
            mirror_flag: false,
            glass_flag: false,
        }
    }

    fn light(dir: [f64; 3], intensity: f64, ambient: f64) -> LightSpec {
        LightSpec {
            direction: normalize3(dir),
            source_type: SourceType::Natural,
            intensity,
            color_temperature: 3000.0,
            ambient,
        }
    }

    #[test]
    fn plane_facing_light_gets_gain_times_albedo() {
        let spec = plane_scene([0.0, 0.0]);
        let prog = LightProgram::constant(light([0.0, 0.0, 1.0], 1000.0, 0.0), 2);
        let out = render(&spec, &prog).unwrap();
        let g = gain(3000.0, SourceType::Natural);
        let mut seen = 0;
        for ((f, r, c), &m) in out.mask.indexed_iter() {
            if m == 1 {
                seen += 1;
                for ch in 0..3 {
                    let expected = SUBJECT_ALBEDO * g[ch];
                    assert!((out.video[[f, r, c, ch]] - expected).abs() < 1e-12);
                }
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn light_orthogonal_to_normals_leaves_only_ambient() {
        let spec = plane_scene([0.0, 0.0]);
        let prog = LightProgram::constant(light([1.0, 0.0, 0.0], 1500.0, 0.2), 2);
        let out = render(&spec, &prog).unwrap();
        let g = gain(3000.0, SourceType::Natural);
        for ((f, r, c), &m) in out.mask.indexed_iter() {
            if m == 1 {
                for ch in 0..3 {
                    let expected = SUBJECT_ALBEDO * g[ch] * 0.2;
                    assert!((out.video[[f, r, c, ch]] - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn geometry_ignores_lighting() {
        let spec = plane_scene([0.2, -0.1]);
        let a = render(&spec, &LightProgram::constant(light([0.0, 0.0, 1.0], 300.0, 0.1), 2)).unwrap();
        let b = render(&spec, &LightProgram::constant(light([1.0, 1.0, 0.2], 1700.0, 0.0), 2)).unwrap();
        assert_eq!(a.depth, b.depth);
        assert_eq!(a.normals, b.normals);
        assert_eq!(a.mask, b.mask);
        assert_ne!(a.video, b.video);
    }

    #[test]
    fn frame_count_mismatch_is_rejected() {
        let spec = plane_scene([0.0, 0.0]);
        let prog = LightProgram::constant(light([0.0, 0.0, 1.0], 300.0, 0.1), 3);
        assert!(matches!(render(&spec, &prog), Err(Error::Shape(_))));
    }

    #[test]
    fn heightfield_normals_match_finite_difference_of_height() {
        let params = vec![1.2, 0.5, 0.3, 0.2, -0.1, 0.3, -0.2, 0.1, 0.4, 0.35, 0.1, -0.3, 0.2, 0.3];
        let h = 1e-6;
        for &(dx, dy) in &[(0.1, 0.2), (-0.5, 0.3), (0.7, -0.6)] {
            let (_, n) = subject_hit(GeometryKind::Heightfield, &params, dx, dy).unwrap();
            let zx = (subject_hit(GeometryKind::Heightfield, &params, dx + h, dy).unwrap().0
                - subject_hit(GeometryKind::Heightfield, &params, dx - h, dy).unwrap().0)
                / (2.0 * h);
            let zy = (subject_hit(GeometryKind::Heightfield, &params, dx, dy + h).unwrap().0
                - subject_hit(GeometryKind::Heightfield, &params, dx, dy - h).unwrap().0)
                / (2.0 * h);
            let expected = normalize3([-zx, -zy, 1.0]);
            for c in 0..3 {
                assert!((n[c] - expected[c]).abs() < 1e-6);
            }
        }
    }
}
