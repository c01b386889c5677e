use ndarray::{Array3, Array4};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillMode {
    /// Per-pixel draws from the background's Gaussian.
    Gaussian,
    /// Every background pixel set to the background mean.
    Pure,
}

/// Mean and (population) standard deviation of the background, per frame
/// and channel.
pub fn background_stats(video: &Array4<f64>, mask: &Array3<u8>) -> Result<Vec<[(f64, f64); 3]>> {
    let (frames, h, w, ch) = video.dim();
    if mask.dim() != (frames, h, w) || ch != 3 {
        return Err(Error::Shape(format!(
            "video {:?} and mask {:?} disagree",
            video.shape(),
            mask.shape()
        )));
    }
    let mut out = Vec::with_capacity(frames);
    for f in 0..frames {
        // Accumulate offsets from the first background pixel so a constant
        // background yields its value and zero spread exactly.
        let mut origin: Option<[f64; 3]> = None;
        let mut sum = [0.0; 3];
        let mut n = 0usize;
        for r in 0..h {
            for c in 0..w {
                if mask[[f, r, c]] == 0 {
                    let o = *origin.get_or_insert_with(|| std::array::from_fn(|k| video[[f, r, c, k]]));
                    n += 1;
                    for k in 0..3 {
                        sum[k] += video[[f, r, c, k]] - o[k];
                    }
                }
            }
        }
        let Some(origin) = origin else {
            return Err(Error::EmptyBackground { frame: f });
        };
        let mean: [f64; 3] = std::array::from_fn(|k| origin[k] + sum[k] / n as f64);
        let mut var = [0.0; 3];
        for r in 0..h {
            for c in 0..w {
                if mask[[f, r, c]] == 0 {
                    for k in 0..3 {
                        var[k] += (video[[f, r, c, k]] - mean[k]).powi(2);
                    }
                }
            }
        }
        out.push(std::array::from_fn(|k| (mean[k], (var[k] / n as f64).sqrt())));
    }
    Ok(out)
}

/// Replace background pixels (mask 0) with draws matching the background's
/// per-frame, per-channel statistics. Subject pixels are copied unchanged.
pub fn gaussian_background_fill(
    video: &Array4<f64>,
    mask: &Array3<u8>,
    mode: FillMode,
    rng: &mut impl Rng,
) -> Result<Array4<f64>> {
    let stats = background_stats(video, mask)?;
    let mut out = video.clone();
    let (frames, h, w, _) = video.dim();
    for f in 0..frames {
        for r in 0..h {
            for c in 0..w {
                if mask[[f, r, c]] != 0 {
                    continue;
                }
                for k in 0..3 {
                    let (mu, sigma) = stats[f][k];
                    let v = match mode {
                        FillMode::Pure => mu,
                        FillMode::Gaussian => {
                            let z: f64 = StandardNormal.sample(rng);
                            mu + sigma * z
                        }
                    };
                    out[[f, r, c, k]] = v.clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn constant_background_fills_exactly() {
        let video = Array4::from_elem((2, 4, 4, 3), 0.3);
        let mut mask = Array3::zeros((2, 4, 4));
        mask[[0, 1, 1]] = 1;
        let out = gaussian_background_fill(&video, &mask, FillMode::Gaussian, &mut stream(1, &[])).unwrap();
        assert!(out.iter().all(|v| *v == 0.3));
    }

    #[test]
    fn two_pixel_background_stats() {
        let mut video = Array4::zeros((1, 1, 3, 3));
        video[[0, 0, 1, 0]] = 1.0;
        let mut mask = Array3::zeros((1, 1, 3));
        mask[[0, 0, 2]] = 1;
        let s = background_stats(&video, &mask).unwrap();
        assert_eq!(s[0][0], (0.5, 0.5));
    }

    #[test]
    fn full_mask_frame_is_empty_background() {
        let video = Array4::zeros((4, 2, 2, 3));
        let mut mask = Array3::zeros((4, 2, 2));
        mask.slice_mut(ndarray::s![3, .., ..]).fill(1);
        let r = gaussian_background_fill(&video, &mask, FillMode::Pure, &mut stream(0, &[]));
        assert!(matches!(r, Err(Error::EmptyBackground { frame: 3 })));
    }
}
