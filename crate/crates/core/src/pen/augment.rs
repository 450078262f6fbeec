//! Shape-preserving augmentations for square RGB patches.
//!
//! Enabled transforms run in a fixed order: flips, rotation, shear, color
//! distortion, grayscale, vignette, blur. Each fires independently with its
//! configured probability.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

const MAX_ROTATION_DEG: f64 = 20.0;
const MAX_SHEAR: f64 = 0.2;
const MAX_BRIGHTNESS: f64 = 0.1;
const CONTRAST_RANGE: (f64, f64) = (0.8, 1.2);
const SATURATION_RANGE: (f64, f64) = (0.8, 1.2);
const VIGNETTE_RANGE: (f64, f64) = (0.2, 0.5);
const BLUR_SIGMA_RANGE: (f64, f64) = (0.5, 1.2);

/// Declaration order is application order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    HorizontalFlip,
    VerticalFlip,
    Rotation,
    Shear,
    ColorDistortion,
    Grayscale,
    Vignette,
    GaussianBlur,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationSpec {
    /// Enabled transforms and the probability each is applied.
    pub probabilities: BTreeMap<Transform, f64>,
    pub seed: u64,
}

impl AugmentationSpec {
    pub fn none() -> Self {
        Self::default()
    }

    /// Flips and small rotations, each with probability 0.5.
    pub fn geometric(seed: u64) -> Self {
        AugmentationSpec {
            probabilities: [
                (Transform::HorizontalFlip, 0.5),
                (Transform::VerticalFlip, 0.5),
                (Transform::Rotation, 0.5),
            ]
            .into_iter()
            .collect(),
            seed,
        }
    }

    /// Every transform, each with probability 0.5.
    pub fn full(seed: u64) -> Self {
        use Transform::*;
        AugmentationSpec {
            probabilities: [
                HorizontalFlip,
                VerticalFlip,
                Rotation,
                Shear,
                ColorDistortion,
                Grayscale,
                Vignette,
                GaussianBlur,
            ]
            .into_iter()
            .map(|t| (t, 0.5))
            .collect(),
            seed,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        for (t, &p) in &self.probabilities {
            if !(0.0..=1.0).contains(&p) {
                return Err(crate::SafeError::InvalidArgument(format!(
                    "probability for {t:?} must lie in [0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Augments an interleaved RGB patch of the given side length.
pub fn augment<R: Rng + ?Sized>(pixels: &[u8], side: usize, spec: &AugmentationSpec, rng: &mut R) -> Vec<u8> {
    let mut img = pixels.to_vec();
    for (&t, &p) in &spec.probabilities {
        if p <= 0.0 || rng.random::<f64>() >= p {
            continue;
        }
        img = match t {
            Transform::HorizontalFlip => flip(&img, side, true),
            Transform::VerticalFlip => flip(&img, side, false),
            Transform::Rotation => {
                let deg = rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG);
                let (s, c) = deg.to_radians().sin_cos();
                // Inverse rotation about the center.
                resample(&img, side, |x, y| (c * x + s * y, -s * x + c * y))
            }
            Transform::Shear => {
                let k = rng.random_range(-MAX_SHEAR..=MAX_SHEAR);
                resample(&img, side, |x, y| (x + k * y, y))
            }
            Transform::ColorDistortion => {
                let brightness = rng.random_range(-MAX_BRIGHTNESS..=MAX_BRIGHTNESS) * 255.0;
                let contrast = rng.random_range(CONTRAST_RANGE.0..=CONTRAST_RANGE.1);
                let saturation = rng.random_range(SATURATION_RANGE.0..=SATURATION_RANGE.1);
                color_distort(&img, brightness, contrast, saturation)
            }
            Transform::Grayscale => grayscale(&img),
            Transform::Vignette => {
                let strength = rng.random_range(VIGNETTE_RANGE.0..=VIGNETTE_RANGE.1);
                vignette(&img, side, strength)
            }
            Transform::GaussianBlur => {
                let sigma = rng.random_range(BLUR_SIGMA_RANGE.0..=BLUR_SIGMA_RANGE.1);
                blur(&img, side, sigma)
            }
        };
    }
    img
}

fn flip(img: &[u8], side: usize, horizontal: bool) -> Vec<u8> {
    let mut out = vec![0; img.len()];
    for r in 0..side {
        for c in 0..side {
            let (sr, sc) = if horizontal { (r, side - 1 - c) } else { (side - 1 - r, c) };
            let dst = (r * side + c) * 3;
            let src = (sr * side + sc) * 3;
            out[dst..dst + 3].copy_from_slice(&img[src..src + 3]);
        }
    }
    out
}

/// Nearest-neighbor resampling; `map` takes centered output coordinates to
/// centered source coordinates. Out-of-range sources clamp to the border.
fn resample(img: &[u8], side: usize, map: impl Fn(f64, f64) -> (f64, f64)) -> Vec<u8> {
    let center = (side as f64 - 1.0) / 2.0;
    let max = side as f64 - 1.0;
    let mut out = vec![0; img.len()];
    for r in 0..side {
        for c in 0..side {
            let (sx, sy) = map(c as f64 - center, r as f64 - center);
            let sc = (sx + center).round().clamp(0.0, max) as usize;
            let sr = (sy + center).round().clamp(0.0, max) as usize;
            let dst = (r * side + c) * 3;
            let src = (sr * side + sc) * 3;
            out[dst..dst + 3].copy_from_slice(&img[src..src + 3]);
        }
    }
    out
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn luminance(p: &[u8]) -> f64 {
    0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
}

fn color_distort(img: &[u8], brightness: f64, contrast: f64, saturation: f64) -> Vec<u8> {
    let mean = img.iter().map(|&v| v as f64).sum::<f64>() / img.len().max(1) as f64;
    let mut out = Vec::with_capacity(img.len());
    for p in img.chunks_exact(3) {
        let gray = luminance(p);
        for &v in p {
            let sat = gray + (v as f64 - gray) * saturation;
            out.push(to_u8((sat - mean) * contrast + mean + brightness));
        }
    }
    out
}

fn grayscale(img: &[u8]) -> Vec<u8> {
    img.chunks_exact(3)
        .flat_map(|p| {
            let g = to_u8(luminance(p));
            [g, g, g]
        })
        .collect()
}

fn vignette(img: &[u8], side: usize, strength: f64) -> Vec<u8> {
    let center = (side as f64 - 1.0) / 2.0;
    let rmax2 = 2.0 * center * center;
    let mut out = img.to_vec();
    if rmax2 == 0.0 {
        return out;
    }
    for r in 0..side {
        for c in 0..side {
            let d2 = (r as f64 - center).powi(2) + (c as f64 - center).powi(2);
            let f = 1.0 - strength * d2 / rmax2;
            let i = (r * side + c) * 3;
            for v in &mut out[i..i + 3] {
                *v = to_u8(*v as f64 * f);
            }
        }
    }
    out
}

fn blur(img: &[u8], side: usize, sigma: f64) -> Vec<u8> {
    let radius = (2.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let clamp = |i: isize| i.clamp(0, side as isize - 1) as usize;
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut dst = vec![0.0; src.len()];
        for r in 0..side {
            for c in 0..side {
                for ch in 0..3 {
                    let mut acc = 0.0;
                    for (k, w) in kernel.iter().enumerate() {
                        let off = k as isize - radius;
                        let (sr, sc) = if horizontal {
                            (r, clamp(c as isize + off))
                        } else {
                            (clamp(r as isize + off), c)
                        };
                        acc += w * src[(sr * side + sc) * 3 + ch];
                    }
                    dst[(r * side + c) * 3 + ch] = acc / norm;
                }
            }
        }
        dst
    };
    let f: Vec<f64> = img.iter().map(|&v| v as f64).collect();
    pass(&pass(&f, true), false).into_iter().map(to_u8).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn patch(side: usize) -> Vec<u8> {
        (0..side * side * 3).map(|i| (i * 29 % 256) as u8).collect()
    }

    #[test]
    fn disabled_is_identity() {
        let p = patch(6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(augment(&p, 6, &AugmentationSpec::none(), &mut rng), p);
        let zero_prob = AugmentationSpec {
            probabilities: [(Transform::Rotation, 0.0)].into_iter().collect(),
            seed: 0,
        };
        assert_eq!(augment(&p, 6, &zero_prob, &mut rng), p);
    }

    #[test]
    fn horizontal_flip_is_an_involution() {
        let p = patch(5);
        let spec = AugmentationSpec {
            probabilities: [(Transform::HorizontalFlip, 1.0)].into_iter().collect(),
            seed: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let once = augment(&p, 5, &spec, &mut rng);
        assert_ne!(once, p);
        assert_eq!(&once[..3], &p[4 * 3..5 * 3]);
        assert_eq!(augment(&once, 5, &spec, &mut rng), p);
    }

    #[test]
    fn full_pipeline_is_deterministic_and_shape_preserving() {
        let p = patch(9);
        let spec = AugmentationSpec::full(3);
        let a = augment(&p, 9, &spec, &mut ChaCha8Rng::seed_from_u64(42));
        let b = augment(&p, 9, &spec, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
        assert_eq!(a.len(), p.len());
        for seed in 0..20 {
            let out = augment(&p, 9, &spec, &mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(out.len(), p.len());
        }
    }

    #[test]
    fn individual_transforms() {
        let p = patch(4);
        assert_eq!(flip(&flip(&p, 4, false), 4, false), p);
        assert_eq!(resample(&p, 4, |x, y| (x, y)), p);
        let g = grayscale(&p);
        assert!(g.chunks_exact(3).all(|q| q[0] == q[1] && q[1] == q[2]));
        let uniform = vec![100u8; 4 * 4 * 3];
        assert_eq!(blur(&uniform, 4, 1.0), uniform);
        assert_eq!(color_distort(&uniform, 0.0, 1.0, 1.0), uniform);
        let v = vignette(&uniform, 4, 0.5);
        assert!(v[0] < 100);
    }

    #[test]
    fn spec_validation() {
        let mut spec = AugmentationSpec::geometric(0);
        assert!(spec.validate().is_ok());
        spec.probabilities.insert(Transform::Shear, 1.5);
        assert!(spec.validate().is_err());
    }
}
