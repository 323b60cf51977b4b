use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ImageError, ImageRaster};

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn luma(p: &[u8]) -> f64 {
    LUMA[0] * p[0] as f64 + LUMA[1] * p[1] as f64 + LUMA[2] * p[2] as f64
}

/// Reverses column order.
pub fn horizontal_flip(image: &ImageRaster) -> ImageRaster {
    let mut out = image.clone();
    let w = image.width as usize;
    for (src, dst) in image
        .pixels
        .chunks_exact(w * 3)
        .zip(out.pixels.chunks_exact_mut(w * 3))
    {
        for x in 0..w {
            dst[x * 3..x * 3 + 3].copy_from_slice(&src[(w - 1 - x) * 3..(w - x) * 3]);
        }
    }
    out
}

/// Luma (0.299, 0.587, 0.114) replicated into all three channels.
pub fn grayscale(image: &ImageRaster) -> ImageRaster {
    let mut out = image.clone();
    for p in out.pixels.chunks_exact_mut(3) {
        let y = to_u8(luma(p));
        p.fill(y);
    }
    out
}

/// Multiplicative factors, each in [0.6, 1.4]; 1.0 is a no-op.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterFactors {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
}

impl Default for JitterFactors {
    fn default() -> Self {
        Self {
            brightness: 1.0,
            contrast: 1.0,
            saturation: 1.0,
        }
    }
}

pub const JITTER_RANGE: (f64, f64) = (0.6, 1.4);

/// Brightness scales every channel, contrast pulls toward the mean luma,
/// saturation pulls toward each pixel's luma. Clamped once at the end.
pub fn color_jitter(image: &ImageRaster, f: JitterFactors) -> Result<ImageRaster, ImageError> {
    for (name, v) in [
        ("brightness", f.brightness),
        ("contrast", f.contrast),
        ("saturation", f.saturation),
    ] {
        if !(JITTER_RANGE.0..=JITTER_RANGE.1).contains(&v) {
            return Err(ImageError::BadParameter(format!(
                "{name} factor {v} outside [{}, {}]",
                JITTER_RANGE.0, JITTER_RANGE.1
            )));
        }
    }
    let n = image.pixel_count() as f64;
    let mean = image.pixels.chunks_exact(3).map(luma).sum::<f64>() / n * f.brightness;
    let mut out = image.clone();
    for p in out.pixels.chunks_exact_mut(3) {
        let mut c = [0.0; 3];
        for k in 0..3 {
            c[k] = p[k] as f64 * f.brightness;
            c[k] = mean + (c[k] - mean) * f.contrast;
        }
        let y = LUMA[0] * c[0] + LUMA[1] * c[1] + LUMA[2] * c[2];
        for k in 0..3 {
            p[k] = to_u8(y + (c[k] - y) * f.saturation);
        }
    }
    Ok(out)
}

/// Normalized 1-D Gaussian of radius ⌈3σ⌉.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>, ImageError> {
    if !(sigma > 0.0 && sigma <= 3.0) {
        return Err(ImageError::BadParameter(format!(
            "sigma {sigma} outside (0, 3]"
        )));
    }
    let r = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    Ok(k.into_iter().map(|v| v / s).collect())
}

/// Separable Gaussian blur with clamped edges.
pub fn gaussian_blur(image: &ImageRaster, sigma: f64) -> Result<ImageRaster, ImageError> {
    let k = gaussian_kernel(sigma)?;
    let r = (k.len() / 2) as i64;
    let (w, h) = (image.width as i64, image.height as i64);
    let idx = |x: i64, y: i64| (y * w + x) as usize * 3;
    let mut tmp = vec![0.0f64; image.pixels.len()];
    for y in 0..h {
        for x in 0..w {
            for (j, &kv) in k.iter().enumerate() {
                let sx = (x + j as i64 - r).clamp(0, w - 1);
                let s = idx(sx, y);
                let d = idx(x, y);
                for c in 0..3 {
                    tmp[d + c] += kv * image.pixels[s + c] as f64;
                }
            }
        }
    }
    let mut out = image.clone();
    for y in 0..h {
        for x in 0..w {
            let d = idx(x, y);
            let mut acc = [0.0; 3];
            for (j, &kv) in k.iter().enumerate() {
                let s = idx(x, (y + j as i64 - r).clamp(0, h - 1));
                for (c, a) in acc.iter_mut().enumerate() {
                    *a += kv * tmp[s + c];
                }
            }
            for c in 0..3 {
                out.pixels[d + c] = to_u8(acc[c]);
            }
        }
    }
    Ok(out)
}

/// Random training augmentation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub flip_prob: f64,
    pub jitter_prob: f64,
    /// Each jitter factor is drawn uniformly from this range.
    pub jitter_range: (f64, f64),
    pub grayscale_prob: f64,
    pub blur_prob: f64,
    pub blur_sigma: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip_prob: 0.5,
            jitter_prob: 0.8,
            jitter_range: JITTER_RANGE,
            grayscale_prob: 0.2,
            blur_prob: 0.5,
            blur_sigma: (0.1, 2.0),
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), ImageError> {
        for (name, p) in [
            ("flip_prob", self.flip_prob),
            ("jitter_prob", self.jitter_prob),
            ("grayscale_prob", self.grayscale_prob),
            ("blur_prob", self.blur_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ImageError::BadParameter(format!(
                    "{name} {p} outside [0, 1]"
                )));
            }
        }
        let (lo, hi) = self.jitter_range;
        if !(JITTER_RANGE.0 <= lo && lo <= hi && hi <= JITTER_RANGE.1) {
            return Err(ImageError::BadParameter(format!(
                "jitter_range ({lo}, {hi}) outside [0.6, 1.4]"
            )));
        }
        let (lo, hi) = self.blur_sigma;
        if !(0.0 < lo && lo <= hi && hi <= 3.0) {
            return Err(ImageError::BadParameter(format!(
                "blur_sigma ({lo}, {hi}) outside (0, 3]"
            )));
        }
        Ok(())
    }

    fn apply(&self, image: &ImageRaster, rng: &mut ChaCha8Rng) -> Result<ImageRaster, ImageError> {
        let mut img = image.clone();
        if rng.random_bool(self.flip_prob) {
            img = horizontal_flip(&img);
        }
        if rng.random_bool(self.jitter_prob) {
            let (lo, hi) = self.jitter_range;
            let mut draw = || rng.random_range(lo..=hi);
            let f = JitterFactors {
                brightness: draw(),
                contrast: draw(),
                saturation: draw(),
            };
            img = color_jitter(&img, f)?;
        }
        if rng.random_bool(self.grayscale_prob) {
            img = grayscale(&img);
        }
        if rng.random_bool(self.blur_prob) {
            let (lo, hi) = self.blur_sigma;
            img = gaussian_blur(&img, rng.random_range(lo..=hi))?;
        }
        Ok(img)
    }
}

/// An image with the provenance it must keep through augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub record_id: u64,
    pub identity: String,
    pub image: ImageRaster,
}

/// Augments every image with its own stream seeded by `seed ^ record_id`.
/// Output order, record ids and identities match the input.
pub fn augment_labeled(
    items: &[LabeledImage],
    config: &AugmentConfig,
    seed: u64,
) -> Result<Vec<LabeledImage>, ImageError> {
    config.validate()?;
    items
        .par_iter()
        .map(|it| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ it.record_id);
            Ok(LabeledImage {
                record_id: it.record_id,
                identity: it.identity.clone(),
                image: config.apply(&it.image, &mut rng)?,
            })
        })
        .collect()
}
