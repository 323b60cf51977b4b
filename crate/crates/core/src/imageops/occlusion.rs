use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ImageError, ImageRaster};

const BLACK: [u8; 3] = [0, 0, 0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionLevel {
    Light,
    Moderate,
    Heavy,
    Extreme,
}

impl OcclusionLevel {
    pub const ALL: [OcclusionLevel; 4] = [
        OcclusionLevel::Light,
        OcclusionLevel::Moderate,
        OcclusionLevel::Heavy,
        OcclusionLevel::Extreme,
    ];

    pub fn coverage(self) -> f64 {
        match self {
            OcclusionLevel::Light => 0.20,
            OcclusionLevel::Moderate => 0.40,
            OcclusionLevel::Heavy => 0.60,
            OcclusionLevel::Extreme => 0.80,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OcclusionLevel::Light => "light",
            OcclusionLevel::Moderate => "moderate",
            OcclusionLevel::Heavy => "heavy",
            OcclusionLevel::Extreme => "extreme",
        }
    }
}

impl fmt::Display for OcclusionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OcclusionLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| {
                format!("unknown occlusion level `{s}` (light, moderate, heavy, extreme)")
            })
    }
}

/// A named level or an explicit fraction in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coverage {
    Level(OcclusionLevel),
    Explicit(f64),
}

impl Coverage {
    pub fn fraction(self) -> f64 {
        match self {
            Coverage::Level(l) => l.coverage(),
            Coverage::Explicit(c) => c,
        }
    }

    /// Level name, or the fraction for explicit coverage.
    pub fn label(self) -> String {
        match self {
            Coverage::Level(l) => l.to_string(),
            Coverage::Explicit(c) => c.to_string(),
        }
    }
}

impl FromStr for Coverage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(l) = s.parse::<OcclusionLevel>() {
            return Ok(Coverage::Level(l));
        }
        s.parse::<f64>()
            .map(Coverage::Explicit)
            .map_err(|_| format!("`{s}` is neither an occlusion level nor a number"))
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    #[default]
    Whole,
    TopHalf,
    BottomHalf,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::Whole => "whole",
            Region::TopHalf => "top_half",
            Region::BottomHalf => "bottom_half",
        }
    }

    /// Row range `[start, end)`; the top half takes the middle row when
    /// the height is odd.
    fn rows(self, height: u32) -> (u32, u32) {
        let mid = height.div_ceil(2);
        match self {
            Region::Whole => (0, height),
            Region::TopHalf => (0, mid),
            Region::BottomHalf => (mid, height),
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Region {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "whole" => Ok(Region::Whole),
            "top_half" | "top" => Ok(Region::TopHalf),
            "bottom_half" | "bottom" => Ok(Region::BottomHalf),
            _ => Err(format!(
                "unknown region `{s}` (whole, top_half, bottom_half)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcclusionSpec {
    pub coverage: Coverage,
    pub region: Region,
    pub tolerance: f64,
    pub seed: u64,
    /// Patch side bounds as fractions of the region's width and height.
    pub min_side: f64,
    pub max_side: f64,
    /// Random patches drawn before falling back to a deterministic fill.
    pub max_patches: usize,
}

impl Default for OcclusionSpec {
    fn default() -> Self {
        Self {
            coverage: Coverage::Level(OcclusionLevel::Moderate),
            region: Region::Whole,
            tolerance: 0.02,
            seed: 0,
            min_side: 0.10,
            max_side: 0.35,
            max_patches: 10_000,
        }
    }
}

impl OcclusionSpec {
    pub fn level(level: OcclusionLevel, seed: u64) -> Self {
        Self {
            coverage: Coverage::Level(level),
            seed,
            ..Self::default()
        }
    }

    pub fn explicit(coverage: f64, seed: u64) -> Self {
        Self {
            coverage: Coverage::Explicit(coverage),
            seed,
            ..Self::default()
        }
    }

    /// `<level>` or `<level>.<region>` for non-whole regions.
    pub fn condition_label(&self) -> String {
        match self.region {
            Region::Whole => self.coverage.label(),
            r => format!("{}.{}", self.coverage.label(), r),
        }
    }

    /// Explicit 0 and 1 are exact; any other target needs a tolerance band
    /// strictly inside (0, 1).
    pub fn validate(&self) -> Result<(), ImageError> {
        let c = self.coverage.fraction();
        let bad = |m: String| Err(ImageError::BadParameter(m));
        if !(0.0..=1.0).contains(&c) {
            return bad(format!("coverage {c} outside [0, 1]"));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return bad(format!("tolerance {} must be non-negative", self.tolerance));
        }
        if c != 0.0 && c != 1.0 && !(c - self.tolerance > 0.0 && c + self.tolerance < 1.0) {
            return bad(format!(
                "coverage {c} ± {} must stay inside (0, 1)",
                self.tolerance
            ));
        }
        if !(self.min_side > 0.0 && self.min_side <= self.max_side && self.max_side <= 1.0) {
            return bad(format!(
                "patch sides [{}, {}] must satisfy 0 < min <= max <= 1",
                self.min_side, self.max_side
            ));
        }
        Ok(())
    }

    fn side_range(&self, dim: u32) -> (u32, u32) {
        let lo = ((self.min_side * dim as f64).ceil() as u32).clamp(1, dim);
        let hi = ((self.max_side * dim as f64).floor() as u32).clamp(lo, dim);
        (lo, hi)
    }
}

fn mark(covered: &mut [bool], count: &mut usize, i: usize) {
    if !covered[i] {
        covered[i] = true;
        *count += 1;
    }
}

/// Blackens random rectangles inside `rows` until the covered fraction of
/// that band reaches the target, never leaving the tolerance band.
fn occlude_rows(
    image: &ImageRaster,
    spec: &OcclusionSpec,
    (r0, r1): (u32, u32),
) -> Result<ImageRaster, ImageError> {
    spec.validate()?;
    let c = spec.coverage.fraction();
    let mut out = image.clone();
    let w = image.width;
    let h = r1 - r0;
    let n = w as usize * h as usize;
    if c == 0.0 || n == 0 {
        return Ok(out);
    }
    if c == 1.0 {
        for y in r0..r1 {
            for x in 0..w {
                out.set(x, y, BLACK);
            }
        }
        return Ok(out);
    }
    let lo = ((c - spec.tolerance) * n as f64).ceil() as usize;
    let hi = ((c + spec.tolerance) * n as f64).floor() as usize;
    if lo > hi {
        return Err(ImageError::UnreachableCoverage {
            target: c,
            tolerance: spec.tolerance,
            pixels: n,
        });
    }

    // Aim for the target itself; the band only bounds accepted patches.
    let goal = ((c * n as f64).round() as usize).clamp(lo, hi);

    // covered[i] for band pixel i = (y - r0) * w + x
    let mut covered = vec![false; n];
    let mut count = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (wl, wh) = spec.side_range(w);
    let (hl, hh) = spec.side_range(h);
    let fresh = |covered: &[bool], x0: u32, pw: u32, y: u32| -> usize {
        let base = y as usize * w as usize;
        (x0..x0 + pw)
            .filter(|&x| !covered[base + x as usize])
            .count()
    };

    let mut patches = 0;
    while count < goal && patches < spec.max_patches {
        patches += 1;
        let pw = rng.random_range(wl..=wh);
        let ph = rng.random_range(hl..=hh);
        let x0 = rng.random_range(0..=w - pw);
        let y0 = rng.random_range(0..=h - ph);
        let added: usize = (y0..y0 + ph).map(|y| fresh(&covered, x0, pw, y)).sum();
        if count + added <= goal {
            for y in y0..y0 + ph {
                for x in x0..x0 + pw {
                    mark(
                        &mut covered,
                        &mut count,
                        y as usize * w as usize + x as usize,
                    );
                }
            }
            continue;
        }
        // Final trim patch: whole rows while they fit, then single pixels.
        for y in y0..y0 + ph {
            if count + fresh(&covered, x0, pw, y) <= goal {
                for x in x0..x0 + pw {
                    mark(
                        &mut covered,
                        &mut count,
                        y as usize * w as usize + x as usize,
                    );
                }
            } else {
                for x in x0..x0 + pw {
                    if count >= goal {
                        break;
                    }
                    mark(
                        &mut covered,
                        &mut count,
                        y as usize * w as usize + x as usize,
                    );
                }
            }
            if count >= goal {
                break;
            }
        }
    }
    // Patch budget exhausted: fill the remainder in raster order.
    for c in covered.iter_mut() {
        if count >= goal {
            break;
        }
        if !*c {
            *c = true;
            count += 1;
        }
    }

    for (i, &c) in covered.iter().enumerate() {
        if c {
            let x = (i % w as usize) as u32;
            let y = r0 + (i / w as usize) as u32;
            out.set(x, y, BLACK);
        }
    }
    Ok(out)
}

/// Black rectangles anywhere in the image. Rejects half-image specs; use
/// [`occlude_half`] or [`occlude`] for those.
pub fn occlude_random_patches(
    image: &ImageRaster,
    spec: &OcclusionSpec,
) -> Result<ImageRaster, ImageError> {
    if spec.region != Region::Whole {
        return Err(ImageError::BadParameter(format!(
            "occlude_random_patches needs region whole, got {}",
            spec.region
        )));
    }
    occlude_rows(image, spec, Region::Whole.rows(image.height))
}

/// Patches restricted to the top rows `[0, ceil(H/2))` or the remaining
/// bottom rows; coverage is measured within that half.
pub fn occlude_half(
    image: &ImageRaster,
    which: Region,
    spec: &OcclusionSpec,
) -> Result<ImageRaster, ImageError> {
    if which == Region::Whole {
        return Err(ImageError::BadParameter(
            "occlude_half needs a half region".into(),
        ));
    }
    if image.height < 2 {
        return Err(ImageError::BadParameter(
            "image height must be at least 2".into(),
        ));
    }
    occlude_rows(image, spec, which.rows(image.height))
}

/// Dispatches on `spec.region`.
pub fn occlude(image: &ImageRaster, spec: &OcclusionSpec) -> Result<ImageRaster, ImageError> {
    match spec.region {
        Region::Whole => occlude_random_patches(image, spec),
        r => occlude_half(image, r, spec),
    }
}

/// Fraction of pixels that changed and are black in `occluded`.
pub fn measure_coverage(original: &ImageRaster, occluded: &ImageRaster) -> Result<f64, ImageError> {
    if (original.width, original.height) != (occluded.width, occluded.height) {
        return Err(ImageError::DimMismatch(
            original.width,
            original.height,
            occluded.width,
            occluded.height,
        ));
    }
    let hits = original
        .pixels
        .chunks_exact(3)
        .zip(occluded.pixels.chunks_exact(3))
        .filter(|(a, b)| a != b && *b == BLACK)
        .count();
    Ok(hits as f64 / original.pixel_count() as f64)
}
