//! RGB rasters for the occlusion benchmark and training augmentations.

mod augment;
mod codec;
mod occlusion;

use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};
use thiserror::Error;

use crate::corpus::CorpusError;

pub use augment::{
    augment_labeled, color_jitter, gaussian_blur, gaussian_kernel, grayscale, horizontal_flip,
    AugmentConfig, JitterFactors, LabeledImage,
};
pub use codec::{occlude_corpus, OcclusionRecord, RasterCodec};
pub use occlusion::{
    measure_coverage, occlude, occlude_half, occlude_random_patches, Coverage, OcclusionLevel,
    OcclusionSpec, Region,
};

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimMismatch(u32, u32, u32, u32),
    #[error("coverage {target} ± {tolerance} is unreachable over {pixels} pixels")]
    UnreachableCoverage {
        target: f64,
        tolerance: f64,
        pixels: usize,
    },
    #[error("PPM: {0}")]
    Ppm(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRaster {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl ImageRaster {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::BadParameter("empty image".into()));
        }
        if pixels.len() != width as usize * height as usize * 3 {
            return Err(ImageError::BadParameter(format!(
                "{} bytes for a {width}x{height} RGB image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            pixels: rgb.iter().copied().cycle().take(n * 3).collect(),
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.pixels[o..o + 3].copy_from_slice(&rgb);
    }

    /// Bytes of row `y`.
    pub fn row(&self, y: u32) -> &[u8] {
        let w = self.width as usize * 3;
        &self.pixels[y as usize * w..(y as usize + 1) * w]
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = Vec::new();
        PnmEncoder::new(&mut out)
            .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
            .write_image(
                &self.pixels,
                self.width,
                self.height,
                ExtendedColorType::Rgb8,
            )
            .expect("in-memory PPM encode");
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self, ImageError> {
        if !bytes.starts_with(b"P6") {
            return Err(ImageError::Ppm("expected binary P6 header".into()));
        }
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Pnm)
            .map_err(|e| ImageError::Ppm(e.to_string()))?
            .into_rgb8();
        let (w, h) = img.dimensions();
        Self::new(w, h, img.into_raw())
    }

    pub fn read_ppm(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| CorpusError::io(path, e))?;
        Self::from_ppm(&bytes)
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_ppm()).map_err(|e| CorpusError::io(path, e))?;
        Ok(())
    }
}
