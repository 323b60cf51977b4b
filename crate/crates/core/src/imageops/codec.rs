use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{measure_coverage, occlude, ImageError, ImageRaster, OcclusionSpec};
use crate::corpus::{Corpus, Embeddings};

/// Renders an embedding as a grid of flat cells, one per coordinate, so
/// image occlusion can be applied to embedding corpora. Values map
/// linearly onto intensities 1..=255 over `[-range, range]`; black pixels
/// decode as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterCodec {
    pub dim: usize,
    pub width: u32,
    pub height: u32,
    pub range: f64,
}

impl RasterCodec {
    pub fn new(dim: usize, width: u32, height: u32, range: f64) -> Result<Self, ImageError> {
        let c = Self {
            dim,
            width,
            height,
            range,
        };
        let (gc, gr) = c.grid();
        if dim == 0
            || !(range > 0.0 && range.is_finite())
            || gc > width as usize
            || gr > height as usize
        {
            return Err(ImageError::BadParameter(format!(
                "cannot render {dim} coordinates in range {range} on {width}x{height}"
            )));
        }
        Ok(c)
    }

    /// 32×64 rasters with the range set to the largest |value| in `emb`.
    pub fn fit(emb: &Embeddings) -> Result<Self, ImageError> {
        let m = emb
            .data
            .iter()
            .fold(0.0f64, |m, &v| m.max((v as f64).abs()));
        Self::new(emb.dim, 32, 64, if m > 0.0 { m } else { 1.0 })
    }

    /// (columns, rows) of the cell grid.
    fn grid(&self) -> (usize, usize) {
        let gc = (self.dim as f64).sqrt().ceil().max(1.0) as usize;
        (gc, self.dim.div_ceil(gc))
    }

    /// Pixel rectangle `(x0, x1, y0, y1)` of coordinate `k`.
    fn cell(&self, k: usize) -> (u32, u32, u32, u32) {
        let (gc, gr) = self.grid();
        let (col, row) = (k % gc, k / gc);
        let xs = |j: usize| (j * self.width as usize / gc) as u32;
        let ys = |j: usize| (j * self.height as usize / gr) as u32;
        (xs(col), xs(col + 1), ys(row), ys(row + 1))
    }

    fn quantize(&self, v: f64) -> u8 {
        let t = ((v + self.range) / (2.0 * self.range)).clamp(0.0, 1.0);
        (1.0 + (t * 254.0).round()) as u8
    }

    fn dequantize(&self, q: u8) -> f64 {
        if q == 0 {
            return 0.0;
        }
        (q as f64 - 1.0) / 254.0 * 2.0 * self.range - self.range
    }

    pub fn encode(&self, row: &[f32]) -> Result<ImageRaster, ImageError> {
        if row.len() != self.dim {
            return Err(ImageError::BadParameter(format!(
                "row of length {} for a {}-d codec",
                row.len(),
                self.dim
            )));
        }
        let mut img = ImageRaster::filled(self.width, self.height, [128, 128, 128]);
        for (k, &v) in row.iter().enumerate() {
            let q = self.quantize(v as f64);
            let (x0, x1, y0, y1) = self.cell(k);
            for y in y0..y1 {
                for x in x0..x1 {
                    img.set(x, y, [q, q, q]);
                }
            }
        }
        Ok(img)
    }

    /// Mean decoded value per cell; occluded pixels count as 0.
    pub fn decode(&self, img: &ImageRaster) -> Result<Vec<f32>, ImageError> {
        if (img.width, img.height) != (self.width, self.height) {
            return Err(ImageError::DimMismatch(
                img.width,
                img.height,
                self.width,
                self.height,
            ));
        }
        Ok((0..self.dim)
            .map(|k| {
                let (x0, x1, y0, y1) = self.cell(k);
                let mut s = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        s += self.dequantize(img.get(x, y)[0]);
                    }
                }
                (s / ((x1 - x0) as f64 * (y1 - y0) as f64)) as f32
            })
            .collect())
    }
}

/// One row of the occlusion manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionRecord {
    pub record_id: u64,
    pub level: String,
    pub region: String,
    pub seed: u64,
    pub coverage: f64,
}

/// Renders, occludes and decodes every record. Each image uses seed
/// `spec.seed ^ record_id`, so results do not depend on the worker count.
pub fn occlude_corpus(
    corpus: &Corpus,
    spec: &OcclusionSpec,
    codec: &RasterCodec,
) -> Result<(Corpus, Vec<OcclusionRecord>), ImageError> {
    spec.validate()?;
    let e = &corpus.embeddings;
    let rows: Vec<(Vec<f32>, OcclusionRecord)> = corpus
        .manifest
        .records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let seed = spec.seed ^ r.record_id;
            let img = codec.encode(e.row(i))?;
            let occ = occlude(
                &img,
                &OcclusionSpec {
                    seed,
                    ..spec.clone()
                },
            )?;
            let coverage = measure_coverage(&img, &occ)?;
            Ok((
                codec.decode(&occ)?,
                OcclusionRecord {
                    record_id: r.record_id,
                    level: spec.coverage.label(),
                    region: spec.region.to_string(),
                    seed,
                    coverage,
                },
            ))
        })
        .collect::<Result<_, ImageError>>()?;
    let mut data = Vec::with_capacity(e.data.len());
    let mut records = Vec::with_capacity(rows.len());
    for (v, rec) in rows {
        data.extend(v);
        records.push(rec);
    }
    let embeddings = Embeddings::new(e.rows, e.dim, data)?;
    Ok((Corpus::new(corpus.manifest.clone(), embeddings)?, records))
}
