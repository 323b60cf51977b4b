use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::corpus::Embeddings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Euclidean,
    /// 1 − cosine similarity, in [0, 2].
    CosineDistance,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::CosineDistance => "cosine_distance",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" | "cosine_distance" => Ok(Metric::CosineDistance),
            other => Err(format!(
                "unknown metric `{other}` (expected euclidean or cosine_distance)"
            )),
        }
    }
}

/// Dense Q×G distance matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub metric: Metric,
    pub query_ids: Vec<String>,
    pub gallery_ids: Vec<String>,
}

impl DistanceMatrix {
    pub fn from_values(
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        metric: Metric,
    ) -> Result<Self, MetricsError> {
        if values.len() != rows * cols {
            return Err(MetricsError::DimMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            values,
            metric,
            query_ids: vec![String::new(); rows],
            gallery_ids: vec![String::new(); cols],
        })
    }

    pub fn get(&self, q: usize, g: usize) -> f64 {
        self.values[q * self.cols + g]
    }

    pub fn row(&self, q: usize) -> &[f64] {
        &self.values[q * self.cols..(q + 1) * self.cols]
    }

    pub fn with_labels(mut self, query_ids: Vec<String>, gallery_ids: Vec<String>) -> Self {
        assert_eq!(query_ids.len(), self.rows);
        assert_eq!(gallery_ids.len(), self.cols);
        self.query_ids = query_ids;
        self.gallery_ids = gallery_ids;
        self
    }
}

fn check_finite(m: &Embeddings, which: &'static str) -> Result<(), MetricsError> {
    for r in 0..m.rows {
        if m.row(r).iter().any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFiniteInput { which, row: r });
        }
    }
    Ok(())
}

fn norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|&x| (x as f64) * (x as f64))
        .sum::<f64>()
        .sqrt()
}

/// Distances between every query row and every gallery row, accumulated in
/// `f64`. Rows are computed in parallel; each entry depends only on its two
/// input rows, so the result does not depend on the thread count.
pub fn pairwise_distances(
    queries: &Embeddings,
    gallery: &Embeddings,
    metric: Metric,
) -> Result<DistanceMatrix, MetricsError> {
    if queries.dim != gallery.dim {
        return Err(MetricsError::DimMismatch(format!(
            "queries have D={} but gallery has D={}",
            queries.dim, gallery.dim
        )));
    }
    check_finite(queries, "query")?;
    check_finite(gallery, "gallery")?;

    let cols = gallery.rows;
    let mut values = vec![0.0f64; queries.rows * cols];
    if cols == 0 {
        return DistanceMatrix::from_values(queries.rows, 0, values, metric);
    }

    let gallery_norms: Vec<f64> = match metric {
        Metric::CosineDistance => (0..cols).map(|g| norm(gallery.row(g))).collect(),
        Metric::Euclidean => Vec::new(),
    };
    if gallery_norms.contains(&0.0) {
        return Err(MetricsError::ZeroVector);
    }

    values.par_chunks_mut(cols).enumerate().try_for_each(
        |(q, out)| -> Result<(), MetricsError> {
            let qrow = queries.row(q);
            match metric {
                Metric::Euclidean => {
                    for (g, slot) in out.iter_mut().enumerate() {
                        let s: f64 = qrow
                            .iter()
                            .zip(gallery.row(g))
                            .map(|(&a, &b)| {
                                let d = a as f64 - b as f64;
                                d * d
                            })
                            .sum();
                        *slot = s.sqrt();
                    }
                }
                Metric::CosineDistance => {
                    let qn = norm(qrow);
                    if qn == 0.0 {
                        return Err(MetricsError::ZeroVector);
                    }
                    for (g, slot) in out.iter_mut().enumerate() {
                        let dot: f64 = qrow
                            .iter()
                            .zip(gallery.row(g))
                            .map(|(&a, &b)| a as f64 * b as f64)
                            .sum();
                        *slot = (1.0 - dot / (qn * gallery_norms[g])).clamp(0.0, 2.0);
                    }
                }
            }
            Ok(())
        },
    )?;

    DistanceMatrix::from_values(queries.rows, cols, values, metric)
}
