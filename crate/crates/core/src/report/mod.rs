//! Benchmark runs and reporting artifacts: result tables, signed ablation
//! deltas and occlusion curves.

mod curve;
mod delta;
mod run;
mod tables;

use std::cmp::Ordering;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::imageops::ImageError;
use crate::metrics::{MetricReport, MetricsError};

pub use curve::{occlusion_curve, CurvePoint, OcclusionCurve, CURVE_HEADER, DECLINE_FLAG};
pub use delta::{delta_table, format_delta, round_half_away, CellKey, DeltaTable};
pub use run::{
    default_far_targets, default_ranks, run_benchmark, BenchmarkOutcome, CorpusEntry, Failure,
    RunConfig,
};
pub use tables::{emit_delta, emit_reports, TableFormat};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report keys differ: {0}")]
    KeyMismatch(String),
    #[error("clean rank-1 is zero; relative curve undefined")]
    ZeroCleanRank1,
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

impl ReportError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ReportError::Io {
            path: path.into(),
            source,
        }
    }
}

/// FAR target ordered by value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Far(pub f64);

impl Eq for Far {}

impl PartialOrd for Far {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Far {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// A scalar column of a [`MetricReport`]. Sorts as ranks, mAP, then TAR
/// from the strictest FAR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricId {
    Rank(usize),
    Map,
    Tar(Far),
}

impl MetricId {
    pub fn value(self, r: &MetricReport) -> Option<f64> {
        let v = match self {
            MetricId::Rank(k) => r.rank(k),
            MetricId::Map => Some(r.map_score),
            MetricId::Tar(f) => r.tar(f.0),
        };
        v.filter(|x| x.is_finite())
    }

    /// Every metric the report carries.
    pub fn all_in(r: &MetricReport) -> Vec<MetricId> {
        let mut ids: Vec<MetricId> = r
            .rank_accuracies
            .keys()
            .map(|&k| MetricId::Rank(k))
            .collect();
        ids.push(MetricId::Map);
        ids.extend(
            r.tar_at_far
                .iter()
                .map(|p| MetricId::Tar(Far(p.far_target))),
        );
        ids.retain(|m| m.value(r).is_some());
        ids.sort();
        ids
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricId::Rank(k) => write!(f, "R{k}"),
            MetricId::Map => f.write_str("mAP"),
            MetricId::Tar(far) => write!(f, "T@F {:e}", far.0),
        }
    }
}

impl std::str::FromStr for MetricId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "mAP" {
            return Ok(MetricId::Map);
        }
        if let Some(k) = s.strip_prefix('R') {
            return k
                .parse()
                .map(MetricId::Rank)
                .map_err(|_| format!("bad rank `{s}`"));
        }
        if let Some(f) = s.strip_prefix("T@F ") {
            return f
                .parse()
                .map(|v| MetricId::Tar(Far(v)))
                .map_err(|_| format!("bad FAR `{s}`"));
        }
        Err(format!("unknown metric `{s}`"))
    }
}
