//! Distances, evaluation protocols and retrieval / verification metrics.

mod distance;
mod evaluate;
mod protocol;
mod ranking;
mod report;
mod template;
mod verification;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;

pub use distance::{pairwise_distances, DistanceMatrix, Metric};
pub use evaluate::{evaluate, EvalOptions};
pub use protocol::{apply_protocol, EvalEntry, EvalProtocol, Mask, ProtocolView, TemplateKey};
pub use ranking::{cmc, mean_average_precision, CmcResult};
pub use report::{MetricReport, CSV_HEADER};
pub use template::{template_embeddings, template_vectors};
pub use verification::{tar_at_far, TarPoint};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("non-finite value in {which} row {row}")]
    NonFiniteInput { which: &'static str, row: usize },
    #[error("zero-norm vector cannot be normalized")]
    ZeroVector,
    #[error("template group {0} is empty")]
    EmptyGroup(usize),
    #[error("protocol produced an empty gallery")]
    EmptyGallery,
    #[error("no query has a valid gallery match")]
    NoEvaluableQueries,
    #[error("{0} score list is empty")]
    EmptyScoreList(&'static str),
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error("mask shape {mask:?} does not match distance matrix {dist:?}")]
    MaskShape {
        mask: (usize, usize),
        dist: (usize, usize),
    },
    #[error("report serialization: {0}")]
    Serialization(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Benchmark evaluation protocol family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    /// Same-clothes benchmark; same-identity same-camera gallery rows are excluded.
    Market,
    /// Clothes-change benchmark; same-identity same-outfit gallery rows are excluded.
    PrccCc,
    /// Per-image galleries with the same-camera exclusion.
    Deepchange,
    /// Templated gallery (one embedding per identity), templated probe media.
    BtsTemplated,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 4] = [
        ProtocolKind::Market,
        ProtocolKind::PrccCc,
        ProtocolKind::Deepchange,
        ProtocolKind::BtsTemplated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::Market => "market",
            ProtocolKind::PrccCc => "prcc_cc",
            ProtocolKind::Deepchange => "deepchange",
            ProtocolKind::BtsTemplated => "bts_templated",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProtocolKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                format!("unknown protocol `{s}` (expected market, prcc_cc, deepchange or bts_templated)")
            })
    }
}
