//! Desk-scale transfer-learning recipe: P×K batches, online triplet loss
//! with hardest violating negatives, Adam, and a toy affine encoder.

mod adam;
mod encoder;
mod sampler;
mod train;
mod triplet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::metrics::{MetricsError, ProtocolKind};

pub use adam::{adam_step, AdamState};
pub use encoder::{Nonlinearity, ToyEncoder};
pub use sampler::{sample_batch, BatchIndices, IdentityIndex};
pub use train::{encode_corpus, trace_to_csv, train, EvalPoint, TraceRow, TrainOutcome};
pub use triplet::{
    batch_distances, hardest_violating_negative, loss_gradient, triplet_loss, MinedTriplet,
    TripletBatch, TripletLoss,
};

/// Learning-rate range used for the large pretrained backbones.
pub const PAPER_LEARNING_RATE_RANGE: (f64, f64) = (7.5e-6, 1.25e-5);

#[derive(Debug, Error)]
pub enum MiningError {
    #[error("need {needed} identities with images, found {available}")]
    InsufficientIdentities { needed: usize, available: usize },
    #[error("anchor {anchor} and positive {positive} are not a same-identity pair")]
    InvalidPair { anchor: usize, positive: usize },
    #[error("batch has no negatives for anchor {0}")]
    NoNegativesInBatch(usize),
    #[error("batch contains a single identity")]
    DegenerateBatch,
    #[error("zero distance in active triplet ({anchor}, {other})")]
    DegenerateDistance { anchor: usize, other: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("train and validation splits share identity `{0}`")]
    OverlappingSplits(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub margin: f64,
    /// P: identities per batch.
    pub batch_identities: usize,
    /// K: images per identity.
    pub images_per_identity: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub max_steps: usize,
    pub seed: u64,
    /// Protocol for the per-epoch validation rank-1.
    pub validation_protocol: ProtocolKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 0.35,
            batch_identities: 10,
            images_per_identity: 4,
            learning_rate: 1e-5,
            weight_decay: 1e-6,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            max_steps: 2000,
            seed: 0,
            validation_protocol: ProtocolKind::PrccCc,
        }
    }
}

impl TrainConfig {
    pub fn batch_size(&self) -> usize {
        self.batch_identities * self.images_per_identity
    }

    pub fn validate(&self) -> Result<(), MiningError> {
        let bad = |m: &str| Err(MiningError::InvalidConfig(m.to_string()));
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad("margin must be positive");
        }
        if self.batch_identities < 2 {
            return bad("batch_identities must be at least 2");
        }
        if self.images_per_identity < 2 {
            return bad("images_per_identity must be at least 2");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be non-negative");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        for (name, b) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(b > 0.0 && b < 1.0) {
                return Err(MiningError::InvalidConfig(format!(
                    "{name} must lie in (0, 1)"
                )));
            }
        }
        if !(self.adam_epsilon > 0.0 && self.adam_epsilon.is_finite()) {
            return bad("adam_epsilon must be positive");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        Ok(())
    }
}
