use std::fs;
use std::path::{Path, PathBuf};

use reidbench_core::corpus::SynthConfig;
use reidbench_core::imageops::OcclusionSpec;
use reidbench_core::metrics::Metric;
use reidbench_core::mining::{Nonlinearity, TrainConfig};
use reidbench_core::report::CorpusEntry;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, UsageKind};

/// `[eval]` section: [`reidbench_core::report::RunConfig`] without the
/// output directory and seed, which come from `--out` and `--seed`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub model_tag: Option<String>,
    pub corpora: Vec<CorpusEntry>,
    pub occlusions: Vec<OcclusionSpec>,
    pub metric: Option<Metric>,
    pub ranks: Option<Vec<usize>>,
    pub far_targets: Option<Vec<f64>>,
    pub encoder: Option<PathBuf>,
}

/// `[encoder]` section: how `train` initialises the toy encoder.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub nonlinearity: Option<Nonlinearity>,
    /// Output dimension of a random start; `None` starts from identity.
    pub random_init: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub synth: Option<SynthConfig>,
    pub train: Option<TrainConfig>,
    pub encoder: Option<EncoderSection>,
    pub occlusion: Option<OcclusionSpec>,
    pub eval: Option<EvalSection>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, CliError> {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::usage(
                UsageKind::BadValue,
                format!("--config {}: {e}", path.display()),
            )
        })?;
        toml::from_str(&text).map_err(|e| {
            let msg = e.to_string();
            let kind = if msg.contains("unknown field") {
                UsageKind::UnknownFlag
            } else {
                UsageKind::BadValue
            };
            CliError::usage(kind, format!("--config {}: {}", path.display(), msg.trim()))
        })
    }
}
