//! Embedding corpora: records, manifests, file formats, validation and
//! synthetic stand-in data.

mod io;
mod protocol_table;
mod synth;
mod validate;

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::ProtocolKind;

pub use io::{
    decode_container, encode_container, parse_metadata, read_embeddings, read_metadata,
    record_to_line, write_embeddings, write_metadata, EMBEDDING_MAGIC, ENCODER_MAGIC,
};
pub use protocol_table::{
    compose_protocol_corpus, compose_protocol_manifest, DatasetEntry, DatasetTable,
    TransferProtocol,
};
pub use synth::{synth_corpus, SynthConfig};
pub use validate::{validate_corpus, ValidationReport};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("bad magic: expected {expected:?} header")]
    BadMagic { expected: String },
    #[error("truncated file: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: usize, actual: usize },
    #[error("payload size {payload} does not match header N={rows} D={dim}")]
    DimMismatch {
        rows: usize,
        dim: usize,
        payload: usize,
    },
    #[error("metadata line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("metadata line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("duplicate record_id {record_id}")]
    DuplicateRecordId { record_id: u64 },
    #[error("metadata has {metadata} records but embedding file has {embeddings} rows")]
    RowCountMismatch { metadata: usize, embeddings: usize },
    #[error("record_id {record_id} outside 0..{rows}")]
    RecordIdOutOfRange { record_id: u64, rows: usize },
    #[error("unknown dataset tag `{0}`")]
    UnknownTag(String),
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("matrix shape: {0}")]
    Shape(String),
    #[error("dataset table line {line}: {reason}")]
    BadTable { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Query,
    Gallery,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Query => "query",
            Split::Gallery => "gallery",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "query" => Ok(Split::Query),
            "gallery" => Ok(Split::Gallery),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Metadata for one embedding row. The vector itself lives in
/// [`Embeddings`] at row `record_id`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub record_id: u64,
    pub identity: String,
    pub media_id: String,
    pub camera_id: String,
    pub clothes_id: String,
    pub dataset: String,
    pub split: Split,
}

/// Dense row-major N×D matrix of `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl Embeddings {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self, CorpusError> {
        if rows.checked_mul(dim) != Some(data.len()) {
            return Err(CorpusError::Shape(format!(
                "{} values cannot form a {rows}x{dim} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, dim, data })
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_rows<R: AsRef<[f32]>>(dim: usize, rows: &[R]) -> Result<Self, CorpusError> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(CorpusError::Shape(format!(
                    "row {i} has length {}, expected {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            dim,
            data,
        })
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Copies the given rows, in order, into a new matrix.
    pub fn select(&self, indices: &[usize]) -> Embeddings {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Embeddings {
            rows: indices.len(),
            dim: self.dim,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub records: Vec<EmbeddingRecord>,
    pub dim: usize,
    pub dataset_tags: BTreeSet<String>,
    pub protocol_hint: Option<ProtocolKind>,
}

impl Manifest {
    pub fn new(records: Vec<EmbeddingRecord>, dim: usize) -> Self {
        let dataset_tags = records.iter().map(|r| r.dataset.clone()).collect();
        Self {
            records,
            dim,
            dataset_tags,
            protocol_hint: None,
        }
    }

    pub fn with_hint(mut self, hint: ProtocolKind) -> Self {
        self.protocol_hint = Some(hint);
        self
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Row indices of the records in `split`, ascending.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.split == split)
            .map(|(i, _)| i)
            .collect()
    }
}

/// A manifest together with its embedding rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub manifest: Manifest,
    pub embeddings: Embeddings,
}

impl Corpus {
    pub fn new(manifest: Manifest, embeddings: Embeddings) -> Result<Self, CorpusError> {
        if manifest.len() != embeddings.rows {
            return Err(CorpusError::RowCountMismatch {
                metadata: manifest.len(),
                embeddings: embeddings.rows,
            });
        }
        if manifest.dim != embeddings.dim {
            return Err(CorpusError::Shape(format!(
                "manifest dim {} vs embedding dim {}",
                manifest.dim, embeddings.dim
            )));
        }
        Ok(Self {
            manifest,
            embeddings,
        })
    }

    pub fn load(
        embeddings: impl AsRef<Path>,
        metadata: impl AsRef<Path>,
    ) -> Result<Self, CorpusError> {
        let emb = read_embeddings(embeddings)?;
        let records = read_metadata(metadata, Some(emb.rows))?;
        let dim = emb.dim;
        Corpus::new(Manifest::new(records, dim), emb)
    }

    pub fn save(
        &self,
        embeddings: impl AsRef<Path>,
        metadata: impl AsRef<Path>,
    ) -> Result<(), CorpusError> {
        write_embeddings(embeddings, &self.embeddings)?;
        write_metadata(metadata, &self.manifest.records)
    }

    /// Keeps only records matching `keep`, renumbering record ids densely.
    pub fn filter(&self, mut keep: impl FnMut(&EmbeddingRecord) -> bool) -> Corpus {
        let indices: Vec<usize> = self
            .manifest
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| keep(r))
            .map(|(i, _)| i)
            .collect();
        let records = indices
            .iter()
            .enumerate()
            .map(|(new_id, &i)| EmbeddingRecord {
                record_id: new_id as u64,
                ..self.manifest.records[i].clone()
            })
            .collect();
        let mut manifest = Manifest::new(records, self.manifest.dim);
        manifest.protocol_hint = self.manifest.protocol_hint;
        Corpus {
            manifest,
            embeddings: self.embeddings.select(&indices),
        }
    }
}
