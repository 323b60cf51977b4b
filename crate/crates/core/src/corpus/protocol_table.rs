//! KS / CCD transfer-learning dataset composition.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, EmbeddingRecord, Embeddings, Manifest};

const BUILTIN_TABLE: &str = include_str!("../../resources/transfer_datasets.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransferProtocol {
    /// Kitchen Sink: every available re-id dataset.
    #[serde(rename = "KS")]
    Ks,
    /// Clothes Change Datasets only.
    #[serde(rename = "CCD")]
    Ccd,
}

impl FromStr for TransferProtocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ks" => Ok(Self::Ks),
            "ccd" => Ok(Self::Ccd),
            other => Err(format!(
                "unknown transfer protocol `{other}` (expected ks or ccd)"
            )),
        }
    }
}

impl fmt::Display for TransferProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ks => "KS",
            Self::Ccd => "CCD",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetEntry {
    pub tag: String,
    pub name: String,
    pub images: u64,
    pub identities: u64,
    pub clothes_change: bool,
    /// Listed in the published Kitchen Sink row set.
    pub in_ks: bool,
    /// Listed in the published Clothes Change Datasets row set.
    pub in_ccd: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetTable {
    entries: BTreeMap<String, DatasetEntry>,
}

fn parse_flag(line: usize, s: &str) -> Result<bool, CorpusError> {
    match s {
        "yes" => Ok(true),
        "no" => Ok(false),
        other => Err(CorpusError::BadTable {
            line,
            reason: format!("expected yes/no, got `{other}`"),
        }),
    }
}

impl DatasetTable {
    /// The table shipped in `resources/transfer_datasets.tsv`.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_TABLE).expect("built-in dataset table is well formed")
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = raw.split('\t').collect();
            if cols.len() != 7 {
                return Err(CorpusError::BadTable {
                    line,
                    reason: format!("expected 7 tab-separated columns, got {}", cols.len()),
                });
            }
            let num = |s: &str| {
                s.parse::<u64>().map_err(|e| CorpusError::BadTable {
                    line,
                    reason: e.to_string(),
                })
            };
            let entry = DatasetEntry {
                tag: cols[0].to_string(),
                name: cols[1].to_string(),
                images: num(cols[2])?,
                identities: num(cols[3])?,
                clothes_change: parse_flag(line, cols[4])?,
                in_ks: parse_flag(line, cols[5])?,
                in_ccd: parse_flag(line, cols[6])?,
            };
            entries.insert(entry.tag.clone(), entry);
        }
        Ok(Self { entries })
    }

    pub fn get(&self, tag: &str) -> Option<&DatasetEntry> {
        self.entries.get(tag)
    }

    pub fn entries(&self) -> impl Iterator<Item = &DatasetEntry> {
        self.entries.values()
    }

    /// Tags listed under the Kitchen Sink row set, in table order of tag.
    pub fn ks_tags(&self) -> Vec<&str> {
        self.entries
            .values()
            .filter(|e| e.in_ks)
            .map(|e| e.tag.as_str())
            .collect()
    }

    /// Whether a dataset tag is retained under `protocol`.
    pub fn retains(&self, tag: &str, protocol: TransferProtocol) -> Result<bool, CorpusError> {
        let entry = self
            .get(tag)
            .ok_or_else(|| CorpusError::UnknownTag(tag.to_string()))?;
        Ok(match protocol {
            TransferProtocol::Ks => true,
            TransferProtocol::Ccd => entry.clothes_change,
        })
    }
}

/// Merges the manifests retained by `protocol` into one manifest.
///
/// Record ids are renumbered densely in input order and each record's
/// `dataset` field is set to the tag it was supplied under.
pub fn compose_protocol_manifest(
    datasets: &[(&str, &Manifest)],
    protocol: TransferProtocol,
    table: &DatasetTable,
) -> Result<Manifest, CorpusError> {
    let kept = retained(datasets.iter().map(|(t, m)| (*t, *m)), protocol, table)?;
    let dim = kept.first().map(|(_, m)| m.dim).unwrap_or(0);
    let mut records = Vec::new();
    for (tag, manifest) in kept {
        if manifest.dim != dim {
            return Err(CorpusError::Shape(format!(
                "dataset `{tag}` has D={} but earlier datasets have D={dim}",
                manifest.dim
            )));
        }
        for r in &manifest.records {
            records.push(EmbeddingRecord {
                record_id: records.len() as u64,
                dataset: tag.to_string(),
                ..r.clone()
            });
        }
    }
    Ok(Manifest::new(records, dim))
}

/// [`compose_protocol_manifest`] carrying the embedding rows along.
pub fn compose_protocol_corpus(
    datasets: &[(&str, &Corpus)],
    protocol: TransferProtocol,
    table: &DatasetTable,
) -> Result<Corpus, CorpusError> {
    let manifests: Vec<(&str, &Manifest)> =
        datasets.iter().map(|(t, c)| (*t, &c.manifest)).collect();
    let manifest = compose_protocol_manifest(&manifests, protocol, table)?;
    let mut data = Vec::with_capacity(manifest.len() * manifest.dim);
    for (tag, corpus) in datasets {
        if table.retains(tag, protocol)? {
            data.extend_from_slice(&corpus.embeddings.data);
        }
    }
    let embeddings = Embeddings::new(manifest.len(), manifest.dim, data)?;
    Corpus::new(manifest, embeddings)
}

fn retained<'a>(
    datasets: impl Iterator<Item = (&'a str, &'a Manifest)>,
    protocol: TransferProtocol,
    table: &DatasetTable,
) -> Result<Vec<(&'a str, &'a Manifest)>, CorpusError> {
    let mut kept = Vec::new();
    for (tag, manifest) in datasets {
        if table.retains(tag, protocol)? {
            kept.push((tag, manifest));
        }
    }
    Ok(kept)
}
