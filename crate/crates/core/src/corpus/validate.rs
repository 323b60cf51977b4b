use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{Embeddings, Manifest, Split};

/// Problems found in a corpus. Empty means clean.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    /// Record ids whose vector holds NaN or an infinity.
    pub non_finite_records: Vec<u64>,
    pub dimension_conflicts: Vec<String>,
    /// Record ids with an empty identity label.
    pub empty_identity_records: Vec<u64>,
    /// Query identities that never appear in the gallery split.
    pub unmatched_query_identities: Vec<String>,
    /// (identity, media_id, record_id) keys seen more than once.
    pub duplicate_keys: Vec<u64>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.non_finite_records.is_empty()
            && self.dimension_conflicts.is_empty()
            && self.empty_identity_records.is_empty()
            && self.unmatched_query_identities.is_empty()
            && self.duplicate_keys.is_empty()
    }

    /// Clean apart from unmatched query identities, which evaluation skips
    /// and counts.
    pub fn is_usable(&self) -> bool {
        self.non_finite_records.is_empty()
            && self.dimension_conflicts.is_empty()
            && self.empty_identity_records.is_empty()
            && self.duplicate_keys.is_empty()
    }

    pub fn summary(&self) -> String {
        if self.is_clean() {
            return "corpus is clean".to_string();
        }
        let mut lines = Vec::new();
        if !self.non_finite_records.is_empty() {
            lines.push(format!(
                "non-finite vectors in record_ids {:?}",
                self.non_finite_records
            ));
        }
        for c in &self.dimension_conflicts {
            lines.push(format!("dimension conflict: {c}"));
        }
        if !self.empty_identity_records.is_empty() {
            lines.push(format!(
                "empty identity label in record_ids {:?}",
                self.empty_identity_records
            ));
        }
        if !self.unmatched_query_identities.is_empty() {
            lines.push(format!(
                "{} query identities have no gallery rows: {:?}",
                self.unmatched_query_identities.len(),
                self.unmatched_query_identities
            ));
        }
        if !self.duplicate_keys.is_empty() {
            lines.push(format!("duplicate record keys {:?}", self.duplicate_keys));
        }
        lines.join("\n")
    }
}

pub fn validate_corpus(manifest: &Manifest, embeddings: &Embeddings) -> ValidationReport {
    let mut report = ValidationReport::default();

    if manifest.dim != embeddings.dim {
        report.dimension_conflicts.push(format!(
            "manifest declares D={} but embeddings have D={}",
            manifest.dim, embeddings.dim
        ));
    }
    if manifest.len() != embeddings.rows {
        report.dimension_conflicts.push(format!(
            "{} records but {} embedding rows",
            manifest.len(),
            embeddings.rows
        ));
    }

    let rows = manifest.len().min(embeddings.rows);
    for (i, record) in manifest.records.iter().take(rows).enumerate() {
        if embeddings.row(i).iter().any(|v| !v.is_finite()) {
            report.non_finite_records.push(record.record_id);
        }
    }

    let mut seen = BTreeMap::new();
    for record in &manifest.records {
        if record.identity.is_empty() {
            report.empty_identity_records.push(record.record_id);
        }
        let key = (&record.identity, &record.media_id, record.record_id);
        if seen.insert(key, ()).is_some() {
            report.duplicate_keys.push(record.record_id);
        }
    }

    let gallery: BTreeSet<&str> = manifest
        .records
        .iter()
        .filter(|r| r.split == Split::Gallery)
        .map(|r| r.identity.as_str())
        .collect();
    let queries: BTreeSet<&str> = manifest
        .records
        .iter()
        .filter(|r| r.split == Split::Query)
        .map(|r| r.identity.as_str())
        .collect();
    report.unmatched_query_identities = queries
        .difference(&gallery)
        .map(|s| s.to_string())
        .collect();

    report
}
