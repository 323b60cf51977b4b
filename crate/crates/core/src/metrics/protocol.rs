use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{MetricsError, ProtocolKind};
use crate::corpus::{EmbeddingRecord, Manifest, Split};

/// Grouping key used when templating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKey {
    Identity,
    IdentityMedia,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub kind: ProtocolKind,
    /// Ascending.
    pub ranks: Vec<usize>,
    /// Descending, each in (0, 1).
    pub far_targets: Vec<f64>,
    pub template_gallery: bool,
    pub template_queries: bool,
    pub gallery_key: TemplateKey,
    pub query_key: TemplateKey,
}

impl EvalProtocol {
    /// Defaults for `kind`: ranks [1, 20], FAR targets [1e-3, 1e-4]. Only
    /// `bts_templated` templates, with one gallery template per identity and
    /// one probe template per (identity, media) group.
    pub fn new(kind: ProtocolKind) -> Self {
        let templated = kind == ProtocolKind::BtsTemplated;
        Self {
            kind,
            ranks: vec![1, 20],
            far_targets: vec![1e-3, 1e-4],
            template_gallery: templated,
            template_queries: templated,
            gallery_key: TemplateKey::Identity,
            query_key: TemplateKey::IdentityMedia,
        }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.ranks.is_empty() || self.ranks[0] == 0 {
            return Err(MetricsError::InvalidProtocol(
                "ranks must be non-empty positive integers".into(),
            ));
        }
        if self.ranks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MetricsError::InvalidProtocol(
                "ranks must be strictly ascending".into(),
            ));
        }
        if self.far_targets.iter().any(|&f| !(f > 0.0 && f < 1.0)) {
            return Err(MetricsError::InvalidProtocol(
                "far targets must lie in (0, 1)".into(),
            ));
        }
        if self.far_targets.windows(2).any(|w| w[0] <= w[1]) {
            return Err(MetricsError::InvalidProtocol(
                "far targets must be strictly descending".into(),
            ));
        }
        Ok(())
    }
}

/// Dense boolean matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub rows: usize,
    pub cols: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: bool) -> Self {
        Self {
            rows,
            cols,
            bits: vec![value; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.bits[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[bool] {
        &self.bits[r * self.cols..(r + 1) * self.cols]
    }
}

/// A query or gallery item: a single record, or a template over several.
/// Camera and outfit are `None` when members disagree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalEntry {
    pub members: Vec<usize>,
    pub identity: String,
    pub camera_id: Option<String>,
    pub clothes_id: Option<String>,
}

impl EvalEntry {
    fn from_members(records: &[EmbeddingRecord], members: Vec<usize>) -> Self {
        let first = &records[members[0]];
        let shared = |f: fn(&EmbeddingRecord) -> &str| {
            let v = f(first);
            members
                .iter()
                .all(|&m| f(&records[m]) == v)
                .then(|| v.to_string())
        };
        EvalEntry {
            identity: first.identity.clone(),
            camera_id: shared(|r| &r.camera_id),
            clothes_id: shared(|r| &r.clothes_id),
            members,
        }
    }

    pub fn is_template(&self) -> bool {
        self.members.len() > 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolView {
    pub kind: ProtocolKind,
    /// Evaluated queries only.
    pub queries: Vec<EvalEntry>,
    pub gallery: Vec<EvalEntry>,
    pub valid: Mask,
    pub matches: Mask,
    /// Queries dropped for lacking any valid gallery match.
    pub skipped: Vec<EvalEntry>,
}

fn group(
    records: &[EmbeddingRecord],
    split: Split,
    templated: bool,
    key: TemplateKey,
) -> Vec<EvalEntry> {
    let indices = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.split == split)
        .map(|(i, _)| i);
    if !templated {
        return indices
            .map(|i| EvalEntry::from_members(records, vec![i]))
            .collect();
    }
    let mut groups = OrderedGroups::default();
    for i in indices {
        let r = &records[i];
        let k = match key {
            TemplateKey::Identity => (r.identity.clone(), String::new()),
            TemplateKey::IdentityMedia => (r.identity.clone(), r.media_id.clone()),
        };
        groups.push(k, i);
    }
    groups
        .into_groups()
        .map(|members| EvalEntry::from_members(records, members))
        .collect()
}

fn same(a: &Option<String>, b: &Option<String>) -> bool {
    matches!((a, b), (Some(x), Some(y)) if x == y)
}

fn is_valid(kind: ProtocolKind, q: &EvalEntry, g: &EvalEntry) -> bool {
    if q.identity != g.identity {
        return true;
    }
    match kind {
        ProtocolKind::Market | ProtocolKind::Deepchange => !same(&q.camera_id, &g.camera_id),
        ProtocolKind::PrccCc => !same(&q.clothes_id, &g.clothes_id),
        ProtocolKind::BtsTemplated => true,
    }
}

/// Splits a manifest into query and gallery entries and builds the
/// valid / match masks for `protocol`.
pub fn apply_protocol(
    manifest: &Manifest,
    protocol: &EvalProtocol,
) -> Result<ProtocolView, MetricsError> {
    protocol.validate()?;
    let records = &manifest.records;
    let gallery = group(
        records,
        Split::Gallery,
        protocol.template_gallery,
        protocol.gallery_key,
    );
    if gallery.is_empty() {
        return Err(MetricsError::EmptyGallery);
    }
    let candidates = group(
        records,
        Split::Query,
        protocol.template_queries,
        protocol.query_key,
    );

    let mut queries = Vec::new();
    let mut skipped = Vec::new();
    let mut valid_rows: Vec<bool> = Vec::new();
    let mut match_rows: Vec<bool> = Vec::new();
    for q in candidates {
        let valid: Vec<bool> = gallery
            .iter()
            .map(|g| is_valid(protocol.kind, &q, g))
            .collect();
        let matched: Vec<bool> = gallery
            .iter()
            .zip(&valid)
            .map(|(g, &v)| v && g.identity == q.identity)
            .collect();
        if matched.iter().any(|&m| m) {
            valid_rows.extend(valid);
            match_rows.extend(matched);
            queries.push(q);
        } else {
            skipped.push(q);
        }
    }
    let (rows, cols) = (queries.len(), gallery.len());
    Ok(ProtocolView {
        kind: protocol.kind,
        queries,
        gallery,
        valid: Mask {
            rows,
            cols,
            bits: valid_rows,
        },
        matches: Mask {
            rows,
            cols,
            bits: match_rows,
        },
        skipped,
    })
}

/// Groups values by key, remembering first-seen key order.
#[derive(Default)]
struct OrderedGroups {
    index: HashMap<(String, String), usize>,
    groups: Vec<Vec<usize>>,
}

impl OrderedGroups {
    fn push(&mut self, key: (String, String), value: usize) {
        let next = self.groups.len();
        let slot = *self.index.entry(key).or_insert(next);
        if slot == next {
            self.groups.push(Vec::new());
        }
        self.groups[slot].push(value);
    }

    fn into_groups(self) -> impl Iterator<Item = Vec<usize>> {
        self.groups.into_iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, identity: &str, camera: &str, clothes: &str, split: Split) -> EmbeddingRecord {
        EmbeddingRecord {
            record_id: id,
            identity: identity.into(),
            media_id: format!("{identity}-{clothes}"),
            camera_id: camera.into(),
            clothes_id: clothes.into(),
            dataset: "t".into(),
            split,
        }
    }

    #[test]
    fn market_masks_same_camera_by_hand() {
        // query a/cam1; gallery a/cam1 (junk), a/cam2 (match), b/cam1 (impostor)
        let m = Manifest::new(
            vec![
                rec(0, "a", "cam1", "x", Split::Query),
                rec(1, "a", "cam1", "x", Split::Gallery),
                rec(2, "a", "cam2", "x", Split::Gallery),
                rec(3, "b", "cam1", "y", Split::Gallery),
            ],
            2,
        );
        let v = apply_protocol(&m, &EvalProtocol::new(ProtocolKind::Market)).unwrap();
        assert_eq!(v.valid.bits, vec![false, true, true]);
        assert_eq!(v.matches.bits, vec![false, true, false]);
        assert!(v.skipped.is_empty());
    }

    #[test]
    fn clothes_change_skips_query_with_only_own_outfit() {
        let m = Manifest::new(
            vec![
                rec(0, "a", "c1", "a-shirt", Split::Query),
                rec(1, "b", "c1", "b-shirt", Split::Query),
                rec(2, "a", "c2", "a-shirt", Split::Gallery),
                rec(3, "b", "c2", "b-coat", Split::Gallery),
            ],
            2,
        );
        let v = apply_protocol(&m, &EvalProtocol::new(ProtocolKind::PrccCc)).unwrap();
        assert_eq!(v.skipped.len(), 1);
        assert_eq!(v.skipped[0].identity, "a");
        assert_eq!(v.queries.len(), 1);
        assert_eq!(v.valid.bits, vec![true, true]);
        assert_eq!(v.matches.bits, vec![false, true]);
    }

    #[test]
    fn templated_gallery_has_one_entry_per_identity() {
        let mut records = Vec::new();
        for (i, id) in ["a", "b", "c", "a", "b", "a"].iter().enumerate() {
            records.push(rec(i as u64, id, "c", "k", Split::Gallery));
        }
        records.push(rec(6, "a", "c", "k", Split::Query));
        let m = Manifest::new(records, 2);
        let v = apply_protocol(&m, &EvalProtocol::new(ProtocolKind::BtsTemplated)).unwrap();
        assert_eq!(v.gallery.len(), 3);
        assert_eq!(v.gallery[0].members, vec![0, 3, 5]);
    }

    #[test]
    fn empty_gallery_and_bad_protocol() {
        let m = Manifest::new(vec![rec(0, "a", "c", "k", Split::Query)], 2);
        assert!(matches!(
            apply_protocol(&m, &EvalProtocol::new(ProtocolKind::Market)),
            Err(MetricsError::EmptyGallery)
        ));
        let mut p = EvalProtocol::new(ProtocolKind::Market);
        p.ranks = vec![20, 1];
        assert!(p.validate().is_err());
        p.ranks = vec![1];
        p.far_targets = vec![1e-4, 1e-3];
        assert!(p.validate().is_err());
    }
}
