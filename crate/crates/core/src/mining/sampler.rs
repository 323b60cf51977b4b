use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;

use super::MiningError;
use crate::corpus::{Manifest, Split};

/// Row indices grouped by identity, identities in label order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentityIndex {
    pub identities: Vec<String>,
    pub rows: Vec<Vec<usize>>,
}

impl IdentityIndex {
    pub fn from_manifest(manifest: &Manifest, split: Split) -> Self {
        let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in manifest.records.iter().enumerate() {
            if r.split == split {
                map.entry(&r.identity).or_default().push(i);
            }
        }
        let (identities, rows) = map.into_iter().map(|(k, v)| (k.to_string(), v)).unzip();
        Self { identities, rows }
    }

    pub fn len(&self) -> usize {
        self.identities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.identities.is_empty()
    }

    pub fn total_rows(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

/// Manifest rows for one P×K batch; `labels[i]` indexes
/// [`IdentityIndex::identities`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchIndices {
    pub rows: Vec<usize>,
    pub labels: Vec<usize>,
}

/// Draws P distinct identities uniformly, then K images of each: without
/// replacement when the identity has at least K images, with replacement
/// otherwise.
pub fn sample_batch<R: Rng + ?Sized>(
    index: &IdentityIndex,
    p: usize,
    k: usize,
    rng: &mut R,
) -> Result<BatchIndices, MiningError> {
    if index.len() < p {
        return Err(MiningError::InsufficientIdentities {
            needed: p,
            available: index.len(),
        });
    }
    let mut rows = Vec::with_capacity(p * k);
    let mut labels = Vec::with_capacity(p * k);
    for id in index::sample(rng, index.len(), p) {
        let pool = &index.rows[id];
        if pool.len() >= k {
            rows.extend(
                index::sample(rng, pool.len(), k)
                    .into_iter()
                    .map(|j| pool[j]),
            );
        } else {
            rows.extend((0..k).map(|_| pool[rng.random_range(0..pool.len())]));
        }
        labels.extend(std::iter::repeat_n(id, k));
    }
    Ok(BatchIndices { rows, labels })
}
