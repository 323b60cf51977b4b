use std::collections::BTreeMap;

use super::MiningError;

/// Embedded P×K batch. `embeddings` is row-major B×D.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletBatch {
    pub embeddings: Vec<f64>,
    pub dim: usize,
    pub labels: Vec<usize>,
    pub record_ids: Vec<u64>,
}

impl TripletBatch {
    /// Checks shapes and that every identity occurs equally often.
    pub fn new(
        embeddings: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        record_ids: Vec<u64>,
    ) -> Result<Self, MiningError> {
        let b = labels.len();
        if dim == 0 || embeddings.len() != b * dim || record_ids.len() != b {
            return Err(MiningError::ShapeMismatch(format!(
                "{} values, {} labels, {} record ids, dim {dim}",
                embeddings.len(),
                b,
                record_ids.len()
            )));
        }
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &l in &labels {
            *counts.entry(l).or_default() += 1;
        }
        let mut per = counts.values();
        if let Some(&k) = per.next() {
            if per.any(|&c| c != k) {
                return Err(MiningError::ShapeMismatch(
                    "identities occur an unequal number of times".into(),
                ));
            }
        }
        Ok(Self {
            embeddings,
            dim,
            labels,
            record_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.embeddings[i * self.dim..(i + 1) * self.dim]
    }
}

/// One (anchor, positive, hardest violating negative) selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinedTriplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
    pub d_ap: f64,
    pub d_an: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletLoss {
    pub loss: f64,
    pub active_count: usize,
    pub triplets: Vec<MinedTriplet>,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Row-major B×B Euclidean distances.
pub fn batch_distances(batch: &TripletBatch) -> Vec<f64> {
    let b = batch.len();
    let mut d = vec![0.0; b * b];
    for i in 0..b {
        for j in i + 1..b {
            let v = euclidean(batch.row(i), batch.row(j));
            d[i * b + j] = v;
            d[j * b + i] = v;
        }
    }
    d
}

/// Closest different-identity sample with `d(a, n) < d(a, p) + margin`;
/// ties go to the lower index.
pub fn hardest_violating_negative(
    dist: &[f64],
    labels: &[usize],
    anchor: usize,
    positive: usize,
    margin: f64,
) -> Result<Option<usize>, MiningError> {
    let b = labels.len();
    if dist.len() != b * b {
        return Err(MiningError::ShapeMismatch(format!(
            "{} distances for {b} labels",
            dist.len()
        )));
    }
    if anchor == positive || anchor >= b || positive >= b || labels[anchor] != labels[positive] {
        return Err(MiningError::InvalidPair { anchor, positive });
    }
    let row = &dist[anchor * b..(anchor + 1) * b];
    let bound = row[positive] + margin;
    let mut any_negative = false;
    let mut best: Option<usize> = None;
    for j in 0..b {
        if labels[j] == labels[anchor] {
            continue;
        }
        any_negative = true;
        if row[j] < bound && best.is_none_or(|k| row[j] < row[k]) {
            best = Some(j);
        }
    }
    if !any_negative {
        return Err(MiningError::NoNegativesInBatch(anchor));
    }
    Ok(best)
}

fn mine(batch: &TripletBatch, margin: f64) -> Result<Vec<MinedTriplet>, MiningError> {
    let labels = &batch.labels;
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(MiningError::DegenerateBatch);
    }
    let b = batch.len();
    let dist = batch_distances(batch);
    let mut out = Vec::new();
    for a in 0..b {
        for p in 0..b {
            if a == p || labels[a] != labels[p] {
                continue;
            }
            if let Some(n) = hardest_violating_negative(&dist, labels, a, p, margin)? {
                out.push(MinedTriplet {
                    anchor: a,
                    positive: p,
                    negative: n,
                    d_ap: dist[a * b + p],
                    d_an: dist[a * b + n],
                });
            }
        }
    }
    Ok(out)
}

/// Mean hinge over active triplets: every ordered same-identity pair with
/// a violating negative contributes `d(a,p) - d(a,n*) + margin`.
pub fn triplet_loss(batch: &TripletBatch, margin: f64) -> Result<TripletLoss, MiningError> {
    let triplets = mine(batch, margin)?;
    let sum: f64 = triplets.iter().map(|t| t.d_ap - t.d_an + margin).sum();
    Ok(TripletLoss {
        loss: sum / triplets.len().max(1) as f64,
        active_count: triplets.len(),
        triplets,
    })
}

/// Accumulates the gradient of the mean hinge for a fixed selection.
/// A zero distance contributes the zero subgradient when `strict` is off.
pub(crate) fn selection_gradient(
    batch: &TripletBatch,
    triplets: &[MinedTriplet],
    strict: bool,
) -> Result<Vec<f64>, MiningError> {
    let dim = batch.dim;
    let mut grad = vec![0.0; batch.embeddings.len()];
    if triplets.is_empty() {
        return Ok(grad);
    }
    let scale = 1.0 / triplets.len() as f64;
    let mut push = |i: usize, j: usize, d: f64, sign: f64| -> Result<(), MiningError> {
        if d == 0.0 {
            if strict {
                return Err(MiningError::DegenerateDistance {
                    anchor: i,
                    other: j,
                });
            }
            return Ok(());
        }
        let c = sign * scale / d;
        for k in 0..dim {
            let u = c * (batch.embeddings[i * dim + k] - batch.embeddings[j * dim + k]);
            grad[i * dim + k] += u;
            grad[j * dim + k] -= u;
        }
        Ok(())
    };
    for t in triplets {
        push(t.anchor, t.positive, t.d_ap, 1.0)?;
        push(t.anchor, t.negative, t.d_an, -1.0)?;
    }
    Ok(grad)
}

/// B×D gradient of [`triplet_loss`] with the mined selection held fixed.
pub fn loss_gradient(batch: &TripletBatch, margin: f64) -> Result<Vec<f64>, MiningError> {
    let l = triplet_loss(batch, margin)?;
    selection_gradient(batch, &l.triplets, true)
}
