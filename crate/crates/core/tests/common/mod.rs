#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reidbench_core::mining::{triplet_loss, MinedTriplet, TripletBatch};

/// P×K batch with identity centers on a unit-scale Gaussian and per-image
/// jitter, so some triplets violate the margin and some do not.
pub fn random_batch(seed: u64, p: usize, k: usize, dim: usize) -> TripletBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<f64> = (0..p * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut emb = Vec::with_capacity(p * k * dim);
    let mut labels = Vec::with_capacity(p * k);
    for i in 0..p {
        for _ in 0..k {
            labels.push(i);
            emb.extend((0..dim).map(|d| centers[i * dim + d] + rng.random_range(-0.4..0.4)));
        }
    }
    let b = labels.len() as u64;
    TripletBatch::new(emb, dim, labels, (0..b).collect()).unwrap()
}

/// Mean hinge by enumerating every (a, p, n) with distinct labels for
/// a/n, keeping per (a, p) the closest violating negative.
pub fn loss_oracle(batch: &TripletBatch, margin: f64) -> (f64, usize) {
    let b = batch.len();
    let d = |i: usize, j: usize| {
        batch
            .row(i)
            .iter()
            .zip(batch.row(j))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut sum = 0.0;
    let mut active = 0;
    for a in 0..b {
        for p in 0..b {
            if a == p || batch.labels[a] != batch.labels[p] {
                continue;
            }
            let dap = d(a, p);
            let mut best: Option<f64> = None;
            for n in 0..b {
                if batch.labels[n] == batch.labels[a] {
                    continue;
                }
                let dan = d(a, n);
                if dan < dap + margin && best.is_none_or(|v| dan < v) {
                    best = Some(dan);
                }
            }
            if let Some(dan) = best {
                sum += dap - dan + margin;
                active += 1;
            }
        }
    }
    (sum / active.max(1) as f64, active)
}

fn fixed_selection_loss(batch: &TripletBatch, triplets: &[MinedTriplet], margin: f64) -> f64 {
    let d = |i: usize, j: usize| {
        batch
            .row(i)
            .iter()
            .zip(batch.row(j))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let sum: f64 = triplets
        .iter()
        .map(|t| d(t.anchor, t.positive) - d(t.anchor, t.negative) + margin)
        .sum();
    sum / triplets.len().max(1) as f64
}

fn selection(t: &[MinedTriplet]) -> Vec<(usize, usize, usize)> {
    t.iter()
        .map(|t| (t.anchor, t.positive, t.negative))
        .collect()
}

pub struct FdCheck {
    pub max_rel_error: f64,
    pub worst_coord: usize,
    /// Coordinates whose ±h probes changed the mined selection. The loss is
    /// not differentiable there at scale h, so they are compared against
    /// differences of the loss with the selection held fixed.
    pub kinks: usize,
}

/// Relative error between `analytic` and central differences of the loss
/// with step `h`. Coordinates where both are zero count as exact.
pub fn fd_check(batch: &TripletBatch, analytic: &[f64], margin: f64, h: f64) -> FdCheck {
    let base = triplet_loss(batch, margin).unwrap();
    let sel = selection(&base.triplets);
    let mut out = FdCheck {
        max_rel_error: 0.0,
        worst_coord: 0,
        kinks: 0,
    };
    for i in 0..batch.embeddings.len() {
        let mut plus = batch.clone();
        plus.embeddings[i] += h;
        let mut minus = batch.clone();
        minus.embeddings[i] -= h;
        let lp = triplet_loss(&plus, margin).unwrap();
        let lm = triplet_loss(&minus, margin).unwrap();
        let fd = if selection(&lp.triplets) == sel && selection(&lm.triplets) == sel {
            (lp.loss - lm.loss) / (2.0 * h)
        } else {
            out.kinks += 1;
            (fixed_selection_loss(&plus, &base.triplets, margin)
                - fixed_selection_loss(&minus, &base.triplets, margin))
                / (2.0 * h)
        };
        let scale = fd.abs().max(analytic[i].abs());
        let err = if scale == 0.0 {
            0.0
        } else {
            (fd - analytic[i]).abs() / scale
        };
        if err > out.max_rel_error {
            out.max_rel_error = err;
            out.worst_coord = i;
        }
    }
    out
}
